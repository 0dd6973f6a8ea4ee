//! Drives the engine by hand: a node provisions, pods wait for it, then start.
//!
//! cargo run --example event_engine

use autoscale_sim::engine::{ClusterConfig, PoolSpec, Simulation, MICROS_PER_UNIT};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = PoolSpec {
        id: "pool".into(),
        machine_type: "e2-medium".into(),
        node_capacity_millicores: 940,
        cost_rate_micros: MICROS_PER_UNIT,
        provisioning_delay: 120,
    };
    let mut sim = Simulation::new(vec![pool], ClusterConfig::default());
    sim.set_preferred_pool("pool")?;
    let web = sim.add_workload("web", 250, true);

    sim.set_replicas(web, 3)?;
    sim.resize_pool("pool", 1)?;
    while sim.next_event_time().is_some() {
        sim.step()?;
    }
    for line in sim.event_log() {
        println!("{line}");
    }
    println!(
        "t={}: {} running, node cost {} units",
        sim.now(),
        sim.state.running(web),
        sim.state.costs.total_node_cost_micros() / MICROS_PER_UNIT
    );
    Ok(())
}
