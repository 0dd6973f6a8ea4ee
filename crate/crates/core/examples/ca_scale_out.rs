//! The reactive baseline with a roomier cluster autoscaler ceiling: HPA asks for
//! replicas, pending pods trigger node additions, idle nodes are reclaimed.
//!
//! cargo run --example ca_scale_out

use autoscale_sim::runner::simulate;
use autoscale_sim::scenario::parse_scenario;

const SCENARIO: &str = r#"
workload = "heartbeat"
controller = "hpa_ca"

[hpa]
ca_max_nodes = 4
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = simulate(&parse_scenario(SCENARIO, "ca-scale-out")?)?;
    for s in out.samples.iter().step_by(12) {
        let nodes: u32 = s.total_nodes();
        println!(
            "t={:>3}  demand {:>4}m  running {:>2}  pending {:>2}  nodes {}  util {:.2}",
            s.t, s.demand_millicores, s.running_replicas, s.pending_pods, nodes, s.utilization
        );
    }
    println!("\nmax replicas {}, max nodes {}", out.summary.max_running_replicas, out.summary.max_nodes);
    Ok(())
}
