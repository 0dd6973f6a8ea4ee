//! A flash sale that switches from COST_SAVING to PERFORMANCE as the peak begins.
//! The workload moves to the performance pool replica by replica, and no replica
//! leaves before its replacement runs.
//!
//! cargo run --example flash_sale_migration

use autoscale_sim::runner::simulate;
use autoscale_sim::scenario::parse_scenario;

const SCENARIO: &str = r#"
workload = "flash_sale"
controller = "mas_h2"
seed = 3

[[schedule]]
at = 420
policy = "PERFORMANCE"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = simulate(&parse_scenario(SCENARIO, "flash-sale")?)?;
    for m in &out.migrations {
        println!(
            "{} -> {}: requested {}, started {:?}, new pool ready {:?}, moved {:?}, done {:?}",
            m.from_pool, m.to_pool, m.requested_at, m.started_at, m.provisioned_at, m.migrated_at, m.finished_at
        );
        println!(
            "  reference {} replicas, fewest running {:?}, downtime {} s, {} pods replaced",
            m.reference_replicas, m.min_running, m.downtime_seconds, m.replaced_pods
        );
    }
    println!("\nevents around the switch:");
    let at = |line: &str| line.split_whitespace().next().and_then(|t| t.parse::<u64>().ok());
    for line in out.events.iter().filter(|e| at(e).is_some_and(|t| (420..=560).contains(&t))) {
        println!("  {line}");
    }
    Ok(())
}
