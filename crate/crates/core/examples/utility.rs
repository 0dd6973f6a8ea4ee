//! How each policy's weights score the same operating points.
//!
//! cargo run --example utility

use autoscale_sim::metrics::{utility, UtilityNormalizers};
use autoscale_sim::scenario::default_policies;
use autoscale_sim::scenario::parse_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = parse_scenario("workload = \"heartbeat\"\ncontroller = \"mas_h2\"\n", "utility")?;
    let norms = UtilityNormalizers::default();
    let points = [("hot, cheap", 0.95, 1.2), ("balanced", 0.6, 2.5), ("cool, costly", 0.3, 6.0)];
    for policy in default_policies(&config.pools) {
        println!("{} (w_perf {}, w_cost {})", policy.name, policy.w_perf, policy.w_cost);
        for (label, util, rate) in points {
            println!("  {label:<13} util {util:.2}, {rate:.1} units/s -> {:+.3}", utility(util, rate, &policy, &norms));
        }
    }
    Ok(())
}
