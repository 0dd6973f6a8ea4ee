//! Runs the Heartbeat load under both controllers and prints the side-by-side report.
//!
//! cargo run --example heartbeat_comparison

use autoscale_sim::metrics::compare_runs;
use autoscale_sim::runner::simulate;
use autoscale_sim::scenario::{parse_scenario, ControllerKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = parse_scenario("workload = \"heartbeat\"\ncontroller = \"mas_h2\"\nseed = 7\n", "heartbeat")?;
    let mas = simulate(&config)?;
    config.controller = ControllerKind::HpaCa;
    let hpa = simulate(&config)?;

    let cmp = compare_runs((&mas.meta, &mas.samples), (&hpa.meta, &hpa.samples))?;
    print!("{}", cmp.render_text());

    println!("\n  t  demand  mas_h2  hpa_ca");
    for row in cmp.rows.iter().step_by(6) {
        println!("{:>4} {:>6}m {:>7} {:>7}", row.t, row.demand_millicores, row.running_a, row.running_b);
    }
    Ok(())
}
