//! Generates the two built-in traces and writes them as CSV.
//!
//! cargo run --example workload_traces -- /tmp/traces

use std::fs::File;
use std::path::PathBuf;

use autoscale_sim::workload::{build_flash_sale_trace, build_heartbeat_trace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    for trace in [build_heartbeat_trace(2, 0)?, build_flash_sale_trace(2, 1)?] {
        let path = dir.join(format!("{}.csv", trace.workload_id));
        trace.write_csv(File::create(&path)?)?;
        let peak = trace.samples.iter().map(|s| s.demand_millicores).max().unwrap_or(0);
        println!(
            "{}: {} s, {} phases, peak {peak}m -> {}",
            trace.workload_id,
            trace.len_seconds(),
            trace.phase_starts.len(),
            path.display()
        );
    }
    Ok(())
}
