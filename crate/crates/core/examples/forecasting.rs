//! The three forecasters on the Heartbeat trace, issued at the start of each cycle.
//!
//! cargo run --example forecasting

use autoscale_sim::forecast::{detect_period, forecast, smoothed_history, ForecasterKind};
use autoscale_sim::workload::build_heartbeat_trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = build_heartbeat_trace(2, 0)?;
    println!("detected period over the whole trace: {:?}", detect_period(&trace.history_before(trace.len_seconds())));

    for now in [240u64, 480] {
        let history = trace.history_before(now);
        let smoothed = smoothed_history(&history, 30.0);
        let realized = (now + 1..=now + 240).map(|t| trace.demand_at(t)).max().unwrap_or(0);
        println!("\nissued at t={now}, realized next-cycle peak {realized}m");
        for kind in [
            ForecasterKind::Naive,
            ForecasterKind::MovingAverage { window: 60 },
            ForecasterKind::SeasonalPeak { period: 240, quantile: 1.0 },
            ForecasterKind::SeasonalPeak { period: 240, quantile: 0.95 },
        ] {
            let raw = forecast(kind, &history, now, 240)?.peak_demand_millicores;
            let smooth = forecast(kind, &smoothed, now, 240)?.peak_demand_millicores;
            println!("  {kind:?}: raw {raw}m, smoothed {smooth}m");
        }
    }
    Ok(())
}
