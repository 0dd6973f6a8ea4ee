use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use super::{MetricSample, RunSummary};
use crate::engine::MICROS_PER_UNIT;

/// What identifies a scenario for comparison purposes, plus run labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMeta {
    pub scenario: String,
    pub workload: String,
    pub controller: String,
    pub seed: u64,
    pub vu_cost: u32,
    pub noise_amplitude: f64,
    pub duration: u64,
    pub sample_interval: u64,
}

impl RunMeta {
    pub fn render(&self) -> String {
        format!(
            "scenario = {}\nworkload = {}\ncontroller = {}\nseed = {}\nvu_cost = {}\nnoise_amplitude = {}\nduration = {}\nsample_interval = {}\n",
            self.scenario,
            self.workload,
            self.controller,
            self.seed,
            self.vu_cost,
            self.noise_amplitude,
            self.duration,
            self.sample_interval
        )
    }

    /// Reads the identity keys back from a rendered summary.
    pub fn parse(text: &str) -> Result<Self, String> {
        // the summary section repeats some keys; the header comes first and wins
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in text.lines().filter_map(|l| l.split_once(" = ")) {
            kv.entry(k.trim()).or_insert(v.trim());
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("summary is missing `{k}`"));
        let num = |k: &str| -> Result<u64, String> {
            get(k)?.parse().map_err(|_| format!("summary `{k}` is not a number"))
        };
        Ok(Self {
            scenario: get("scenario")?.to_string(),
            workload: get("workload")?.to_string(),
            controller: get("controller")?.to_string(),
            seed: num("seed")?,
            vu_cost: num("vu_cost")? as u32,
            noise_amplitude: get("noise_amplitude")?
                .parse()
                .map_err(|_| "summary `noise_amplitude` is not a number".to_string())?,
            duration: num("duration")?,
            sample_interval: num("sample_interval")?,
        })
    }

    fn same_scenario(&self, other: &Self) -> Result<(), String> {
        if self.seed != other.seed {
            return Err(format!(
                "runs use different seeds ({} vs {})",
                self.seed, other.seed
            ));
        }
        let mismatch = [
            ("workload", self.workload != other.workload),
            ("vu_cost", self.vu_cost != other.vu_cost),
            ("noise_amplitude", self.noise_amplitude != other.noise_amplitude),
            ("duration", self.duration != other.duration),
        ];
        match mismatch.iter().find(|(_, differs)| *differs) {
            Some((key, _)) => Err(format!("runs use different `{key}`")),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: u64,
    pub demand_millicores: u32,
    pub utilization_a: f64,
    pub utilization_b: f64,
    pub running_a: u32,
    pub running_b: u32,
    pub pending_a: u32,
    pub pending_b: u32,
    pub cost_a: u64,
    pub cost_b: u64,
    pub utility_a: f64,
    pub utility_b: f64,
}

/// Relative stress reductions of run A against run B. How "stress" is read is a
/// convention, so both the sustained (mean) and peak (p95) readings are reported.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct HeadlineRatios {
    /// `1 - mean_util(A) / mean_util(B)`.
    pub sustained_stress_reduction: f64,
    /// `1 - p95_util(A) / p95_util(B)`.
    pub peak_load_reduction: f64,
}

fn reduction(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        1.0 - a / b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub a: RunMeta,
    pub b: RunMeta,
    pub summary_a: RunSummary,
    pub summary_b: RunSummary,
    pub rows: Vec<ComparisonRow>,
    pub headline: HeadlineRatios,
}

/// Aligns two runs of the same scenario by sample time.
pub fn compare_runs(
    a: (&RunMeta, &[MetricSample]),
    b: (&RunMeta, &[MetricSample]),
) -> Result<Comparison, String> {
    a.0.same_scenario(b.0)?;
    let by_t: BTreeMap<u64, &MetricSample> = b.1.iter().map(|s| (s.t, s)).collect();
    let rows = a
        .1
        .iter()
        .filter_map(|sa| by_t.get(&sa.t).map(|sb| (sa, *sb)))
        .map(|(sa, sb)| ComparisonRow {
            t: sa.t,
            demand_millicores: sa.demand_millicores,
            utilization_a: sa.utilization,
            utilization_b: sb.utilization,
            running_a: sa.running_replicas,
            running_b: sb.running_replicas,
            pending_a: sa.pending_pods,
            pending_b: sb.pending_pods,
            cost_a: sa.total_cost(),
            cost_b: sb.total_cost(),
            utility_a: sa.utility,
            utility_b: sb.utility,
        })
        .collect();
    let summary_a = RunSummary::from_samples(a.1, a.0.sample_interval, &[]);
    let summary_b = RunSummary::from_samples(b.1, b.0.sample_interval, &[]);
    let headline = HeadlineRatios {
        sustained_stress_reduction: reduction(summary_a.mean_utilization, summary_b.mean_utilization),
        peak_load_reduction: reduction(summary_a.p95_utilization, summary_b.p95_utilization),
    };
    Ok(Comparison {
        a: a.0.clone(),
        b: b.0.clone(),
        summary_a,
        summary_b,
        rows,
        headline,
    })
}

impl Comparison {
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let units = |m: u64| m as f64 / MICROS_PER_UNIT as f64;
        let (sa, sb) = (&self.summary_a, &self.summary_b);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "A = {} ({})\nB = {} ({})\nworkload = {}  seed = {}\n",
            self.a.scenario, self.a.controller, self.b.scenario, self.b.controller, self.a.workload, self.a.seed
        );
        let _ = writeln!(out, "{:<26} {:>12} {:>12} {:>12}", "metric", "A", "B", "A - B");
        let rows: [(&str, f64, f64); 9] = [
            ("mean_utilization", sa.mean_utilization, sb.mean_utilization),
            ("median_utilization", sa.median_utilization, sb.median_utilization),
            ("p95_utilization", sa.p95_utilization, sb.p95_utilization),
            ("max_utilization", sa.max_utilization, sb.max_utilization),
            (
                "seconds_above_threshold",
                sa.seconds_above_threshold as f64,
                sb.seconds_above_threshold as f64,
            ),
            (
                "max_running_replicas",
                sa.max_running_replicas as f64,
                sb.max_running_replicas as f64,
            ),
            ("total_cost", units(sa.total_cost), units(sb.total_cost)),
            ("mean_packing_efficiency", sa.mean_packing_efficiency, sb.mean_packing_efficiency),
            ("utility_integral", sa.utility_integral, sb.utility_integral),
        ];
        for (name, a, b) in rows {
            let _ = writeln!(out, "{name:<26} {a:>12.4} {b:>12.4} {:>12.4}", a - b);
        }
        let _ = writeln!(
            out,
            "\nsustained_stress_reduction = {:.4}  (1 - mean_A/mean_B)\npeak_load_reduction = {:.4}  (1 - p95_A/p95_B)\n\
             note: which reading counts as the headline stress figure is interpretation-dependent",
            self.headline.sustained_stress_reduction, self.headline.peak_load_reduction
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(seed: u64, controller: &str) -> RunMeta {
        RunMeta {
            scenario: "s".into(),
            workload: "heartbeat".into(),
            controller: controller.into(),
            seed,
            vu_cost: 2,
            noise_amplitude: 0.1,
            duration: 780,
            sample_interval: 5,
        }
    }

    fn samples(utils: &[f64]) -> Vec<MetricSample> {
        utils
            .iter()
            .enumerate()
            .map(|(i, u)| MetricSample {
                t: i as u64 * 5,
                demand_millicores: 100,
                running_replicas: 1,
                pending_pods: 0,
                nodes: Vec::new(),
                utilization: *u,
                cpu_waste_millicores: 0,
                cumulative_pod_cost: 0,
                cumulative_node_cost: 0,
                packing_efficiency: 1.0,
                utility: 0.0,
            })
            .collect()
    }

    #[test]
    fn meta_round_trips_through_summary_text() {
        let m = meta(7, "mas_h2");
        let text = m.render() + &RunSummary::default().render();
        assert_eq!(RunMeta::parse(&text).unwrap(), m);
    }

    #[test]
    fn different_seeds_are_refused_with_both_named() {
        let err = compare_runs((&meta(1, "a"), &[]), (&meta(2, "b"), &[])).unwrap_err();
        assert!(err.contains('1') && err.contains('2'), "{err}");
    }

    #[test]
    fn headline_ratios() {
        let a = samples(&[0.2, 0.4]);
        let b = samples(&[0.6, 1.2]);
        let c = compare_runs((&meta(1, "a"), &a), (&meta(1, "b"), &b)).unwrap();
        assert!((c.headline.sustained_stress_reduction - (1.0 - 0.3 / 0.9)).abs() < 1e-12);
        assert!((c.headline.peak_load_reduction - (1.0 - 0.4 / 1.2)).abs() < 1e-12);
        assert_eq!(c.rows.len(), 2);
        assert!(c.render_text().contains("interpretation-dependent"));
    }
}
