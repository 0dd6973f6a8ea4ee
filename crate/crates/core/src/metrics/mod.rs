//! Per-sample observations, the weighted utility score and run summaries.

mod compare;
mod table;

pub use compare::{compare_runs, Comparison, ComparisonRow, HeadlineRatios, RunMeta};
pub use table::{read_metrics_csv, write_metrics_csv, TableError};

use serde::Serialize;

use crate::engine::{ClusterState, NodeState, MICROS_PER_UNIT};
use crate::planning::Policy;

/// Utilization above which a sample counts as stressed.
pub const STRESS_THRESHOLD: f64 = 0.8;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NodeCounts {
    pub provisioning: u32,
    pub ready: u32,
    pub draining: u32,
}

impl NodeCounts {
    pub fn total(&self) -> u32 {
        self.provisioning + self.ready + self.draining
    }
}

/// One row of `metrics.csv`. Costs are cumulative, in micro-units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSample {
    pub t: u64,
    pub demand_millicores: u32,
    pub running_replicas: u32,
    pub pending_pods: u32,
    /// Per pool in declaration order.
    pub nodes: Vec<(String, NodeCounts)>,
    pub utilization: f64,
    pub cpu_waste_millicores: u32,
    pub cumulative_pod_cost: u64,
    pub cumulative_node_cost: u64,
    pub packing_efficiency: f64,
    pub utility: f64,
}

impl MetricSample {
    pub fn total_cost(&self) -> u64 {
        self.cumulative_pod_cost + self.cumulative_node_cost
    }

    pub fn total_nodes(&self) -> u32 {
        self.nodes.iter().map(|(_, c)| c.total()).sum()
    }
}

/// Scale factors that map utilization and cost rate onto `[0, 1]`-ish scores.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct UtilityNormalizers {
    pub perf_scale: f64,
    /// Cost rate, in units per second, that scores 1.
    pub cost_scale: f64,
}

impl Default for UtilityNormalizers {
    fn default() -> Self {
        Self {
            perf_scale: 1.0,
            cost_scale: 10.0,
        }
    }
}

/// `w_perf * Perf - w_cost * Cost`, where `Perf = 1 - min(1, util / perf_scale)`
/// rewards headroom and `Cost = rate / cost_scale` penalizes spend.
pub fn utility(utilization: f64, cost_rate: f64, policy: &Policy, norms: &UtilityNormalizers) -> f64 {
    let perf = 1.0 - (utilization / norms.perf_scale).min(1.0);
    let cost = cost_rate / norms.cost_scale;
    policy.w_perf * perf - policy.w_cost * cost
}

/// Demand over serving capacity; zero when nothing is running.
pub fn utilization(demand: u32, running: u32, pod_request: u32) -> f64 {
    let capacity = running as u64 * pod_request as u64;
    if capacity == 0 {
        0.0
    } else {
        demand as f64 / capacity as f64
    }
}

/// Bound requests over Ready-node capacity; 0 when no node is Ready.
pub fn packing_efficiency(state: &ClusterState) -> f64 {
    let (mut bound, mut capacity) = (0u64, 0u64);
    for n in state.ready_nodes() {
        bound += state.bound_request(n.id) as u64;
        capacity += state.node_capacity(n.id) as u64;
    }
    if capacity == 0 {
        0.0
    } else {
        bound as f64 / capacity as f64
    }
}

/// Billing rates, in micro-units per second.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostModel {
    pub pool_rates: Vec<(String, u64)>,
    pub pod_rate: u64,
}

impl CostModel {
    pub fn from_state(state: &ClusterState) -> Self {
        Self {
            pool_rates: state
                .pools
                .iter()
                .map(|p| (p.spec.id.clone(), p.spec.cost_rate_micros))
                .collect(),
            pod_rate: state.config.pod_cost_rate_micros,
        }
    }

    pub fn rate(&self, pool: &str) -> Option<u64> {
        self.pool_rates.iter().find(|(p, _)| p == pool).map(|(_, r)| *r)
    }

    /// Re-derives cumulative costs from the integrated node- and pod-seconds.
    pub fn check_accounting(&self, state: &ClusterState) -> Result<(), String> {
        let from_seconds: u64 = state
            .costs
            .node_seconds
            .iter()
            .zip(&self.pool_rates)
            .map(|(secs, (_, rate))| secs * rate)
            .sum();
        let node = state.costs.total_node_cost_micros();
        if from_seconds != node {
            return Err(format!("node cost {node} != node-seconds x rate {from_seconds}"));
        }
        let pod = state.costs.pod_seconds * self.pod_rate;
        if pod != state.costs.pod_cost_micros {
            return Err(format!(
                "pod cost {} != pod-seconds x rate {pod}",
                state.costs.pod_cost_micros
            ));
        }
        Ok(())
    }
}

/// Snapshot of the managed workloads and the cluster at the current time.
/// Utilization is capped at `saturation_ceiling`: pods cannot report more.
pub fn observe(
    state: &ClusterState,
    demand: u32,
    policy: &Policy,
    norms: &UtilityNormalizers,
    saturation_ceiling: f64,
) -> MetricSample {
    let managed: Vec<usize> = state.managed_workloads().collect();
    let running: u32 = managed.iter().map(|w| state.running(*w)).sum();
    let request = managed
        .first()
        .map_or(0, |w| state.workloads[*w].pod_request_millicores);
    let capacity = running * request;
    let util = utilization(demand, running, request).min(saturation_ceiling);
    let (node_rate, pod_rate) = state.cost_rate_micros();
    let rate = (node_rate + pod_rate) as f64 / MICROS_PER_UNIT as f64;
    let nodes = state
        .pools
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            (
                pool.spec.id.clone(),
                NodeCounts {
                    provisioning: state.nodes_in_state(i, NodeState::Provisioning),
                    ready: state.nodes_in_state(i, NodeState::Ready),
                    draining: state.nodes_in_state(i, NodeState::Draining),
                },
            )
        })
        .collect();
    MetricSample {
        t: state.now(),
        demand_millicores: demand,
        running_replicas: running,
        pending_pods: state.total_pending(),
        nodes,
        utilization: util,
        cpu_waste_millicores: capacity.saturating_sub(demand),
        cumulative_pod_cost: state.costs.pod_cost_micros,
        cumulative_node_cost: state.costs.total_node_cost_micros(),
        packing_efficiency: packing_efficiency(state),
        utility: utility(util, rate, policy, norms),
    }
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub samples: usize,
    pub sample_interval: u64,
    pub mean_utilization: f64,
    pub median_utilization: f64,
    pub p95_utilization: f64,
    pub max_utilization: f64,
    pub seconds_above_threshold: u64,
    pub max_running_replicas: u32,
    pub max_nodes: u32,
    pub total_cost: u64,
    pub pod_cost: u64,
    pub node_cost: u64,
    pub mean_packing_efficiency: f64,
    pub utility_integral: f64,
    pub migrations: usize,
    pub migration_downtime_seconds: u64,
}

impl RunSummary {
    pub fn from_samples(samples: &[MetricSample], sample_interval: u64, migration_downtime: &[u64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                sample_interval,
                migrations: migration_downtime.len(),
                migration_downtime_seconds: migration_downtime.iter().sum(),
                ..Self::default()
            };
        }
        let util: Vec<f64> = samples.iter().map(|s| s.utilization).collect();
        let last = samples.last().expect("non-empty");
        Self {
            samples: n,
            sample_interval,
            mean_utilization: util.iter().sum::<f64>() / n as f64,
            median_utilization: percentile(&util, 0.5),
            p95_utilization: percentile(&util, 0.95),
            max_utilization: util.iter().copied().fold(0.0, f64::max),
            seconds_above_threshold: util.iter().filter(|u| **u > STRESS_THRESHOLD).count() as u64
                * sample_interval,
            max_running_replicas: samples.iter().map(|s| s.running_replicas).max().unwrap_or(0),
            max_nodes: samples.iter().map(MetricSample::total_nodes).max().unwrap_or(0),
            total_cost: last.total_cost(),
            pod_cost: last.cumulative_pod_cost,
            node_cost: last.cumulative_node_cost,
            mean_packing_efficiency: samples.iter().map(|s| s.packing_efficiency).sum::<f64>() / n as f64,
            utility_integral: samples.iter().map(|s| s.utility).sum::<f64>() * sample_interval as f64,
            migrations: migration_downtime.len(),
            migration_downtime_seconds: migration_downtime.iter().sum(),
        }
    }

    /// `key = value` lines, costs in units.
    pub fn render(&self) -> String {
        let units = |m: u64| m as f64 / MICROS_PER_UNIT as f64;
        let rows: Vec<(&str, String)> = vec![
            ("samples", self.samples.to_string()),
            ("mean_utilization", format!("{:.4}", self.mean_utilization)),
            ("median_utilization", format!("{:.4}", self.median_utilization)),
            ("p95_utilization", format!("{:.4}", self.p95_utilization)),
            ("max_utilization", format!("{:.4}", self.max_utilization)),
            ("seconds_above_threshold", self.seconds_above_threshold.to_string()),
            ("max_running_replicas", self.max_running_replicas.to_string()),
            ("max_nodes", self.max_nodes.to_string()),
            ("total_cost", format!("{:.2}", units(self.total_cost))),
            ("pod_cost", format!("{:.2}", units(self.pod_cost))),
            ("node_cost", format!("{:.2}", units(self.node_cost))),
            ("mean_packing_efficiency", format!("{:.4}", self.mean_packing_efficiency)),
            ("utility_integral", format!("{:.2}", self.utility_integral)),
            ("migrations", self.migrations.to_string()),
            ("migration_downtime_seconds", self.migration_downtime_seconds.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::PolicyName;

    fn policy(w_perf: f64, w_cost: f64) -> Policy {
        Policy {
            name: PolicyName::CostSaving,
            node_pool: "p".into(),
            node_capacity_millicores: 940,
            min_replicas: 1,
            w_perf,
            w_cost,
        }
    }

    #[test]
    fn utility_examples() {
        let norms = UtilityNormalizers::default();
        // pure cost weight on an empty cluster
        assert_eq!(utility(0.0, 0.0, &policy(0.0, 1.0), &norms), 0.0);
        // saturated workload scores zero performance
        assert_eq!(utility(1.3, 0.0, &policy(1.0, 0.0), &norms), 0.0);
        // half-loaded with some spend
        let u = utility(0.5, 2.0, &policy(0.8, 0.2), &norms);
        assert!((u - (0.8 * 0.5 - 0.2 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn utilization_is_zero_without_running_pods() {
        assert_eq!(utilization(800, 0, 250), 0.0);
        assert_eq!(utilization(800, 8, 250), 0.4);
    }

    #[test]
    fn weights_decide_which_policy_scores_higher() {
        let norms = UtilityNormalizers::default();
        let perf = policy(0.8, 0.2);
        let cost = policy(0.2, 0.8);
        // hot and cheap vs cool and expensive
        let (hot, cool) = ((0.9, 1.0), (0.3, 5.0));
        let score = |p: &Policy, (u, r): (f64, f64)| utility(u, r, p, &norms);
        assert!(score(&perf, cool) > score(&perf, hot));
        assert!(score(&cost, hot) > score(&cost, cool));
        assert_eq!(utility(0.0, 0.0, &policy(1.0, 0.0), &norms), 1.0);
    }

    #[test]
    fn empty_cluster_observes_zeroes() {
        let state = ClusterState::new(Vec::new(), Default::default());
        let s = observe(&state, 0, &policy(0.0, 1.0), &UtilityNormalizers::default(), 1.1);
        assert_eq!(s.utilization, 0.0);
        assert_eq!(s.packing_efficiency, 0.0);
        assert_eq!(s.utility, 0.0);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&v, 0.5), 10.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
