//! Reactive baseline: a utilization-driven pod autoscaler and a pending-pod-driven
//! node autoscaler, both running on a fixed sync period.
//!
//! Pods that are not yet Running report no usage, and Running pods can report at
//! most `saturation_ceiling` times their request. Usage is therefore capped by the
//! capacity actually serving, which is what lets the baseline stall when the node
//! autoscaler cannot add room.

use std::collections::BTreeMap;

use super::{Action, Controller, ControllerDecision, HpaObservation, TickPhase};
use crate::engine::{ClusterState, EventKind, NodeId, NodeState, PodState, SimEvent, Simulation};
use crate::error::SimError;
use crate::planning::Policy;
use crate::workload::DemandTrace;

pub const NAME: &str = "hpa_ca";

#[derive(Clone, Debug, PartialEq)]
pub struct HpaConfig {
    pub pool: String,
    pub target_utilization: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub scale_down_stabilization: u64,
    pub sync_period: u64,
    pub saturation_ceiling: f64,
    /// A pod must have been Pending longer than this before a node is added.
    pub ca_trigger_delay: u64,
    /// A Ready node must have been empty this long before it is removed.
    pub ca_idle_delay: u64,
    pub ca_max_nodes: u32,
    pub ca_min_nodes: u32,
}

impl Default for HpaConfig {
    fn default() -> Self {
        Self {
            pool: "default-pool".into(),
            target_utilization: 0.8,
            min_replicas: 1,
            max_replicas: 10,
            scale_down_stabilization: 300,
            sync_period: 15,
            saturation_ceiling: 1.1,
            ca_trigger_delay: 30,
            ca_idle_delay: 600,
            ca_max_nodes: 1,
            ca_min_nodes: 1,
        }
    }
}

/// State carried between ticks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HpaMemory {
    /// Recommendations inside the current below-current streak.
    pub recommendations: Vec<(u64, u32)>,
    pub below_since: Option<u64>,
    pub empty_since: BTreeMap<NodeId, u64>,
}

/// Demand the pods can actually report.
pub fn observed_usage(demand: u32, running: u32, request: u32, ceiling: f64) -> f64 {
    (demand as f64).min(ceiling * running as f64 * request as f64)
}

/// Replicas needed to bring observed usage to the target utilization.
pub fn recommend(usage: f64, request: u32, target: f64) -> u32 {
    ((usage / (request as f64 * target)) - 1e-9).ceil().max(0.0) as u32
}

/// One sync of both autoscalers. Pure: the same state, demand and memory always give
/// the same decision.
pub fn hpa_ca_tick(
    state: &ClusterState,
    workload: usize,
    demand: u32,
    config: &HpaConfig,
    memory: &HpaMemory,
) -> Result<(ControllerDecision, HpaMemory), SimError> {
    let now = state.now();
    let mut d = ControllerDecision::new(now, NAME);
    d.phases.extend([TickPhase::Observe, TickPhase::Execution]);
    let mut mem = memory.clone();

    let rec = &state.workloads[workload];
    let request = rec.pod_request_millicores;
    let running = state.running(workload);
    let current = state.replicas(workload);
    let usage = observed_usage(demand, running, request, config.saturation_ceiling);
    let recommended = recommend(usage, request, config.target_utilization)
        .clamp(config.min_replicas, config.max_replicas);
    d.hpa = Some(HpaObservation {
        demand_millicores: demand,
        running,
        current,
        utilization: if current == 0 {
            0.0
        } else {
            usage / (current as f64 * request as f64)
        },
        recommended,
    });

    if recommended > current {
        mem.below_since = None;
        mem.recommendations.clear();
        d.actions.push(Action::ScalePods {
            workload: rec.id.clone(),
            from: current,
            to: recommended,
            delta: recommended as i64 - current as i64,
        });
    } else if recommended < current {
        let since = *mem.below_since.get_or_insert(now);
        mem.recommendations.push((now, recommended));
        if now - since >= config.scale_down_stabilization {
            let target = mem
                .recommendations
                .iter()
                .map(|(_, r)| *r)
                .max()
                .unwrap_or(recommended);
            mem.below_since = None;
            mem.recommendations.clear();
            d.actions.push(Action::ScalePods {
                workload: rec.id.clone(),
                from: current,
                to: target,
                delta: target as i64 - current as i64,
            });
        } else {
            d.actions.push(Action::Deferred {
                target: rec.id.clone(),
                from: current,
                to: recommended,
                reason: "scale-down stabilization",
            });
        }
    } else {
        mem.below_since = None;
        mem.recommendations.clear();
    }

    let pool = state
        .pool_index(&config.pool)
        .ok_or_else(|| SimError::UnknownPool(config.pool.clone()))?;
    let live = state.live_node_count(pool);
    let provisioning = state.live_nodes(pool).any(|n| n.state == NodeState::Provisioning);
    let starved = state.pods.iter().any(|p| {
        p.state == PodState::Pending
            && p.pending_since
                .is_some_and(|since| now - since > config.ca_trigger_delay)
    });

    mem.empty_since.retain(|id, _| {
        let n = state.node(*id);
        n.state == NodeState::Ready && n.bound_pods.is_empty()
    });
    for n in state.live_nodes(pool) {
        if n.state == NodeState::Ready && n.bound_pods.is_empty() {
            mem.empty_since.entry(n.id).or_insert(now);
        }
    }
    let idle = mem
        .empty_since
        .values()
        .filter(|since| now - **since >= config.ca_idle_delay)
        .count() as u32;

    if starved && !provisioning && live < config.ca_max_nodes {
        d.actions.push(Action::ScaleNodes {
            pool: config.pool.clone(),
            from: live,
            to: live + 1,
            delta: 1,
        });
    } else if !starved && idle > 0 && live > config.ca_min_nodes {
        let to = live - idle.min(live - config.ca_min_nodes);
        d.actions.push(Action::ScaleNodes {
            pool: config.pool.clone(),
            from: live,
            to,
            delta: to as i64 - live as i64,
        });
        mem.empty_since.clear();
    }
    Ok((d, mem))
}

pub struct ReactiveController {
    config: HpaConfig,
    workload: usize,
    trace: DemandTrace,
    memory: HpaMemory,
    end: u64,
    policy: Policy,
}

impl ReactiveController {
    /// `policy` only supplies the weights used to score the run.
    pub fn new(config: HpaConfig, workload: usize, trace: DemandTrace, end: u64, policy: Policy) -> Self {
        Self {
            config,
            workload,
            trace,
            memory: HpaMemory::default(),
            end,
            policy,
        }
    }

    pub fn memory(&self) -> &HpaMemory {
        &self.memory
    }
}

impl Controller for ReactiveController {
    fn name(&self) -> &'static str {
        NAME
    }

    fn start(&mut self, sim: &mut Simulation) -> Result<Vec<ControllerDecision>, SimError> {
        sim.set_preferred_pool(&self.config.pool)?;
        sim.schedule(0, EventKind::ControlTick { controller: NAME })?;
        Ok(Vec::new())
    }

    fn on_event(
        &mut self,
        sim: &mut Simulation,
        event: &SimEvent,
    ) -> Result<Vec<ControllerDecision>, SimError> {
        if !matches!(event.kind, EventKind::ControlTick { controller } if controller == NAME) {
            return Ok(Vec::new());
        }
        let now = sim.now();
        let demand = self.trace.demand_at(now);
        let (decision, memory) = hpa_ca_tick(&sim.state, self.workload, demand, &self.config, &self.memory)?;
        self.memory = memory;
        super::hierarchical::execute(sim, &decision)?;
        let next = now + self.config.sync_period;
        if next < self.end {
            sim.schedule(next, EventKind::ControlTick { controller: NAME })?;
        }
        Ok(vec![decision])
    }

    fn active_policy(&self) -> &Policy {
        &self.policy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ClusterConfig, PoolSpec, MICROS_PER_UNIT};

    fn sim(nodes: u32) -> (Simulation, usize) {
        let mut sim = Simulation::new(
            vec![PoolSpec {
                id: "default-pool".into(),
                machine_type: "e2-medium".into(),
                node_capacity_millicores: 940,
                cost_rate_micros: MICROS_PER_UNIT,
                provisioning_delay: 120,
            }],
            ClusterConfig::default(),
        );
        let w = sim.add_workload("web", 250, true);
        sim.bootstrap_nodes("default-pool", nodes).unwrap();
        (sim, w)
    }

    #[test]
    fn recommendation_examples() {
        // 4 pods at 100% of a 250m request with target 0.8 -> 5
        assert_eq!(recommend(1000.0, 250, 0.8), 5);
        assert_eq!(recommend(800.0, 250, 0.8), 4);
        // 2 pods saturated at 1.1 -> ceil(2.75) = 3
        assert_eq!(recommend(observed_usage(800, 2, 250, 1.1), 250, 0.8), 3);
    }

    #[test]
    fn scale_up_is_immediate() {
        let (mut sim, w) = sim(1);
        sim.bootstrap_pods(w, 1).unwrap();
        let (d, mem) = hpa_ca_tick(&sim.state, w, 800, &HpaConfig::default(), &HpaMemory::default()).unwrap();
        // one running pod can show at most 275m
        assert_eq!(d.hpa.as_ref().unwrap().recommended, 2);
        assert_eq!(d.actions, vec![Action::ScalePods { workload: "web".into(), from: 1, to: 2, delta: 1 }]);
        assert_eq!(mem.below_since, None);
    }

    #[test]
    fn scale_down_waits_for_window_and_takes_max() {
        let (mut sim, w) = sim(2);
        sim.bootstrap_pods(w, 6).unwrap();
        let config = HpaConfig { ca_max_nodes: 2, ..HpaConfig::default() };
        let mut mem = HpaMemory::default();
        let mut applied = None;
        for (i, demand) in [400u32, 600, 200].into_iter().cycle().take(21).enumerate() {
            let t = i as u64 * 15;
            sim.advance_to(t);
            let (d, m) = hpa_ca_tick(&sim.state, w, demand, &config, &mem).unwrap();
            mem = m;
            if let Some(Action::ScalePods { to, .. }) = d.actions.first() {
                applied = Some((t, *to));
                break;
            }
        }
        // 600m -> 3 replicas is the largest recommendation in the window
        assert_eq!(applied, Some((300, 3)));
    }

    #[test]
    fn cluster_autoscaler_adds_one_node_after_trigger_delay() {
        let (mut sim, w) = sim(1);
        sim.bootstrap_pods(w, 4).unwrap();
        assert_eq!(sim.state.pending(w), 1);
        let config = HpaConfig { ca_max_nodes: 3, ..HpaConfig::default() };
        sim.advance_to(30);
        let (d, _) = hpa_ca_tick(&sim.state, w, 1000, &config, &HpaMemory::default()).unwrap();
        assert!(!d.actions.iter().any(|a| matches!(a, Action::ScaleNodes { .. })));
        sim.advance_to(35);
        let (d, _) = hpa_ca_tick(&sim.state, w, 1000, &config, &HpaMemory::default()).unwrap();
        assert!(d.actions.contains(&Action::ScaleNodes { pool: "default-pool".into(), from: 1, to: 2, delta: 1 }));
    }

    #[test]
    fn node_ceiling_blocks_scale_out() {
        let (mut sim, w) = sim(1);
        sim.bootstrap_pods(w, 4).unwrap();
        sim.advance_to(100);
        let (d, _) = hpa_ca_tick(&sim.state, w, 1000, &HpaConfig::default(), &HpaMemory::default()).unwrap();
        assert!(!d.actions.iter().any(|a| matches!(a, Action::ScaleNodes { .. })));
    }

    #[test]
    fn empty_node_removed_after_idle_delay() {
        let (mut sim, w) = sim(2);
        sim.set_preferred_pool("default-pool").unwrap();
        sim.bootstrap_pods(w, 1).unwrap();
        let config = HpaConfig { ca_max_nodes: 2, ..HpaConfig::default() };
        let (_, mem) = hpa_ca_tick(&sim.state, w, 100, &config, &HpaMemory::default()).unwrap();
        sim.advance_to(599);
        let (d, mem) = hpa_ca_tick(&sim.state, w, 100, &config, &mem).unwrap();
        assert!(!d.actions.iter().any(|a| matches!(a, Action::ScaleNodes { .. })));
        sim.advance_to(600);
        let (d, _) = hpa_ca_tick(&sim.state, w, 100, &config, &mem).unwrap();
        assert!(d.actions.contains(&Action::ScaleNodes { pool: "default-pool".into(), from: 2, to: 1, delta: -1 }));
    }
}
