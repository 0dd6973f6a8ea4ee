//! Three-tier proactive controller.
//!
//! Each tick runs strategic selection (which policy is active), discovery (which
//! workloads are managed), workload planning (smooth, forecast, size replicas), node
//! planning (bin-pack into the policy's pool) and execution (apply the deltas, nodes
//! before pods). Policy switches are handed to the [`MigrationOrchestrator`].

use serde::{Deserialize, Serialize};

use super::{
    Action, Controller, ControllerDecision, ForecastRecord, MigrationOrchestrator,
    MigrationRecord, StrategicSchedule, TickPhase,
};
use crate::engine::{ClusterState, EventKind, SimEvent, Simulation};
use crate::error::SimError;
use crate::forecast::{detect_period, forecast, smoothed_history, ForecasterKind};
use crate::planning::{plan_nodes, plan_replicas, Policy, PolicyName, RequestSet};
use crate::workload::DemandTrace;

pub const NAME: &str = "mas_h2";

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForecasterChoice {
    Naive,
    MovingAverage {
        window: usize,
    },
    /// With `period` unset the period is detected from history at every tick; when
    /// none is found the tick falls back to the naive forecaster.
    SeasonalPeak {
        #[serde(default)]
        period: Option<u64>,
        #[serde(default = "default_quantile")]
        quantile: f64,
    },
}

fn default_quantile() -> f64 {
    0.95
}

impl ForecasterChoice {
    pub fn resolve(&self, history: &[(u64, f64)]) -> ForecasterKind {
        match *self {
            ForecasterChoice::Naive => ForecasterKind::Naive,
            ForecasterChoice::MovingAverage { window } => ForecasterKind::MovingAverage { window },
            ForecasterChoice::SeasonalPeak { period: Some(period), quantile } => {
                ForecasterKind::SeasonalPeak { period, quantile }
            }
            ForecasterChoice::SeasonalPeak { period: None, quantile } => detect_period(history)
                .map_or(ForecasterKind::Naive, |period| ForecasterKind::SeasonalPeak {
                    period,
                    quantile,
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalConfig {
    pub control_interval: u64,
    pub horizon: u64,
    /// Replicas are sized so the forecast peak lands at this per-pod utilization.
    pub target_utilization: f64,
    pub smoothing_half_life: f64,
    pub forecaster: ForecasterChoice,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        Self {
            control_interval: 300,
            horizon: 300,
            target_utilization: 0.4,
            smoothing_half_life: 30.0,
            forecaster: ForecasterChoice::SeasonalPeak {
                period: None,
                quantile: default_quantile(),
            },
        }
    }
}

/// A workload under control together with the demand it observes.
#[derive(Clone, Debug)]
pub struct ManagedWorkload {
    pub index: usize,
    pub trace: DemandTrace,
}

/// Millicores of request needed for `peak` to run at `target` utilization.
pub fn headroom_basis(peak: u32, target: f64) -> u32 {
    // the epsilon keeps exact quotients such as 800 / 0.4 from rounding up
    ((peak as f64 / target) - 1e-9).ceil().max(0.0) as u32
}

/// Active replica count excluding in-flight migration replacements.
fn current_replicas(state: &ClusterState, workload: usize) -> u32 {
    state
        .replicas(workload)
        .saturating_sub(state.workloads[workload].surge)
}

/// Planning pass for one tick. Reads only cluster state and demand observed strictly
/// before now; the returned decision lists exactly the deltas to apply.
pub fn plan_tick(
    state: &ClusterState,
    policy: &Policy,
    workloads: &[ManagedWorkload],
    other_requests: &RequestSet,
    config: &HierarchicalConfig,
    hold_scale_down: bool,
) -> Result<ControllerDecision, SimError> {
    let now = state.now();
    let mut d = ControllerDecision::new(now, NAME);
    d.policy = Some(policy.name);
    d.phases.extend([TickPhase::Strategic, TickPhase::Discovery]);

    let managed: Vec<&ManagedWorkload> = workloads
        .iter()
        .filter(|w| state.workloads[w.index].managed)
        .collect();
    if managed.is_empty() {
        d.note = Some("no managed workloads".into());
        return Ok(d);
    }

    d.phases.push(TickPhase::WorkloadPlanning);
    for w in &managed {
        let history = w.trace.history_before(now);
        if history.is_empty() {
            continue;
        }
        let smoothed = smoothed_history(&history, config.smoothing_half_life);
        let kind = config.forecaster.resolve(&smoothed);
        let f = forecast(kind, &smoothed, now, config.horizon)?;
        let basis = headroom_basis(f.peak_demand_millicores, config.target_utilization);
        let record = &state.workloads[w.index];
        d.forecasts.push(ForecastRecord {
            workload: record.id.clone(),
            forecaster: kind,
            peak_demand_millicores: f.peak_demand_millicores,
            basis_peak_millicores: basis,
        });
        d.pod_plans.push(plan_replicas(
            &record.id,
            basis,
            record.pod_request_millicores,
            policy,
        )?);
    }
    if d.pod_plans.is_empty() {
        d.note = Some("no demand history yet".into());
        return Ok(d);
    }

    d.phases.push(TickPhase::NodePlanning);
    let node_plan = plan_nodes(&d.pod_plans, other_requests, policy)?;
    node_plan
        .check_constraints()
        .map_err(|e| SimError::invariant("packing_constraints", now, e))?;

    d.phases.push(TickPhase::Execution);
    let pool = state
        .pool_index(&policy.node_pool)
        .ok_or_else(|| SimError::UnknownPool(policy.node_pool.clone()))?;
    let live = state.live_node_count(pool);
    let required = node_plan.required_nodes;
    if required > live || (required < live && !hold_scale_down) {
        d.actions.push(Action::ScaleNodes {
            pool: policy.node_pool.clone(),
            from: live,
            to: required,
            delta: required as i64 - live as i64,
        });
    } else if required < live {
        d.actions.push(Action::Deferred {
            target: policy.node_pool.clone(),
            from: live,
            to: required,
            reason: "migration in progress",
        });
    }
    for (w, plan) in managed.iter().zip(&d.pod_plans) {
        let current = current_replicas(state, w.index);
        let planned = plan.planned_replicas;
        if planned > current || (planned < current && !hold_scale_down) {
            d.actions.push(Action::ScalePods {
                workload: plan.workload_id.clone(),
                from: current,
                to: planned,
                delta: planned as i64 - current as i64,
            });
        } else if planned < current {
            d.actions.push(Action::Deferred {
                target: plan.workload_id.clone(),
                from: current,
                to: planned,
                reason: "migration in progress",
            });
        }
    }
    d.node_plans.push(node_plan);
    Ok(d)
}

/// Applies a decision's actions in order, then runs the scheduler.
pub fn execute(sim: &mut Simulation, decision: &ControllerDecision) -> Result<(), SimError> {
    for action in &decision.actions {
        match action {
            Action::ScaleNodes { pool, to, .. } => {
                sim.resize_pool(pool, *to)?;
            }
            Action::ScalePods { workload, to, .. } => {
                let idx = sim
                    .state
                    .workload_index(workload)
                    .ok_or_else(|| SimError::UnknownWorkload(workload.clone()))?;
                sim.set_replicas(idx, *to)?;
            }
            Action::Deferred { .. } => {}
        }
    }
    sim.schedule_pending_pods()?;
    Ok(())
}

pub struct HierarchicalController {
    config: HierarchicalConfig,
    schedule: StrategicSchedule,
    policies: Vec<Policy>,
    workloads: Vec<ManagedWorkload>,
    other_requests: RequestSet,
    end: u64,
    active: PolicyName,
    migration: MigrationOrchestrator,
}

impl HierarchicalController {
    /// Ticks and policy switches are scheduled on `[0, end)`.
    pub fn new(
        config: HierarchicalConfig,
        schedule: StrategicSchedule,
        policies: Vec<Policy>,
        workloads: Vec<ManagedWorkload>,
        other_requests: RequestSet,
        end: u64,
    ) -> Result<Self, SimError> {
        let names = std::iter::once(schedule.default_policy())
            .chain(schedule.entries().iter().map(|(_, p)| *p));
        for name in names {
            if !policies.iter().any(|p| p.name == name) {
                return Err(SimError::invariant(
                    "policy_defined",
                    0,
                    format!("schedule names undefined policy {name}"),
                ));
            }
        }
        let active = schedule.default_policy();
        Ok(Self {
            config,
            schedule,
            policies,
            workloads,
            other_requests,
            end,
            active,
            migration: MigrationOrchestrator::new(),
        })
    }

    pub fn policy(&self, name: PolicyName) -> &Policy {
        self.policies
            .iter()
            .find(|p| p.name == name)
            .expect("policies validated at construction")
    }

    pub fn migration(&self) -> &MigrationOrchestrator {
        &self.migration
    }

    fn tick(&mut self, sim: &mut Simulation) -> Result<ControllerDecision, SimError> {
        let name = self.schedule.active_at(sim.now());
        let decision = plan_tick(
            &sim.state,
            self.policy(name),
            &self.workloads,
            &self.other_requests,
            &self.config,
            self.migration.in_progress(),
        )?;
        execute(sim, &decision)?;
        let next = sim.now() + self.config.control_interval;
        if next < self.end {
            sim.schedule(next, EventKind::ControlTick { controller: NAME })?;
        }
        Ok(decision)
    }
}

impl Controller for HierarchicalController {
    fn name(&self) -> &'static str {
        NAME
    }

    fn start(&mut self, sim: &mut Simulation) -> Result<Vec<ControllerDecision>, SimError> {
        let pool = self.policy(self.active).node_pool.clone();
        sim.set_preferred_pool(&pool)?;
        sim.schedule(0, EventKind::ControlTick { controller: NAME })?;
        for (at, policy) in self.schedule.entries() {
            if *at < self.end {
                sim.schedule(
                    *at,
                    EventKind::PolicySwitch {
                        policy: policy.as_str().to_string(),
                    },
                )?;
            }
        }
        Ok(Vec::new())
    }

    fn on_event(
        &mut self,
        sim: &mut Simulation,
        event: &SimEvent,
    ) -> Result<Vec<ControllerDecision>, SimError> {
        let mut out = Vec::new();
        match &event.kind {
            EventKind::PolicySwitch { policy } => {
                let next = PolicyName::parse(policy)
                    .ok_or_else(|| SimError::invariant("policy_defined", sim.now(), policy.clone()))?;
                let from = self.policy(self.active).clone();
                let to = self.policy(next).clone();
                self.active = next;
                let mut d = ControllerDecision::new(sim.now(), NAME);
                d.phases.push(TickPhase::Strategic);
                d.policy = Some(next);
                d.note = Some(if self.migration.request(&from, &to, sim.now()) {
                    format!("policy {} -> {}: migration requested", from.name, to.name)
                } else {
                    format!("policy {} -> {}: same pool, no migration", from.name, to.name)
                });
                out.push(d);
            }
            EventKind::ControlTick { controller } if *controller == NAME => {
                out.push(self.tick(sim)?);
            }
            _ => {}
        }
        out.extend(self.migration.progress(sim, &self.other_requests)?);
        self.migration.observe(&sim.state);
        Ok(out)
    }

    fn active_policy(&self) -> &Policy {
        self.policy(self.active)
    }

    fn migrations(&self) -> &[MigrationRecord] {
        self.migration.records()
    }
}
