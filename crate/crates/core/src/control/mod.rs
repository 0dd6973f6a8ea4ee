//! Closed-loop controllers driving the simulated cluster.
//!
//! [`hierarchical`] implements the strategic / planning / execution loop with its
//! make-before-break pool migration; [`reactive`] implements the utilization-driven
//! pod autoscaler plus pending-pod-driven node autoscaler used as the baseline.

pub mod hierarchical;
pub mod migration;
pub mod reactive;

use serde::Serialize;

use crate::engine::{SimEvent, Simulation};
use crate::error::SimError;
use crate::forecast::ForecasterKind;
use crate::planning::{NodePlan, PodPlan, Policy, PolicyName};

pub use hierarchical::{ForecasterChoice, HierarchicalConfig, HierarchicalController};
pub use migration::{MigrationOrchestrator, MigrationPhase, MigrationRecord, MigrationState};
pub use reactive::{HpaConfig, HpaMemory, ReactiveController};

/// A controller plugged into the simulation driver.
pub trait Controller {
    fn name(&self) -> &'static str;

    /// Called once at t=0: schedules the first tick and any timeline events.
    fn start(&mut self, sim: &mut Simulation) -> Result<Vec<ControllerDecision>, SimError>;

    /// Reacts to an event the engine has just applied.
    fn on_event(
        &mut self,
        sim: &mut Simulation,
        event: &SimEvent,
    ) -> Result<Vec<ControllerDecision>, SimError>;

    /// Policy whose weights score the current state.
    fn active_policy(&self) -> &Policy;

    fn migrations(&self) -> &[MigrationRecord] {
        &[]
    }
}

/// Policy timeline: `default_policy` until the first entry, then each entry's policy
/// from its time on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategicSchedule {
    entries: Vec<(u64, PolicyName)>,
    default_policy: PolicyName,
}

impl StrategicSchedule {
    /// Entries must be strictly increasing in time.
    pub fn new(default_policy: PolicyName, entries: Vec<(u64, PolicyName)>) -> Result<Self, String> {
        if let Some(w) = entries.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(format!(
                "schedule times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            ));
        }
        Ok(Self {
            entries,
            default_policy,
        })
    }

    pub fn fixed(policy: PolicyName) -> Self {
        Self {
            entries: Vec::new(),
            default_policy: policy,
        }
    }

    pub fn entries(&self) -> &[(u64, PolicyName)] {
        &self.entries
    }

    pub fn default_policy(&self) -> PolicyName {
        self.default_policy
    }

    pub fn active_at(&self, t: u64) -> PolicyName {
        self.entries
            .iter()
            .take_while(|(at, _)| *at <= t)
            .last()
            .map_or(self.default_policy, |(_, p)| *p)
    }
}

/// Loop phases in execution order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TickPhase {
    Strategic,
    Discovery,
    WorkloadPlanning,
    NodePlanning,
    Execution,
    /// Reactive baseline: observe and recommend.
    Observe,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    ScaleNodes { pool: String, from: u32, to: u32, delta: i64 },
    ScalePods { workload: String, from: u32, to: u32, delta: i64 },
    /// A scale-down held back (stabilization window or migration in flight).
    Deferred { target: String, from: u32, to: u32, reason: &'static str },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForecastRecord {
    pub workload: String,
    pub forecaster: ForecasterKind,
    pub peak_demand_millicores: u32,
    pub basis_peak_millicores: u32,
}

/// Reactive-loop observations for one tick.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HpaObservation {
    pub demand_millicores: u32,
    pub running: u32,
    pub current: u32,
    pub utilization: f64,
    pub recommended: u32,
}

/// One structured decision-log record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControllerDecision {
    pub tick_at: u64,
    pub controller: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyName>,
    pub phases: Vec<TickPhase>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub forecasts: Vec<ForecastRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pod_plans: Vec<PodPlan>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub node_plans: Vec<NodePlan>,
    pub actions: Vec<Action>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hpa: Option<HpaObservation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ControllerDecision {
    pub fn new(tick_at: u64, controller: &'static str) -> Self {
        Self {
            tick_at,
            controller,
            policy: None,
            phases: Vec::new(),
            forecasts: Vec::new(),
            pod_plans: Vec::new(),
            node_plans: Vec::new(),
            actions: Vec::new(),
            hpa: None,
            note: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_resolution() {
        let s = StrategicSchedule::new(
            PolicyName::CostSaving,
            vec![(420, PolicyName::Performance), (800, PolicyName::CostSaving)],
        )
        .unwrap();
        assert_eq!(s.active_at(0), PolicyName::CostSaving);
        assert_eq!(s.active_at(419), PolicyName::CostSaving);
        assert_eq!(s.active_at(420), PolicyName::Performance);
        assert_eq!(s.active_at(900), PolicyName::CostSaving);
    }

    #[test]
    fn schedule_rejects_unsorted_or_duplicate_times() {
        assert!(StrategicSchedule::new(
            PolicyName::CostSaving,
            vec![(10, PolicyName::Performance), (10, PolicyName::CostSaving)]
        )
        .is_err());
        assert!(StrategicSchedule::new(
            PolicyName::CostSaving,
            vec![(20, PolicyName::Performance), (10, PolicyName::CostSaving)]
        )
        .is_err());
    }
}
