//! Make-before-break pool migration.
//!
//! `Idle -> ProvisioningNew -> MigratingWorkload -> DecommissioningOld -> Idle`.
//! A switch is only started once the managed workloads have converged (every desired
//! replica Running), so the replica count at that moment is a sound reference. Each
//! old pod gets a replacement pinned to the new pool and is terminated only after the
//! replacement is Running, so serving capacity never dips below the reference.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use super::{Action, ControllerDecision, TickPhase};
use crate::engine::{ClusterState, NodeState, PodId, PodState, Simulation};
use crate::error::SimError;
use crate::planning::{pack_ffd, plan_nodes, PodPlan, Policy, PolicyName, RequestSet};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum MigrationPhase {
    Idle,
    ProvisioningNew,
    MigratingWorkload,
    DecommissioningOld,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MigrationRecord {
    pub from_policy: PolicyName,
    pub to_policy: PolicyName,
    pub from_pool: String,
    pub to_pool: String,
    pub requested_at: u64,
    pub started_at: Option<u64>,
    pub provisioned_at: Option<u64>,
    pub migrated_at: Option<u64>,
    pub finished_at: Option<u64>,
    /// Desired replicas of the managed workloads when the migration started.
    pub reference_replicas: u32,
    /// Fewest Running managed replicas seen at any event boundary while active.
    pub min_running: Option<u32>,
    /// Seconds during which some workload ran fewer replicas than its reference.
    pub downtime_seconds: u64,
    pub replaced_pods: u32,
    pub residual_old_nodes: u32,
}

#[derive(Clone, Debug)]
struct Request {
    from: Policy,
    to: Policy,
}

#[derive(Clone, Debug)]
pub struct MigrationState {
    pub phase: MigrationPhase,
    pub from_pool: usize,
    pub to_pool: usize,
    /// `(workload, desired replicas at start)`.
    pub reference: Vec<(usize, u32)>,
    /// `(old pod, replacement)` pairs still waiting for the replacement to run.
    pub replacements: Vec<(PodId, PodId)>,
    from_policy: Policy,
    to_policy: Policy,
    record: usize,
    last_observation: Option<(u64, bool)>,
}

#[derive(Clone, Debug, Default)]
pub struct MigrationOrchestrator {
    current: Option<MigrationState>,
    queue: VecDeque<Request>,
    records: Vec<MigrationRecord>,
}

const NAME: &str = "mas_h2";

fn decision(now: u64, note: String) -> ControllerDecision {
    let mut d = ControllerDecision::new(now, NAME);
    d.phases.push(TickPhase::Execution);
    d.note = Some(note);
    d
}

fn pool_index(state: &ClusterState, id: &str) -> Result<usize, SimError> {
    state
        .pool_index(id)
        .ok_or_else(|| SimError::UnknownPool(id.to_string()))
}

fn converged(state: &ClusterState) -> bool {
    state.managed_workloads().all(|w| {
        let rec = &state.workloads[w];
        rec.surge == 0 && state.running(w) == rec.desired
    })
}

fn terminating_on(state: &ClusterState, pool: usize) -> bool {
    state
        .live_nodes(pool)
        .flat_map(|n| n.bound_pods.iter())
        .any(|p| state.pod(*p).state == PodState::Terminating)
}

impl MigrationOrchestrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> MigrationPhase {
        self.current
            .as_ref()
            .map_or(MigrationPhase::Idle, |m| m.phase)
    }

    pub fn state(&self) -> Option<&MigrationState> {
        self.current.as_ref()
    }

    /// True while a migration runs or waits to start. Scale-downs are held meanwhile.
    pub fn in_progress(&self) -> bool {
        self.current.is_some() || !self.queue.is_empty()
    }

    pub fn records(&self) -> &[MigrationRecord] {
        &self.records
    }

    /// Queues a pool migration. Returns false when both policies use the same pool,
    /// in which case nothing needs to move.
    pub fn request(&mut self, from: &Policy, to: &Policy, now: u64) -> bool {
        if from.node_pool == to.node_pool {
            return false;
        }
        self.queue.push_back(Request {
            from: from.clone(),
            to: to.clone(),
        });
        self.records.push(MigrationRecord {
            from_policy: from.name,
            to_policy: to.name,
            from_pool: from.node_pool.clone(),
            to_pool: to.node_pool.clone(),
            requested_at: now,
            started_at: None,
            provisioned_at: None,
            migrated_at: None,
            finished_at: None,
            reference_replicas: 0,
            min_running: None,
            downtime_seconds: 0,
            replaced_pods: 0,
            residual_old_nodes: 0,
        });
        true
    }

    /// Advances the state machine as far as the cluster allows. Called after every
    /// event.
    pub fn progress(
        &mut self,
        sim: &mut Simulation,
        other_requests: &RequestSet,
    ) -> Result<Vec<ControllerDecision>, SimError> {
        let mut out = Vec::new();
        loop {
            let Some(phase) = self.current.as_ref().map(|m| m.phase) else {
                if self.queue.is_empty() || !converged(&sim.state) {
                    break;
                }
                let request = self.queue.pop_front().expect("queue checked non-empty");
                out.push(self.start(sim, request, other_requests)?);
                continue;
            };
            match phase {
                MigrationPhase::Idle => unreachable!("idle migrations are cleared"),
                MigrationPhase::ProvisioningNew => {
                    let m = self.current.as_mut().expect("active");
                    let state = &sim.state;
                    let provisioning = state.live_nodes(m.to_pool).any(|n| n.state != NodeState::Ready);
                    if provisioning {
                        break;
                    }
                    m.phase = MigrationPhase::MigratingWorkload;
                    self.records[m.record].provisioned_at = Some(state.now());
                    out.push(decision(state.now(), "migration: new pool ready, moving workload".into()));
                }
                MigrationPhase::MigratingWorkload => {
                    if !self.migrate_step(sim)? {
                        break;
                    }
                    let m = self.current.as_mut().expect("active");
                    m.phase = MigrationPhase::DecommissioningOld;
                    self.records[m.record].migrated_at = Some(sim.now());
                }
                MigrationPhase::DecommissioningOld => {
                    // let retired pods finish their graceful termination first
                    let from_pool = self.current.as_ref().expect("active").from_pool;
                    if terminating_on(&sim.state, from_pool) {
                        break;
                    }
                    out.push(self.decommission(sim, other_requests)?);
                }
            }
        }
        Ok(out)
    }

    fn start(
        &mut self,
        sim: &mut Simulation,
        request: Request,
        other_requests: &RequestSet,
    ) -> Result<ControllerDecision, SimError> {
        let now = sim.now();
        let from_pool = pool_index(&sim.state, &request.from.node_pool)?;
        let to_pool = pool_index(&sim.state, &request.to.node_pool)?;
        let managed: Vec<usize> = sim.state.managed_workloads().collect();
        let reference: Vec<(usize, u32)> = managed
            .iter()
            .map(|w| (*w, sim.state.workloads[*w].desired))
            .collect();
        let pod_plans: Vec<PodPlan> = reference
            .iter()
            .map(|(w, desired)| {
                let rec = &sim.state.workloads[*w];
                PodPlan {
                    workload_id: rec.id.clone(),
                    pod_request_millicores: rec.pod_request_millicores,
                    basis_peak_millicores: desired * rec.pod_request_millicores,
                    raw_replicas: *desired,
                    planned_replicas: *desired,
                }
            })
            .collect();
        let plan = plan_nodes(&pod_plans, other_requests, &request.to)?;
        let live = sim.state.live_node_count(to_pool);
        let target = live.max(plan.required_nodes);
        sim.resize_pool(&request.to.node_pool, target)?;
        sim.set_preferred_pool(&request.to.node_pool)?;

        // the record for a queued request is the oldest one not yet started
        let record = self
            .records
            .iter()
            .position(|r| r.started_at.is_none())
            .expect("every queued request has a record");
        let rec = &mut self.records[record];
        rec.started_at = Some(now);
        rec.reference_replicas = reference.iter().map(|(_, r)| r).sum();

        let mut d = decision(
            now,
            format!(
                "migration started: {} -> {} ({} -> {})",
                request.from.name, request.to.name, request.from.node_pool, request.to.node_pool
            ),
        );
        d.policy = Some(request.to.name);
        d.node_plans.push(plan);
        if target != live {
            d.actions.push(Action::ScaleNodes {
                pool: request.to.node_pool.clone(),
                from: live,
                to: target,
                delta: target as i64 - live as i64,
            });
        }
        self.current = Some(MigrationState {
            phase: MigrationPhase::ProvisioningNew,
            from_pool,
            to_pool,
            reference,
            replacements: Vec::new(),
            from_policy: request.from,
            to_policy: request.to,
            record,
            last_observation: None,
        });
        Ok(d)
    }

    /// One pass of the per-replica hand-over. Returns true once every managed replica
    /// runs on the new pool.
    fn migrate_step(&mut self, sim: &mut Simulation) -> Result<bool, SimError> {
        let m = self.current.as_mut().expect("active");
        let to_pool = m.to_pool;

        let mut still_waiting = Vec::new();
        for (old, new) in std::mem::take(&mut m.replacements) {
            match sim.state.pod(new).state {
                PodState::Running => sim.retire_replaced(old)?,
                PodState::Terminating | PodState::Deleted => {
                    let w = sim.state.pod(new).workload;
                    sim.abandon_replacement(w);
                }
                _ => still_waiting.push((old, new)),
            }
        }
        m.replacements = still_waiting;

        let replaced: BTreeSet<PodId> = m.replacements.iter().map(|(o, _)| *o).collect();
        let replacing: BTreeSet<PodId> = m.replacements.iter().map(|(_, n)| *n).collect();
        let managed: BTreeSet<usize> = sim.state.managed_workloads().collect();
        let mut to_replace = Vec::new();
        let mut to_pin = Vec::new();
        let mut done = m.replacements.is_empty();
        for pod in &sim.state.pods {
            if !managed.contains(&pod.workload)
                || !pod.state.is_active()
                || replaced.contains(&pod.id)
                || replacing.contains(&pod.id)
            {
                continue;
            }
            let on_new_pool = pod
                .bound_node
                .is_some_and(|n| sim.state.node(n).pool == to_pool);
            if !(on_new_pool && pod.state == PodState::Running) {
                done = false;
            }
            match pod.bound_node {
                None if pod.pool_affinity != Some(to_pool) => to_pin.push(pod.id),
                Some(_) if !on_new_pool => to_replace.push(pod.id),
                _ => {}
            }
        }
        for id in to_pin {
            sim.state.pods[id.0 as usize].pool_affinity = Some(to_pool);
        }
        let record = m.record;
        for old in to_replace {
            let new = sim.start_replacement(old, to_pool);
            m.replacements.push((old, new));
            self.records[record].replaced_pods += 1;
        }
        sim.schedule_pending_pods()?;
        Ok(done)
    }

    fn decommission(
        &mut self,
        sim: &mut Simulation,
        other_requests: &RequestSet,
    ) -> Result<ControllerDecision, SimError> {
        let m = self.current.take().expect("active");
        let now = sim.now();
        let capacity = m.from_policy.node_capacity_millicores;
        let residual = pack_ffd(other_requests, capacity)?.required_nodes;
        let live = sim.state.live_node_count(m.from_pool);
        let target = residual.min(live);
        sim.resize_pool(&m.from_policy.node_pool, target)?;

        let rec = &mut self.records[m.record];
        rec.finished_at = Some(now);
        rec.residual_old_nodes = target;
        if let Some((t0, true)) = m.last_observation {
            rec.downtime_seconds += now - t0;
        }
        let mut d = decision(
            now,
            format!(
                "migration finished: {} kept at {target} node(s) for unmanaged requests",
                m.from_policy.node_pool
            ),
        );
        d.policy = Some(m.to_policy.name);
        if target != live {
            d.actions.push(Action::ScaleNodes {
                pool: m.from_policy.node_pool.clone(),
                from: live,
                to: target,
                delta: target as i64 - live as i64,
            });
        }
        Ok(d)
    }

    /// Samples serving capacity at an event boundary while a migration is active.
    pub fn observe(&mut self, state: &ClusterState) {
        let Some(m) = self.current.as_mut() else {
            return;
        };
        let now = state.now();
        let running: u32 = m.reference.iter().map(|(w, _)| state.running(*w)).sum();
        let deficit = m.reference.iter().any(|(w, r)| state.running(*w) < *r);
        let rec = &mut self.records[m.record];
        rec.min_running = Some(rec.min_running.map_or(running, |v| v.min(running)));
        if let Some((t0, true)) = m.last_observation {
            rec.downtime_seconds += now - t0;
        }
        m.last_observation = Some((now, deficit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ClusterConfig, PoolSpec, MICROS_PER_UNIT};

    fn pool(id: &str, capacity: u32, rate: u64) -> PoolSpec {
        PoolSpec {
            id: id.into(),
            machine_type: "test".into(),
            node_capacity_millicores: capacity,
            cost_rate_micros: rate * MICROS_PER_UNIT,
            provisioning_delay: 120,
        }
    }

    fn policy(name: PolicyName, pool: &str, capacity: u32) -> Policy {
        Policy {
            name,
            node_pool: pool.into(),
            node_capacity_millicores: capacity,
            min_replicas: 1,
            w_perf: 0.5,
            w_cost: 0.5,
        }
    }

    fn run_until_idle(sim: &mut Simulation, mig: &mut MigrationOrchestrator, other: &RequestSet) {
        mig.progress(sim, other).unwrap();
        mig.observe(&sim.state);
        while mig.in_progress() {
            sim.step().unwrap();
            mig.progress(sim, other).unwrap();
            mig.observe(&sim.state);
        }
    }

    #[test]
    fn same_pool_switch_is_not_a_migration() {
        let mut mig = MigrationOrchestrator::new();
        let a = policy(PolicyName::CostSaving, "a", 1000);
        let mut b = a.clone();
        b.name = PolicyName::Performance;
        assert!(!mig.request(&a, &b, 0));
        assert!(!mig.in_progress());
    }

    #[test]
    fn make_before_break_keeps_reference_running() {
        let mut sim = Simulation::new(
            vec![pool("small", 940, 1), pool("big", 1930, 3)],
            ClusterConfig::default(),
        );
        let sys = sim.add_workload("kube-system", 190, false);
        let web = sim.add_workload("web", 250, true);
        sim.bootstrap_nodes("small", 2).unwrap();
        sim.set_preferred_pool("small").unwrap();
        sim.bootstrap_pods(sys, 1).unwrap();
        sim.bootstrap_pods(web, 4).unwrap();
        assert_eq!(sim.state.running(web), 4);

        let other = RequestSet::new(vec![crate::planning::RequestItem::new("kube-system", 190)]);
        let mut mig = MigrationOrchestrator::new();
        let from = policy(PolicyName::CostSaving, "small", 940);
        let to = policy(PolicyName::Performance, "big", 1930);
        assert!(mig.request(&from, &to, 0));
        run_until_idle(&mut sim, &mut mig, &other);

        let rec = &mig.records()[0];
        assert_eq!(rec.reference_replicas, 4);
        assert_eq!(rec.min_running, Some(4));
        assert_eq!(rec.downtime_seconds, 0);
        assert_eq!(rec.replaced_pods, 4);
        assert_eq!(rec.provisioned_at, Some(120));
        assert_eq!(rec.residual_old_nodes, 1);
        let big = sim.state.pool_index("big").unwrap();
        for pod in sim.state.pods_of(web).filter(|p| p.state.is_active()) {
            assert_eq!(sim.state.node(pod.bound_node.unwrap()).pool, big);
        }
        assert_eq!(sim.state.workloads[web].surge, 0);
        assert_eq!(sim.state.replicas(web), 4);
    }

    #[test]
    fn start_waits_for_convergence() {
        let mut sim = Simulation::new(
            vec![pool("small", 940, 1), pool("big", 1930, 3)],
            ClusterConfig::default(),
        );
        let web = sim.add_workload("web", 250, true);
        sim.bootstrap_nodes("small", 1).unwrap();
        sim.set_replicas(web, 2).unwrap();
        sim.schedule_pending_pods().unwrap();
        let mut mig = MigrationOrchestrator::new();
        let from = policy(PolicyName::CostSaving, "small", 940);
        let to = policy(PolicyName::Performance, "big", 1930);
        mig.request(&from, &to, 0);
        assert!(mig.progress(&mut sim, &RequestSet::default()).unwrap().is_empty());
        assert_eq!(mig.phase(), MigrationPhase::Idle);
        sim.step().unwrap();
        sim.step().unwrap();
        let ds = mig.progress(&mut sim, &RequestSet::default()).unwrap();
        assert_eq!(mig.phase(), MigrationPhase::ProvisioningNew);
        assert_eq!(mig.records()[0].started_at, Some(10));
        assert!(ds[0].note.as_deref().unwrap().starts_with("migration started"));
    }
}
