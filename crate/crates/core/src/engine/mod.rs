//! Deterministic discrete-event core.
//!
//! [`Simulation`] owns the cluster state machine and the event queue. Nodes move
//! `Provisioning -> Ready -> Draining -> Deleted`; pods move
//! `Pending -> Starting -> Running -> Terminating -> Deleted`, with eviction
//! sending bound pods back to `Pending`. Placement is gated on CPU requests only.

mod cluster;
pub mod event;

pub use cluster::{
    ClusterConfig, ClusterState, CostLedger, Node, NodeId, NodePool, NodeState, Pod, PodId,
    PodState, PoolSpec, SimClock, WorkloadRecord, MICROS_PER_UNIT,
};
pub use event::{EventKind, EventQueue, SimEvent};

use crate::error::SimError;

/// Outcome of a pool resize.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResizeOutcome {
    pub added: Vec<NodeId>,
    pub removed: Vec<NodeId>,
}

pub struct Simulation {
    pub state: ClusterState,
    queue: EventQueue,
    log: Vec<String>,
}

impl Simulation {
    pub fn new(pools: Vec<PoolSpec>, config: ClusterConfig) -> Self {
        Self {
            state: ClusterState::new(pools, config),
            queue: EventQueue::new(),
            log: Vec::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.state.now()
    }

    pub fn event_log(&self) -> &[String] {
        &self.log
    }

    pub fn take_event_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_time(&self) -> Option<u64> {
        self.queue.peek_time()
    }

    pub fn schedule(&mut self, fire_at: u64, kind: EventKind) -> Result<u64, SimError> {
        let now = self.now();
        if fire_at < now {
            return Err(SimError::EventInPast { fire_at, now });
        }
        Ok(self.queue.push(fire_at, kind))
    }

    pub fn add_workload(&mut self, id: impl Into<String>, pod_request: u32, managed: bool) -> usize {
        self.state.workloads.push(WorkloadRecord {
            id: id.into(),
            pod_request_millicores: pod_request,
            desired: 0,
            surge: 0,
            managed,
        });
        self.state.workloads.len() - 1
    }

    pub fn set_preferred_pool(&mut self, pool: &str) -> Result<(), SimError> {
        let idx = self
            .state
            .pool_index(pool)
            .ok_or_else(|| SimError::UnknownPool(pool.to_string()))?;
        self.state.preferred_pool = Some(idx);
        Ok(())
    }

    /// Adds already-Ready nodes. Used to seed the initial cluster at t=0.
    pub fn bootstrap_nodes(&mut self, pool: &str, count: u32) -> Result<Vec<NodeId>, SimError> {
        let idx = self
            .state
            .pool_index(pool)
            .ok_or_else(|| SimError::UnknownPool(pool.to_string()))?;
        let now = self.now();
        Ok((0..count)
            .map(|_| self.new_node(idx, NodeState::Ready, now))
            .collect())
    }

    fn new_node(&mut self, pool: usize, state: NodeState, ready_at: u64) -> NodeId {
        let id = NodeId(self.state.nodes.len() as u32);
        self.state.nodes.push(Node {
            id,
            pool,
            state,
            created_at: self.now(),
            ready_at,
            bound_pods: Default::default(),
            remove_when_ready: false,
        });
        self.state.pools[pool].nodes.push(id);
        id
    }

    fn set_node_state(&mut self, id: NodeId, next: NodeState) -> Result<(), SimError> {
        let node = &mut self.state.nodes[id.0 as usize];
        if !node.state.can_become(next) {
            return Err(SimError::NodeTransition {
                node: id,
                from: node.state.name(),
                to: next.name(),
            });
        }
        node.state = next;
        Ok(())
    }

    fn set_pod_state(&mut self, id: PodId, next: PodState) -> Result<(), SimError> {
        let pod = &mut self.state.pods[id.0 as usize];
        if !pod.state.can_become(next) {
            return Err(SimError::PodTransition {
                pod: id,
                from: pod.state.name(),
                to: next.name(),
            });
        }
        pod.state = next;
        Ok(())
    }

    fn unbind(&mut self, id: PodId) {
        if let Some(node) = self.state.pods[id.0 as usize].bound_node.take() {
            self.state.nodes[node.0 as usize].bound_pods.remove(&id);
        }
    }

    /// Creates `count` Pending pods for a workload without touching `desired`.
    pub fn create_pods(
        &mut self,
        workload: usize,
        count: u32,
        pool_affinity: Option<usize>,
    ) -> Vec<PodId> {
        let now = self.now();
        let request = self.state.workloads[workload].pod_request_millicores;
        let startup_delay = self.state.config.pod_startup_delay;
        (0..count)
            .map(|_| {
                let id = PodId(self.state.pods.len() as u32);
                self.state.pods.push(Pod {
                    id,
                    workload,
                    cpu_request_millicores: request,
                    state: PodState::Pending,
                    bound_node: None,
                    startup_delay,
                    incarnation: 0,
                    created_at: now,
                    pending_since: Some(now),
                    running_since: None,
                    pool_affinity,
                });
                id
            })
            .collect()
    }

    /// Creates `count` pods directly in the Running state on the best-fitting Ready
    /// node, raising `desired` accordingly. Seeds the initial cluster at t=0; pods that
    /// fit nowhere stay Pending.
    pub fn bootstrap_pods(&mut self, workload: usize, count: u32) -> Result<Vec<PodId>, SimError> {
        self.state.workloads[workload].desired += count;
        let now = self.now();
        let ids = self.create_pods(workload, count, None);
        for id in &ids {
            let Some(node) = self.pick_node(*id) else {
                continue;
            };
            self.set_pod_state(*id, PodState::Starting)?;
            self.set_pod_state(*id, PodState::Running)?;
            let pod = &mut self.state.pods[id.0 as usize];
            pod.bound_node = Some(node);
            pod.pending_since = None;
            pod.running_since = Some(now);
            self.state.nodes[node.0 as usize].bound_pods.insert(*id);
        }
        Ok(ids)
    }

    /// Starts graceful termination. Pending pods are deleted outright.
    pub fn terminate_pod(&mut self, id: PodId) -> Result<(), SimError> {
        let now = self.now();
        match self.state.pod(id).state {
            PodState::Pending => {
                self.set_pod_state(id, PodState::Deleted)?;
                self.state.pods[id.0 as usize].pending_since = None;
            }
            PodState::Starting | PodState::Running => {
                self.set_pod_state(id, PodState::Terminating)?;
                let pod = &mut self.state.pods[id.0 as usize];
                pod.incarnation += 1;
                let incarnation = pod.incarnation;
                let delay = self.state.config.pod_termination_delay;
                self.schedule(now + delay, EventKind::PodTerminated { pod: id, incarnation })?;
            }
            PodState::Terminating | PodState::Deleted => {}
        }
        Ok(())
    }

    /// Applies a replica target: sets `desired` and creates or terminates pods.
    /// Terminations take Pending pods first, then Starting, then the youngest Running.
    /// Returns the applied delta.
    pub fn set_replicas(&mut self, workload: usize, target: u32) -> Result<i64, SimError> {
        self.state.workloads[workload].desired = target;
        let w = &self.state.workloads[workload];
        // in-flight replacements are not part of the target
        let current = self.state.replicas(workload).saturating_sub(w.surge);
        let delta = target as i64 - current as i64;
        if delta > 0 {
            self.create_pods(workload, delta as u32, None);
        } else if delta < 0 {
            let mut victims: Vec<&Pod> = self
                .state
                .pods_of(workload)
                .filter(|p| p.state.is_active())
                .collect();
            victims.sort_by_key(|p| {
                let class = match p.state {
                    PodState::Pending => 0,
                    PodState::Starting => 1,
                    _ => 2,
                };
                (class, std::cmp::Reverse(p.running_since.unwrap_or(p.created_at)), std::cmp::Reverse(p.id))
            });
            let ids: Vec<PodId> = victims.iter().take((-delta) as usize).map(|p| p.id).collect();
            for id in ids {
                self.terminate_pod(id)?;
            }
        }
        Ok(delta)
    }

    /// Creates a replacement for `old`, restricted to `pool`. Counted as surge until
    /// [`Simulation::retire_replaced`] is called.
    pub fn start_replacement(&mut self, old: PodId, pool: usize) -> PodId {
        let workload = self.state.pod(old).workload;
        self.state.workloads[workload].surge += 1;
        self.create_pods(workload, 1, Some(pool))[0]
    }

    pub fn retire_replaced(&mut self, old: PodId) -> Result<(), SimError> {
        let workload = self.state.pod(old).workload;
        let w = &mut self.state.workloads[workload];
        w.surge = w.surge.saturating_sub(1);
        self.terminate_pod(old)
    }

    /// Drops a replacement that will never come up (its pod was lost).
    pub fn abandon_replacement(&mut self, workload: usize) {
        let w = &mut self.state.workloads[workload];
        w.surge = w.surge.saturating_sub(1);
    }

    fn evict(&mut self, id: PodId) -> Result<(), SimError> {
        let now = self.now();
        match self.state.pod(id).state {
            PodState::Starting | PodState::Running => {
                self.unbind(id);
                self.set_pod_state(id, PodState::Pending)?;
                let pod = &mut self.state.pods[id.0 as usize];
                pod.incarnation += 1;
                pod.pending_since = Some(now);
                pod.running_since = None;
            }
            PodState::Terminating => {
                self.unbind(id);
                self.set_pod_state(id, PodState::Deleted)?;
                self.state.pods[id.0 as usize].incarnation += 1;
            }
            PodState::Pending | PodState::Deleted => {}
        }
        Ok(())
    }

    fn drain_node(&mut self, id: NodeId) -> Result<(), SimError> {
        self.set_node_state(id, NodeState::Draining)?;
        let pods: Vec<PodId> = self.state.node(id).bound_pods.iter().copied().collect();
        for pod in pods {
            self.evict(pod)?;
        }
        // all pods are gone, so the node empties immediately
        self.set_node_state(id, NodeState::Deleted)
    }

    /// Grows or shrinks a pool to `target` live nodes. New nodes become Ready after the
    /// pool's provisioning delay. Shrinking drains the nodes with the fewest bound pods
    /// (ties: highest node id); a Provisioning victim is removed as soon as it is Ready.
    pub fn resize_pool(&mut self, pool: &str, target: u32) -> Result<ResizeOutcome, SimError> {
        let idx = self
            .state
            .pool_index(pool)
            .ok_or_else(|| SimError::UnknownPool(pool.to_string()))?;
        let current = self.state.live_node_count(idx);
        let mut outcome = ResizeOutcome::default();
        if target > current {
            let delay = self.state.pools[idx].spec.provisioning_delay;
            let ready_at = self.now() + delay;
            for _ in current..target {
                let id = self.new_node(idx, NodeState::Provisioning, ready_at);
                self.schedule(ready_at, EventKind::NodeReady { node: id })?;
                outcome.added.push(id);
            }
        } else if target < current {
            let mut candidates: Vec<(usize, std::cmp::Reverse<NodeId>)> = self
                .state
                .live_nodes(idx)
                .map(|n| (n.bound_pods.len(), std::cmp::Reverse(n.id)))
                .collect();
            candidates.sort();
            for (_, std::cmp::Reverse(id)) in candidates.into_iter().take((current - target) as usize) {
                match self.state.node(id).state {
                    NodeState::Ready => self.drain_node(id)?,
                    _ => self.state.nodes[id.0 as usize].remove_when_ready = true,
                }
                outcome.removed.push(id);
            }
            self.schedule_pending_pods()?;
        }
        Ok(outcome)
    }

    /// Binds every Pending pod that fits somewhere. Candidates are Ready nodes of the
    /// pod's affinity pool if it has one, otherwise the preferred pool first and then
    /// any Ready node. Within a candidate set the tightest fit wins (ties: lowest id).
    pub fn schedule_pending_pods(&mut self) -> Result<Vec<(PodId, NodeId)>, SimError> {
        let pending: Vec<PodId> = self
            .state
            .pods
            .iter()
            .filter(|p| p.state == PodState::Pending)
            .map(|p| p.id)
            .collect();
        let mut bindings = Vec::new();
        for pod in pending {
            if let Some(node) = self.pick_node(pod) {
                self.bind(pod, node)?;
                bindings.push((pod, node));
            }
        }
        Ok(bindings)
    }

    fn pick_node(&self, pod: PodId) -> Option<NodeId> {
        let p = self.state.pod(pod);
        let request = p.cpu_request_millicores;
        let best_in = |pool: Option<usize>| -> Option<NodeId> {
            self.state
                .ready_nodes()
                .filter(|n| pool.is_none_or(|pool| n.pool == pool))
                .map(|n| (self.state.free_capacity(n.id), n.id))
                .filter(|(free, _)| *free >= request)
                .min()
                .map(|(_, id)| id)
        };
        match p.pool_affinity {
            Some(pool) => best_in(Some(pool)),
            None => self
                .state
                .preferred_pool
                .and_then(|pool| best_in(Some(pool)))
                .or_else(|| best_in(None)),
        }
    }

    fn bind(&mut self, pod: PodId, node: NodeId) -> Result<(), SimError> {
        self.set_pod_state(pod, PodState::Starting)?;
        let now = self.now();
        let p = &mut self.state.pods[pod.0 as usize];
        p.bound_node = Some(node);
        p.pending_since = None;
        let incarnation = p.incarnation;
        let fire_at = now + p.startup_delay;
        self.state.nodes[node.0 as usize].bound_pods.insert(pod);
        self.schedule(fire_at, EventKind::PodStarted { pod, incarnation })?;
        Ok(())
    }

    /// Advances the clock to `t`, accruing cost for the elapsed interval.
    pub fn advance_to(&mut self, t: u64) {
        let now = self.now();
        if t > now {
            self.state.accrue(t - now);
            self.state.clock.advance_to(t);
        }
    }

    /// Pops and applies the earliest event. Engine-owned transitions (node readiness,
    /// pod start and termination) are applied here; the fired event is returned so a
    /// controller can react to it.
    pub fn step(&mut self) -> Result<SimEvent, SimError> {
        let event = self.queue.pop().ok_or(SimError::QueueEmpty)?;
        self.advance_to(event.fire_at);
        let mut stale = false;
        match &event.kind {
            EventKind::NodeReady { node } => {
                let node = *node;
                self.set_node_state(node, NodeState::Ready)?;
                if self.state.node(node).remove_when_ready {
                    self.drain_node(node)?;
                }
                self.schedule_pending_pods()?;
            }
            EventKind::PodStarted { pod, incarnation } => {
                let p = self.state.pod(*pod);
                if p.incarnation == *incarnation && p.state == PodState::Starting {
                    let pod = *pod;
                    self.set_pod_state(pod, PodState::Running)?;
                    self.state.pods[pod.0 as usize].running_since = Some(event.fire_at);
                } else {
                    stale = true;
                }
            }
            EventKind::PodTerminated { pod, incarnation } => {
                let p = self.state.pod(*pod);
                if p.incarnation == *incarnation && p.state == PodState::Terminating {
                    let pod = *pod;
                    self.unbind(pod);
                    self.set_pod_state(pod, PodState::Deleted)?;
                    self.schedule_pending_pods()?;
                } else {
                    stale = true;
                }
            }
            EventKind::WorkloadPhaseChange { .. }
            | EventKind::PolicySwitch { .. }
            | EventKind::ControlTick { .. } => {}
        }
        if stale {
            self.log.push(format!("{event} stale"));
        } else {
            self.log.push(event.to_string());
        }
        Ok(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(id: &str, capacity: u32) -> PoolSpec {
        PoolSpec {
            id: id.to_string(),
            machine_type: "test".into(),
            node_capacity_millicores: capacity,
            cost_rate_micros: MICROS_PER_UNIT,
            provisioning_delay: 120,
        }
    }

    fn sim(capacity: u32) -> Simulation {
        Simulation::new(vec![pool("a", capacity), pool("b", capacity)], ClusterConfig::default())
    }

    #[test]
    fn pending_pod_binds_to_only_ready_node() {
        let mut s = sim(2000);
        let other = s.add_workload("sys", 250, false);
        let w = s.add_workload("web", 250, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.create_pods(other, 1, None); // leaves 1750m free
        s.schedule_pending_pods().unwrap();
        let pod = s.create_pods(w, 1, None)[0];
        let bound = s.schedule_pending_pods().unwrap();
        assert_eq!(bound, vec![(pod, NodeId(0))]);
        assert_eq!(s.state.pod(pod).state, PodState::Starting);
    }

    #[test]
    fn pod_stays_pending_without_ready_nodes() {
        let mut s = sim(2000);
        let w = s.add_workload("web", 250, true);
        let pod = s.create_pods(w, 1, None)[0];
        assert!(s.schedule_pending_pods().unwrap().is_empty());
        assert_eq!(s.state.pod(pod).state, PodState::Pending);
    }

    #[test]
    fn only_one_of_two_large_pods_fits() {
        let mut s = sim(1000);
        let w = s.add_workload("big", 600, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.create_pods(w, 2, None);
        let bound = s.schedule_pending_pods().unwrap();
        assert_eq!(bound.len(), 1);
        assert_eq!(s.state.pending(w), 1);
    }

    #[test]
    fn node_ready_fires_at_provisioning_delay() {
        let mut s = sim(2000);
        s.bootstrap_nodes("a", 1).unwrap();
        let out = s.resize_pool("a", 3).unwrap();
        assert_eq!(out.added.len(), 2);
        for id in &out.added {
            assert_eq!(s.state.node(*id).state, NodeState::Provisioning);
            assert_eq!(s.state.node(*id).ready_at, 120);
        }
        let ev = s.step().unwrap();
        assert_eq!(ev.fire_at, 120);
        assert_eq!(s.now(), 120);
        assert_eq!(s.state.node(out.added[0]).state, NodeState::Ready);
    }

    #[test]
    fn node_ready_precedes_tick_at_same_time() {
        let mut s = sim(2000);
        s.schedule(120, EventKind::ControlTick { controller: "c" }).unwrap();
        s.resize_pool("a", 1).unwrap();
        assert_eq!(s.step().unwrap().kind.name(), "NodeReady");
        assert_eq!(s.step().unwrap().kind.name(), "ControlTick");
        assert_eq!(s.step(), Err(SimError::QueueEmpty));
    }

    #[test]
    fn pod_startup_delay_arithmetic() {
        let mut s = sim(2000);
        let w = s.add_workload("web", 250, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.schedule(50, EventKind::ControlTick { controller: "c" }).unwrap();
        s.step().unwrap();
        let pod = s.create_pods(w, 1, None)[0];
        s.schedule_pending_pods().unwrap();
        let ev = s.step().unwrap();
        assert_eq!(ev.fire_at, 60);
        assert_eq!(s.state.pod(pod).state, PodState::Running);
    }

    #[test]
    fn resize_to_current_count_is_identity() {
        let mut s = sim(2000);
        s.bootstrap_nodes("a", 2).unwrap();
        let out = s.resize_pool("a", 2).unwrap();
        assert_eq!(out, ResizeOutcome::default());
        assert_eq!(s.pending_events(), 0);
    }

    #[test]
    fn empty_node_drains_first() {
        let mut s = sim(2000);
        let w = s.add_workload("web", 250, true);
        let nodes = s.bootstrap_nodes("a", 2).unwrap();
        // pin all three pods onto the first node
        s.state.preferred_pool = Some(0);
        s.create_pods(w, 3, None);
        for pod in s.state.pods.iter().map(|p| p.id).collect::<Vec<_>>() {
            s.bind(pod, nodes[0]).unwrap();
        }
        let out = s.resize_pool("a", 1).unwrap();
        assert_eq!(out.removed, vec![nodes[1]]);
        assert_eq!(s.state.node(nodes[1]).state, NodeState::Deleted);
        assert_eq!(s.state.node(nodes[0]).bound_pods.len(), 3);
    }

    #[test]
    fn draining_evicts_pods_back_to_pending() {
        let mut s = sim(1000);
        let w = s.add_workload("web", 250, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.set_replicas(w, 2).unwrap();
        s.schedule_pending_pods().unwrap();
        s.resize_pool("a", 0).unwrap();
        assert_eq!(s.state.pending(w), 2);
        assert!(s.state.pods.iter().all(|p| p.bound_node.is_none()));
        // stale start events are ignored
        let ev = s.step().unwrap();
        assert!(matches!(ev.kind, EventKind::PodStarted { .. }));
        assert_eq!(s.state.pending(w), 2);
        assert!(s.event_log()[0].ends_with("stale"));
    }

    #[test]
    fn bootstrap_pods_start_running() {
        let mut s = sim(1000);
        let w = s.add_workload("web", 250, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.bootstrap_pods(w, 5).unwrap();
        assert_eq!(s.state.running(w), 4);
        assert_eq!(s.state.pending(w), 1);
        assert_eq!(s.state.workloads[w].desired, 5);
        assert_eq!(s.pending_events(), 0);
    }

    #[test]
    fn replacement_surge_is_excluded_from_replica_target() {
        let mut s = sim(2000);
        let w = s.add_workload("web", 250, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.bootstrap_nodes("b", 1).unwrap();
        let old = s.bootstrap_pods(w, 2).unwrap();
        let new = s.start_replacement(old[0], 1);
        assert_eq!(s.state.replicas(w), 3);
        assert_eq!(s.set_replicas(w, 2).unwrap(), 0);
        assert_eq!(s.state.pod(new).pool_affinity, Some(1));
        s.retire_replaced(old[0]).unwrap();
        assert_eq!(s.state.workloads[w].surge, 0);
        assert_eq!(s.state.replicas(w), 2);
    }

    #[test]
    fn unknown_pool_is_an_error() {
        let mut s = sim(1000);
        assert_eq!(
            s.resize_pool("nope", 1),
            Err(SimError::UnknownPool("nope".into()))
        );
    }

    #[test]
    fn scale_down_removes_pending_before_running() {
        let mut s = sim(500);
        let w = s.add_workload("web", 250, true);
        s.bootstrap_nodes("a", 1).unwrap();
        s.set_replicas(w, 3).unwrap();
        s.schedule_pending_pods().unwrap();
        assert_eq!(s.state.pending(w), 1);
        s.set_replicas(w, 2).unwrap();
        assert_eq!(s.state.pending(w), 0);
        assert_eq!(s.state.replicas(w), 2);
    }

    #[test]
    fn provisioning_nodes_accrue_cost_but_hold_no_pods() {
        let mut s = sim(1000);
        let w = s.add_workload("web", 250, true);
        s.resize_pool("a", 1).unwrap();
        s.set_replicas(w, 1).unwrap();
        assert!(s.schedule_pending_pods().unwrap().is_empty());
        s.advance_to(100);
        assert_eq!(s.state.costs.node_cost_micros[0], 100 * MICROS_PER_UNIT);
        assert_eq!(s.state.costs.pod_cost_micros, 0);
    }
}
