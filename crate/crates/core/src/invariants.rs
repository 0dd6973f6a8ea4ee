//! Structural checks run against the cluster after every event.

use crate::engine::{ClusterState, NodeState, PodState};
use crate::error::SimError;

/// Capacity conservation: no Ready or Draining node holds more requests than it has.
pub fn check_capacity(state: &ClusterState) -> Result<(), SimError> {
    for n in &state.nodes {
        let bound = state.bound_request(n.id);
        let capacity = state.node_capacity(n.id);
        if bound > capacity {
            return Err(SimError::invariant(
                "capacity_conservation",
                state.now(),
                format!("node {} holds {bound}m of {capacity}m", n.id),
            ));
        }
    }
    Ok(())
}

/// Binding consistency in both directions, and only Ready or Draining nodes hold pods.
pub fn check_bindings(state: &ClusterState) -> Result<(), SimError> {
    let fail = |detail: String| Err(SimError::invariant("binding_consistency", state.now(), detail));
    for p in &state.pods {
        match (p.state.is_bound(), p.bound_node) {
            (true, Some(node)) => {
                let n = state.node(node);
                if !n.bound_pods.contains(&p.id) {
                    return fail(format!("pod {} points at node {node} which does not list it", p.id));
                }
                if !matches!(n.state, NodeState::Ready | NodeState::Draining) {
                    return fail(format!("pod {} bound to {} node {node}", p.id, n.state.name()));
                }
            }
            (false, None) => {}
            (true, None) => return fail(format!("{} pod {} has no node", p.state.name(), p.id)),
            (false, Some(node)) => {
                return fail(format!("{} pod {} still bound to node {node}", p.state.name(), p.id))
            }
        }
    }
    for n in &state.nodes {
        for pod in &n.bound_pods {
            if state.pod(*pod).bound_node != Some(n.id) {
                return fail(format!("node {} lists pod {pod} bound elsewhere", n.id));
            }
        }
        if n.state == NodeState::Deleted && !n.bound_pods.is_empty() {
            return fail(format!("deleted node {} still holds pods", n.id));
        }
    }
    Ok(())
}

/// Replica accounting: active pods = desired + in-flight replacements.
pub fn check_replicas(state: &ClusterState) -> Result<(), SimError> {
    for (i, w) in state.workloads.iter().enumerate() {
        let active = state.replicas(i);
        if active != w.desired + w.surge {
            return Err(SimError::invariant(
                "replica_accounting",
                state.now(),
                format!(
                    "workload {} has {active} active pods, desired {} + surge {}",
                    w.id, w.desired, w.surge
                ),
            ));
        }
        let pending_bound = state
            .pods_of(i)
            .any(|p| p.state == PodState::Pending && p.bound_node.is_some());
        if pending_bound {
            return Err(SimError::invariant(
                "replica_accounting",
                state.now(),
                format!("workload {} has a bound Pending pod", w.id),
            ));
        }
    }
    Ok(())
}

pub fn check_all(state: &ClusterState) -> Result<(), SimError> {
    check_capacity(state)?;
    check_bindings(state)?;
    check_replicas(state)
}

/// Cumulative costs never decrease.
#[derive(Clone, Debug, Default)]
pub struct CostMonitor {
    last: (u64, u64),
}

impl CostMonitor {
    pub fn check(&mut self, state: &ClusterState) -> Result<(), SimError> {
        let now = (state.costs.total_node_cost_micros(), state.costs.pod_cost_micros);
        if now.0 < self.last.0 || now.1 < self.last.1 {
            return Err(SimError::invariant(
                "cost_monotonicity",
                state.now(),
                format!("costs went from {:?} to {now:?}", self.last),
            ));
        }
        self.last = now;
        Ok(())
    }
}
