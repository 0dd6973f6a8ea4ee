use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

/// Micro-units per currency unit. All costs are kept as integers.
pub const MICROS_PER_UNIT: u64 = 1_000_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct PodId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeState {
    Provisioning,
    Ready,
    Draining,
    Deleted,
}

impl NodeState {
    pub fn name(self) -> &'static str {
        match self {
            NodeState::Provisioning => "Provisioning",
            NodeState::Ready => "Ready",
            NodeState::Draining => "Draining",
            NodeState::Deleted => "Deleted",
        }
    }

    pub fn can_become(self, next: NodeState) -> bool {
        matches!(
            (self, next),
            (NodeState::Provisioning, NodeState::Ready)
                | (NodeState::Ready, NodeState::Draining)
                | (NodeState::Draining, NodeState::Deleted)
        )
    }

    /// Nodes in these states are billed.
    pub fn accrues_cost(self) -> bool {
        !matches!(self, NodeState::Deleted)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum PodState {
    Pending,
    Starting,
    Running,
    Terminating,
    Deleted,
}

impl PodState {
    pub fn name(self) -> &'static str {
        match self {
            PodState::Pending => "Pending",
            PodState::Starting => "Starting",
            PodState::Running => "Running",
            PodState::Terminating => "Terminating",
            PodState::Deleted => "Deleted",
        }
    }

    pub fn is_bound(self) -> bool {
        matches!(
            self,
            PodState::Starting | PodState::Running | PodState::Terminating
        )
    }

    /// Counted towards a workload's replica count.
    pub fn is_active(self) -> bool {
        matches!(
            self,
            PodState::Pending | PodState::Starting | PodState::Running
        )
    }

    pub fn can_become(self, next: PodState) -> bool {
        use PodState::*;
        matches!(
            (self, next),
            (Pending, Starting)
                | (Pending, Deleted)
                | (Starting, Running)
                | (Starting, Terminating)
                | (Starting, Pending)
                | (Running, Terminating)
                | (Running, Pending)
                | (Terminating, Deleted)
        )
    }
}

/// Static description of a node pool.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSpec {
    pub id: String,
    pub machine_type: String,
    pub node_capacity_millicores: u32,
    /// Cost per node-second in micro-units.
    pub cost_rate_micros: u64,
    pub provisioning_delay: u64,
}

#[derive(Clone, Debug)]
pub struct NodePool {
    pub spec: PoolSpec,
    pub nodes: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub pool: usize,
    pub state: NodeState,
    pub created_at: u64,
    pub ready_at: u64,
    pub bound_pods: BTreeSet<PodId>,
    /// Chosen as a scale-down victim while still provisioning.
    pub remove_when_ready: bool,
}

#[derive(Clone, Debug)]
pub struct Pod {
    pub id: PodId,
    pub workload: usize,
    pub cpu_request_millicores: u32,
    pub state: PodState,
    pub bound_node: Option<NodeId>,
    pub startup_delay: u64,
    /// Bumped on every eviction so in-flight lifecycle events can be recognised as stale.
    pub incarnation: u32,
    pub created_at: u64,
    pub pending_since: Option<u64>,
    pub running_since: Option<u64>,
    /// Restricts scheduling to one pool.
    pub pool_affinity: Option<usize>,
}

/// Per-workload bookkeeping. `desired` is the last applied plan; `surge` counts
/// replacement pods created during a migration whose predecessor is still alive.
#[derive(Clone, Debug)]
pub struct WorkloadRecord {
    pub id: String,
    pub pod_request_millicores: u32,
    pub desired: u32,
    pub surge: u32,
    pub managed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterConfig {
    pub pod_startup_delay: u64,
    pub pod_termination_delay: u64,
    /// Cost per bound pod-second in micro-units.
    pub pod_cost_rate_micros: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            pod_startup_delay: 10,
            pod_termination_delay: 5,
            pod_cost_rate_micros: MICROS_PER_UNIT / 10,
        }
    }
}

/// Integrated cost, kept in exact integer micro-units.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostLedger {
    pub node_seconds: Vec<u64>,
    pub node_cost_micros: Vec<u64>,
    pub pod_seconds: u64,
    pub pod_cost_micros: u64,
}

impl CostLedger {
    pub fn total_node_cost_micros(&self) -> u64 {
        self.node_cost_micros.iter().sum()
    }
}

/// Monotone simulated clock in whole seconds.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub(crate) fn advance_to(&mut self, t: u64) {
        debug_assert!(t >= self.now);
        self.now = t;
    }
}

#[derive(Clone, Debug)]
pub struct ClusterState {
    pub clock: SimClock,
    pub pools: Vec<NodePool>,
    pub nodes: Vec<Node>,
    pub pods: Vec<Pod>,
    pub workloads: Vec<WorkloadRecord>,
    /// Pool the scheduler tries first.
    pub preferred_pool: Option<usize>,
    pub config: ClusterConfig,
    pub costs: CostLedger,
}

impl ClusterState {
    pub fn new(pools: Vec<PoolSpec>, config: ClusterConfig) -> Self {
        let n = pools.len();
        Self {
            clock: SimClock::default(),
            pools: pools
                .into_iter()
                .map(|spec| NodePool {
                    spec,
                    nodes: Vec::new(),
                })
                .collect(),
            nodes: Vec::new(),
            pods: Vec::new(),
            workloads: Vec::new(),
            preferred_pool: None,
            config,
            costs: CostLedger {
                node_seconds: vec![0; n],
                node_cost_micros: vec![0; n],
                ..CostLedger::default()
            },
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn pool_index(&self, id: &str) -> Option<usize> {
        self.pools.iter().position(|p| p.spec.id == id)
    }

    pub fn workload_index(&self, id: &str) -> Option<usize> {
        self.workloads.iter().position(|w| w.id == id)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn pod(&self, id: PodId) -> &Pod {
        &self.pods[id.0 as usize]
    }

    pub fn node_capacity(&self, id: NodeId) -> u32 {
        self.pools[self.node(id).pool].spec.node_capacity_millicores
    }

    pub fn bound_request(&self, id: NodeId) -> u32 {
        self.node(id)
            .bound_pods
            .iter()
            .map(|p| self.pod(*p).cpu_request_millicores)
            .sum()
    }

    pub fn free_capacity(&self, id: NodeId) -> u32 {
        self.node_capacity(id).saturating_sub(self.bound_request(id))
    }

    /// Nodes of a pool that are Provisioning or Ready and not marked for removal.
    pub fn live_nodes(&self, pool: usize) -> impl Iterator<Item = &Node> + '_ {
        self.pools[pool]
            .nodes
            .iter()
            .map(|id| self.node(*id))
            .filter(|n| {
                matches!(n.state, NodeState::Provisioning | NodeState::Ready)
                    && !n.remove_when_ready
            })
    }

    pub fn live_node_count(&self, pool: usize) -> u32 {
        self.live_nodes(pool).count() as u32
    }

    pub fn nodes_in_state(&self, pool: usize, state: NodeState) -> u32 {
        self.pools[pool]
            .nodes
            .iter()
            .filter(|id| self.node(**id).state == state)
            .count() as u32
    }

    pub fn ready_nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.state == NodeState::Ready)
    }

    pub fn pods_of(&self, workload: usize) -> impl Iterator<Item = &Pod> + '_ {
        self.pods.iter().filter(move |p| p.workload == workload)
    }

    fn count_state(&self, workload: usize, state: PodState) -> u32 {
        self.pods_of(workload).filter(|p| p.state == state).count() as u32
    }

    /// R_w: pods not Terminating or Deleted.
    pub fn replicas(&self, workload: usize) -> u32 {
        self.pods_of(workload).filter(|p| p.state.is_active()).count() as u32
    }

    pub fn running(&self, workload: usize) -> u32 {
        self.count_state(workload, PodState::Running)
    }

    pub fn pending(&self, workload: usize) -> u32 {
        self.count_state(workload, PodState::Pending)
    }

    pub fn total_pending(&self) -> u32 {
        self.pods
            .iter()
            .filter(|p| p.state == PodState::Pending)
            .count() as u32
    }

    pub fn managed_workloads(&self) -> impl Iterator<Item = usize> + '_ {
        self.workloads
            .iter()
            .enumerate()
            .filter(|(_, w)| w.managed)
            .map(|(i, _)| i)
    }

    /// Current billing rate in micro-units per second.
    pub fn cost_rate_micros(&self) -> (u64, u64) {
        let node: u64 = self
            .nodes
            .iter()
            .filter(|n| n.state.accrues_cost())
            .map(|n| self.pools[n.pool].spec.cost_rate_micros)
            .sum();
        let pods = self.pods.iter().filter(|p| p.state.is_bound()).count() as u64;
        (node, pods * self.config.pod_cost_rate_micros)
    }

    pub(crate) fn accrue(&mut self, dt: u64) {
        if dt == 0 {
            return;
        }
        for (i, pool) in self.pools.iter().enumerate() {
            let billed = pool
                .nodes
                .iter()
                .filter(|id| self.nodes[id.0 as usize].state.accrues_cost())
                .count() as u64;
            self.costs.node_seconds[i] += billed * dt;
            self.costs.node_cost_micros[i] += billed * dt * pool.spec.cost_rate_micros;
        }
        let bound = self.pods.iter().filter(|p| p.state.is_bound()).count() as u64;
        self.costs.pod_seconds += bound * dt;
        self.costs.pod_cost_micros += bound * dt * self.config.pod_cost_rate_micros;
    }
}
