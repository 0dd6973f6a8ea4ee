use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use super::{NodeId, PodId};

/// What a simulation event does when it fires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    NodeReady { node: NodeId },
    PodStarted { pod: PodId, incarnation: u32 },
    PodTerminated { pod: PodId, incarnation: u32 },
    WorkloadPhaseChange { workload: String, phase: usize },
    PolicySwitch { policy: String },
    ControlTick { controller: &'static str },
}

impl EventKind {
    /// Tie-break rank for events sharing a timestamp. Lower fires first.
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::NodeReady { .. } => 0,
            EventKind::PodStarted { .. } => 1,
            EventKind::PodTerminated { .. } => 2,
            EventKind::WorkloadPhaseChange { .. } => 3,
            EventKind::PolicySwitch { .. } => 4,
            EventKind::ControlTick { .. } => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::NodeReady { .. } => "NodeReady",
            EventKind::PodStarted { .. } => "PodStarted",
            EventKind::PodTerminated { .. } => "PodTerminated",
            EventKind::WorkloadPhaseChange { .. } => "WorkloadPhaseChange",
            EventKind::PolicySwitch { .. } => "PolicySwitch",
            EventKind::ControlTick { .. } => "ControlTick",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::NodeReady { node } => write!(f, "NodeReady node={node}"),
            EventKind::PodStarted { pod, incarnation } => {
                write!(f, "PodStarted pod={pod} inc={incarnation}")
            }
            EventKind::PodTerminated { pod, incarnation } => {
                write!(f, "PodTerminated pod={pod} inc={incarnation}")
            }
            EventKind::WorkloadPhaseChange { workload, phase } => {
                write!(f, "WorkloadPhaseChange workload={workload} phase={phase}")
            }
            EventKind::PolicySwitch { policy } => write!(f, "PolicySwitch policy={policy}"),
            EventKind::ControlTick { controller } => {
                write!(f, "ControlTick controller={controller}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub fire_at: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl SimEvent {
    fn key(&self) -> (u64, u8, u64) {
        (self.fire_at, self.kind.rank(), self.seq)
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other.key().cmp(&self.key())
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.fire_at, self.kind)
    }
}

/// Priority queue ordered by `(fire_at, kind rank, insertion sequence)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, fire_at: u64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { fire_at, seq, kind });
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.fire_at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
