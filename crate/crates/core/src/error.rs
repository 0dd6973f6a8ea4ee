use thiserror::Error;

use crate::engine::{NodeId, PodId};

/// Errors raised by the simulation core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// The event queue is exhausted; the scenario has ended.
    #[error("event queue is empty")]
    QueueEmpty,
    #[error("unknown node pool `{0}`")]
    UnknownPool(String),
    #[error("unknown workload `{0}`")]
    UnknownWorkload(String),
    #[error("event scheduled in the past: fire_at={fire_at} < now={now}")]
    EventInPast { fire_at: u64, now: u64 },
    #[error("illegal node transition for node {node}: {from} -> {to}")]
    NodeTransition {
        node: NodeId,
        from: &'static str,
        to: &'static str,
    },
    #[error("illegal pod transition for pod {pod}: {from} -> {to}")]
    PodTransition {
        pod: PodId,
        from: &'static str,
        to: &'static str,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("invariant `{property}` violated at t={at}: {detail}")]
    Invariant {
        property: &'static str,
        at: u64,
        detail: String,
    },
}

impl SimError {
    pub fn invariant(property: &'static str, at: u64, detail: impl Into<String>) -> Self {
        SimError::Invariant {
            property,
            at,
            detail: detail.into(),
        }
    }
}

/// Errors from the planning tier.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("pod request must be positive")]
    NonPositiveRequest,
    #[error("bin capacity must be positive")]
    NonPositiveCapacity,
    #[error("request `{owner}` of {size}m exceeds bin capacity {capacity}m")]
    OversizedItem {
        owner: String,
        size: u32,
        capacity: u32,
    },
    #[error("exact packing supports at most {max} items, got {got}")]
    InstanceTooLarge { max: usize, got: usize },
}

/// Errors from the forecasting tier.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history sample at t={t} is not before now={now}")]
    FutureSample { t: u64, now: u64 },
    #[error("invalid forecaster parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Errors from workload trace handling.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("window [{from}, {to}) outside trace of length {len}")]
    WindowOutOfRange { from: u64, to: u64, len: u64 },
    #[error("vu cost must be positive")]
    NonPositiveVuCost,
    #[error("phase {0} has zero duration")]
    EmptyPhase(usize),
}
