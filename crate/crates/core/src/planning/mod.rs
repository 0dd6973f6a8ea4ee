//! Tactical planning: replica targets from forecast peaks and node counts from
//! bin packing the resulting requests.

mod packing;

pub use packing::{pack_exact, pack_ffd, NodePlan, RequestItem, RequestSet, EXACT_MAX_ITEMS};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::PlanError;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyName {
    #[serde(rename = "COST_SAVING")]
    CostSaving,
    #[serde(rename = "PERFORMANCE")]
    Performance,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::CostSaving => "COST_SAVING",
            PolicyName::Performance => "PERFORMANCE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "COST_SAVING" => Some(PolicyName::CostSaving),
            "PERFORMANCE" => Some(PolicyName::Performance),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strategic parameters handed down to the planners.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Policy {
    pub name: PolicyName,
    pub node_pool: String,
    pub node_capacity_millicores: u32,
    pub min_replicas: u32,
    pub w_perf: f64,
    pub w_cost: f64,
}

impl Policy {
    pub fn weights_normalized(&self) -> bool {
        self.w_perf >= 0.0 && self.w_cost >= 0.0 && (self.w_perf + self.w_cost - 1.0).abs() < 1e-9
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PodPlan {
    pub workload_id: String,
    pub pod_request_millicores: u32,
    pub basis_peak_millicores: u32,
    pub raw_replicas: u32,
    pub planned_replicas: u32,
}

/// Replicas needed to serve `basis_peak`, never below one and never below the
/// policy's minimum.
pub fn plan_replicas(
    workload_id: &str,
    basis_peak: u32,
    pod_request: u32,
    policy: &Policy,
) -> Result<PodPlan, PlanError> {
    if pod_request == 0 {
        return Err(PlanError::NonPositiveRequest);
    }
    let raw = basis_peak.div_ceil(pod_request).max(1);
    Ok(PodPlan {
        workload_id: workload_id.to_string(),
        pod_request_millicores: pod_request,
        basis_peak_millicores: basis_peak,
        raw_replicas: raw,
        planned_replicas: raw.max(policy.min_replicas),
    })
}

/// Packs every planned replica plus the unmanaged requests into nodes of the
/// policy's pool.
pub fn plan_nodes(
    pod_plans: &[PodPlan],
    other_requests: &RequestSet,
    policy: &Policy,
) -> Result<NodePlan, PlanError> {
    let mut items = Vec::new();
    for plan in pod_plans {
        items.extend((0..plan.planned_replicas).map(|i| {
            RequestItem::new(format!("{}#{i:04}", plan.workload_id), plan.pod_request_millicores)
        }));
    }
    items.extend(other_requests.items.iter().cloned());
    let mut plan = pack_ffd(&RequestSet::new(items), policy.node_capacity_millicores)?;
    plan.pool_id = policy.node_pool.clone();
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn policy(min_replicas: u32, capacity: u32) -> Policy {
        Policy {
            name: PolicyName::CostSaving,
            node_pool: "pool".into(),
            node_capacity_millicores: capacity,
            min_replicas,
            w_perf: 0.2,
            w_cost: 0.8,
        }
    }

    #[test]
    fn replica_examples() {
        let p = plan_replicas("w", 800, 250, &policy(1, 2000)).unwrap();
        assert_eq!((p.raw_replicas, p.planned_replicas), (4, 4));
        let p = plan_replicas("w", 0, 250, &policy(2, 2000)).unwrap();
        assert_eq!((p.raw_replicas, p.planned_replicas), (1, 2));
        let p = plan_replicas("w", 1600, 250, &policy(1, 2000)).unwrap();
        assert_eq!(p.planned_replicas, 7);
        assert_eq!(
            plan_replicas("w", 1, 0, &policy(1, 2000)),
            Err(PlanError::NonPositiveRequest)
        );
    }

    #[test]
    fn node_examples() {
        let pol = policy(1, 2000);
        let eight = plan_replicas("web", 2000, 250, &pol).unwrap();
        assert_eq!(eight.planned_replicas, 8);
        let plan = plan_nodes(std::slice::from_ref(&eight), &RequestSet::default(), &pol).unwrap();
        assert_eq!(plan.required_nodes, 1);
        assert_eq!(plan.pool_id, "pool");

        let others = RequestSet::new(vec![RequestItem::new("db", 1500)]);
        let plan = plan_nodes(&[eight], &others, &pol).unwrap();
        assert_eq!(plan.required_nodes, 2);
        plan.check_constraints().unwrap();

        let plan = plan_nodes(&[], &RequestSet::default(), &pol).unwrap();
        assert_eq!(plan.required_nodes, 0);
    }

    #[test]
    fn policy_names_round_trip() {
        for name in [PolicyName::CostSaving, PolicyName::Performance] {
            assert_eq!(PolicyName::parse(name.as_str()), Some(name));
        }
        assert_eq!(PolicyName::parse("TURBO"), None);
    }
}
