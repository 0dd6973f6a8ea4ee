use std::cmp::Reverse;

use serde::Serialize;

use crate::error::PlanError;

/// Largest instance [`pack_exact`] accepts.
pub const EXACT_MAX_ITEMS: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RequestItem {
    pub owner: String,
    pub cpu_request_millicores: u32,
}

impl RequestItem {
    pub fn new(owner: impl Into<String>, cpu: u32) -> Self {
        Self {
            owner: owner.into(),
            cpu_request_millicores: cpu,
        }
    }
}

/// Multiset of individual CPU requests to be packed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct RequestSet {
    pub items: Vec<RequestItem>,
}

impl RequestSet {
    pub fn new(items: Vec<RequestItem>) -> Self {
        Self { items }
    }

    /// Anonymous items named by position, handy for tests.
    pub fn from_sizes(sizes: &[u32]) -> Self {
        Self::new(
            sizes
                .iter()
                .enumerate()
                .map(|(i, s)| RequestItem::new(format!("item{i:03}"), *s))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.items.iter().map(|i| i.cpu_request_millicores as u64).sum()
    }

    fn check_fits(&self, capacity: u32) -> Result<(), PlanError> {
        if capacity == 0 {
            return Err(PlanError::NonPositiveCapacity);
        }
        match self.items.iter().find(|i| i.cpu_request_millicores > capacity) {
            Some(item) => Err(PlanError::OversizedItem {
                owner: item.owner.clone(),
                size: item.cpu_request_millicores,
                capacity,
            }),
            None => Ok(()),
        }
    }
}

/// A bin-packing solution: `assignment[i]` is the bin of `items[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodePlan {
    pub pool_id: String,
    pub bin_capacity_millicores: u32,
    pub required_nodes: u32,
    pub items: Vec<RequestItem>,
    pub assignment: Vec<usize>,
}

impl NodePlan {
    pub fn bin_loads(&self) -> Vec<u64> {
        let mut loads = vec![0u64; self.required_nodes as usize];
        for (item, bin) in self.items.iter().zip(&self.assignment) {
            if let Some(load) = loads.get_mut(*bin) {
                *load += item.cpu_request_millicores as u64;
            }
        }
        loads
    }

    /// Structural check of the packing constraints: each item sits in exactly one
    /// opened bin, no bin exceeds capacity, and every opened bin is used.
    pub fn check_constraints(&self) -> Result<(), String> {
        if self.items.len() != self.assignment.len() {
            return Err(format!(
                "{} items but {} assignments",
                self.items.len(),
                self.assignment.len()
            ));
        }
        if let Some((i, bin)) = self
            .assignment
            .iter()
            .enumerate()
            .find(|(_, b)| **b >= self.required_nodes as usize)
        {
            return Err(format!("item {i} assigned to unopened bin {bin}"));
        }
        for (bin, load) in self.bin_loads().iter().enumerate() {
            if *load > self.bin_capacity_millicores as u64 {
                return Err(format!(
                    "bin {bin} holds {load}m > capacity {}m",
                    self.bin_capacity_millicores
                ));
            }
            if *load == 0 && !self.items.is_empty() {
                return Err(format!("bin {bin} is opened but empty"));
            }
        }
        Ok(())
    }
}

/// First Fit Decreasing. Items are taken largest first (ties: owner ascending) and
/// placed into the lowest-index bin with room.
pub fn pack_ffd(requests: &RequestSet, bin_capacity: u32) -> Result<NodePlan, PlanError> {
    requests.check_fits(bin_capacity)?;
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|a, b| {
        let (ia, ib) = (&requests.items[*a], &requests.items[*b]);
        Reverse(ia.cpu_request_millicores)
            .cmp(&Reverse(ib.cpu_request_millicores))
            .then_with(|| ia.owner.cmp(&ib.owner))
    });

    let mut loads: Vec<u32> = Vec::new();
    let mut assignment = vec![0usize; requests.len()];
    for i in order {
        let size = requests.items[i].cpu_request_millicores;
        let bin = match loads.iter().position(|l| l + size <= bin_capacity) {
            Some(b) => b,
            None => {
                loads.push(0);
                loads.len() - 1
            }
        };
        loads[bin] += size;
        assignment[i] = bin;
    }

    Ok(NodePlan {
        pool_id: String::new(),
        bin_capacity_millicores: bin_capacity,
        required_nodes: loads.len() as u32,
        items: requests.items.clone(),
        assignment,
    })
}

struct Search<'a> {
    sizes: &'a [u32],
    capacity: u32,
    suffix: Vec<u64>,
    loads: Vec<u32>,
    current: Vec<usize>,
    best_bins: usize,
    best: Vec<usize>,
}

impl Search<'_> {
    fn lower_bound(&self, next: usize) -> usize {
        let used: u64 = self.loads.iter().map(|l| *l as u64).sum();
        let total = used + self.suffix[next];
        (total.div_ceil(self.capacity as u64) as usize).max(self.loads.len())
    }

    fn dfs(&mut self, next: usize) {
        if next == self.sizes.len() {
            if self.loads.len() < self.best_bins {
                self.best_bins = self.loads.len();
                self.best = self.current.clone();
            }
            return;
        }
        if self.lower_bound(next) >= self.best_bins {
            return;
        }
        let size = self.sizes[next];
        let mut tried: Vec<u32> = Vec::new();
        for bin in 0..self.loads.len() {
            let load = self.loads[bin];
            // bins with equal load are interchangeable
            if load + size > self.capacity || tried.contains(&load) {
                continue;
            }
            tried.push(load);
            self.loads[bin] += size;
            self.current[next] = bin;
            self.dfs(next + 1);
            self.loads[bin] -= size;
        }
        if self.loads.len() + 1 < self.best_bins {
            self.loads.push(size);
            self.current[next] = self.loads.len() - 1;
            self.dfs(next + 1);
            self.loads.pop();
        }
    }
}

/// Provably minimal packing by exhaustive branch and bound, for at most
/// [`EXACT_MAX_ITEMS`] items.
pub fn pack_exact(requests: &RequestSet, bin_capacity: u32) -> Result<NodePlan, PlanError> {
    if requests.len() > EXACT_MAX_ITEMS {
        return Err(PlanError::InstanceTooLarge {
            max: EXACT_MAX_ITEMS,
            got: requests.len(),
        });
    }
    requests.check_fits(bin_capacity)?;

    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by_key(|i| Reverse(requests.items[*i].cpu_request_millicores));
    let sizes: Vec<u32> = order
        .iter()
        .map(|i| requests.items[*i].cpu_request_millicores)
        .collect();
    let mut suffix = vec![0u64; sizes.len() + 1];
    for i in (0..sizes.len()).rev() {
        suffix[i] = suffix[i + 1] + sizes[i] as u64;
    }

    let n = sizes.len();
    let mut search = Search {
        sizes: &sizes,
        capacity: bin_capacity,
        suffix,
        loads: Vec::new(),
        current: vec![0; n],
        // one bin per item is always feasible
        best_bins: n + 1,
        best: (0..n).collect(),
    };
    search.dfs(0);
    let bins = search.best_bins.min(n);

    let mut assignment = vec![0usize; n];
    for (sorted_pos, original) in order.iter().enumerate() {
        assignment[*original] = search.best[sorted_pos];
    }
    Ok(NodePlan {
        pool_id: String::new(),
        bin_capacity_millicores: bin_capacity,
        required_nodes: bins as u32,
        items: requests.items.clone(),
        assignment,
    })
}
