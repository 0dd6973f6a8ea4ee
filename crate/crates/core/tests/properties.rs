//! Property suites for the planning, forecasting and metrics layers, each checked
//! against an oracle that does not share code with the implementation.

use autoscale_sim::forecast::{forecast, smoothed_history, ForecasterKind};
use autoscale_sim::metrics::{read_metrics_csv, write_metrics_csv, MetricSample, NodeCounts};
use autoscale_sim::planning::{pack_exact, pack_ffd, plan_replicas, Policy, PolicyName, RequestSet};
use proptest::prelude::*;

fn policy(min_replicas: u32) -> Policy {
    Policy {
        name: PolicyName::CostSaving,
        node_pool: "pool".into(),
        node_capacity_millicores: 1000,
        min_replicas,
        w_perf: 0.5,
        w_cost: 0.5,
    }
}

/// Fewest bins by trying every assignment of items to `k` bins, for growing `k`.
fn brute_force_bins(sizes: &[u32], cap: u32) -> u32 {
    fn fits(sizes: &[u32], loads: &mut Vec<u32>, cap: u32) -> bool {
        let Some((first, rest)) = sizes.split_first() else {
            return true;
        };
        for b in 0..loads.len() {
            if loads[b] + first <= cap {
                loads[b] += first;
                let ok = fits(rest, loads, cap);
                loads[b] -= first;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    if sizes.is_empty() {
        return 0;
    }
    (1..=sizes.len())
        .find(|k| fits(sizes, &mut vec![0; *k], cap))
        .expect("one bin per item always fits") as u32
}

fn instance() -> impl Strategy<Value = (Vec<u32>, u32)> {
    (50u32..=2000).prop_flat_map(|cap| (prop::collection::vec(1..=cap, 0..=8), Just(cap)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ffd_is_feasible_and_within_its_bound((sizes, cap) in instance()) {
        let set = RequestSet::from_sizes(&sizes);
        let ffd = pack_ffd(&set, cap).unwrap();
        let exact = pack_exact(&set, cap).unwrap();
        ffd.check_constraints().unwrap();
        exact.check_constraints().unwrap();
        prop_assert!(ffd.required_nodes >= exact.required_nodes);
        prop_assert!(9 * ffd.required_nodes <= 11 * exact.required_nodes + 9);
    }

    #[test]
    fn exact_matches_brute_force((sizes, cap) in (10u32..=100).prop_flat_map(|cap| (prop::collection::vec(1..=cap, 0..=6), Just(cap)))) {
        let exact = pack_exact(&RequestSet::from_sizes(&sizes), cap).unwrap();
        prop_assert_eq!(exact.required_nodes, brute_force_bins(&sizes, cap));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn replicas_match_ceiling_oracle(peak in 0u32..=100_000, request in 1u32..=4000, r_min in 0u32..=20) {
        let plan = plan_replicas("w", peak, request, &policy(r_min)).unwrap();
        let oracle = ((peak as f64 / request as f64).ceil() as u32).max(1).max(r_min);
        prop_assert_eq!(plan.planned_replicas, oracle);
        prop_assert!(plan.planned_replicas as u64 * request as u64 >= peak as u64);
    }
}

fn trace(values: &[u32]) -> Vec<(u64, f64)> {
    values.iter().enumerate().map(|(t, v)| (t as u64, *v as f64)).collect()
}

proptest! {
    #[test]
    fn smoothing_fixes_constants(level in 0u32..5000, len in 1usize..400, half_life in 1.0f64..200.0) {
        let h = trace(&vec![level; len]);
        let s = smoothed_history(&h, half_life);
        prop_assert_eq!(s.len(), h.len());
        for ((t0, _), (t1, v)) in h.iter().zip(&s) {
            prop_assert_eq!(t0, t1);
            prop_assert!((v - level as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_attenuates_a_lone_spike(
        base in 0u32..1000,
        extra in 1u32..5000,
        at in 1usize..200,
        half_life in 2.0f64..120.0,
    ) {
        let mut values = vec![base; 300];
        values[at] = base + extra;
        let s = smoothed_history(&trace(&values), half_life);
        let peak = s.iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
        prop_assert!(peak < (base + extra) as f64);
        prop_assert!(peak >= base as f64 - 1e-9);
    }

    #[test]
    fn smoothing_stays_within_input_range(values in prop::collection::vec(0u32..5000, 1..300), half_life in 1.0f64..100.0) {
        let lo = *values.iter().min().unwrap() as f64;
        let hi = *values.iter().max().unwrap() as f64;
        for (_, v) in smoothed_history(&trace(&values), half_life) {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn forecasts_ignore_anything_after_now(
        values in prop::collection::vec(0u32..5000, 2..200),
        cut in 1usize..200,
        noise in prop::collection::vec(0u32..5000, 0..50),
    ) {
        let cut = cut.min(values.len());
        let now = cut as u64;
        let past = trace(&values[..cut]);
        let kinds = [
            ForecasterKind::Naive,
            ForecasterKind::MovingAverage { window: 7 },
            ForecasterKind::SeasonalPeak { period: 10, quantile: 0.9 },
        ];
        // the same past with a different future must give the same forecast
        let mut other = values[..cut].to_vec();
        other.extend(&noise);
        let other_past: Vec<_> = trace(&other).into_iter().filter(|(t, _)| *t < now).collect();
        for kind in kinds {
            let a = forecast(kind, &past, now, 30).unwrap();
            let b = forecast(kind, &other_past, now, 30).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn step_response_halves_the_gap_every_half_life() {
    let half_life = 20.0;
    let mut values = vec![0u32; 10];
    values.extend(vec![1000u32; 100]);
    let s = smoothed_history(&trace(&values), half_life);
    for k in 1..=4u32 {
        let t = 9 + 20 * k as usize;
        let expected = 1000.0 * (1.0 - 0.5f64.powi(k as i32));
        assert!((s[t].1 - expected).abs() < 1e-6, "t={t}: {} vs {expected}", s[t].1);
    }
}

#[test]
fn worked_packing_instances() {
    let set = RequestSet::from_sizes(&[3, 3, 2, 2, 2]);
    assert_eq!(pack_ffd(&set, 5).unwrap().required_nodes, 3);
    assert_eq!(pack_exact(&set, 5).unwrap().required_nodes, 3);
    // eight 250m replicas and one 1500m request on 2000m nodes
    let mut sizes = vec![250; 8];
    sizes.push(1500);
    let set = RequestSet::from_sizes(&sizes);
    assert_eq!(pack_exact(&set, 2000).unwrap().required_nodes, 2);
    assert_eq!(brute_force_bins(&sizes, 2000), 2);
}

fn sample() -> impl Strategy<Value = MetricSample> {
    (
        0u64..100_000,
        0u32..10_000,
        0u32..50,
        0u32..50,
        prop::collection::vec((0u32..5, 0u32..5, 0u32..5), 1..4),
        0.0f64..1.1,
        0u64..1 << 40,
        0u64..1 << 40,
        0.0f64..1.0,
        -1.0f64..1.0,
    )
        .prop_map(|(t, demand, running, pending, nodes, util, pc, nc, pack, utility)| MetricSample {
            t,
            demand_millicores: demand,
            running_replicas: running,
            pending_pods: pending,
            nodes: nodes
                .into_iter()
                .enumerate()
                .map(|(i, (p, r, d))| {
                    (
                        format!("pool-{i}"),
                        NodeCounts {
                            provisioning: p,
                            ready: r,
                            draining: d,
                        },
                    )
                })
                .collect(),
            utilization: util,
            cpu_waste_millicores: (running * 250).saturating_sub(demand),
            cumulative_pod_cost: pc,
            cumulative_node_cost: nc,
            packing_efficiency: pack,
            utility,
        })
}

proptest! {
    #[test]
    fn metrics_csv_round_trips(first in sample(), rest in prop::collection::vec(sample(), 0..10)) {
        // every row of one table shares the pool layout
        let layout: Vec<String> = first.nodes.iter().map(|(p, _)| p.clone()).collect();
        let rows: Vec<MetricSample> = std::iter::once(first)
            .chain(rest.into_iter().map(|mut s| {
                s.nodes = layout
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.clone(), s.nodes.get(i).map_or_else(NodeCounts::default, |(_, c)| *c)))
                    .collect();
                s
            }))
            .collect();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        prop_assert_eq!(read_metrics_csv(&buf[..]).unwrap(), rows);
    }
}
