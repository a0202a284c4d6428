#![allow(dead_code)]

use mplp::harness::{prepare, InstanceSource, Prepared, Settings};

pub fn generated(n_parking: usize, customers_per_space: usize) -> InstanceSource {
    InstanceSource::Generate {
        n_parking,
        customers_per_space,
    }
}

pub fn prepared(n_parking: usize, customers_per_space: usize, seed: u64) -> Option<Prepared> {
    prepare(
        &generated(n_parking, customers_per_space),
        &Settings::default(),
        seed,
    )
    .ok()
}

/// The first `count` seeds of the 2x2 family whose task count lies in
/// `tasks`.
pub fn tiny_instances(count: usize, tasks: std::ops::RangeInclusive<usize>) -> Vec<(u64, Prepared)> {
    let mut out = Vec::new();
    for seed in 1.. {
        if let Some(p) = prepared(2, 2, seed) {
            if tasks.contains(&p.tasks.len()) {
                out.push((seed, p));
                if out.len() == count {
                    break;
                }
            }
        }
        assert!(seed < 10_000, "tiny family ran dry");
    }
    out
}

/// Signed-rank two-sided p-value by listing every sign pattern.
pub fn enumerated_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let total = 1u64 << n;
    let (mut low, mut high) = (0u64, 0u64);
    for mask in 0..total {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= w_plus + 1e-9 {
            low += 1;
        }
        if w >= w_plus - 1e-9 {
            high += 1;
        }
    }
    (2.0 * low.min(high) as f64 / total as f64).min(1.0)
}
