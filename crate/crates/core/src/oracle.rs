//! Exhaustive search over every (assignment, order) pair of a tiny instance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ProblemInstance;
use crate::objective::CostBreakdown;
use crate::routing::{AdjustPolicy, Schedule, State};
use crate::search::{Evaluator, SolveError};
use crate::taskgen::Task;

pub const DEFAULT_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_state: State,
    pub best_reward: f64,
    pub states_enumerated: u128,
    pub breakdown: CostBreakdown,
    pub schedule: Schedule,
}

/// `lockers^n * n!`, saturating at `u128::MAX`.
pub fn cardinality(n_tasks: usize, lockers: usize) -> u128 {
    let mut total: u128 = 1;
    for k in 1..=n_tasks as u128 {
        total = total.saturating_mul(lockers as u128).saturating_mul(k);
    }
    total
}

/// Rearranges `p` into the next lexicographic permutation; false after the
/// last one.
pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn decode_assignment(mut code: u64, n: usize, lockers: usize) -> Vec<usize> {
    let mut x1 = vec![0; n];
    for slot in x1.iter_mut().rev() {
        *slot = (code % lockers as u64) as usize;
        code /= lockers as u64;
    }
    x1
}

/// Best of `(reward, state)` pairs: highest reward, then the
/// lexicographically smallest state.
fn better(a: (f64, State), b: (f64, State)) -> (f64, State) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

pub fn brute_force_best(
    inst: &ProblemInstance,
    tasks: &[Task],
    lockers: usize,
    policy: AdjustPolicy,
    limit: u128,
) -> Result<OracleResult, SolveError> {
    if tasks.is_empty() {
        return Err(SolveError::NoTasks);
    }
    if lockers == 0 {
        return Err(SolveError::NoLockers);
    }
    let n = tasks.len();
    let total = cardinality(n, lockers);
    if total > limit {
        return Err(SolveError::TooLarge {
            cardinality: total,
            limit,
        });
    }
    let eval = Evaluator::new(inst, tasks, lockers, policy);
    let assignments = (lockers as u64).pow(n as u32);
    let (best_reward, best_state) = (0..assignments)
        .into_par_iter()
        .map(|code| {
            let x1 = decode_assignment(code, n, lockers);
            let mut x2: Vec<usize> = (0..n).collect();
            let mut best: Option<(f64, State)> = None;
            loop {
                let s = State {
                    x1: x1.clone(),
                    x2: x2.clone(),
                };
                let r = eval.reward(&s);
                // Permutations come in lexicographic order, so strict `>`
                // keeps the smallest state among equals.
                if best.as_ref().is_none_or(|(b, _)| r > *b) {
                    best = Some((r, s));
                }
                if !next_permutation(&mut x2) {
                    break;
                }
            }
            best.expect("at least one permutation")
        })
        .reduce_with(better)
        .expect("at least one assignment");
    Ok(OracleResult {
        schedule: eval.schedule(&best_state),
        breakdown: eval.breakdown(&best_state),
        best_state,
        best_reward,
        states_enumerated: total,
    })
}
