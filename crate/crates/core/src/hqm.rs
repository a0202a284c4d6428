//! Hybrid Q-learning search.
//!
//! Two tabular Q matrices score adjacent decisions along the execution
//! order: `q1` locker → locker and `q2` task → task. Every timestep the
//! population is rebuilt element by element from the matrices (greedy with
//! probability ε, softmax sample otherwise), perturbed by a neighbour-based
//! local move, and the matrices are pulled towards the best reward along
//! the incumbent's path.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::ProblemInstance;
use crate::rng::{self, Stream};
use crate::routing::{AdjustPolicy, State};
use crate::search::{init_agent, Agent, Evaluator, SolveError, SolveResult, TraceRow};
use crate::taskgen::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HqmConfig {
    pub timesteps: usize,
    pub agent_size: usize,
    pub gamma: f64,
    /// Learning rate at `t = 0`; decays as `alpha0 * exp(-t / timesteps)`.
    pub alpha0: f64,
    pub convergence_eps: f64,
    pub policy: AdjustPolicy,
    pub lockers: usize,
    pub seed: u64,
}

impl Default for HqmConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            agent_size: 100,
            gamma: 0.9,
            alpha0: 0.9,
            convergence_eps: 1e-8,
            policy: AdjustPolicy::Btd,
            lockers: 10,
            seed: 0,
        }
    }
}

impl HqmConfig {
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha0 * (-(t as f64) / self.timesteps as f64).exp()
    }

    pub fn check(&self) -> Result<(), SolveError> {
        if self.timesteps == 0 || self.agent_size == 0 {
            return Err(SolveError::Config("timesteps and agent_size must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(SolveError::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(SolveError::Config(format!("alpha {} outside (0, 1]", self.alpha0)));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(SolveError::Config("convergence_eps must be positive".into()));
        }
        if self.lockers == 0 {
            return Err(SolveError::NoLockers);
        }
        Ok(())
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "square matrix expected");
        Self {
            n,
            data: rows.concat(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn row_max(&self, r: usize) -> f64 {
        self.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row-wise softmax with the row maximum subtracted first.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..self.n {
            softmax_in_place(&mut out.data[r * self.n..(r + 1) * self.n]);
        }
        out
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    /// Locker → locker, `|M| x |M|`.
    pub q1: Matrix,
    /// Task → task, `|O| x |O|`.
    pub q2: Matrix,
}

impl QModel {
    pub fn zeros(lockers: usize, tasks: usize) -> Self {
        Self {
            q1: Matrix::zeros(lockers),
            q2: Matrix::zeros(tasks),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities {
    pub p1: Matrix,
    pub p2: Matrix,
}

pub fn selection_probabilities(q: &QModel) -> Probabilities {
    Probabilities {
        p1: q.q1.softmax_rows(),
        p2: q.q2.softmax_rows(),
    }
}

/// Highest-valued allowed column; ties go to the lowest index.
fn argmax_allowed(row: &[f64], allowed: Option<&[bool]>) -> usize {
    let mut best = usize::MAX;
    for (c, &v) in row.iter().enumerate() {
        if allowed.is_some_and(|a| !a[c]) {
            continue;
        }
        if best == usize::MAX || v > row[best] {
            best = c;
        }
    }
    best
}

/// Draws a column with probability proportional to `row`, restricted to
/// `allowed` columns.
fn sample_allowed<R: Rng>(row: &[f64], allowed: Option<&[bool]>, rng: &mut R) -> usize {
    let ok = |c: usize| allowed.is_none_or(|a| a[c]);
    let total: f64 = (0..row.len()).filter(|&c| ok(c)).map(|c| row[c]).sum();
    if !(total > 0.0) {
        let candidates: Vec<usize> = (0..row.len()).filter(|&c| ok(c)).collect();
        return candidates[rng.random_range(0..candidates.len())];
    }
    let mut target = rng.random::<f64>() * total;
    let mut last = usize::MAX;
    for (c, &p) in row.iter().enumerate() {
        if !ok(c) {
            continue;
        }
        last = c;
        if target < p {
            return c;
        }
        target -= p;
    }
    last
}

fn choose<R: Rng>(
    q_row: &[f64],
    p_row: &[f64],
    allowed: Option<&[bool]>,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    let tau: f64 = rng.random();
    if tau < epsilon {
        argmax_allowed(q_row, allowed)
    } else {
        sample_allowed(p_row, allowed, rng)
    }
}

/// Rebuilds one state from the Q model. The first position starts from the
/// incumbent's first task and locker: greedy keeps them, exploration
/// samples from their rows.
pub fn rebuild_state<R: Rng>(
    q: &QModel,
    p: &Probabilities,
    epsilon: f64,
    incumbent: &State,
    rng: &mut R,
) -> State {
    let n = incumbent.len();
    let mut remaining = vec![true; n];
    let mut x2 = Vec::with_capacity(n);
    let start_task = incumbent.x2[0];
    let first = if rng.random::<f64>() < epsilon {
        start_task
    } else {
        sample_allowed(p.p2.row(start_task), None, rng)
    };
    remaining[first] = false;
    x2.push(first);
    for _ in 1..n {
        let prev = *x2.last().expect("non-empty");
        let next = choose(q.q2.row(prev), p.p2.row(prev), Some(&remaining), epsilon, rng);
        remaining[next] = false;
        x2.push(next);
    }

    let mut x1 = vec![0; n];
    let start_mpl = incumbent.x1[start_task];
    x1[x2[0]] = if rng.random::<f64>() < epsilon {
        start_mpl
    } else {
        sample_allowed(p.p1.row(start_mpl), None, rng)
    };
    for pos in 1..n {
        let prev = x1[x2[pos - 1]];
        x1[x2[pos]] = choose(q.q1.row(prev), p.p1.row(prev), None, epsilon, rng);
    }
    State { x1, x2 }
}

/// Tracks the best state seen.
#[derive(Debug, Clone)]
pub struct Incumbent {
    pub state: State,
    pub reward: f64,
}

impl Incumbent {
    fn offer(&mut self, agent: &Agent) {
        let b = agent.best();
        if agent.rewards[b] > self.reward {
            self.reward = agent.rewards[b];
            self.state = agent.states[b].clone();
        }
    }
}

/// Replaces every state by one rebuilt from the Q model and updates the
/// incumbent.
pub fn global_step<R: Rng>(
    agent: &mut Agent,
    q: &QModel,
    p: &Probabilities,
    epsilon: f64,
    best: &mut Incumbent,
    rng: &mut R,
    eval: &Evaluator,
) {
    let states: Vec<State> = (0..agent.len())
        .map(|_| rebuild_state(q, p, epsilon, &best.state, rng))
        .collect();
    agent.rewards = eval.rewards(&states);
    agent.states = states;
    best.offer(agent);
}

/// Locker move against a neighbour: where the neighbour's locker is lower,
/// `x1 + ω (x1 - neighbour)` with `ω = ±1`, folded back into range.
pub fn locker_move<R: Rng>(x1: &[usize], neighbour: &[usize], lockers: usize, rng: &mut R) -> Vec<usize> {
    x1.iter()
        .zip(neighbour)
        .map(|(&own, &other)| {
            let omega = if other < own {
                if rng.random::<bool>() {
                    1
                } else {
                    -1
                }
            } else {
                0
            };
            apply_omega(own, other, omega, lockers)
        })
        .collect()
}

/// `|own + ω (own - other)| mod lockers`.
pub fn apply_omega(own: usize, other: usize, omega: i64, lockers: usize) -> usize {
    let v = own as i64 + omega * (own as i64 - other as i64);
    (v.unsigned_abs() as usize) % lockers
}

/// Swaps the equal-length blocks starting at `p` and `q`. The block length
/// is `|p - q|` capped at `n / 2` and at the room left after the later
/// start, so the blocks never overlap.
pub fn segment_exchange(x2: &[usize], p: usize, q: usize) -> Vec<usize> {
    let mut out = x2.to_vec();
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    let n = x2.len();
    if p == q || q >= n {
        return out;
    }
    let len = (q - p).min(n / 2).min(n - q);
    for k in 0..len {
        out.swap(p + k, q + k);
    }
    out
}

fn neighbour_of<R: Rng>(i: usize, size: usize, rng: &mut R) -> usize {
    if i == 0 {
        1
    } else if i == size - 1 {
        i - 1
    } else if rng.random::<bool>() {
        i + 1
    } else {
        i - 1
    }
}

/// Perturbs every state against a neighbour and keeps the perturbed state
/// when it scores higher.
pub fn local_step<R: Rng>(agent: &mut Agent, best: &mut Incumbent, rng: &mut R, eval: &Evaluator) {
    let size = agent.len();
    if size < 2 {
        return;
    }
    let n = eval.n_tasks();
    let candidates: Vec<State> = (0..size)
        .map(|i| {
            let j = neighbour_of(i, size, rng);
            let x1 = locker_move(&agent.states[i].x1, &agent.states[j].x1, eval.lockers, rng);
            let p = rng.random_range(0..n);
            let q = rng.random_range(0..n);
            let x2 = segment_exchange(&agent.states[i].x2, p, q);
            State { x1, x2 }
        })
        .collect();
    let rewards = eval.rewards(&candidates);
    for (i, (s, r)) in candidates.into_iter().zip(rewards).enumerate() {
        if r > agent.rewards[i] {
            agent.states[i] = s;
            agent.rewards[i] = r;
        }
    }
    best.offer(agent);
}

/// Transition cells along the execution order of `s`, deduplicated, in
/// first-occurrence order.
fn path_cells(s: &State) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for w in s.x2.windows(2) {
        let m = (s.x1[w[0]], s.x1[w[1]]);
        if !c1.contains(&m) {
            c1.push(m);
        }
        c2.push((w[0], w[1]));
    }
    (c1, c2)
}

fn update_matrix(m: &mut Matrix, cells: &[(usize, usize)], reward: f64, alpha: f64, gamma: f64) -> f64 {
    let old = m.clone();
    let mut delta: f64 = 0.0;
    for &(r, c) in cells {
        let q = old.get(r, c);
        let next = q + alpha * (reward + gamma * old.row_max(c) - q);
        delta = delta.max((next - q).abs());
        m.set(r, c, next);
    }
    delta
}

/// Temporal-difference update of the cells on the best state's path; the
/// successor value is the maximum of the successor's row before the update.
/// Returns the largest absolute change of `q1` and `q2`.
pub fn update_q(q: &mut QModel, best: &State, reward: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let (c1, c2) = path_cells(best);
    let d1 = update_matrix(&mut q.q1, &c1, reward, alpha, gamma);
    let d2 = update_matrix(&mut q.q2, &c2, reward, alpha, gamma);
    (d1, d2)
}

pub fn run_hqm(inst: &ProblemInstance, tasks: &[Task], cfg: &HqmConfig) -> Result<SolveResult, SolveError> {
    cfg.check()?;
    if tasks.is_empty() {
        return Err(SolveError::NoTasks);
    }
    let started = Instant::now();
    let eval = Evaluator::new(inst, tasks, cfg.lockers, cfg.policy);
    let mut rng = rng::stream(cfg.seed, Stream::Hqm);
    let n = tasks.len();

    let mut agent = init_agent(
        n,
        cfg.lockers,
        cfg.agent_size,
        &mut rng::stream(cfg.seed, Stream::Population),
        &eval,
    );
    let mut best = Incumbent {
        state: agent.states[0].clone(),
        reward: agent.rewards[0],
    };
    let initial_reward = best.reward;
    let mut q = QModel::zeros(cfg.lockers, n);
    let mut trace = Vec::with_capacity(cfg.timesteps);

    for t in 1..=cfg.timesteps {
        let epsilon: f64 = rng.random();
        let p = selection_probabilities(&q);
        global_step(&mut agent, &q, &p, epsilon, &mut best, &mut rng, &eval);
        local_step(&mut agent, &mut best, &mut rng, &eval);
        let (d1, d2) = update_q(&mut q, &best.state, best.reward, cfg.alpha(t), cfg.gamma);
        trace.push(TraceRow {
            timestep: t,
            best_reward: best.reward,
            q1_delta: d1,
            q2_delta: d2,
        });
        if d1 < cfg.convergence_eps && d2 < cfg.convergence_eps {
            log::debug!("q matrices settled at timestep {t}");
            break;
        }
    }

    let schedule = eval.schedule(&best.state);
    let breakdown = eval.breakdown(&best.state);
    Ok(SolveResult {
        algorithm: "hqm".into(),
        policy: cfg.policy,
        lockers: cfg.lockers,
        timesteps_run: trace.len(),
        best_state: best.state,
        best_reward: best.reward,
        initial_reward,
        trace,
        schedule,
        breakdown,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::is_permutation;

    #[test]
    fn uniform_and_closed_form_softmax() {
        let mut row = vec![0.0; 4];
        softmax_in_place(&mut row);
        assert_eq!(row, vec![0.25; 4]);
        let mut row = vec![1f64.ln(), 3f64.ln()];
        softmax_in_place(&mut row);
        assert!((row[0] - 0.25).abs() < 1e-15 && (row[1] - 0.75).abs() < 1e-15);
        let mut row = vec![1000.0, 0.0, 0.0];
        softmax_in_place(&mut row);
        assert!(row[0] == 1.0 && row[1] < 1e-300);
    }

    #[test]
    fn omega_example() {
        assert_eq!(apply_omega(2, 0, 1, 3), 1);
        assert_eq!(apply_omega(2, 0, -1, 3), 0);
        assert_eq!(apply_omega(1, 1, 1, 3), 1);
    }

    #[test]
    fn equal_neighbour_is_fixed_point() {
        let mut r = rng::stream(1, Stream::Fuzz);
        let x1 = vec![0, 2, 1, 1, 3];
        assert_eq!(locker_move(&x1, &x1, 4, &mut r), x1);
    }

    #[test]
    fn single_swap_at_ends() {
        assert_eq!(segment_exchange(&[0, 1, 2, 3], 0, 3), vec![3, 1, 2, 0]);
        assert_eq!(segment_exchange(&[0, 1, 2, 3, 4, 5], 0, 2), vec![2, 3, 0, 1, 4, 5]);
        assert_eq!(segment_exchange(&[0, 1, 2], 1, 1), vec![0, 1, 2]);
        assert!(is_permutation(&segment_exchange(&[4, 0, 3, 1, 2], 4, 1)));
    }

    #[test]
    fn update_from_zero() {
        let mut q = QModel::zeros(1, 2);
        let s = State {
            x1: vec![0, 0],
            x2: vec![0, 1],
        };
        let (d1, d2) = update_q(&mut q, &s, 0.5, 0.3, 0.9);
        assert_eq!(q.q2.get(0, 1), 0.3 * 0.5);
        assert_eq!(q.q1.get(0, 0), 0.3 * 0.5);
        assert_eq!((d1, d2), (0.15, 0.15));
        assert_eq!(q.q2.get(1, 0), 0.0);
    }

    #[test]
    fn full_step_update_is_idempotent() {
        let mut q = QModel::zeros(2, 2);
        let s = State {
            x1: vec![0, 1],
            x2: vec![0, 1],
        };
        update_q(&mut q, &s, 1.0, 1.0, 0.5);
        let once = q.clone();
        let (d1, d2) = update_q(&mut q, &s, 1.0, 1.0, 0.5);
        assert_eq!(q, once);
        assert_eq!((d1, d2), (0.0, 0.0));
    }

    #[test]
    fn bellman_fixed_point_is_unchanged() {
        let mut q = QModel::zeros(1, 2);
        // Successor row 1 is zero, so target = reward.
        q.q2.set(0, 1, 0.4);
        q.q1.set(0, 0, 0.4 / (1.0 - 0.5));
        let s = State {
            x1: vec![0, 0],
            x2: vec![0, 1],
        };
        let (d1, d2) = update_q(&mut q, &s, 0.4, 0.7, 0.5);
        assert_eq!((d1, d2), (0.0, 0.0));
    }

    #[test]
    fn greedy_rebuild_follows_argmax_chain() {
        let mut q = QModel::zeros(2, 3);
        q.q2 = Matrix::from_rows(&[vec![0.0, 5.0, 1.0], vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 0.0]]);
        q.q1 = Matrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 0.0]]);
        let target = State {
            x1: vec![0, 1, 0],
            x2: vec![0, 1, 2],
        };
        let p = selection_probabilities(&q);
        let mut r = rng::stream(0, Stream::Fuzz);
        for _ in 0..20 {
            assert_eq!(rebuild_state(&q, &p, 1.0, &target, &mut r), target);
        }
    }
}
