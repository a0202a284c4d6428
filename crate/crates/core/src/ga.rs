//! Genetic-algorithm baseline over the same states, schedules and rewards
//! as the Q-learning solver.

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
pub struct GaConfig {
    pub iterations: usize,
    pub pop_size: usize,
    /// Percent chance that an adjacent pair of the mating pool breeds.
    pub p_cross: f64,
    /// Percent of the population copied unchanged.
    pub elite_frac: f64,
    /// Per-gene percent chance of swapping with the right neighbour.
    pub mutation_rate: f64,
    pub policy: AdjustPolicy,
    pub lockers: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            pop_size: 100,
            p_cross: 50.0,
            elite_frac: 5.0,
            mutation_rate: 5.0,
            policy: AdjustPolicy::Btd,
            lockers: 10,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn check(&self) -> Result<(), SolveError> {
        if self.iterations == 0 {
            return Err(SolveError::Config("iterations must be at least 1".into()));
        }
        if self.pop_size < 2 {
            return Err(SolveError::Config("pop_size must be at least 2".into()));
        }
        for (name, v) in [
            ("p_cross", self.p_cross),
            ("elite_frac", self.elite_frac),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(SolveError::Config(format!("{name} {v} outside [0, 100]")));
            }
        }
        if self.lockers == 0 {
            return Err(SolveError::NoLockers);
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.pop_size as f64 * self.elite_frac / 100.0).round() as usize).min(self.pop_size)
    }
}

/// Roulette wheel over the cumulative percentage of fitness. Falls back to
/// a uniform pick when the total fitness is zero or not finite.
pub fn roulette<R: Rng>(fitness: &[f64], rng: &mut R) -> usize {
    let total: f64 = fitness.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return rng.random_range(0..fitness.len());
    }
    let threshold = 100.0 * rng.random::<f64>();
    let mut cum = 0.0;
    for (i, &f) in fitness.iter().enumerate() {
        cum += f;
        if 100.0 * cum / total >= threshold {
            return i;
        }
    }
    fitness.len() - 1
}

/// Order crossover: the child takes `donor[lo..hi]` in place and fills the
/// remaining positions with the missing ids in `base` order.
pub fn order_crossover(base: &[usize], donor: &[usize], lo: usize, hi: usize) -> Vec<usize> {
    let n = base.len();
    let mut taken = vec![false; n];
    for &v in &donor[lo..hi] {
        taken[v] = true;
    }
    let mut fill = base.iter().copied().filter(|&v| !taken[v]);
    (0..n)
        .map(|pos| {
            if (lo..hi).contains(&pos) {
                donor[pos]
            } else {
                fill.next().expect("filler count matches free positions")
            }
        })
        .collect()
}

/// Exchanges a random segment between two parents.
pub fn crossover<R: Rng>(a: &State, b: &State, rng: &mut R) -> (State, State) {
    let n = a.len();
    let i = rng.random_range(0..=n);
    let j = rng.random_range(0..=n);
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    let mut x1a = a.x1.clone();
    let mut x1b = b.x1.clone();
    x1a[lo..hi].copy_from_slice(&b.x1[lo..hi]);
    x1b[lo..hi].copy_from_slice(&a.x1[lo..hi]);
    (
        State {
            x1: x1a,
            x2: order_crossover(&a.x2, &b.x2, lo, hi),
        },
        State {
            x1: x1b,
            x2: order_crossover(&b.x2, &a.x2, lo, hi),
        },
    )
}

fn mutate_genes<R: Rng>(genes: &mut [usize], rate: f64, rng: &mut R) {
    for g in 0..genes.len().saturating_sub(1) {
        if 100.0 * rng.random::<f64>() < rate {
            genes.swap(g, g + 1);
        }
    }
}

/// Per-gene adjacent swap on both chromosomes.
pub fn mutate<R: Rng>(s: &mut State, rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    mutate_genes(&mut s.x1, rate, rng);
    mutate_genes(&mut s.x2, rate, rng);
}

/// One generation. The population must be ranked best first; the result is
/// ranked again.
pub fn next_generation<R: Rng>(pop: &Agent, cfg: &GaConfig, rng: &mut R, eval: &Evaluator) -> Agent {
    let size = pop.len();
    let elites = cfg.elite_count();
    let mut pool: Vec<State> = (elites..size)
        .map(|_| pop.states[roulette(&pop.rewards, rng)].clone())
        .collect();
    let mut k = 0;
    while k + 1 < pool.len() {
        if 100.0 * rng.random::<f64>() < cfg.p_cross {
            let (c1, c2) = crossover(&pool[k], &pool[k + 1], rng);
            pool[k] = c1;
            pool[k + 1] = c2;
        }
        k += 2;
    }
    for s in pool.iter_mut() {
        mutate(s, cfg.mutation_rate, rng);
    }
    let pool_rewards = eval.rewards(&pool);

    let mut states: Vec<State> = pop.states[..elites].to_vec();
    let mut rewards: Vec<f64> = pop.rewards[..elites].to_vec();
    states.extend(pool);
    rewards.extend(pool_rewards);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]));
    Agent {
        states: order.iter().map(|&i| states[i].clone()).collect(),
        rewards: order.iter().map(|&i| rewards[i]).collect(),
    }
}

pub fn run_ga(inst: &ProblemInstance, tasks: &[Task], cfg: &GaConfig) -> Result<SolveResult, SolveError> {
    cfg.check()?;
    if tasks.is_empty() {
        return Err(SolveError::NoTasks);
    }
    let started = Instant::now();
    let eval = Evaluator::new(inst, tasks, cfg.lockers, cfg.policy);
    let mut rng = rng::stream(cfg.seed, Stream::Ga);

    let mut pop = init_agent(
        tasks.len(),
        cfg.lockers,
        cfg.pop_size,
        &mut rng::stream(cfg.seed, Stream::Population),
        &eval,
    );
    let mut best_state = pop.states[0].clone();
    let mut best_reward = pop.rewards[0];
    let initial_reward = best_reward;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for g in 1..=cfg.iterations {
        pop = next_generation(&pop, cfg, &mut rng, &eval);
        if pop.rewards[0] > best_reward {
            best_reward = pop.rewards[0];
            best_state = pop.states[0].clone();
        }
        trace.push(TraceRow {
            timestep: g,
            best_reward,
            q1_delta: 0.0,
            q2_delta: 0.0,
        });
    }

    Ok(SolveResult {
        algorithm: "ga".into(),
        policy: cfg.policy,
        lockers: cfg.lockers,
        timesteps_run: trace.len(),
        schedule: eval.schedule(&best_state),
        breakdown: eval.breakdown(&best_state),
        best_state,
        best_reward,
        initial_reward,
        trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::is_permutation;

    #[test]
    fn order_crossover_keeps_permutation() {
        let a = [0, 1, 2, 3, 4, 5];
        let b = [5, 3, 1, 0, 4, 2];
        let c = order_crossover(&a, &b, 1, 4);
        assert_eq!(&c[1..4], &[3, 1, 0]);
        assert_eq!(c, vec![2, 3, 1, 0, 4, 5]);
        assert!(is_permutation(&c));
        assert_eq!(order_crossover(&a, &b, 0, 0), a.to_vec());
        assert_eq!(order_crossover(&a, &b, 0, 6), b.to_vec());
    }

    #[test]
    fn roulette_respects_weights() {
        let mut r = rng::stream(3, Stream::Fuzz);
        let f = [1.0, 0.0, 3.0];
        let mut hits = [0usize; 3];
        for _ in 0..20_000 {
            hits[roulette(&f, &mut r)] += 1;
        }
        assert_eq!(hits[1], 0);
        let share = hits[2] as f64 / 20_000.0;
        assert!((share - 0.75).abs() < 0.02, "{share}");
    }

    #[test]
    fn roulette_uniform_on_zero_fitness() {
        let mut r = rng::stream(3, Stream::Fuzz);
        let mut hits = [0usize; 4];
        for _ in 0..8_000 {
            hits[roulette(&[0.0; 4], &mut r)] += 1;
        }
        assert!(hits.iter().all(|&h| h > 1700));
    }

    #[test]
    fn elite_count_rounds() {
        let cfg = GaConfig::default();
        assert_eq!(cfg.elite_count(), 5);
        let all = GaConfig {
            elite_frac: 100.0,
            ..cfg
        };
        assert_eq!(all.elite_count(), 100);
    }

    #[test]
    fn mutation_swaps_neighbours_only() {
        let mut r = rng::stream(9, Stream::Fuzz);
        let mut s = State {
            x1: vec![0, 1, 2, 3],
            x2: vec![0, 1, 2, 3],
        };
        mutate(&mut s, 100.0, &mut r);
        // Every gene swaps right in turn, rotating the first value to the end.
        assert_eq!(s.x2, vec![1, 2, 3, 0]);
        assert_eq!(s.x1, vec![1, 2, 3, 0]);
    }
}
