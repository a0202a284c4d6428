//! Pieces shared by the solvers: state evaluation, populations and results.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProblemInstance;
use crate::objective::{cost_from_totals, CostBreakdown};
use crate::routing::{AdjustPolicy, RouteBuilder, Schedule, State};
use crate::taskgen::Task;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("the task list is empty")]
    NoTasks,
    #[error("need at least one locker")]
    NoLockers,
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("search space has {cardinality} states, above the limit of {limit}")]
    TooLarge { cardinality: u128, limit: u128 },
}

/// Scores states for one instance, locker count and repair policy.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub inst: &'a ProblemInstance,
    pub builder: RouteBuilder,
    pub lockers: usize,
    pub policy: AdjustPolicy,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a ProblemInstance, tasks: &[Task], lockers: usize, policy: AdjustPolicy) -> Self {
        Self {
            inst,
            builder: RouteBuilder::new(inst, tasks),
            lockers,
            policy,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.builder.n_tasks()
    }

    pub fn breakdown(&self, s: &State) -> CostBreakdown {
        cost_from_totals(&self.builder.totals(s, self.lockers, self.policy), self.inst)
    }

    pub fn reward(&self, s: &State) -> f64 {
        self.breakdown(s).reward
    }

    /// Rewards in input order; evaluated in parallel.
    pub fn rewards(&self, states: &[State]) -> Vec<f64> {
        states
            .par_iter()
            .with_min_len(8)
            .map(|s| self.reward(s))
            .collect()
    }

    pub fn schedule(&self, s: &State) -> Schedule {
        self.builder.schedule_state(s, self.lockers, self.policy)
    }
}

/// An ordered population of states with their rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub states: Vec<State>,
    pub rewards: Vec<f64>,
}

impl Agent {
    /// Scores the states and ranks them by reward, best first. Equal
    /// rewards keep their generation order.
    pub fn ranked(states: Vec<State>, eval: &Evaluator) -> Self {
        let rewards = eval.rewards(&states);
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]));
        Self {
            states: order.iter().map(|&i| states[i].clone()).collect(),
            rewards: order.iter().map(|&i| rewards[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index of the best state; ties go to the lowest index.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, &r) in self.rewards.iter().enumerate() {
            if r > self.rewards[best] {
                best = i;
            }
        }
        best
    }
}

pub fn random_state<R: Rng>(n_tasks: usize, lockers: usize, rng: &mut R) -> State {
    let x1 = (0..n_tasks).map(|_| rng.random_range(0..lockers)).collect();
    let mut x2: Vec<usize> = (0..n_tasks).collect();
    x2.shuffle(rng);
    State { x1, x2 }
}

/// Uniformly random population, scored and ranked.
pub fn init_agent<R: Rng>(
    n_tasks: usize,
    lockers: usize,
    size: usize,
    rng: &mut R,
    eval: &Evaluator,
) -> Agent {
    let states = (0..size)
        .map(|_| random_state(n_tasks, lockers, rng))
        .collect();
    Agent::ranked(states, eval)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestep: usize,
    pub best_reward: f64,
    pub q1_delta: f64,
    pub q2_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub algorithm: String,
    pub policy: AdjustPolicy,
    pub lockers: usize,
    pub best_state: State,
    pub best_reward: f64,
    /// Best reward of the initial population.
    pub initial_reward: f64,
    pub trace: Vec<TraceRow>,
    pub schedule: Schedule,
    pub breakdown: CostBreakdown,
    pub timesteps_run: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SolveResult {
    pub fn reward_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.best_reward).collect()
    }

    /// Relative gain of the final best over the initial best.
    pub fn improvement_rate(&self) -> f64 {
        (self.best_reward - self.initial_reward) / self.initial_reward
    }
}
