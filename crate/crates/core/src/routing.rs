//! State decoding and timed schedule construction.
//!
//! A [`State`] assigns every task to a locker (`x1`) and fixes a global
//! execution order (`x2`). Each locker leaves the depot at the start of the
//! horizon, visits its tasks as early as their windows allow and returns to
//! the depot. Two conflicts are repaired on the way: a load shortfall always
//! sends the locker back to the depot to reload, and an arrival before the
//! next window opens is handled according to the [`AdjustPolicy`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ProblemInstance, HORIZON_START};
use crate::taskgen::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustPolicy {
    /// Detour through the depot (and reload) when arriving too early.
    #[default]
    Btd,
    /// Wait at the current space until its window closes, when that is
    /// enough to reach the next window.
    Hcps,
}

impl AdjustPolicy {
    pub const ALL: [AdjustPolicy; 2] = [AdjustPolicy::Btd, AdjustPolicy::Hcps];

    pub fn as_str(self) -> &'static str {
        match self {
            AdjustPolicy::Btd => "btd",
            AdjustPolicy::Hcps => "hcps",
        }
    }
}

impl fmt::Display for AdjustPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdjustPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "btd" => Ok(AdjustPolicy::Btd),
            "hcps" => Ok(AdjustPolicy::Hcps),
            other => Err(format!("unknown policy {other:?}, expected btd or hcps")),
        }
    }
}

/// Candidate solution: `x1[t]` is the locker of task `t`, `x2` the global
/// execution order of task ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State {
    pub x1: Vec<usize>,
    pub x2: Vec<usize>,
}

impl State {
    pub fn len(&self) -> usize {
        self.x2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x2.is_empty()
    }

    /// Both vectors have one entry per task, lockers are in range and `x2`
    /// is a permutation.
    pub fn is_valid(&self, n_tasks: usize, m: usize) -> bool {
        if self.x1.len() != n_tasks || self.x2.len() != n_tasks {
            return false;
        }
        if self.x1.iter().any(|&v| v >= m) {
            return false;
        }
        is_permutation(&self.x2)
    }
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &v in p {
        if v >= p.len() || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

/// Per-locker task lists; within a list tasks keep their `x2` order.
pub fn decode_state(s: &State, m: usize) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); m];
    for &t in &s.x2 {
        lists[s.x1[t]].push(t);
    }
    lists
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub task_id: usize,
    pub space_id: usize,
    pub arrive: f64,
    /// Time the locker leaves the space; later than the end of service when
    /// it was held.
    pub depart: f64,
    /// The leg into this visit went through the depot and reloaded.
    pub via_depot: bool,
    /// The locker waited here until the window closed before leaving.
    pub wait_applied: bool,
    pub demand: u32,
    pub load_after: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub mpl: usize,
    pub depot_departure: Option<f64>,
    pub visits: Vec<Visit>,
    pub depot_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// One route per locker, empty ones included.
    pub routes: Vec<Route>,
    pub total_distance: f64,
    /// Lateness plus earliness per task id, in minutes.
    pub delays: Vec<f64>,
    pub fleet_used: usize,
}

impl Schedule {
    pub fn total_delay(&self) -> f64 {
        self.delays.iter().sum()
    }
}

/// Fleet, distance and delay of a schedule without materialising it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Totals {
    pub fleet_used: usize,
    pub distance: f64,
    pub delay: f64,
}

#[derive(Debug, Clone)]
struct TaskInfo {
    node: usize,
    e: f64,
    l: f64,
    ready: f64,
    service: f64,
    demand: u32,
}

/// Travel data and task windows cached for repeated schedule construction.
#[derive(Debug, Clone)]
pub struct RouteBuilder {
    tasks: Vec<TaskInfo>,
    space_ids: Vec<usize>,
    /// Row-major node distance matrix; node 0 is the depot, node `i + 1`
    /// is parking space `i`.
    dist: Vec<f64>,
    time: Vec<f64>,
    nodes: usize,
    capacity: u32,
}

struct Cursor {
    last: Option<usize>,
    depart: f64,
    load: u32,
    distance: f64,
    delay: f64,
}

impl Cursor {
    fn new(capacity: u32) -> Self {
        Self {
            last: None,
            depart: HORIZON_START,
            load: capacity,
            distance: 0.0,
            delay: 0.0,
        }
    }
}

struct Step {
    arrive: f64,
    delay: f64,
    via_depot: bool,
    /// Held at the previous space; its departure moved to this time.
    held_until: Option<f64>,
}

impl RouteBuilder {
    pub fn new(inst: &ProblemInstance, tasks: &[Task]) -> Self {
        let mut positions = vec![inst.depot];
        positions.extend(inst.parking_spaces.iter().map(|s| s.position));
        let nodes = positions.len();
        let mut dist = vec![0.0; nodes * nodes];
        let mut time = vec![0.0; nodes * nodes];
        for a in 0..nodes {
            for b in 0..nodes {
                let d = positions[a].distance(&positions[b]);
                dist[a * nodes + b] = d;
                time[a * nodes + b] = inst.fleet.travel_minutes(d);
            }
        }
        let space_index = |id: usize| {
            inst.parking_spaces
                .iter()
                .position(|s| s.id == id)
                .unwrap_or_else(|| panic!("task refers to unknown parking space {id}"))
        };
        let tasks_info = tasks
            .iter()
            .map(|t| {
                let idx = space_index(t.space_id);
                TaskInfo {
                    node: idx + 1,
                    e: t.sub.e,
                    l: t.sub.l,
                    ready: t.ready,
                    service: inst.service_minutes(&inst.parking_spaces[idx]),
                    demand: t.demand,
                }
            })
            .collect();
        Self {
            tasks: tasks_info,
            space_ids: tasks.iter().map(|t| t.space_id).collect(),
            dist,
            time,
            nodes,
            capacity: inst.fleet.capacity,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.nodes + b]
    }

    fn t(&self, a: usize, b: usize) -> f64 {
        self.time[a * self.nodes + b]
    }

    fn step(&self, c: &mut Cursor, task: usize, policy: AdjustPolicy) -> Step {
        let tj = &self.tasks[task];
        let mut via_depot = false;
        let mut held_until = None;
        let arrive = match c.last {
            None => {
                c.distance += self.d(0, tj.node);
                c.load = self.capacity;
                tj.e.max(c.depart + self.t(0, tj.node))
            }
            Some(prev) => {
                let ti = &self.tasks[prev];
                let direct = self.t(ti.node, tj.node);
                let naive = c.depart + direct;
                let hold = policy == AdjustPolicy::Hcps && ti.l + direct >= tj.e;
                if c.load >= tj.demand && naive >= tj.e {
                    c.distance += self.d(ti.node, tj.node);
                    naive
                } else if c.load >= tj.demand && hold {
                    c.distance += self.d(ti.node, tj.node);
                    c.depart = ti.l;
                    held_until = Some(ti.l);
                    ti.l + direct
                } else {
                    via_depot = true;
                    c.distance += self.d(ti.node, 0) + self.d(0, tj.node);
                    c.load = self.capacity;
                    c.depart + self.t(ti.node, 0) + self.t(0, tj.node)
                }
            }
        };
        let delay = (tj.e - arrive).max(0.0) + (arrive - tj.l).max(0.0);
        c.delay += delay;
        c.load = c.load.saturating_sub(tj.demand);
        c.depart = arrive.max(tj.ready) + tj.service;
        c.last = Some(task);
        Step {
            arrive,
            delay,
            via_depot,
            held_until,
        }
    }

    fn close(&self, c: &mut Cursor) -> Option<f64> {
        let last = c.last?;
        let node = self.tasks[last].node;
        c.distance += self.d(node, 0);
        Some(c.depart + self.t(node, 0))
    }

    /// Builds the timed schedule for per-locker task lists.
    pub fn build(&self, lists: &[Vec<usize>], policy: AdjustPolicy) -> Schedule {
        let mut delays = vec![0.0; self.tasks.len()];
        let mut routes = Vec::with_capacity(lists.len());
        let mut total_distance = 0.0;
        let mut fleet_used = 0;
        for (mpl, list) in lists.iter().enumerate() {
            let mut c = Cursor::new(self.capacity);
            let mut visits: Vec<Visit> = Vec::with_capacity(list.len());
            for &task in list {
                let step = self.step(&mut c, task, policy);
                if let Some(t) = step.held_until {
                    let prev = visits.last_mut().expect("hold needs a previous visit");
                    prev.depart = t;
                    prev.wait_applied = true;
                }
                delays[task] = step.delay;
                visits.push(Visit {
                    task_id: task,
                    space_id: self.space_ids[task],
                    arrive: step.arrive,
                    depart: c.depart,
                    via_depot: step.via_depot,
                    wait_applied: false,
                    demand: self.tasks[task].demand,
                    load_after: c.load,
                });
            }
            let depot_return = self.close(&mut c);
            if !visits.is_empty() {
                fleet_used += 1;
            }
            total_distance += c.distance;
            routes.push(Route {
                mpl,
                depot_departure: (!visits.is_empty()).then_some(HORIZON_START),
                visits,
                depot_return,
            });
        }
        Schedule {
            routes,
            total_distance,
            delays,
            fleet_used,
        }
    }

    pub fn schedule_state(&self, s: &State, m: usize, policy: AdjustPolicy) -> Schedule {
        self.build(&decode_state(s, m), policy)
    }

    /// Same numbers as [`RouteBuilder::schedule_state`] without building
    /// the visit tables. Per-locker sums are accumulated in the same order,
    /// so the totals are bit-identical.
    pub fn totals(&self, s: &State, m: usize, policy: AdjustPolicy) -> Totals {
        let mut cursors: Vec<Cursor> = (0..m).map(|_| Cursor::new(self.capacity)).collect();
        // Delay is summed per task id to match `Schedule::total_delay`.
        let mut per_task = vec![0.0; self.tasks.len()];
        for &task in &s.x2 {
            per_task[task] = self.step(&mut cursors[s.x1[task]], task, policy).delay;
        }
        let mut out = Totals {
            fleet_used: 0,
            distance: 0.0,
            delay: 0.0,
        };
        for c in cursors.iter_mut() {
            if self.close(c).is_some() {
                out.fleet_used += 1;
            }
            out.distance += c.distance;
        }
        out.delay = per_task.iter().sum();
        out
    }

    /// Re-times a schedule with the same task order and the same repair
    /// decisions, adding `slack[m][k]` minutes to the leg into visit `k` of
    /// route `m`. Returns the new arrival times per route.
    pub fn replay_with_slack(&self, sch: &Schedule, slack: &[Vec<f64>]) -> Vec<Vec<f64>> {
        sch.routes
            .iter()
            .zip(slack)
            .map(|(route, extra)| {
                let mut out = Vec::with_capacity(route.visits.len());
                let mut depart = HORIZON_START;
                let mut prev: Option<&Visit> = None;
                for (visit, &s) in route.visits.iter().zip(extra) {
                    let tj = &self.tasks[visit.task_id];
                    let arrive = match prev {
                        None => tj.e.max(depart + self.t(0, tj.node) + s),
                        Some(p) => {
                            let ti = &self.tasks[p.task_id];
                            if p.wait_applied {
                                depart = depart.max(ti.l);
                            }
                            if visit.via_depot {
                                depart + self.t(ti.node, 0) + self.t(0, tj.node) + s
                            } else {
                                depart + self.t(ti.node, tj.node) + s
                            }
                        }
                    };
                    depart = arrive.max(tj.ready) + tj.service;
                    out.push(arrive);
                    prev = Some(visit);
                }
                out
            })
            .collect()
    }
}

/// Convenience wrapper around [`RouteBuilder::build`].
pub fn build_schedule(
    lists: &[Vec<usize>],
    tasks: &[Task],
    inst: &ProblemInstance,
    policy: AdjustPolicy,
) -> Schedule {
    RouteBuilder::new(inst, tasks).build(lists, policy)
}
