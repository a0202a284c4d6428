//! Weighted cost, reward and the schedule validator.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProblemInstance, HORIZON_START};
use crate::routing::{Schedule, Totals};
use crate::taskgen::Task;

/// Timing tolerance of the validator, minutes.
pub const TIME_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c1_fleet: f64,
    pub c2_travel: f64,
    pub c3_delay: f64,
    pub objective: f64,
    pub reward: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("an agent needs at least one state")]
    EmptyAgent,
}

pub fn cost_from_totals(t: &Totals, inst: &ProblemInstance) -> CostBreakdown {
    let c1_fleet = inst.fleet.fixed_cost * t.fleet_used as f64;
    let c2_travel = t.distance * inst.fleet.unit_travel_cost;
    let c3_delay = t.delay;
    let w = &inst.weights;
    let objective = w.fleet * c1_fleet + w.travel * c2_travel + w.delay * c3_delay;
    CostBreakdown {
        c1_fleet,
        c2_travel,
        c3_delay,
        objective,
        reward: reward_of(objective),
    }
}

/// Reciprocal of the objective; a zero objective maps to `+inf`.
pub fn reward_of(objective: f64) -> f64 {
    if objective > 0.0 {
        1.0 / objective
    } else {
        log::warn!("objective is {objective}; reporting an infinite reward");
        f64::INFINITY
    }
}

pub fn cost_breakdown(sch: &Schedule, inst: &ProblemInstance) -> CostBreakdown {
    cost_from_totals(
        &Totals {
            fleet_used: sch.fleet_used,
            distance: sch.total_distance,
            delay: sch.total_delay(),
        },
        inst,
    )
}

/// Reward of an agent: the best of its states.
pub fn agent_reward(rewards: &[f64]) -> Result<f64, ObjectiveError> {
    rewards
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(ObjectiveError::EmptyAgent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    FleetSize,
    TripLoad,
    TaskMultiplicity,
    DepotClosure,
    Timing,
    Domain,
}

impl Constraint {
    pub const ALL: [Constraint; 6] = [
        Constraint::FleetSize,
        Constraint::TripLoad,
        Constraint::TaskMultiplicity,
        Constraint::DepotClosure,
        Constraint::Timing,
        Constraint::Domain,
    ];
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::FleetSize => "fleet size",
            Constraint::TripLoad => "trip load",
            Constraint::TaskMultiplicity => "task multiplicity",
            Constraint::DepotClosure => "depot closure",
            Constraint::Timing => "timing",
            Constraint::Domain => "domain",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub constraint: Constraint,
    pub passed: bool,
    pub offenders: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub checks: Vec<CheckResult>,
}

impl ConstraintReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn passed(&self, c: Constraint) -> bool {
        self.checks
            .iter()
            .find(|r| r.constraint == c)
            .is_some_and(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            if c.passed {
                writeln!(f, "{}: ok", c.constraint)?;
            } else {
                writeln!(f, "{}: FAILED ({})", c.constraint, c.offenders.join("; "))?;
            }
        }
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_TOLERANCE
}

/// Checks a schedule against the fleet, load, multiplicity, closure and
/// timing rules. Every failed check carries the offending entities.
pub fn validate_solution(sch: &Schedule, tasks: &[Task], inst: &ProblemInstance) -> ConstraintReport {
    let mut offenders: [Vec<String>; 6] = Default::default();
    let [fleet, load, multiplicity, closure, timing, domain] = &mut offenders;

    let position_of = |space_id: usize| {
        inst.parking_spaces
            .iter()
            .find(|s| s.id == space_id)
            .map(|s| s.position)
    };
    let travel = |a, b| inst.fleet.travel_minutes(crate::model::Coord::distance(&a, &b));

    let used = sch.routes.iter().filter(|r| !r.visits.is_empty()).count();
    if used > inst.fleet.max_fleet {
        fleet.push(format!("{used} lockers used, limit {}", inst.fleet.max_fleet));
    }
    if used != sch.fleet_used {
        fleet.push(format!("fleet_used says {}, routes use {used}", sch.fleet_used));
    }

    let mut seen = vec![0usize; tasks.len()];
    let mut distance = 0.0;
    for (m, route) in sch.routes.iter().enumerate() {
        if route.mpl != m {
            domain.push(format!("route {m} labelled locker {}", route.mpl));
        }
        let mut trip_load: u64 = 0;
        let mut trip = 0;
        let mut prev: Option<(f64, crate::model::Coord)> = None;
        for (k, v) in route.visits.iter().enumerate() {
            let Some(task) = tasks.get(v.task_id) else {
                domain.push(format!("locker {m} visit {k}: unknown task {}", v.task_id));
                continue;
            };
            seen[v.task_id] += 1;
            if v.space_id != task.space_id {
                domain.push(format!(
                    "task {}: visited at space {}, belongs to {}",
                    task.id, v.space_id, task.space_id
                ));
            }
            let Some(here) = position_of(task.space_id) else {
                domain.push(format!("task {}: unknown space {}", task.id, task.space_id));
                continue;
            };

            if v.via_depot && k > 0 {
                trip += 1;
                trip_load = 0;
            }
            trip_load += task.demand as u64;
            if trip_load > inst.fleet.capacity as u64 {
                load.push(format!(
                    "locker {m} trip {trip}: load {trip_load} exceeds {}",
                    inst.fleet.capacity
                ));
            }

            let expected = match prev {
                None => {
                    let start = route.depot_departure.unwrap_or(HORIZON_START);
                    distance += inst.depot.distance(&here);
                    task.sub.e.max(start + travel(inst.depot, here))
                }
                Some((depart, from)) if v.via_depot => {
                    distance += from.distance(&inst.depot) + inst.depot.distance(&here);
                    depart + travel(from, inst.depot) + travel(inst.depot, here)
                }
                Some((depart, from)) => {
                    distance += from.distance(&here);
                    depart + travel(from, here)
                }
            };
            if !close(v.arrive, expected) {
                timing.push(format!(
                    "task {}: arrives {:.6}, expected {:.6}",
                    task.id, v.arrive, expected
                ));
            }
            let service_end = v.arrive.max(task.ready) + inst_service(inst, task.space_id);
            let depart_ok = if v.wait_applied {
                v.depart + TIME_TOLERANCE >= service_end
            } else {
                close(v.depart, service_end)
            };
            if !depart_ok {
                timing.push(format!(
                    "task {}: departs {:.6} before service ends at {:.6}",
                    task.id, v.depart, service_end
                ));
            }
            let delay = (task.sub.e - v.arrive).max(0.0) + (v.arrive - task.sub.l).max(0.0);
            if let Some(&recorded) = sch.delays.get(task.id) {
                if !close(recorded, delay) {
                    timing.push(format!(
                        "task {}: delay {recorded:.6}, expected {delay:.6}",
                        task.id
                    ));
                }
            }
            prev = Some((v.depart, here));
        }

        match (prev, route.depot_departure, route.depot_return) {
            (None, None, None) => {}
            (None, _, _) => closure.push(format!("locker {m}: empty route has depot times")),
            (Some((depart, from)), Some(_), Some(ret)) => {
                distance += from.distance(&inst.depot);
                let expected = depart + travel(from, inst.depot);
                if !close(ret, expected) {
                    timing.push(format!(
                        "locker {m}: returns {ret:.6}, expected {expected:.6}"
                    ));
                }
            }
            (Some(_), dep, ret) => {
                if dep.is_none() {
                    closure.push(format!("locker {m}: no depot departure"));
                }
                if ret.is_none() {
                    closure.push(format!("locker {m}: no depot return"));
                }
            }
        }
    }

    for (t, &n) in seen.iter().enumerate() {
        if n != 1 {
            multiplicity.push(format!("task {t} visited {n} times"));
        }
    }
    if sch.delays.len() != tasks.len() {
        domain.push(format!(
            "{} delay entries for {} tasks",
            sch.delays.len(),
            tasks.len()
        ));
    }
    if (distance - sch.total_distance).abs() > 1e-6 {
        domain.push(format!(
            "total distance {:.6}, legs sum to {distance:.6}",
            sch.total_distance
        ));
    }

    ConstraintReport {
        checks: Constraint::ALL
            .iter()
            .zip(offenders)
            .map(|(&constraint, offenders)| CheckResult {
                constraint,
                passed: offenders.is_empty(),
                offenders,
            })
            .collect(),
    }
}

fn inst_service(inst: &ProblemInstance, space_id: usize) -> f64 {
    inst.parking_spaces
        .iter()
        .find(|s| s.id == space_id)
        .map(|s| inst.service_minutes(s))
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coord, FleetParams, ParkingSpace, TimeWindow, Weights, FORMAT_TAG};
    use crate::routing::{build_schedule, AdjustPolicy};
    use crate::taskgen::SubInterval;

    fn inst() -> ProblemInstance {
        ProblemInstance {
            format: FORMAT_TAG.into(),
            customers: vec![],
            parking_spaces: (0..3)
                .map(|i| ParkingSpace {
                    id: i,
                    position: Coord::new(i as f64 + 1.0, 0.5),
                    window: TimeWindow::new(480.0, 1080.0),
                    service_time: 10.0,
                })
                .collect(),
            depot: Coord::new(0.0, 0.0),
            fleet: FleetParams::default(),
            weights: Weights::default(),
            seed: 0,
        }
    }

    fn tasks() -> Vec<Task> {
        (0..3)
            .map(|i| Task {
                id: i,
                space_id: i,
                sub: SubInterval {
                    e: 500.0 + 20.0 * i as f64,
                    l: 510.0 + 20.0 * i as f64,
                    index: 0,
                },
                demand: 8,
                customer_ids: vec![i],
                ready: 500.0 + 20.0 * i as f64,
            })
            .collect()
    }

    #[test]
    fn table_weights_example() {
        let t = Totals {
            fleet_used: 1,
            distance: 10.0,
            delay: 0.0,
        };
        let c = cost_from_totals(&t, &inst());
        assert_eq!(c.objective, 200_005.0);
        assert!((c.reward - 4.99988e-6).abs() < 1e-11);
        assert!((c.reward * c.objective - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_schedule_costs_nothing() {
        let sch = build_schedule(&[vec![]], &[], &inst(), AdjustPolicy::Btd);
        let c = cost_breakdown(&sch, &inst());
        assert_eq!((c.c1_fleet, c.c2_travel, c.c3_delay), (0.0, 0.0, 0.0));
        assert!(c.reward.is_infinite());
    }

    #[test]
    fn agent_reward_is_max() {
        assert_eq!(agent_reward(&[1e-3, 2e-3, 5e-4]).unwrap(), 2e-3);
        assert_eq!(agent_reward(&[7.0]).unwrap(), 7.0);
        assert_eq!(agent_reward(&[3.0, 3.0]).unwrap(), 3.0);
        assert_eq!(agent_reward(&[]), Err(ObjectiveError::EmptyAgent));
    }

    #[test]
    fn built_schedules_pass() {
        let i = inst();
        let t = tasks();
        for p in AdjustPolicy::ALL {
            for lists in [vec![vec![0, 1, 2]], vec![vec![2, 0], vec![1]]] {
                let sch = build_schedule(&lists, &t, &i, p);
                let r = validate_solution(&sch, &t, &i);
                assert!(r.all_passed(), "{r}");
            }
        }
    }

    #[test]
    fn duplicated_task_fails_multiplicity() {
        let i = inst();
        let t = tasks();
        let mut sch = build_schedule(&[vec![0, 1, 2]], &t, &i, AdjustPolicy::Btd);
        let dup = sch.routes[0].visits[1].clone();
        sch.routes[0].visits.push(dup);
        let r = validate_solution(&sch, &t, &i);
        assert!(!r.passed(Constraint::TaskMultiplicity));
        let check = r.failures().find(|c| c.constraint == Constraint::TaskMultiplicity).unwrap();
        assert!(check.offenders[0].contains("task 1"));
    }

    #[test]
    fn fleet_limit_is_enforced() {
        let mut i = inst();
        i.fleet.max_fleet = 1;
        let t = tasks();
        let sch = build_schedule(&[vec![0, 1], vec![2]], &t, &i, AdjustPolicy::Btd);
        let r = validate_solution(&sch, &t, &i);
        assert!(!r.passed(Constraint::FleetSize));
        assert!(r.passed(Constraint::Timing));
    }

    #[test]
    fn zero_delay_when_arriving_on_time() {
        let i = inst();
        let t = vec![tasks().remove(0)];
        let sch = build_schedule(&[vec![0]], &t, &i, AdjustPolicy::Btd);
        assert_eq!(sch.routes[0].visits[0].arrive, 500.0);
        assert_eq!(cost_breakdown(&sch, &i).c3_delay, 0.0);
    }
}
