//! Task compilation: each parking window is trimmed to the customers it
//! serves, sliced into service-length sub-intervals, and every customer is
//! committed to exactly one slice.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Customer, ParkingSpace, ProblemInstance, TimeWindow};
use crate::siting::SitingResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubInterval {
    pub e: f64,
    pub l: f64,
    pub index: usize,
}

impl SubInterval {
    pub fn window(&self) -> TimeWindow {
        TimeWindow::new(self.e, self.l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub space_id: usize,
    pub sub: SubInterval,
    pub demand: u32,
    pub customer_ids: Vec<usize>,
    /// Earliest window start among the committed customers' stopovers.
    pub ready: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("customer {customer} has no sub-interval inside any of its stopover windows")]
    Uncoverable { customer: usize },
    #[error("customer {customer} only fits sub-intervals that are already at capacity {capacity}")]
    OverCapacity { customer: usize, capacity: u32 },
    #[error("customer {customer} stopover {stopover} has no siting label")]
    Unlabeled { customer: usize, stopover: usize },
    #[error("siting refers to parking space {0}, which the instance does not have")]
    UnknownSpace(usize),
}

/// Parking window intersected with the hull of the stopover windows labeled
/// to this space. `None` when nothing is labeled here or the intersection
/// is empty.
pub fn reduce_windows(
    space: &ParkingSpace,
    customers: &[Customer],
    siting: &SitingResult,
) -> Option<TimeWindow> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in customers {
        for (k, s) in c.stopovers.iter().enumerate() {
            if siting.space_of(c.id, k) == Some(space.id) {
                lo = lo.min(s.window.start);
                hi = hi.max(s.window.end);
            }
        }
    }
    if lo > hi {
        return None;
    }
    let w = TimeWindow::new(space.window.start.max(lo), space.window.end.min(hi));
    (w.start < w.end).then_some(w)
}

/// Slices `window` into `ceil(len / sv)` consecutive pieces of length `sv`;
/// the last piece is cut at the window end.
pub fn split_subintervals(window: TimeWindow, sv: f64) -> Vec<SubInterval> {
    assert!(sv > 0.0, "service time must be positive");
    let count = (window.len() / sv).ceil() as usize;
    (0..count)
        .map(|a| SubInterval {
            e: window.start + a as f64 * sv,
            l: (window.start + (a + 1) as f64 * sv).min(window.end),
            index: a,
        })
        .collect()
}

struct Slot {
    space_id: usize,
    sub: SubInterval,
    demand: u32,
    customers: Vec<usize>,
    ready: f64,
}

struct Commitment {
    slots: Vec<Slot>,
    failures: Vec<TaskError>,
}

fn commit(inst: &ProblemInstance, siting: &SitingResult) -> Result<Commitment, TaskError> {
    let mut slots = Vec::new();
    // Per space: range into `slots`.
    let mut ranges = Vec::with_capacity(inst.parking_spaces.len());
    for space in &inst.parking_spaces {
        let start = slots.len();
        if let Some(w) = reduce_windows(space, &inst.customers, siting) {
            for sub in split_subintervals(w, inst.service_minutes(space)) {
                slots.push(Slot {
                    space_id: space.id,
                    sub,
                    demand: 0,
                    customers: Vec::new(),
                    ready: f64::INFINITY,
                });
            }
        }
        ranges.push(start..slots.len());
    }

    let capacity = inst.fleet.capacity;
    let mut failures = Vec::new();
    for c in &inst.customers {
        // (overlap, e, space) ranking: larger overlap, then earlier e, then lower space.
        let mut best: Option<(usize, f64)> = None;
        let mut any_inside = false;
        for (k, stop) in c.stopovers.iter().enumerate() {
            let space = siting.space_of(c.id, k).ok_or(TaskError::Unlabeled {
                customer: c.id,
                stopover: k,
            })?;
            let range = ranges
                .get(space)
                .cloned()
                .ok_or(TaskError::UnknownSpace(space))?;
            for idx in range {
                let slot = &slots[idx];
                if !stop.window.contains(&slot.sub.window()) {
                    continue;
                }
                any_inside = true;
                if slot.demand + c.demand > capacity {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, _)) => {
                        let (bo, so) = (slots[b].sub.l - slots[b].sub.e, slot.sub.l - slot.sub.e);
                        so > bo
                            || (so == bo
                                && (slot.sub.e < slots[b].sub.e
                                    || (slot.sub.e == slots[b].sub.e
                                        && slot.space_id < slots[b].space_id)))
                    }
                };
                if better {
                    best = Some((idx, stop.window.start));
                }
            }
        }
        match best {
            Some((idx, ready)) => {
                let slot = &mut slots[idx];
                slot.demand += c.demand;
                slot.customers.push(c.id);
                slot.ready = slot.ready.min(ready);
            }
            None if any_inside => failures.push(TaskError::OverCapacity {
                customer: c.id,
                capacity,
            }),
            None => failures.push(TaskError::Uncoverable { customer: c.id }),
        }
    }
    Ok(Commitment { slots, failures })
}

/// Compiles the task list. Tasks are numbered in `(space, sub-interval)` order.
pub fn build_task_list(inst: &ProblemInstance, siting: &SitingResult) -> Result<Vec<Task>, TaskError> {
    let Commitment { slots, failures } = commit(inst, siting)?;
    if let Some(err) = failures.into_iter().next() {
        return Err(err);
    }
    Ok(slots
        .into_iter()
        .filter(|s| s.demand > 0)
        .enumerate()
        .map(|(id, s)| Task {
            id,
            space_id: s.space_id,
            sub: s.sub,
            demand: s.demand,
            customer_ids: s.customers,
            ready: s.ready,
        })
        .collect())
}

/// Customers the commitment rule cannot place.
pub fn uncoverable_customers(inst: &ProblemInstance, siting: &SitingResult) -> Vec<usize> {
    match commit(inst, siting) {
        Ok(c) => c
            .failures
            .iter()
            .map(|f| match f {
                TaskError::Uncoverable { customer } | TaskError::OverCapacity { customer, .. } => {
                    *customer
                }
                _ => unreachable!("commit only records per-customer failures"),
            })
            .collect(),
        Err(_) => inst.customers.iter().map(|c| c.id).collect(),
    }
}

#[derive(Serialize)]
struct TaskRow<'a> {
    task_id: usize,
    space_id: usize,
    a: usize,
    e: f64,
    l: f64,
    demand: u32,
    customer_ids: &'a str,
}

/// Writes the task table as CSV; customer ids are space separated.
pub fn write_tasks_csv<W: Write>(tasks: &[Task], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in tasks {
        let ids = t
            .customer_ids
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.serialize(TaskRow {
            task_id: t.id,
            space_id: t.space_id,
            a: t.sub.index,
            e: t.sub.e,
            l: t.sub.l,
            demand: t.demand,
            customer_ids: &ids,
        })?;
    }
    w.flush()?;
    Ok(())
}
