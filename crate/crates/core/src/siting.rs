//! Parking-space siting by k-means over all customer stopovers.
//!
//! The cluster count is searched upwards from one until every stopover lies
//! within `min(max_walk, service_radius)` of its centroid and every customer
//! keeps at least one servable stopover once the centroids inherit parking
//! windows.

use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{draw_window, Coord, InstanceParams, ParkingSpace, ProblemInstance, HOUR_ANCHORS};
use crate::rng::{self, Stream};
use crate::taskgen;

pub const RESTARTS: usize = 5;
pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE_KM: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SitingError {
    #[error("cannot form {p} clusters from {points} points")]
    InfeasibleP { p: usize, points: usize },
    #[error("no cluster count satisfies the walking-range condition; worst customers: {}", format_worst(.worst))]
    Infeasible { worst: Vec<(usize, f64)> },
    #[error("instance has no stopovers")]
    Empty,
}

fn format_worst(w: &[(usize, f64)]) -> String {
    w.iter()
        .map(|(c, d)| format!("customer {c} (excess {d:.3} km)"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Coord>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StopoverLabel {
    pub customer: usize,
    pub stopover: usize,
    pub space: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingResult {
    pub centroids: Vec<Coord>,
    /// Sorted by `(customer, stopover)`.
    pub labels: Vec<StopoverLabel>,
    pub p: usize,
    pub inertia: f64,
}

impl SitingResult {
    pub fn space_of(&self, customer: usize, stopover: usize) -> Option<usize> {
        self.labels
            .binary_search_by(|l| (l.customer, l.stopover).cmp(&(customer, stopover)))
            .ok()
            .map(|i| self.labels[i].space)
    }

    fn from_clustering(inst: &ProblemInstance, c: Clustering) -> Self {
        let labels = stopover_keys(inst)
            .zip(&c.assignment)
            .map(|((customer, stopover), &space)| StopoverLabel {
                customer,
                stopover,
                space,
            })
            .collect();
        Self {
            p: c.centroids.len(),
            centroids: c.centroids,
            labels,
            inertia: c.inertia,
        }
    }
}

fn stopover_keys(inst: &ProblemInstance) -> impl Iterator<Item = (usize, usize)> + '_ {
    inst.customers
        .iter()
        .flat_map(|c| (0..c.stopovers.len()).map(move |k| (c.id, k)))
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(point: &Coord, centroids: &[Coord]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = point.distance_sq(c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn inertia(points: &[Coord], centroids: &[Coord], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| p.distance_sq(&centroids[a]))
        .sum()
}

fn plus_plus_init<R: Rng>(points: &[Coord], p: usize, rng: &mut R) -> Vec<Coord> {
    let mut centroids = Vec::with_capacity(p);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|x| x.distance_sq(&centroids[0])).collect();
    while centroids.len() < p {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Rounding can leave `chosen` on an already-picked point.
            if d2[chosen] == 0.0 {
                chosen = (0..d2.len()).rev().find(|&i| d2[i] > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centroids.push(c);
        for (d, x) in d2.iter_mut().zip(points) {
            *d = d.min(x.distance_sq(&c));
        }
    }
    centroids
}

/// Single Lloyd run with k-means++ seeding.
pub fn kmeans_once<R: Rng>(points: &[Coord], p: usize, rng: &mut R) -> Result<Clustering, SitingError> {
    if p == 0 || points.len() < p {
        return Err(SitingError::InfeasibleP {
            p,
            points: points.len(),
        });
    }
    let mut centroids = plus_plus_init(points, p, rng);
    let mut assignment = vec![0usize; points.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (a, x) in assignment.iter_mut().zip(points) {
            *a = nearest(x, &centroids);
        }
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); p];
        for (x, &a) in points.iter().zip(&assignment) {
            sums[a].0 += x.x;
            sums[a].1 += x.y;
            sums[a].2 += 1;
        }
        let mut next: Vec<Coord> = sums
            .iter()
            .zip(&centroids)
            .map(|(&(sx, sy, n), old)| {
                if n == 0 {
                    *old
                } else {
                    Coord::new(sx / n as f64, sy / n as f64)
                }
            })
            .collect();
        let mut reseeded = false;
        for i in 0..p {
            if sums[i].2 == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        points[a]
                            .distance_sq(&next[assignment[a]])
                            .total_cmp(&points[b].distance_sq(&next[assignment[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("points is non-empty");
                next[i] = points[far];
                assignment[far] = i;
                reseeded = true;
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max);
        centroids = next;
        if !reseeded && shift < SHIFT_TOLERANCE_KM {
            break;
        }
    }
    for (a, x) in assignment.iter_mut().zip(points) {
        *a = nearest(x, &centroids);
    }
    let inertia = inertia(points, &centroids, &assignment);
    Ok(Clustering {
        centroids,
        assignment,
        inertia,
        iterations,
    })
}

/// Best of several restarts: lowest inertia, then lowest restart index.
pub fn kmeans(points: &[Coord], p: usize, seed: u64) -> Result<Clustering, SitingError> {
    kmeans_restarts(points, p, seed, RESTARTS)
}

pub fn kmeans_restarts(
    points: &[Coord],
    p: usize,
    seed: u64,
    restarts: usize,
) -> Result<Clustering, SitingError> {
    let runs: Vec<Clustering> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, Stream::Siting, ((p as u64) << 16) | r as u64);
            kmeans_once(points, p, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.inertia < runs[best].inertia {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one restart"))
}

fn stopover_points(inst: &ProblemInstance) -> Vec<Coord> {
    inst.customers
        .iter()
        .flat_map(|c| c.stopovers.iter().map(|s| s.position))
        .collect()
}

/// Per-stopover excess of the distance to its centroid over the allowed
/// walking range; non-positive means the stopover is within range.
fn walking_excess(inst: &ProblemInstance, points: &[Coord], c: &Clustering) -> Vec<(usize, f64)> {
    let radius = inst.fleet.service_radius_km;
    let mut idx = 0;
    let mut out = Vec::with_capacity(points.len());
    for cust in &inst.customers {
        let allowed = cust.max_walk.min(radius);
        for _ in &cust.stopovers {
            let d = points[idx].distance(&c.centroids[c.assignment[idx]]);
            out.push((cust.id, d - allowed));
            idx += 1;
        }
    }
    out
}

/// Smallest cluster count meeting the walking-range and coverage conditions.
pub fn min_parking_spaces(inst: &ProblemInstance, seed: u64) -> Result<SitingResult, SitingError> {
    let points = stopover_points(inst);
    if points.is_empty() {
        return Err(SitingError::Empty);
    }
    let zero_range: Vec<(usize, f64)> = inst
        .customers
        .iter()
        .filter(|c| !(c.max_walk > 0.0))
        .map(|c| (c.id, 0.0))
        .collect();
    if !zero_range.is_empty() {
        return Err(SitingError::Infeasible { worst: zero_range });
    }

    let mut last_worst = Vec::new();
    for p in 1..=points.len() {
        let clustering = kmeans(&points, p, seed)?;
        let excess = walking_excess(inst, &points, &clustering);
        if excess.iter().any(|&(_, e)| e > 0.0) {
            last_worst = worst_customers(excess);
            continue;
        }
        let result = SitingResult::from_clustering(inst, clustering);
        let sited = apply_siting(inst, &result, seed);
        let uncoverable = taskgen::uncoverable_customers(&sited, &result);
        if uncoverable.is_empty() {
            return Ok(result);
        }
        last_worst = uncoverable.into_iter().map(|c| (c, 0.0)).collect();
    }
    Err(SitingError::Infeasible { worst: last_worst })
}

fn worst_customers(excess: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut per_customer: Vec<(usize, f64)> = Vec::new();
    for (c, e) in excess.into_iter().filter(|&(_, e)| e > 0.0) {
        match per_customer.iter_mut().find(|(id, _)| *id == c) {
            Some(entry) => entry.1 = entry.1.max(e),
            None => per_customer.push((c, e)),
        }
    }
    per_customer.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    per_customer.truncate(5);
    per_customer
}

/// Replaces the instance's parking spaces with the centroids. Each centroid
/// takes the window and service time of the nearest existing space; without
/// existing spaces a window is drawn from the parking recipe.
pub fn apply_siting(inst: &ProblemInstance, siting: &SitingResult, seed: u64) -> ProblemInstance {
    let anchors: Vec<Coord> = inst.parking_spaces.iter().map(|s| s.position).collect();
    let recipe = InstanceParams::default();
    let mut rng = rng::substream(seed, Stream::Siting, u64::MAX);
    let len = Normal::new(recipe.parking_window_mean, recipe.parking_window_sd).expect("valid recipe");
    let parking_spaces = siting
        .centroids
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let (window, service_time) = if anchors.is_empty() {
                let start = HOUR_ANCHORS[rng.random_range(0..HOUR_ANCHORS.len())];
                (draw_window(&mut rng, start, &len), recipe.service_time)
            } else {
                let a = &inst.parking_spaces[nearest(c, &anchors)];
                (a.window, a.service_time)
            };
            ParkingSpace {
                id,
                position: *c,
                window,
                service_time,
            }
        })
        .collect();
    ProblemInstance {
        parking_spaces,
        ..inst.clone()
    }
}

/// Sites the instance and returns it with the new parking spaces.
pub fn site_instance(
    inst: &ProblemInstance,
    seed: u64,
) -> Result<(ProblemInstance, SitingResult), SitingError> {
    let siting = min_parking_spaces(inst, seed)?;
    Ok((apply_siting(inst, &siting, seed), siting))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Customer, FleetParams, Stopover, TimeWindow, Weights, FORMAT_TAG};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance_from(points: &[(f64, f64)], walk: f64) -> ProblemInstance {
        let customers = points
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| Customer {
                id,
                demand: 1,
                max_walk: walk,
                stopovers: vec![Stopover {
                    position: Coord::new(x, y),
                    window: TimeWindow::new(600.0, 660.0),
                }],
            })
            .collect();
        ProblemInstance {
            format: FORMAT_TAG.into(),
            customers,
            parking_spaces: vec![],
            depot: Coord::new(0.0, 0.0),
            fleet: FleetParams::default(),
            weights: Weights::default(),
            seed: 0,
        }
    }

    fn with_anchor(mut inst: ProblemInstance, at: Coord) -> ProblemInstance {
        inst.parking_spaces.push(ParkingSpace {
            id: inst.parking_spaces.len(),
            position: at,
            window: TimeWindow::new(600.0, 650.0),
            service_time: 10.0,
        });
        inst
    }

    #[test]
    fn corners_each_get_a_centroid() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)].map(|(x, y)| Coord::new(x, y));
        let c = kmeans(&pts, 4, 3).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut labels = c.assignment.clone();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 4);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = [(0.0, 0.0), (3.0, 1.0), (2.0, 5.0)].map(|(x, y)| Coord::new(x, y));
        let c = kmeans(&pts, 1, 0).unwrap();
        assert!((c.centroids[0].x - 5.0 / 3.0).abs() < 1e-12);
        assert!((c.centroids[0].y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let pts = [Coord::new(0.0, 0.0)];
        assert_eq!(
            kmeans(&pts, 2, 0).unwrap_err(),
            SitingError::InfeasibleP { p: 2, points: 1 }
        );
    }

    /// Exhaustive best 2-partition by inertia.
    fn brute_force_two_partition(pts: &[Coord]) -> (f64, Vec<usize>) {
        let n = pts.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << (n - 1)) {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut c = [Coord::new(0.0, 0.0); 2];
            let mut cnt = [0usize; 2];
            for (p, &l) in pts.iter().zip(&labels) {
                c[l].x += p.x;
                c[l].y += p.y;
                cnt[l] += 1;
            }
            for l in 0..2 {
                c[l].x /= cnt[l] as f64;
                c[l].y /= cnt[l] as f64;
            }
            let ine = inertia(pts, &c, &labels);
            if ine < best.0 {
                best = (ine, labels);
            }
        }
        best
    }

    #[test]
    fn two_tight_clusters_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for center in [(1.0, 1.0), (4.0, 3.5)] {
            for _ in 0..10 {
                pts.push(Coord::new(
                    center.0 + rng.random_range(-0.2..0.2),
                    center.1 + rng.random_range(-0.2..0.2),
                ));
            }
        }
        let (best_inertia, truth) = brute_force_two_partition(&pts);
        let c = kmeans(&pts, 2, 5).unwrap();
        assert!((c.inertia - best_inertia).abs() < 1e-9);
        let same = truth.iter().zip(&c.assignment).all(|(a, b)| a == b);
        let flipped = truth.iter().zip(&c.assignment).all(|(a, b)| a != b);
        assert!(same || flipped);
    }

    #[test]
    fn nearest_breaks_ties_by_lowest_index() {
        let cs = [Coord::new(-1.0, 0.0), Coord::new(1.0, 0.0)];
        assert_eq!(nearest(&Coord::new(0.0, 0.0), &cs), 0);
    }

    #[test]
    fn one_space_when_everyone_is_close() {
        let inst = instance_from(&[(1.0, 1.0), (1.2, 1.1), (0.9, 1.25), (1.1, 0.8)], 0.5);
        let inst = with_anchor(inst, Coord::new(1.0, 1.0));
        let r = min_parking_spaces(&inst, 1).unwrap();
        assert_eq!(r.p, 1);
    }

    #[test]
    fn two_groups_four_km_apart_need_two_spaces() {
        let inst = instance_from(
            &[(0.5, 0.5), (0.6, 0.4), (0.4, 0.6), (4.5, 0.5), (4.4, 0.6), (4.6, 0.4)],
            0.5,
        );
        // P = 1 puts the centroid 2 km from everyone.
        let one = kmeans(&stopover_points(&inst), 1, 0).unwrap();
        assert!(walking_excess(&inst, &stopover_points(&inst), &one)
            .iter()
            .any(|&(_, e)| e > 0.0));
        let inst = with_anchor(with_anchor(inst, Coord::new(0.5, 0.5)), Coord::new(4.5, 0.5));
        let r = min_parking_spaces(&inst, 1).unwrap();
        assert_eq!(r.p, 2);
        for l in &r.labels {
            let c = &inst.customers[l.customer];
            let d = c.stopovers[l.stopover].position.distance(&r.centroids[l.space]);
            assert!(d <= c.max_walk);
        }
    }

    #[test]
    fn zero_walking_range_is_infeasible() {
        let mut inst = instance_from(&[(1.0, 1.0), (1.3, 1.0)], 0.5);
        inst.customers[1].max_walk = 0.0;
        let inst = with_anchor(inst, Coord::new(1.0, 1.0));
        match min_parking_spaces(&inst, 0) {
            Err(SitingError::Infeasible { worst }) => assert_eq!(worst[0].0, 1),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn centroids_inherit_nearest_anchor_window() {
        let inst = instance_from(&[(0.5, 0.5), (4.5, 0.5)], 0.5);
        let mut inst = with_anchor(with_anchor(inst, Coord::new(0.5, 0.5)), Coord::new(4.5, 0.5));
        inst.parking_spaces[1].window = TimeWindow::new(620.0, 670.0);
        inst.customers[1].stopovers[0].window = TimeWindow::new(620.0, 680.0);
        let (sited, r) = site_instance(&inst, 2).unwrap();
        for (i, s) in sited.parking_spaces.iter().enumerate() {
            let anchor = nearest(&r.centroids[i], &[Coord::new(0.5, 0.5), Coord::new(4.5, 0.5)]);
            assert_eq!(s.window, inst.parking_spaces[anchor].window);
        }
    }
}
