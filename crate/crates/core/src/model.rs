//! Problem data model, the stochastic instance generator and the
//! `mplp-1` instance file format.
//!
//! All times are minutes since midnight, all distances kilometres. The
//! planning horizon is fixed to the working day `[480, 1080]`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Stream};

pub const HORIZON_START: f64 = 480.0;
pub const HORIZON_END: f64 = 1080.0;
/// On-the-hour window starts `8:00, 9:00, ..., 17:00`.
pub const HOUR_ANCHORS: [f64; 10] = [
    480.0, 540.0, 600.0, 660.0, 720.0, 780.0, 840.0, 900.0, 960.0, 1020.0,
];
pub const FORMAT_TAG: &str = "mplp-1";

const MAX_RETRIES: usize = 10_000;
const MIN_WINDOW_LEN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Coord) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub const fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        !(self.start < self.end)
    }

    /// Positive-length overlap. Windows that only touch do not overlap.
    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersect(&self, other: &TimeWindow) -> Option<TimeWindow> {
        let w = TimeWindow::new(self.start.max(other.start), self.end.min(other.end));
        (!w.is_empty()).then_some(w)
    }

    pub fn contains(&self, inner: &TimeWindow) -> bool {
        self.start <= inner.start && inner.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stopover {
    pub position: Coord,
    pub window: TimeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: usize,
    pub demand: u32,
    /// Maximum walking range in km.
    pub max_walk: f64,
    pub stopovers: Vec<Stopover>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingSpace {
    pub id: usize,
    pub position: Coord,
    pub window: TimeWindow,
    /// Minutes needed per visit.
    pub service_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetParams {
    pub capacity: u32,
    pub speed_kmh: f64,
    pub service_radius_km: f64,
    pub fixed_cost: f64,
    pub unit_travel_cost: f64,
    pub max_fleet: usize,
    /// Service buffer in minutes. Only added to the service time when
    /// `apply_buffer` is set.
    pub buffer_time: f64,
    pub apply_buffer: bool,
}

impl Default for FleetParams {
    fn default() -> Self {
        Self {
            capacity: 20,
            speed_kmh: 40.0,
            service_radius_km: 5.0,
            fixed_cost: 20_000.0,
            unit_travel_cost: 0.5,
            max_fleet: 10,
            buffer_time: 10.0,
            apply_buffer: false,
        }
    }
}

impl FleetParams {
    /// Travel time in minutes for `km` kilometres.
    pub fn travel_minutes(&self, km: f64) -> f64 {
        km / self.speed_kmh * 60.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub fleet: f64,
    pub travel: f64,
    pub delay: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            fleet: 10.0,
            travel: 1.0,
            delay: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub format: String,
    pub customers: Vec<Customer>,
    pub parking_spaces: Vec<ParkingSpace>,
    pub depot: Coord,
    pub fleet: FleetParams,
    pub weights: Weights,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn total_demand(&self) -> u64 {
        self.customers.iter().map(|c| c.demand as u64).sum()
    }

    pub fn n_stopovers(&self) -> usize {
        self.customers.iter().map(|c| c.stopovers.len()).sum()
    }

    /// Service time of a space including the optional buffer.
    pub fn service_minutes(&self, space: &ParkingSpace) -> f64 {
        if self.fleet.apply_buffer {
            space.service_time + self.fleet.buffer_time
        } else {
            space.service_time
        }
    }
}

/// Distribution parameters of the instance recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceParams {
    pub service_time: f64,
    pub customer_window_mean: f64,
    pub customer_window_sd: f64,
    pub parking_window_mean: f64,
    pub parking_window_sd: f64,
    pub walk_mean: f64,
    pub walk_sd: f64,
    pub walk_floor: f64,
    /// Stopovers are scattered within `min(scatter_km, service_radius_km)`
    /// of their parking anchor.
    pub scatter_km: f64,
    /// Minimum distance between two parking anchors (best effort).
    pub anchor_spacing_km: f64,
    pub fleet: FleetParams,
    pub weights: Weights,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            service_time: 10.0,
            customer_window_mean: 60.0,
            customer_window_sd: 5.0,
            parking_window_mean: 50.0,
            parking_window_sd: 5.0,
            walk_mean: 0.5,
            walk_sd: 0.1,
            walk_floor: 0.05,
            scatter_km: 0.3,
            anchor_spacing_km: 0.8,
            fleet: FleetParams::default(),
            weights: Weights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_parking: usize,
    pub customers_per_space: usize,
    #[serde(default = "default_area")]
    pub area_side_km: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: InstanceParams,
}

fn default_area() -> f64 {
    5.0
}

impl GenConfig {
    pub fn new(n_parking: usize, customers_per_space: usize, area_side_km: f64, seed: u64) -> Self {
        Self {
            n_parking,
            customers_per_space,
            area_side_km,
            seed,
            params: InstanceParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("customer {customer}: rejection sampling exhausted after {retries} retries")]
    Generation { customer: usize, retries: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unsupported format tag {found:?}, expected {FORMAT_TAG:?}")]
    Format { path: PathBuf, found: String },
    #[error("instance failed validation: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

pub fn generate_instance(cfg: &GenConfig) -> Result<ProblemInstance, InstanceError> {
    if cfg.n_parking == 0 || cfg.customers_per_space == 0 {
        return Err(InstanceError::Config(
            "n_parking and customers_per_space must be at least 1".into(),
        ));
    }
    if !(cfg.area_side_km > 0.0) {
        return Err(InstanceError::Config("area_side_km must be positive".into()));
    }
    let p = &cfg.params;
    let side = cfg.area_side_km;
    let mut rng = rng::stream(cfg.seed, Stream::Generator);
    let normal = |mean: f64, sd: f64| Normal::new(mean, sd).map_err(|e| InstanceError::Config(e.to_string()));
    let park_len = normal(p.parking_window_mean, p.parking_window_sd)?;
    let cust_len = normal(p.customer_window_mean, p.customer_window_sd)?;
    let walk = normal(p.walk_mean, p.walk_sd)?;
    let scatter = p.scatter_km.min(p.fleet.service_radius_km);

    let mut anchors: Vec<ParkingSpace> = Vec::with_capacity(cfg.n_parking);
    for id in 0..cfg.n_parking {
        let mut position = uniform_in_square(&mut rng, side);
        for _ in 0..MAX_RETRIES {
            if anchors
                .iter()
                .all(|a| a.position.distance(&position) >= p.anchor_spacing_km)
            {
                break;
            }
            position = uniform_in_square(&mut rng, side);
        }
        let start = HOUR_ANCHORS[rng.random_range(0..HOUR_ANCHORS.len())];
        let window = draw_window(&mut rng, start, &park_len);
        anchors.push(ParkingSpace {
            id,
            position,
            window,
            service_time: p.service_time,
        });
    }

    let n_customers = cfg.n_parking * cfg.customers_per_space;
    let mut customers = Vec::with_capacity(n_customers);
    for id in 0..n_customers {
        let home = &anchors[id / cfg.customers_per_space];
        let demand = rng.random_range(1..=4u32);
        let n_stops = rng.random_range(1..=3usize);
        let max_walk = walk.sample(&mut rng).max(p.walk_floor);

        // The first stopover sits within walking range of the customer's own
        // anchor and shares its window hour, so every customer can be served.
        let home_radius = scatter.min(max_walk);
        let mut stopovers = vec![Stopover {
            position: point_near(&mut rng, &home.position, home_radius, side),
            window: draw_window(&mut rng, home.window.start, &cust_len),
        }];
        let mut retries = 0;
        while stopovers.len() < n_stops {
            let anchor = &anchors[rng.random_range(0..anchors.len())];
            let start = HOUR_ANCHORS[rng.random_range(0..HOUR_ANCHORS.len())];
            let window = draw_window(&mut rng, start, &cust_len);
            if stopovers.iter().any(|s| s.window.overlaps(&window)) {
                retries += 1;
                if retries > MAX_RETRIES {
                    return Err(InstanceError::Generation { customer: id, retries });
                }
                continue;
            }
            stopovers.push(Stopover {
                position: point_near(&mut rng, &anchor.position, scatter, side),
                window,
            });
        }
        stopovers.sort_by(|a, b| a.window.start.total_cmp(&b.window.start));
        customers.push(Customer {
            id,
            demand,
            max_walk,
            stopovers,
        });
    }

    Ok(ProblemInstance {
        format: FORMAT_TAG.to_string(),
        customers,
        parking_spaces: anchors,
        depot: Coord::new(side / 2.0, side / 2.0),
        fleet: p.fleet.clone(),
        weights: p.weights,
        seed: cfg.seed,
    })
}

/// Window starting at `start` whose length is a clipped normal draw; the end
/// never passes the horizon.
pub(crate) fn draw_window<R: Rng>(rng: &mut R, start: f64, len: &Normal<f64>) -> TimeWindow {
    let l = len
        .sample(rng)
        .clamp(MIN_WINDOW_LEN, HORIZON_END - HORIZON_START);
    TimeWindow::new(start, (start + l).min(HORIZON_END))
}

fn uniform_in_square<R: Rng>(rng: &mut R, side: f64) -> Coord {
    Coord::new(rng.random_range(0.0..side), rng.random_range(0.0..side))
}

fn point_near<R: Rng>(rng: &mut R, center: &Coord, radius: f64, side: f64) -> Coord {
    for _ in 0..MAX_RETRIES {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let r = radius * rng.random::<f64>().sqrt();
        let c = Coord::new(center.x + r * angle.cos(), center.y + r * angle.sin());
        if (0.0..=side).contains(&c.x) && (0.0..=side).contains(&c.y) {
            return c;
        }
    }
    *center
}

pub fn save_instance(inst: &ProblemInstance, path: &Path) -> Result<(), InstanceError> {
    let mut text = serde_json::to_string_pretty(inst).expect("instance serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance, InstanceError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let inst = parse_instance(&text).map_err(|e| match e {
        InstanceError::Parse {
            line,
            column,
            message,
            ..
        } => InstanceError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        InstanceError::Format { found, .. } => InstanceError::Format {
            path: path.to_path_buf(),
            found,
        },
        other => other,
    })?;
    Ok(inst)
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<ProblemInstance, InstanceError> {
    let inst: ProblemInstance = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
        path: PathBuf::from("<memory>"),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if inst.format != FORMAT_TAG {
        return Err(InstanceError::Format {
            path: PathBuf::from("<memory>"),
            found: inst.format,
        });
    }
    let structural: Vec<_> = validate_instance(&inst)
        .into_iter()
        .filter(Diagnostic::is_structural)
        .collect();
    if !structural.is_empty() {
        return Err(InstanceError::Invalid(structural));
    }
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NonFinite { entity: String },
    InvertedWindow { entity: String, start: f64, end: f64 },
    ZeroDemand { customer: usize },
    StopoverCount { customer: usize, count: usize },
    NegativeWalk { customer: usize },
    OverlappingWindows { customer: usize, first: usize, second: usize },
    ServiceTime { space: usize },
    Fleet { field: &'static str },
    Weights,
    UnreachableCustomer { customer: usize },
}

impl Diagnostic {
    /// Type-invariant violations, as opposed to reachability findings.
    pub fn is_structural(&self) -> bool {
        !matches!(self, Diagnostic::UnreachableCustomer { .. })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NonFinite { entity } => write!(f, "{entity}: non-finite value"),
            Diagnostic::InvertedWindow { entity, start, end } => {
                write!(f, "{entity}: inverted window [{start}, {end}]")
            }
            Diagnostic::ZeroDemand { customer } => write!(f, "customer {customer}: demand must be >= 1"),
            Diagnostic::StopoverCount { customer, count } => {
                write!(f, "customer {customer}: {count} stopovers, expected at least 1")
            }
            Diagnostic::NegativeWalk { customer } => {
                write!(f, "customer {customer}: negative walking range")
            }
            Diagnostic::OverlappingWindows {
                customer,
                first,
                second,
            } => write!(
                f,
                "customer {customer}: stopover windows {first} and {second} overlap"
            ),
            Diagnostic::ServiceTime { space } => {
                write!(f, "parking space {space}: service time must be positive")
            }
            Diagnostic::Fleet { field } => write!(f, "fleet.{field} must be positive"),
            Diagnostic::Weights => write!(f, "weights must all be positive"),
            Diagnostic::UnreachableCustomer { customer } => write!(
                f,
                "customer {customer}: no stopover within walking range of a parking space with an intersecting window"
            ),
        }
    }
}

pub fn validate_instance(inst: &ProblemInstance) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let fleet = &inst.fleet;
    let positive = [
        ("capacity", fleet.capacity as f64),
        ("speed_kmh", fleet.speed_kmh),
        ("service_radius_km", fleet.service_radius_km),
        ("fixed_cost", fleet.fixed_cost),
        ("unit_travel_cost", fleet.unit_travel_cost),
        ("max_fleet", fleet.max_fleet as f64),
        ("buffer_time", fleet.buffer_time),
    ];
    for (field, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            out.push(Diagnostic::Fleet { field });
        }
    }
    let w = &inst.weights;
    if !(w.fleet > 0.0 && w.travel > 0.0 && w.delay > 0.0) {
        out.push(Diagnostic::Weights);
    }
    if !inst.depot.is_finite() {
        out.push(Diagnostic::NonFinite {
            entity: "depot".into(),
        });
    }

    for s in &inst.parking_spaces {
        let entity = format!("parking space {}", s.id);
        if !s.position.is_finite() {
            out.push(Diagnostic::NonFinite {
                entity: entity.clone(),
            });
        }
        if !(s.window.start < s.window.end) {
            out.push(Diagnostic::InvertedWindow {
                entity,
                start: s.window.start,
                end: s.window.end,
            });
        }
        if !(s.service_time > 0.0) {
            out.push(Diagnostic::ServiceTime { space: s.id });
        }
    }

    for c in &inst.customers {
        if c.demand < 1 {
            out.push(Diagnostic::ZeroDemand { customer: c.id });
        }
        if c.stopovers.is_empty() {
            out.push(Diagnostic::StopoverCount {
                customer: c.id,
                count: 0,
            });
        }
        if !(c.max_walk >= 0.0) {
            out.push(Diagnostic::NegativeWalk { customer: c.id });
        }
        for (k, s) in c.stopovers.iter().enumerate() {
            let entity = format!("customer {} stopover {}", c.id, k);
            if !s.position.is_finite() {
                out.push(Diagnostic::NonFinite {
                    entity: entity.clone(),
                });
            }
            if !(s.window.start < s.window.end) {
                out.push(Diagnostic::InvertedWindow {
                    entity,
                    start: s.window.start,
                    end: s.window.end,
                });
            }
        }
        for a in 0..c.stopovers.len() {
            for b in a + 1..c.stopovers.len() {
                if c.stopovers[a].window.overlaps(&c.stopovers[b].window) {
                    out.push(Diagnostic::OverlappingWindows {
                        customer: c.id,
                        first: a,
                        second: b,
                    });
                }
            }
        }
        let reachable = c.stopovers.iter().any(|stop| {
            inst.parking_spaces.iter().any(|space| {
                stop.position.distance(&space.position) <= c.max_walk
                    && stop.window.overlaps(&space.window)
            })
        });
        if !reachable {
            out.push(Diagnostic::UnreachableCustomer { customer: c.id });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_five_customers_with_small_demands() {
        let inst = generate_instance(&GenConfig::new(5, 5, 5.0, 1)).unwrap();
        assert_eq!(inst.customers.len(), 25);
        assert!(inst.customers.iter().all(|c| (1..=4).contains(&c.demand)));
        assert!(inst
            .customers
            .iter()
            .all(|c| (1..=3).contains(&c.stopovers.len())));
    }

    #[test]
    fn single_customer_instance() {
        for seed in 0..20 {
            let inst = generate_instance(&GenConfig::new(1, 1, 5.0, seed)).unwrap();
            assert_eq!(inst.customers.len(), 1);
            assert_eq!(inst.parking_spaces.len(), 1);
            assert!(validate_instance(&inst).is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig::new(5, 10, 5.0, 7);
        let a = serde_json::to_string(&generate_instance(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_instance(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_instances_are_well_formed() {
        for seed in 0..30 {
            let cfg = GenConfig::new(1 + (seed as usize % 8), 1 + (seed as usize % 6), 5.0, seed);
            let inst = generate_instance(&cfg).unwrap();
            assert_eq!(validate_instance(&inst), vec![], "seed {seed}");
            for c in &inst.customers {
                let nearest = c
                    .stopovers
                    .iter()
                    .flat_map(|s| inst.parking_spaces.iter().map(move |p| s.position.distance(&p.position)))
                    .fold(f64::INFINITY, f64::min);
                assert!(nearest <= inst.fleet.service_radius_km);
                for s in &c.stopovers {
                    assert!(s.window.start >= HORIZON_START && s.window.end <= HORIZON_END);
                    assert!(s.position.x >= 0.0 && s.position.y >= 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_empty_config() {
        assert!(matches!(
            generate_instance(&GenConfig::new(0, 3, 5.0, 1)),
            Err(InstanceError::Config(_))
        ));
        assert!(matches!(
            generate_instance(&GenConfig::new(2, 3, 0.0, 1)),
            Err(InstanceError::Config(_))
        ));
    }

    #[test]
    fn unreachable_customer_is_reported() {
        let mut inst = generate_instance(&GenConfig::new(2, 2, 5.0, 3)).unwrap();
        let far = Coord::new(100.0, 100.0);
        inst.customers[0].max_walk = 0.001;
        for s in &mut inst.customers[0].stopovers {
            s.position = far;
        }
        let d = validate_instance(&inst);
        assert_eq!(d, vec![Diagnostic::UnreachableCustomer { customer: 0 }]);
        assert!(!d[0].is_structural());
    }

    #[test]
    fn inverted_parking_window_is_reported() {
        let mut inst = generate_instance(&GenConfig::new(2, 2, 5.0, 3)).unwrap();
        inst.parking_spaces[1].window = TimeWindow::new(600.0, 590.0);
        let d = validate_instance(&inst);
        assert!(d.iter().any(|d| matches!(
            d,
            Diagnostic::InvertedWindow { start, end, .. } if *start == 600.0 && *end == 590.0
        )));
    }

    #[test]
    fn window_helpers() {
        let a = TimeWindow::new(600.0, 660.0);
        let b = TimeWindow::new(660.0, 700.0);
        assert!(!a.overlaps(&b));
        assert!(a.intersect(&b).is_none());
        let c = TimeWindow::new(620.0, 640.0);
        assert!(a.contains(&c));
        assert_eq!(a.intersect(&c), Some(c));
    }
}
