//! Experiment harness: settings, the end-to-end pipeline, artifacts,
//! paired comparisons and parameter sweeps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ga::{run_ga, GaConfig};
use crate::hqm::{run_hqm, HqmConfig};
use crate::model::{
    generate_instance, load_instance, save_instance, GenConfig, InstanceError, InstanceParams,
    ProblemInstance,
};
use crate::objective::{validate_solution, ConstraintReport, CostBreakdown};
use crate::oracle::{brute_force_best, DEFAULT_LIMIT};
use crate::routing::{AdjustPolicy, Schedule, State};
use crate::search::{SolveError, SolveResult, TraceRow};
use crate::siting::{site_instance, SitingError, SitingResult};
use crate::stats::{wilcoxon_signed_rank, StatsError, Wilcoxon};
use crate::taskgen::{build_task_list, write_tasks_csv, Task, TaskError};

pub const INSTANCE_FILE: &str = "instance.mplp.json";
pub const SOLUTION_FILE: &str = "solution.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const COMPARE_SUMMARY_FILE: &str = "compare.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("siting failed: {0}")]
    Siting(#[from] SitingError),
    #[error("task generation failed: {0}")]
    Tasks(#[from] TaskError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{0}")]
    Usage(String),
    #[error("seed {seed}: solution failed validation\n{report}")]
    Validation { seed: u64, report: ConstraintReport },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 validation, 3 infeasibility, 4 usage, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Instance(e) => match e {
                InstanceError::Generation { .. } => 3,
                InstanceError::Config(_) => 4,
                InstanceError::Io { .. } => 1,
                _ => 2,
            },
            HarnessError::Siting(_) | HarnessError::Tasks(_) => 3,
            HarnessError::Solve(SolveError::NoTasks) => 3,
            HarnessError::Solve(_) => 4,
            HarnessError::Usage(_) | HarnessError::Config { .. } => 4,
            HarnessError::Validation { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Csv { .. } | HarnessError::Json(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Every tunable of a run, loadable from TOML. Missing keys keep defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub area_side_km: f64,
    /// Big-M constant of the mixed-integer formulation; kept for reference,
    /// the constructive scheduler does not use it.
    pub big_m: f64,
    pub oracle_limit: u64,
    pub instance: InstanceParams,
    pub hqm: HqmConfig,
    pub ga: GaConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            area_side_km: 5.0,
            big_m: 1e8,
            oracle_limit: DEFAULT_LIMIT as u64,
            instance: InstanceParams::default(),
            hqm: HqmConfig::default(),
            ga: GaConfig::default(),
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|source| HarnessError::Config {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Hqm,
    Ga,
    Oracle,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Hqm => "hqm",
            Algorithm::Ga => "ga",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hqm" => Ok(Algorithm::Hqm),
            "ga" => Ok(Algorithm::Ga),
            "oracle" => Ok(Algorithm::Oracle),
            other => Err(format!("unknown algorithm {other:?}, expected hqm, ga or oracle")),
        }
    }
}

/// Where the instance of a run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// Generated per seed.
    Generate {
        n_parking: usize,
        customers_per_space: usize,
    },
    /// Loaded from an instance file; sited again when it is solved.
    File(PathBuf),
}

impl InstanceSource {
    /// Parses `IxN`, e.g. `5x10`.
    pub fn parse_gen(spec: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::Usage(format!("bad instance size {spec:?}, expected e.g. 5x10"));
        let (i, n) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
        Ok(InstanceSource::Generate {
            n_parking: i.trim().parse().map_err(|_| bad())?,
            customers_per_space: n.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub source: InstanceSource,
    pub algorithm: Algorithm,
    pub policy: AdjustPolicy,
    /// Locker count searched over; defaults to the fleet limit.
    pub lockers: Option<usize>,
    pub settings: Settings,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn check(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Usage("at least one seed is required".into()));
        }
        if self.lockers == Some(0) {
            return Err(HarnessError::Usage("--lockers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Instance after siting, with its task list.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub instance: ProblemInstance,
    pub siting: SitingResult,
    pub tasks: Vec<Task>,
}

pub fn raw_instance(
    source: &InstanceSource,
    settings: &Settings,
    seed: u64,
) -> Result<ProblemInstance, HarnessError> {
    Ok(match source {
        InstanceSource::Generate {
            n_parking,
            customers_per_space,
        } => generate_instance(&GenConfig {
            n_parking: *n_parking,
            customers_per_space: *customers_per_space,
            area_side_km: settings.area_side_km,
            seed,
            params: settings.instance.clone(),
        })?,
        InstanceSource::File(path) => load_instance(path)?,
    })
}

/// Generates or loads the instance, sites it and compiles its tasks.
pub fn prepare(source: &InstanceSource, settings: &Settings, seed: u64) -> Result<Prepared, HarnessError> {
    let raw = raw_instance(source, settings, seed)?;
    let (instance, siting) = site_instance(&raw, seed)?;
    let tasks = build_task_list(&instance, &siting)?;
    Ok(Prepared {
        instance,
        siting,
        tasks,
    })
}

pub fn lockers_for(manifest_lockers: Option<usize>, inst: &ProblemInstance) -> usize {
    manifest_lockers.unwrap_or(inst.fleet.max_fleet).max(1)
}

/// Runs one solver on a prepared instance.
pub fn solve_prepared(
    p: &Prepared,
    algorithm: Algorithm,
    policy: AdjustPolicy,
    lockers: usize,
    settings: &Settings,
    seed: u64,
) -> Result<SolveResult, HarnessError> {
    Ok(match algorithm {
        Algorithm::Hqm => run_hqm(
            &p.instance,
            &p.tasks,
            &HqmConfig {
                policy,
                lockers,
                seed,
                ..settings.hqm.clone()
            },
        )?,
        Algorithm::Ga => run_ga(
            &p.instance,
            &p.tasks,
            &GaConfig {
                policy,
                lockers,
                seed,
                ..settings.ga.clone()
            },
        )?,
        Algorithm::Oracle => {
            let started = std::time::Instant::now();
            let o = brute_force_best(
                &p.instance,
                &p.tasks,
                lockers,
                policy,
                settings.oracle_limit as u128,
            )?;
            SolveResult {
                algorithm: "oracle".into(),
                policy,
                lockers,
                trace: vec![TraceRow {
                    timestep: 1,
                    best_reward: o.best_reward,
                    q1_delta: 0.0,
                    q2_delta: 0.0,
                }],
                timesteps_run: 1,
                initial_reward: o.best_reward,
                best_state: o.best_state,
                best_reward: o.best_reward,
                schedule: o.schedule,
                breakdown: o.breakdown,
                wall_time_s: started.elapsed().as_secs_f64(),
            }
        }
    })
}

/// Parcels each locker delivers before its first depot reload.
pub fn first_trip_loads(sch: &Schedule) -> Vec<u32> {
    sch.routes
        .iter()
        .map(|r| {
            r.visits
                .iter()
                .enumerate()
                .take_while(|(k, v)| *k == 0 || !v.via_depot)
                .map(|(_, v)| v.demand)
                .sum()
        })
        .collect()
}

/// Largest first-trip delivery over the fleet.
pub fn first_time_fulfilment(sch: &Schedule) -> u32 {
    first_trip_loads(sch).into_iter().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub algorithm: String,
    pub policy: String,
    pub fleet: usize,
    pub distance_km: f64,
    pub delay_min: f64,
    pub objective: f64,
    pub reward: f64,
    pub first_time_fulfilment: u32,
    pub improvement_rate: f64,
    pub wall_time_s: f64,
}

impl MetricsRow {
    pub fn from_result(r: &SolveResult, seed: u64) -> Self {
        Self {
            run_id: format!("{}-{}-s{seed}", r.algorithm, r.policy),
            seed,
            algorithm: r.algorithm.clone(),
            policy: r.policy.to_string(),
            fleet: r.schedule.fleet_used,
            distance_km: r.schedule.total_distance,
            delay_min: r.schedule.total_delay(),
            objective: r.breakdown.objective,
            reward: r.best_reward,
            first_time_fulfilment: first_time_fulfilment(&r.schedule),
            improvement_rate: r.improvement_rate(),
            wall_time_s: r.wall_time_s,
        }
    }
}

/// Appends rows to a CSV file, writing the header only when the file is new
/// or empty.
pub fn append_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub fleet: usize,
    pub distance_km: f64,
    pub delay_min: f64,
}

/// The solution document. Carries no wall-clock data, so reruns are
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub seed: u64,
    pub algorithm: String,
    pub policy: AdjustPolicy,
    pub lockers: usize,
    pub siting: SitingResult,
    pub tasks: Vec<Task>,
    pub best_state: State,
    pub best_reward: f64,
    pub initial_reward: f64,
    pub improvement_rate: f64,
    pub timesteps_run: usize,
    pub breakdown: CostBreakdown,
    pub totals: Totals,
    pub first_time_fulfilment: u32,
    pub schedule: Schedule,
    pub validation: ConstraintReport,
}

/// Output directory of one seed: the run directory itself for single-seed
/// runs, `seed-<n>` below it otherwise.
pub fn seed_dir(out: &Path, seed: u64, n_seeds: usize) -> PathBuf {
    if n_seeds == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed-{seed}"))
    }
}

/// Writes instance, solution and trace for one solved seed.
pub fn write_run_artifacts(
    dir: &Path,
    p: &Prepared,
    r: &SolveResult,
    report: &ConstraintReport,
    seed: u64,
) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    save_instance(&p.instance, &dir.join(INSTANCE_FILE))?;
    let doc = SolutionDoc {
        seed,
        algorithm: r.algorithm.clone(),
        policy: r.policy,
        lockers: r.lockers,
        siting: p.siting.clone(),
        tasks: p.tasks.clone(),
        best_state: r.best_state.clone(),
        best_reward: r.best_reward,
        initial_reward: r.initial_reward,
        improvement_rate: r.improvement_rate(),
        timesteps_run: r.timesteps_run,
        breakdown: r.breakdown,
        totals: Totals {
            fleet: r.schedule.fleet_used,
            distance_km: r.schedule.total_distance,
            delay_min: r.schedule.total_delay(),
        },
        first_time_fulfilment: first_time_fulfilment(&r.schedule),
        schedule: r.schedule.clone(),
        validation: report.clone(),
    };
    write_json(&dir.join(SOLUTION_FILE), &doc)?;
    write_csv(&dir.join(TRACE_FILE), &r.trace)
}

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub rows: Vec<MetricsRow>,
    pub results: Vec<SolveResult>,
}

/// End-to-end solve for every seed of the manifest. Seeds run concurrently;
/// files are written in seed order. Fails with the first error in seed order,
/// or with a validation error after all artifacts are written.
pub fn cmd_solve(m: &RunManifest) -> Result<SolveSummary, HarnessError> {
    m.check()?;
    ensure_dir(&m.out_dir)?;
    write_json(&m.out_dir.join(MANIFEST_FILE), m)?;
    let outcomes: Vec<Result<(Prepared, SolveResult), HarnessError>> = m
        .seeds
        .par_iter()
        .map(|&seed| {
            let p = prepare(&m.source, &m.settings, seed)?;
            let lockers = lockers_for(m.lockers, &p.instance);
            let r = solve_prepared(&p, m.algorithm, m.policy, lockers, &m.settings, seed)?;
            Ok((p, r))
        })
        .collect();
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut invalid = None;
    for (outcome, &seed) in outcomes.into_iter().zip(&m.seeds) {
        let (p, r) = outcome?;
        let report = validate_solution(&r.schedule, &p.tasks, &p.instance);
        write_run_artifacts(&seed_dir(&m.out_dir, seed, m.seeds.len()), &p, &r, &report, seed)?;
        if !report.all_passed() && invalid.is_none() {
            invalid = Some(HarnessError::Validation { seed, report });
        }
        rows.push(MetricsRow::from_result(&r, seed));
        results.push(r);
    }
    append_csv(&m.out_dir.join(METRICS_FILE), &rows)?;
    match invalid {
        Some(e) => Err(e),
        None => Ok(SolveSummary { rows, results }),
    }
}

/// Gap of HQM over GA in percent of the HQM reward.
pub fn gap_percent(hqm: f64, ga: f64) -> f64 {
    (hqm - ga) / hqm * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub seed: u64,
    pub policy: String,
    pub hqm_reward: f64,
    pub ga_reward: f64,
    pub gap_pct: f64,
    pub hqm_improvement: f64,
    pub ga_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub pairs: usize,
    pub policies: Vec<AdjustPolicy>,
    pub mean_gap_pct: f64,
    pub hqm_wins: usize,
    pub ties: usize,
    pub ga_wins: usize,
    pub wilcoxon: Option<Wilcoxon>,
    /// Set when the test cannot be run, e.g. every difference is zero.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    pub summary: CompareSummary,
    pub metrics: Vec<MetricsRow>,
}

/// Paired HQM and GA runs on the same seeds. With several policies the
/// per-seed reward is averaged over them before testing.
pub fn cmd_compare(
    source: &InstanceSource,
    policies: &[AdjustPolicy],
    lockers: Option<usize>,
    settings: &Settings,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<CompareOutcome, HarnessError> {
    if seeds.len() < 5 {
        return Err(HarnessError::Usage(format!(
            "compare needs at least 5 paired seeds, got {}",
            seeds.len()
        )));
    }
    if policies.is_empty() {
        return Err(HarnessError::Usage("compare needs at least one policy".into()));
    }
    ensure_dir(out_dir)?;
    type Pair = (SolveResult, SolveResult);
    let runs: Vec<Result<Vec<Pair>, HarnessError>> = seeds
        .par_iter()
        .map(|&seed| {
            let p = prepare(source, settings, seed)?;
            let m = lockers_for(lockers, &p.instance);
            policies
                .iter()
                .map(|&pol| {
                    Ok((
                        solve_prepared(&p, Algorithm::Hqm, pol, m, settings, seed)?,
                        solve_prepared(&p, Algorithm::Ga, pol, m, settings, seed)?,
                    ))
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    let mut hqm_rewards = Vec::new();
    let mut ga_rewards = Vec::new();
    for (run, &seed) in runs.into_iter().zip(seeds) {
        let pairs = run?;
        let mut h_sum = 0.0;
        let mut g_sum = 0.0;
        for (h, g) in &pairs {
            rows.push(CompareRow {
                seed,
                policy: h.policy.to_string(),
                hqm_reward: h.best_reward,
                ga_reward: g.best_reward,
                gap_pct: gap_percent(h.best_reward, g.best_reward),
                hqm_improvement: h.improvement_rate(),
                ga_improvement: g.improvement_rate(),
            });
            metrics.push(MetricsRow::from_result(h, seed));
            metrics.push(MetricsRow::from_result(g, seed));
            h_sum += h.best_reward;
            g_sum += g.best_reward;
        }
        let k = pairs.len() as f64;
        if pairs.len() > 1 {
            let (h_imp, g_imp) = pairs.iter().fold((0.0, 0.0), |acc, (h, g)| {
                (acc.0 + h.improvement_rate() / k, acc.1 + g.improvement_rate() / k)
            });
            rows.push(CompareRow {
                seed,
                policy: "average".into(),
                hqm_reward: h_sum / k,
                ga_reward: g_sum / k,
                gap_pct: gap_percent(h_sum / k, g_sum / k),
                hqm_improvement: h_imp,
                ga_improvement: g_imp,
            });
        }
        hqm_rewards.push(h_sum / k);
        ga_rewards.push(g_sum / k);
    }

    let (wilcoxon, diagnostic) = match wilcoxon_signed_rank(&hqm_rewards, &ga_rewards) {
        Ok(w) => (Some(w), None),
        Err(e @ StatsError::Degenerate) => (None, Some(e.to_string())),
        Err(e) => return Err(HarnessError::Usage(e.to_string())),
    };
    let gaps: Vec<f64> = hqm_rewards
        .iter()
        .zip(&ga_rewards)
        .map(|(h, g)| gap_percent(*h, *g))
        .collect();
    let summary = CompareSummary {
        pairs: seeds.len(),
        policies: policies.to_vec(),
        mean_gap_pct: gaps.iter().sum::<f64>() / gaps.len() as f64,
        hqm_wins: hqm_rewards.iter().zip(&ga_rewards).filter(|(h, g)| h > g).count(),
        ties: hqm_rewards.iter().zip(&ga_rewards).filter(|(h, g)| h == g).count(),
        ga_wins: hqm_rewards.iter().zip(&ga_rewards).filter(|(h, g)| h < g).count(),
        wilcoxon,
        diagnostic,
    };
    write_csv(&out_dir.join(COMPARE_FILE), &rows)?;
    write_json(&out_dir.join(COMPARE_SUMMARY_FILE), &summary)?;
    append_csv(&out_dir.join(METRICS_FILE), &metrics)?;
    Ok(CompareOutcome {
        rows,
        summary,
        metrics,
    })
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Mean customer window length.
    CustomerWindow,
    /// Mean parking window length.
    ParkingWindow,
    Capacity,
    Speed,
    ServiceRadius,
    /// Mean customer walking range.
    WalkRange,
    ParkingSpaces,
    CustomersPerSpace,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::CustomerWindow => "T_s",
            SweepParam::ParkingWindow => "T_p",
            SweepParam::Capacity => "Q",
            SweepParam::Speed => "v",
            SweepParam::ServiceRadius => "r_m",
            SweepParam::WalkRange => "rho_c",
            SweepParam::ParkingSpaces => "I",
            SweepParam::CustomersPerSpace => "N_n",
        }
    }

    /// Applies one grid value to a copy of the base source and settings.
    pub fn apply(
        self,
        value: f64,
        source: &InstanceSource,
        settings: &Settings,
    ) -> Result<(InstanceSource, Settings), String> {
        let mut s = settings.clone();
        let mut src = source.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(format!("{} needs a positive integer, got {value}", self.label()))
            }
        };
        match self {
            SweepParam::CustomerWindow => s.instance.customer_window_mean = value,
            SweepParam::ParkingWindow => s.instance.parking_window_mean = value,
            SweepParam::Capacity => s.instance.fleet.capacity = count()? as u32,
            SweepParam::Speed => s.instance.fleet.speed_kmh = value,
            SweepParam::ServiceRadius => s.instance.fleet.service_radius_km = value,
            SweepParam::WalkRange => s.instance.walk_mean = value,
            SweepParam::ParkingSpaces | SweepParam::CustomersPerSpace => match &mut src {
                InstanceSource::Generate {
                    n_parking,
                    customers_per_space,
                } => {
                    if self == SweepParam::ParkingSpaces {
                        *n_parking = count()?;
                    } else {
                        *customers_per_space = count()?;
                    }
                }
                InstanceSource::File(_) => {
                    return Err(format!("{} can only be swept on generated instances", self.label()))
                }
            },
        }
        Ok((src, s))
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '_').collect::<String>().to_lowercase();
        Ok(match key.as_str() {
            "ts" => SweepParam::CustomerWindow,
            "tp" => SweepParam::ParkingWindow,
            "q" => SweepParam::Capacity,
            "v" => SweepParam::Speed,
            "rm" => SweepParam::ServiceRadius,
            "rhoc" | "ρc" => SweepParam::WalkRange,
            "i" => SweepParam::ParkingSpaces,
            "nn" => SweepParam::CustomersPerSpace,
            _ => {
                return Err(format!(
                    "unknown sweep parameter {s:?}, expected one of T_s, T_p, Q, v, r_m, rho_c, I, N_n"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub status: String,
    pub fleet: Option<usize>,
    pub distance_km: Option<f64>,
    pub delay_min: Option<f64>,
    pub objective: Option<f64>,
    pub reward: Option<f64>,
}

/// One-parameter sweep. Failing cells are recorded with their error and the
/// sweep carries on. Rows are ordered by (grid value, seed).
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    param: SweepParam,
    grid: &[f64],
    source: &InstanceSource,
    algorithm: Algorithm,
    policy: AdjustPolicy,
    lockers: Option<usize>,
    settings: &Settings,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Usage("sweep grid is empty".into()));
    }
    if seeds.is_empty() {
        return Err(HarnessError::Usage("at least one seed is required".into()));
    }
    ensure_dir(out_dir)?;
    let cells: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(value, seed)| {
            let failed = |status: String| SweepRow {
                param: param.label().into(),
                value,
                seed,
                status,
                fleet: None,
                distance_km: None,
                delay_min: None,
                objective: None,
                reward: None,
            };
            let (src, s) = match param.apply(value, source, settings) {
                Ok(x) => x,
                Err(e) => return failed(format!("usage: {e}")),
            };
            let run = prepare(&src, &s, seed).and_then(|p| {
                let m = lockers_for(lockers, &p.instance);
                solve_prepared(&p, algorithm, policy, m, &s, seed)
            });
            match run {
                Ok(r) => SweepRow {
                    param: param.label().into(),
                    value,
                    seed,
                    status: "ok".into(),
                    fleet: Some(r.schedule.fleet_used),
                    distance_km: Some(r.schedule.total_distance),
                    delay_min: Some(r.schedule.total_delay()),
                    objective: Some(r.breakdown.objective),
                    reward: Some(r.best_reward),
                },
                Err(e) => failed(format!("failed: {e}")),
            }
        })
        .collect();
    write_csv(&out_dir.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

/// Writes the raw instance of each seed.
pub fn cmd_generate(
    source: &InstanceSource,
    settings: &Settings,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    seeds
        .iter()
        .map(|&seed| {
            let inst = raw_instance(source, settings, seed)?;
            let dir = seed_dir(out_dir, seed, seeds.len());
            ensure_dir(&dir)?;
            let path = dir.join(INSTANCE_FILE);
            save_instance(&inst, &path)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingDoc {
    pub seed: u64,
    pub siting: SitingResult,
}

/// Sites each seed's instance; writes the sited instance and the clustering.
pub fn cmd_site(
    source: &InstanceSource,
    settings: &Settings,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<SitingResult>, HarnessError> {
    seeds
        .iter()
        .map(|&seed| {
            let raw = raw_instance(source, settings, seed)?;
            let (inst, siting) = site_instance(&raw, seed)?;
            let dir = seed_dir(out_dir, seed, seeds.len());
            ensure_dir(&dir)?;
            save_instance(&inst, &dir.join(INSTANCE_FILE))?;
            write_json(
                &dir.join("siting.json"),
                &SitingDoc {
                    seed,
                    siting: siting.clone(),
                },
            )?;
            Ok(siting)
        })
        .collect()
}

/// Compiles each seed's task list and writes it as `tasks.csv`.
pub fn cmd_tasks(
    source: &InstanceSource,
    settings: &Settings,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<Vec<Task>>, HarnessError> {
    seeds
        .iter()
        .map(|&seed| {
            let p = prepare(source, settings, seed)?;
            let dir = seed_dir(out_dir, seed, seeds.len());
            ensure_dir(&dir)?;
            save_instance(&p.instance, &dir.join(INSTANCE_FILE))?;
            let path = dir.join("tasks.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            write_tasks_csv(&p.tasks, file).map_err(csv_err(&path))?;
            Ok(p.tasks)
        })
        .collect()
}
