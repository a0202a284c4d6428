mod common;

use std::fs;
use std::path::Path;

use mplp::harness::{
    cmd_compare, cmd_generate, cmd_site, cmd_solve, cmd_sweep, cmd_tasks, first_time_fulfilment,
    Algorithm, HarnessError, InstanceSource, RunManifest, Settings, SweepParam, SweepRow,
    METRICS_FILE, SOLUTION_FILE, SWEEP_FILE, TRACE_FILE,
};
use mplp::model::load_instance;
use mplp::AdjustPolicy;

use common::generated;

fn manifest(source: InstanceSource, algorithm: Algorithm, seeds: Vec<u64>, out: &Path) -> RunManifest {
    RunManifest {
        source,
        algorithm,
        policy: AdjustPolicy::Hcps,
        lockers: None,
        settings: Settings::default(),
        seeds,
        out_dir: out.to_path_buf(),
    }
}

#[test]
fn solve_smoke_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_solve(&manifest(generated(5, 5), Algorithm::Hqm, vec![1], dir.path())).unwrap();
    for f in [SOLUTION_FILE, TRACE_FILE, METRICS_FILE, "instance.mplp.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(SOLUTION_FILE)).unwrap()).unwrap();
    assert!(doc.get("wall_time_s").is_none());
    assert_eq!(doc["algorithm"], "hqm");
    assert_eq!(summary.rows.len(), 1);
    let row = &summary.rows[0];
    assert!(row.first_time_fulfilment <= 20);
    assert!(row.improvement_rate >= -1.0);
    load_instance(&dir.path().join("instance.mplp.json")).unwrap();
}

#[test]
fn metrics_append_with_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(generated(3, 4), Algorithm::Ga, vec![1, 2], dir.path());
    cmd_solve(&m).unwrap();
    cmd_solve(&RunManifest {
        algorithm: Algorithm::Hqm,
        ..m
    })
    .unwrap();
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("run_id,seed,algorithm,policy,fleet,distance_km"));
    assert_eq!(lines.iter().filter(|l| l.starts_with("run_id")).count(), 1);
    assert!(dir.path().join("seed-2").join(SOLUTION_FILE).is_file());
}

#[test]
fn oracle_refuses_twelve_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let seed = (1..)
        .find(|&s| common::prepared(12, 2, s).is_some_and(|p| p.tasks.len() == 12))
        .unwrap();
    let err = cmd_solve(&manifest(generated(12, 2), Algorithm::Oracle, vec![seed], dir.path())).unwrap_err();
    assert!(matches!(err, HarnessError::Solve(_)), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn oracle_matches_hqm_on_tiny_instance() {
    let (seed, _) = common::tiny_instances(1, 4..=4).remove(0);
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(generated(2, 2), Algorithm::Oracle, vec![seed], dir.path());
    m.lockers = Some(2);
    let o = cmd_solve(&m).unwrap();
    m.algorithm = Algorithm::Hqm;
    let h = cmd_solve(&m).unwrap();
    assert_eq!(o.rows[0].reward, h.rows[0].reward);
}

#[test]
fn loading_an_instance_file_resites_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = cmd_generate(&generated(3, 4), &Settings::default(), &[9], dir.path())
        .unwrap()
        .remove(0);
    let out = dir.path().join("solve");
    let from_file = cmd_solve(&manifest(InstanceSource::File(path), Algorithm::Ga, vec![9], &out)).unwrap();
    let direct = cmd_solve(&manifest(generated(3, 4), Algorithm::Ga, vec![9], &dir.path().join("b"))).unwrap();
    assert_eq!(from_file.rows[0].reward, direct.rows[0].reward);
}

#[test]
fn site_and_tasks_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sites = cmd_site(&generated(4, 5), &Settings::default(), &[1, 2], dir.path()).unwrap();
    assert_eq!(sites.len(), 2);
    assert!(dir.path().join("seed-1").join("siting.json").is_file());
    let tasks = cmd_tasks(&generated(4, 5), &Settings::default(), &[3], dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("tasks.csv")).unwrap();
    assert_eq!(csv.lines().count(), tasks[0].len() + 1);
}

#[test]
fn infeasible_siting_maps_to_exit_three() {
    let mut settings = Settings::default();
    settings.instance.walk_mean = 0.0;
    settings.instance.walk_sd = 0.0;
    settings.instance.walk_floor = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(generated(2, 3), Algorithm::Hqm, vec![1], dir.path());
    m.settings = settings;
    let err = cmd_solve(&m).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn compare_needs_five_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_compare(&generated(3, 3), &[AdjustPolicy::Btd], None, &Settings::default(), &[1, 2, 3, 4], dir.path())
        .unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn compare_reports_gaps_and_averages() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Settings::default();
    s.hqm.timesteps = 50;
    s.ga.iterations = 50;
    let out = cmd_compare(&generated(3, 4), &AdjustPolicy::ALL, None, &s, &[1, 2, 3, 4, 5], dir.path()).unwrap();
    // Two policies plus their average per seed.
    assert_eq!(out.rows.len(), 15);
    for r in &out.rows {
        assert!((r.gap_pct - (r.hqm_reward - r.ga_reward) / r.hqm_reward * 100.0).abs() < 1e-12);
    }
    let avg = out.rows.iter().find(|r| r.policy == "average").unwrap();
    let pair: Vec<_> = out.rows.iter().filter(|r| r.seed == avg.seed && r.policy != "average").collect();
    assert_eq!(avg.hqm_reward, (pair[0].hqm_reward + pair[1].hqm_reward) / 2.0);
    assert!(out.summary.wilcoxon.is_some() || out.summary.diagnostic.is_some());
    assert!(dir.path().join("compare.csv").is_file() && dir.path().join("compare.json").is_file());
    assert_eq!(out.summary.hqm_wins + out.summary.ties + out.summary.ga_wins, 5);
}

#[test]
fn compare_of_identical_runs_is_degenerate() {
    // One task per instance: every solver finds the same schedule.
    let dir = tempfile::tempdir().unwrap();
    let mut s = Settings::default();
    s.hqm.timesteps = 5;
    s.ga.iterations = 5;
    let seeds: Vec<u64> = (1..)
        .filter(|&seed| common::prepared(1, 1, seed).is_some_and(|p| p.tasks.len() == 1))
        .take(5)
        .collect();
    let out = cmd_compare(&generated(1, 1), &[AdjustPolicy::Btd], Some(1), &s, &seeds, dir.path()).unwrap();
    assert!(out.summary.wilcoxon.is_none());
    assert!(out.summary.diagnostic.as_deref().unwrap().contains("degenerate"));
}

fn sweep(param: SweepParam, grid: &[f64], seeds: &[u64], dir: &Path) -> Vec<SweepRow> {
    cmd_sweep(
        param,
        grid,
        &generated(5, 6),
        Algorithm::Hqm,
        AdjustPolicy::Btd,
        None,
        &Settings::default(),
        seeds,
        dir,
    )
    .unwrap()
}

#[test]
fn sweep_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = [1, 2, 3, 4];
    let rows = sweep(SweepParam::Capacity, &[15.0, 20.0, 25.0], &seeds, dir.path());
    assert_eq!(rows.len(), 3 * seeds.len());
    let order: Vec<(f64, u64)> = rows.iter().map(|r| (r.value, r.seed)).collect();
    let mut sorted = order.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(order, sorted);
    let csv = fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
    assert!(csv.starts_with("param,value,seed,status,fleet,distance_km,delay_min"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

#[test]
fn sweep_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep(SweepParam::ParkingSpaces, &[2.0, 2.5], &[1], dir.path());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].status, "ok");
    assert!(rows[1].status.starts_with("usage"));
    assert!(rows[1].fleet.is_none());
}

fn mean_by_value(rows: &[SweepRow], grid: &[f64], f: fn(&SweepRow) -> f64) -> Vec<f64> {
    grid.iter()
        .map(|&v| {
            let cell: Vec<f64> = rows.iter().filter(|r| r.value == v && r.status == "ok").map(f).collect();
            cell.iter().sum::<f64>() / cell.len() as f64
        })
        .collect()
}

#[test]
fn longer_customer_stays_do_not_raise_delay() {
    let dir = tempfile::tempdir().unwrap();
    let grid = [40.0, 50.0, 60.0, 70.0];
    let seeds: Vec<u64> = (1..=10).collect();
    let rows = sweep(SweepParam::CustomerWindow, &grid, &seeds, dir.path());
    let per_seed_ok = seeds
        .iter()
        .filter(|&&s| {
            let d: Vec<f64> = grid
                .iter()
                .map(|&v| rows.iter().find(|r| r.seed == s && r.value == v).and_then(|r| r.delay_min).unwrap_or(f64::NAN))
                .collect();
            d[d.len() - 1] <= d[0]
        })
        .count();
    let means = mean_by_value(&rows, &grid, |r| r.delay_min.unwrap());
    eprintln!("delay by window length {means:?}, seeds with lower delay at the widest window {per_seed_ok}/10");
    assert!(means.last().unwrap() <= &means[0]);
}

#[test]
fn wider_service_radius_does_not_shorten_routes() {
    let dir = tempfile::tempdir().unwrap();
    let grid = [0.1, 0.2, 0.3];
    let seeds: Vec<u64> = (1..=10).collect();
    let rows = sweep(SweepParam::ServiceRadius, &grid, &seeds, dir.path());
    let means = mean_by_value(&rows, &grid, |r| r.distance_km.unwrap());
    eprintln!("distance by service radius {means:?}");
    assert!(means.last().unwrap() >= &means[0]);
}

#[test]
fn fulfilment_is_bounded_by_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_solve(&manifest(generated(6, 8), Algorithm::Ga, vec![1, 2, 3], dir.path())).unwrap();
    for r in &s.results {
        assert!(first_time_fulfilment(&r.schedule) <= 20);
    }
}

#[test]
fn shipped_config_equals_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(Settings::load(&path).unwrap(), Settings::default());
}
