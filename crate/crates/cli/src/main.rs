use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mplp::harness::{
    cmd_compare, cmd_generate, cmd_site, cmd_solve, cmd_sweep, cmd_tasks, Algorithm, HarnessError,
    InstanceSource, RunManifest, Settings, SweepParam,
};
use mplp::AdjustPolicy;

#[derive(Parser)]
#[command(name = "mplp", version, about = "Mobile parcel locker planning: instances, siting, tasks and solvers")]
struct Cli {
    /// Seed; repeat for several runs.
    #[arg(long = "seed", global = true)]
    seed: Vec<u64>,
    /// Inclusive seed range such as 1..10, added to --seed.
    #[arg(long, global = true, value_parser = parse_range)]
    seeds: Option<(u64, u64)>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value = "btd")]
    policy: AdjustPolicy,
    /// TOML settings file; missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Generate an instance of I parking spaces with N customers each, e.g. 5x10.
    #[arg(long = "gen", value_name = "IxN", conflicts_with = "instance")]
    gen: Option<String>,
    /// Instance file to load instead of generating.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolverOpts {
    /// Lockers available to the search; defaults to the fleet limit.
    #[arg(long)]
    lockers: Option<usize>,
    /// Timesteps (HQM) or generations (GA).
    #[arg(long)]
    timesteps: Option<usize>,
    /// States per agent (HQM) or population size (GA).
    #[arg(long)]
    agent_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a raw instance per seed.
    Generate {
        #[command(flatten)]
        source: Source,
    },
    /// Site parking spaces by clustering stopovers.
    Site {
        #[command(flatten)]
        source: Source,
    },
    /// Compile the task list of a sited instance.
    Tasks {
        #[command(flatten)]
        source: Source,
    },
    /// Solve end to end and write solution, trace and metrics.
    Solve {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "hqm")]
        algo: Algorithm,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// Paired HQM and GA runs with a signed-rank test.
    Compare {
        #[command(flatten)]
        source: Source,
        /// Run both adjustment policies and average their rewards.
        #[arg(long)]
        both_policies: bool,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// Vary one parameter over a grid.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// One of T_s, T_p, Q, v, r_m, rho_c, I, N_n.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long, default_value = "hqm")]
        algo: Algorithm,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// Exhaustive search; refuses instances above the state limit.
    Oracle {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        lockers: Option<usize>,
        /// Largest state space to enumerate.
        #[arg(long)]
        limit: Option<u64>,
    },
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 1..10, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

impl Source {
    fn resolve(&self) -> Result<InstanceSource, HarnessError> {
        match (&self.gen, &self.instance) {
            (Some(g), _) => InstanceSource::parse_gen(g),
            (None, Some(p)) => Ok(InstanceSource::File(p.clone())),
            (None, None) => Err(HarnessError::Usage("give --gen IxN or --instance FILE".into())),
        }
    }
}

impl SolverOpts {
    fn apply(&self, s: &mut Settings) {
        if let Some(t) = self.timesteps {
            s.hqm.timesteps = t;
            s.ga.iterations = t;
        }
        if let Some(a) = self.agent_size {
            s.hqm.agent_size = a;
            s.ga.pop_size = a;
        }
    }
}

fn seeds(cli: &Cli) -> Vec<u64> {
    let mut out = cli.seed.clone();
    if let Some((a, b)) = cli.seeds {
        out.extend(a..=b);
    }
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let seeds = seeds(&cli);
    let out = cli.out.clone();
    match &cli.command {
        Command::Generate { source } => {
            for p in cmd_generate(&source.resolve()?, &settings, &seeds, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Site { source } => {
            for (s, seed) in cmd_site(&source.resolve()?, &settings, &seeds, &out)?.iter().zip(&seeds) {
                println!("seed {seed}: {} parking spaces, inertia {:.4}", s.p, s.inertia);
            }
        }
        Command::Tasks { source } => {
            for (t, seed) in cmd_tasks(&source.resolve()?, &settings, &seeds, &out)?.iter().zip(&seeds) {
                println!("seed {seed}: {} tasks", t.len());
            }
        }
        Command::Solve { source, algo, solver } => {
            solver.apply(&mut settings);
            let manifest = RunManifest {
                source: source.resolve()?,
                algorithm: *algo,
                policy: cli.policy,
                lockers: solver.lockers,
                settings,
                seeds,
                out_dir: out,
            };
            let summary = cmd_solve(&manifest)?;
            print_rows(&summary.rows);
        }
        Command::Oracle { source, lockers, limit } => {
            if let Some(l) = limit {
                settings.oracle_limit = *l;
            }
            let manifest = RunManifest {
                source: source.resolve()?,
                algorithm: Algorithm::Oracle,
                policy: cli.policy,
                lockers: *lockers,
                settings,
                seeds,
                out_dir: out,
            };
            let summary = cmd_solve(&manifest)?;
            print_rows(&summary.rows);
        }
        Command::Compare {
            source,
            both_policies,
            solver,
        } => {
            solver.apply(&mut settings);
            let policies = if *both_policies {
                AdjustPolicy::ALL.to_vec()
            } else {
                vec![cli.policy]
            };
            let outcome = cmd_compare(&source.resolve()?, &policies, solver.lockers, &settings, &seeds, &out)?;
            for r in &outcome.rows {
                println!(
                    "seed {:>4} {:<8} hqm {:.6e} ga {:.6e} gap {:>7.3}%",
                    r.seed, r.policy, r.hqm_reward, r.ga_reward, r.gap_pct
                );
            }
            let s = &outcome.summary;
            println!(
                "pairs {} hqm>ga {} ties {} hqm<ga {} mean gap {:.3}%",
                s.pairs, s.hqm_wins, s.ties, s.ga_wins, s.mean_gap_pct
            );
            match (&s.wilcoxon, &s.diagnostic) {
                (Some(w), _) => println!(
                    "wilcoxon n {} W+ {} z {:.4} p {:.6} ({:?})",
                    w.n, w.w_plus, w.z, w.p_value, w.method
                ),
                (None, Some(d)) => eprintln!("wilcoxon: {d}"),
                (None, None) => {}
            }
        }
        Command::Sweep {
            source,
            param,
            grid,
            algo,
            solver,
        } => {
            solver.apply(&mut settings);
            let rows = cmd_sweep(
                *param,
                grid,
                &source.resolve()?,
                *algo,
                cli.policy,
                solver.lockers,
                &settings,
                &seeds,
                &out,
            )?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} rows, {failed} failed", rows.len());
        }
    }
    Ok(())
}

fn print_rows(rows: &[mplp::harness::MetricsRow]) {
    for r in rows {
        println!(
            "{} fleet {} distance {:.3} km delay {:.2} min reward {:.6e} improvement {:.3}",
            r.run_id, r.fleet, r.distance_km, r.delay_min, r.reward, r.improvement_rate
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
