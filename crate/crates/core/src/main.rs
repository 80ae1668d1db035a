use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coopd2d::config::{parse_range, Overrides, Preset, RunConfig};
use coopd2d::coopshare::{default_probe_grid, nonconvexity_probe, probe_csv};
use coopd2d::harness::{
    episodes_csv, monte_carlo, run_scheme, runs_csv, single_pair_study, sweep_csv, sweep_instance, timing_csv,
    worker_pool, PairStudy, SchemeKind, Setup,
};
use coopd2d::{Error, Result};

#[derive(Parser)]
#[command(name = "coopd2d", version, about = "Cooperative D2D spectrum sharing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Starting point that the file and flags refine.
    #[arg(long, value_enum, default_value = "full")]
    preset: Preset,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Also read from COOPD2D_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training episodes per agent.
    #[arg(long)]
    episodes: Option<usize>,
    /// Interactions per episode.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over the number of D2D links; writes sweep.csv and runs.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Scenarios per sweep point.
        #[arg(long)]
        runs: Option<usize>,
        /// D2D link counts, e.g. `3:8` or `6`.
        #[arg(long)]
        n_sweep: Option<String>,
        /// Number of cellular links.
        #[arg(long)]
        m: Option<usize>,
        /// Fill the wallclock columns (makes the tables run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Convergence and timing of one pair over CU-DT distances; writes episodes.csv and timing.csv.
    SinglePair {
        #[command(flatten)]
        common: Common,
        /// CU-DT distances in meters as `start:end:step`.
        #[arg(long, default_value = "500:1500:250")]
        distances: String,
        #[arg(long, default_value_t = 1000.0)]
        d_cu_bs: f64,
        #[arg(long, default_value_t = 500.0)]
        d_dt_bs: f64,
        #[arg(long, default_value_t = 500.0)]
        d_dt_dr: f64,
        /// Train every distance from scratch.
        #[arg(long)]
        no_warm_start: bool,
    },
    /// Exhaustive-search scheme on one seeded scenario; writes runs.csv.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Number of D2D links.
        #[arg(long)]
        n: Option<usize>,
        /// Scenario index.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Hessian eigenvalues of the sharing-factor rate term; writes probe.csv.
    ProbeNonconvexity {
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parses and validates a configuration file.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, extra: Overrides) -> Result<RunConfig> {
    let overrides = Overrides {
        seed: common.seed,
        workers: common.workers,
        out_dir: common.out.clone(),
        episodes: common.episodes,
        steps: common.steps,
        ..extra
    };
    RunConfig::load(common.config.as_deref(), common.preset, &overrides)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn int_range(text: &str) -> Result<Vec<usize>> {
    parse_range(text)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Argument(format!("`{text}` must list positive integers")))
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep {
            common,
            runs,
            n_sweep,
            m,
            timing,
        } => {
            let cfg = load(
                &common,
                Overrides {
                    runs,
                    n_sweep: n_sweep.as_deref().map(int_range).transpose()?,
                    m,
                    timing: timing.then_some(true),
                    ..Default::default()
                },
            )?;
            let (results, rows) = monte_carlo(&cfg)?;
            write(&cfg.run.out_dir, "sweep.csv", &sweep_csv(&rows, cfg.run.timing))?;
            write(&cfg.run.out_dir, "runs.csv", &runs_csv(&results, cfg.run.timing))?;
        }
        Command::SinglePair {
            common,
            distances,
            d_cu_bs,
            d_dt_bs,
            d_dt_dr,
            no_warm_start,
        } => {
            let cfg = load(&common, Overrides::default())?;
            let study = PairStudy {
                d_cu_bs,
                d_dt_bs,
                d_dt_dr,
                distances: parse_range(&distances)?,
                warm_start: !no_warm_start,
                ..Default::default()
            };
            let report = single_pair_study(&study, &cfg)?;
            write(&cfg.run.out_dir, "episodes.csv", &episodes_csv(&report.episodes))?;
            write(&cfg.run.out_dir, "timing.csv", &timing_csv(&report.timing))?;
        }
        Command::Oracle { common, n, run } => {
            let cfg = load(&common, Overrides::default())?;
            let n = n.unwrap_or(cfg.scenario.n_links);
            let (scenario, gains, seed) = sweep_instance(&cfg, n, run)?;
            let setup = Setup {
                q: &cfg.qos,
                grid: &cfg.grid,
                train: &cfg.train,
                coop: &cfg.coop,
            };
            let pool = worker_pool(cfg.workers())?;
            let mut result = pool.install(|| run_scheme(&scenario, &gains, SchemeKind::Optimal, setup, seed))?;
            result.run = run;
            write(&cfg.run.out_dir, "runs.csv", &runs_csv(&[result], cfg.run.timing))?;
        }
        Command::ProbeNonconvexity { out } => {
            let (betas, xs, ys) = default_probe_grid();
            let mut points = Vec::new();
            for beta in betas {
                points.extend(nonconvexity_probe(beta, &xs, &ys)?);
            }
            write(&out, "probe.csv", &probe_csv(&points))?;
        }
        Command::ValidateConfig { common } => {
            load(&common, Overrides::default())?;
            eprintln!("configuration is valid");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
