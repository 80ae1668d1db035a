//! Scheme runners, Monte Carlo sweeps and the single-pair study.
//!
//! All randomness comes from seeds derived per run and per `(m, n)` pair, and
//! parallel results are collected in index order, so every table is the same
//! for any worker count.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_shadowing, compute_gains, ChannelGains};
use crate::config::RunConfig;
use crate::coopset::{cooperative_sets, masked_weight_matrix, nonzero_count, CoopSetConfig};
use crate::coopshare::{brute_force_pair_opt, evaluate_unchecked, feasibility_interval, ActionGrid, QosConfig};
use crate::dqn::{greedy_decision, Agent, EpisodeRecord, PairChannel, TrainConfig};
use crate::error::{Error, Result};
use crate::matching::{km_match, system_wsee, WeightMatrix};
use crate::seeds::{self, Stream};
use crate::topology::{fixed_line_scenario, sample_scenario_with, CellScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Exhaustive per-pair search, then matching.
    Optimal,
    /// Random one-to-one matching and random grid decisions.
    Random,
    /// One learning agent per pair, then matching.
    Proposed,
    /// Learning agents restricted to the cooperative sets.
    #[serde(rename = "proposed_coopsets")]
    #[value(name = "proposed_coopsets")]
    ProposedCoopSets,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [Self::Optimal, Self::Random, Self::Proposed, Self::ProposedCoopSets];

    pub fn name(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Random => "random",
            Self::Proposed => "proposed",
            Self::ProposedCoopSets => "proposed_coopsets",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scheme: SchemeKind,
    pub m: usize,
    pub n: usize,
    pub run: usize,
    pub wsee: f64,
    pub nonzero_u: usize,
    pub wallclock_ms: f64,
    pub seed: u64,
    pub qos_violations: usize,
}

/// Everything a scheme needs besides the scenario.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    pub q: &'a QosConfig,
    pub grid: &'a ActionGrid,
    pub train: &'a TrainConfig,
    pub coop: &'a CoopSetConfig,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Seed of the agent for pair `(m, n)` within one run.
pub fn agent_seed(run_seed: u64, m: usize, n: usize) -> u64 {
    seeds::derive(run_seed, Stream::AgentInit, &[m as u64, n as u64])
}

#[derive(Debug, Clone, Copy)]
struct Learned {
    u: Option<f64>,
    ms: f64,
}

fn train_pair(gains: &ChannelGains, m: usize, n: usize, setup: Setup, run_seed: u64) -> Result<Learned> {
    let t = Instant::now();
    let link = PairChannel::from_gains(gains, m, n);
    let cfg = TrainConfig {
        seed: agent_seed(run_seed, m, n),
        greedy_log_every: setup.train.episodes,
        ..setup.train.clone()
    };
    let mut agent = Agent::new(&cfg)?;
    agent.train(&link, setup.q, setup.grid, &cfg)?;
    let u = greedy_decision(agent.network(), &link, setup.grid, setup.q).map(|(_, u)| u);
    Ok(Learned { u, ms: elapsed_ms(t) })
}

fn all_pairs(m: usize, n: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
}

fn matched(u: &WeightMatrix) -> Result<(f64, f64)> {
    let t = Instant::now();
    let matching = km_match(u);
    let wsee = system_wsee(u, &matching)?;
    let tol = 1e-9 * wsee.abs().max(1.0);
    if (wsee - matching.total_weight).abs() > tol {
        return Err(Error::Training(format!(
            "matching weight {} disagrees with its pair sum {wsee}",
            matching.total_weight
        )));
    }
    Ok((wsee, elapsed_ms(t)))
}

fn optimal(gains: &ChannelGains, setup: Setup) -> Result<(f64, usize, f64)> {
    let t = Instant::now();
    let (m, n) = (gains.m(), gains.n());
    let entries: Vec<f64> = all_pairs(m, n)
        .par_iter()
        .map(|&(i, j)| brute_force_pair_opt(&gains.gammas(i, j), setup.q, setup.grid).map_or(0.0, |o| o.u))
        .collect();
    let mut u = WeightMatrix::zeros(m, n);
    for (k, v) in entries.into_iter().enumerate() {
        u.set(k / n, k % n, v);
    }
    let (wsee, _) = matched(&u)?;
    Ok((wsee, nonzero_count(&u), elapsed_ms(t)))
}

fn random(gains: &ChannelGains, setup: Setup, run_seed: u64) -> (f64, usize, usize, f64) {
    let t = Instant::now();
    let mut rng = seeds::stream_rng(run_seed, Stream::RandomScheme, &[]);
    let mut ms: Vec<usize> = (0..gains.m()).collect();
    let mut ns: Vec<usize> = (0..gains.n()).collect();
    ms.shuffle(&mut rng);
    ns.shuffle(&mut rng);
    let (mut wsee, mut nonzero, mut violations) = (0.0, 0, 0);
    for (&m, &n) in ms.iter().zip(&ns) {
        let d = setup.grid.decision(rng.random_range(0..setup.grid.joint_size()));
        let ev = evaluate_unchecked(&gains.gammas(m, n), &d, setup.q);
        if ev.feasible() {
            wsee += ev.u;
            nonzero += usize::from(ev.u > 0.0);
        } else {
            violations += 1;
        }
    }
    (wsee, nonzero, violations, elapsed_ms(t))
}

/// Runs every scheme in `schemes` on one scenario. Agents are trained once
/// and shared between the two learning schemes; each scheme's wallclock is
/// the summed compute time of the work it needs.
pub fn run_schemes(
    scenario: &CellScenario,
    gains: &ChannelGains,
    schemes: &[SchemeKind],
    setup: Setup,
    run_seed: u64,
    run: usize,
) -> Result<Vec<RunResult>> {
    let (m, n) = (gains.m(), gains.n());
    if scenario.m() != m || scenario.n() != n {
        return Err(Error::arg("scenario and gain dimensions differ"));
    }
    let want_plain = schemes.contains(&SchemeKind::Proposed);
    let want_coop = schemes.contains(&SchemeKind::ProposedCoopSets);

    let mut coop_ms = 0.0;
    let sets = if want_coop {
        let t = Instant::now();
        let s = cooperative_sets(scenario, gains, setup.q, setup.coop);
        coop_ms = elapsed_ms(t);
        Some(s)
    } else {
        None
    };
    let trained: Vec<Option<Learned>> = if want_plain || want_coop {
        all_pairs(m, n)
            .par_iter()
            .map(|&(i, j)| {
                let needed = if want_plain {
                    feasibility_interval(&gains.gammas(i, j), setup.q).is_some()
                } else {
                    sets.as_ref().is_some_and(|s| s.contains(i, j))
                };
                needed.then(|| train_pair(gains, i, j, setup, run_seed)).transpose()
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut out = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let result = |wsee, nonzero_u, wallclock_ms, qos_violations| RunResult {
            scheme,
            m,
            n,
            run,
            wsee,
            nonzero_u,
            wallclock_ms,
            seed: run_seed,
            qos_violations,
        };
        out.push(match scheme {
            SchemeKind::Optimal => {
                let (wsee, nz, ms) = optimal(gains, setup)?;
                result(wsee, nz, ms, 0)
            }
            SchemeKind::Random => {
                let (wsee, nz, viol, ms) = random(gains, setup, run_seed);
                result(wsee, nz, ms, viol)
            }
            SchemeKind::Proposed | SchemeKind::ProposedCoopSets => {
                let coop = scheme == SchemeKind::ProposedCoopSets;
                let mut u = WeightMatrix::zeros(m, n);
                let (mut ms, mut viol) = (if coop { coop_ms } else { 0.0 }, 0);
                for (k, entry) in trained.iter().enumerate() {
                    let (i, j) = (k / n, k % n);
                    if coop && !sets.as_ref().is_some_and(|s| s.contains(i, j)) {
                        continue;
                    }
                    if let Some(l) = entry {
                        ms += l.ms;
                        match l.u {
                            Some(v) => u.set(i, j, v),
                            None => viol += 1,
                        }
                    }
                }
                if let (true, Some(s)) = (coop, &sets) {
                    u = masked_weight_matrix(&u, s)?;
                }
                let (wsee, match_ms) = matched(&u)?;
                result(wsee, nonzero_count(&u), ms + match_ms, viol)
            }
        });
    }
    Ok(out)
}

/// Single-scheme convenience wrapper around [`run_schemes`].
pub fn run_scheme(
    scenario: &CellScenario,
    gains: &ChannelGains,
    scheme: SchemeKind,
    setup: Setup,
    run_seed: u64,
) -> Result<RunResult> {
    Ok(run_schemes(scenario, gains, &[scheme], setup, run_seed, 0)?.remove(0))
}

/// Scenario, gains and run seed of Monte Carlo run `run` at `n` D2D links.
pub fn sweep_instance(cfg: &RunConfig, n: usize, run: usize) -> Result<(CellScenario, ChannelGains, u64)> {
    let master = cfg.train.seed;
    let path = [n as u64, run as u64];
    let params = crate::topology::ScenarioParams {
        n_links: n,
        ..cfg.scenario
    };
    let scenario = sample_scenario_with(&params, seeds::derive(master, Stream::Scenario, &path))?;
    let mut gains = compute_gains(&scenario, cfg.noise);
    if cfg.shadowing_db > 0.0 {
        apply_shadowing(
            &mut gains,
            cfg.shadowing_db,
            seeds::derive(master, Stream::Shadowing, &path),
        )?;
    }
    Ok((scenario, gains, seeds::derive(master, Stream::Run, &path)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: SchemeKind,
    pub m: usize,
    pub n: usize,
    pub mean_wsee: f64,
    pub std_wsee: f64,
    pub mean_nonzero_u: f64,
    pub mean_wallclock_ms: f64,
    pub runs: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation, 0 for a single value.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mu = mean(v);
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per-(scheme, N) aggregates in sweep order.
pub fn summarize(results: &[RunResult], schemes: &[SchemeKind], n_sweep: &[usize]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &n in n_sweep {
        for &scheme in schemes {
            let sel: Vec<&RunResult> = results.iter().filter(|r| r.n == n && r.scheme == scheme).collect();
            if sel.is_empty() {
                continue;
            }
            let w: Vec<f64> = sel.iter().map(|r| r.wsee).collect();
            let nz: Vec<f64> = sel.iter().map(|r| r.nonzero_u as f64).collect();
            let t: Vec<f64> = sel.iter().map(|r| r.wallclock_ms).collect();
            rows.push(SweepRow {
                scheme,
                m: sel[0].m,
                n,
                mean_wsee: mean(&w),
                std_wsee: std_dev(&w),
                mean_nonzero_u: mean(&nz),
                mean_wallclock_ms: mean(&t),
                runs: sel.len(),
            });
        }
    }
    rows
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))
}

/// Every configured scheme on `runs_per_point` scenarios for each N.
pub fn monte_carlo(cfg: &RunConfig) -> Result<(Vec<RunResult>, Vec<SweepRow>)> {
    let setup = Setup {
        q: &cfg.qos,
        grid: &cfg.training_grid,
        train: &cfg.train,
        coop: &cfg.coop,
    };
    let jobs: Vec<(usize, usize)> = cfg
        .run
        .n_sweep
        .iter()
        .flat_map(|&n| (0..cfg.run.runs_per_point).map(move |r| (n, r)))
        .collect();
    let pool = worker_pool(cfg.workers())?;
    let per_job: Vec<Vec<RunResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, run)| {
                let (scenario, gains, seed) = sweep_instance(cfg, n, run)?;
                run_schemes(&scenario, &gains, &cfg.run.schemes, setup, seed, run)
            })
            .collect::<Result<_>>()
    })?;
    let results: Vec<RunResult> = per_job.into_iter().flatten().collect();
    let rows = summarize(&results, &cfg.run.schemes, &cfg.run.n_sweep);
    Ok((results, rows))
}

fn wallclock_cell(ms: f64, timing: bool) -> String {
    if timing {
        ms.to_string()
    } else {
        String::new()
    }
}

/// `scheme,M,N,mean_wsee,std_wsee,mean_nonzero_u,mean_wallclock_ms,runs`.
pub fn sweep_csv(rows: &[SweepRow], timing: bool) -> String {
    let mut out = String::from("scheme,M,N,mean_wsee,std_wsee,mean_nonzero_u,mean_wallclock_ms,runs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            r.m,
            r.n,
            r.mean_wsee,
            r.std_wsee,
            r.mean_nonzero_u,
            wallclock_cell(r.mean_wallclock_ms, timing),
            r.runs
        );
    }
    out
}

/// `scheme,M,N,run,seed,wsee,nonzero_u,qos_violations,wallclock_ms`.
pub fn runs_csv(results: &[RunResult], timing: bool) -> String {
    let mut out = String::from("scheme,M,N,run,seed,wsee,nonzero_u,qos_violations,wallclock_ms\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            r.m,
            r.n,
            r.run,
            r.seed,
            r.wsee,
            r.nonzero_u,
            r.qos_violations,
            wallclock_cell(r.wallclock_ms, timing)
        );
    }
    out
}

/// Line geometry of the single-pair study, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStudy {
    pub d_cu_bs: f64,
    pub d_dt_bs: f64,
    pub d_dt_dr: f64,
    /// CU to DT distances to visit, in order.
    pub distances: Vec<f64>,
    /// Continue training the previous distance's network.
    pub warm_start: bool,
    /// Timed repetitions per measurement; the fastest is kept.
    pub timing_repeats: usize,
}

impl Default for PairStudy {
    fn default() -> Self {
        Self {
            d_cu_bs: 1000.0,
            d_dt_bs: 500.0,
            d_dt_dr: 500.0,
            distances: vec![500.0, 750.0, 1000.0, 1250.0, 1500.0],
            warm_start: true,
            timing_repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub distance: f64,
    pub scheme: &'static str,
    pub wallclock_ms: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PairStudyReport {
    pub episodes: Vec<(f64, EpisodeRecord)>,
    pub timing: Vec<TimingRow>,
}

fn fastest<T>(repeats: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let mut best = f64::INFINITY;
    let mut value = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let v = f();
        best = best.min(elapsed_ms(t));
        value = Some(v);
    }
    (value.expect("at least one repetition"), best)
}

/// Trains one agent per CU-DT distance on the training grid and times
/// deployment against the exhaustive search on the reporting grid.
pub fn single_pair_study(study: &PairStudy, cfg: &RunConfig) -> Result<PairStudyReport> {
    let mut report = PairStudyReport::default();
    let mut previous = None;
    for (i, &d) in study.distances.iter().enumerate() {
        let scenario = fixed_line_scenario(study.d_cu_bs, study.d_dt_bs, study.d_dt_dr, d, cfg.scenario.pl_exponent)?;
        let gains = compute_gains(&scenario, cfg.noise);
        let link = PairChannel::from_gains(&gains, 0, 0);
        let train = TrainConfig {
            seed: seeds::derive(cfg.train.seed, Stream::AgentInit, &[i as u64]),
            greedy_log_every: 1,
            ..cfg.train.clone()
        };
        let t = Instant::now();
        let mut agent = match previous.take() {
            Some(net) if study.warm_start => Agent::from_network(net, &train),
            _ => Agent::new(&train)?,
        };
        let log = agent.train(&link, &cfg.qos, &cfg.training_grid, &train)?;
        let train_ms = elapsed_ms(t);
        report.episodes.extend(log.into_iter().map(|r| (d, r)));
        let net = agent.into_network();

        let (deployed, deploy_ms) = fastest(study.timing_repeats, || {
            greedy_decision(&net, &link, &cfg.grid, &cfg.qos)
        });
        let (opt, opt_ms) = fastest(study.timing_repeats, || {
            brute_force_pair_opt(&link.gammas, &cfg.qos, &cfg.grid)
        });
        let mut rng = seeds::stream_rng(cfg.train.seed, Stream::RandomScheme, &[i as u64]);
        let (rand_u, rand_ms) = fastest(study.timing_repeats, || {
            let dec = cfg.grid.decision(rng.random_range(0..cfg.grid.joint_size()));
            let ev = evaluate_unchecked(&link.gammas, &dec, &cfg.qos);
            if ev.feasible() {
                ev.u
            } else {
                0.0
            }
        });
        let deployed_u = deployed.map_or(0.0, |(_, u)| u);
        for (scheme, wallclock_ms, u) in [
            ("proposed_training", train_ms, deployed_u),
            ("proposed", deploy_ms, deployed_u),
            ("optimal", opt_ms, opt.map_or(0.0, |o| o.u)),
            ("random", rand_ms, rand_u),
        ] {
            report.timing.push(TimingRow {
                distance: d,
                scheme,
                wallclock_ms,
                u,
            });
        }
        previous = Some(net);
    }
    Ok(report)
}

/// `distance,episode,wsee,epsilon`; `wsee` is the greedy utility.
pub fn episodes_csv(rows: &[(f64, EpisodeRecord)]) -> String {
    let mut out = String::from("distance,episode,wsee,epsilon\n");
    for (d, r) in rows {
        let w = r.greedy_u.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{d},{},{w},{}", r.episode, r.epsilon);
    }
    out
}

/// `distance,scheme,wallclock_ms,u`.
pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("distance,scheme,wallclock_ms,u\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.distance, r.scheme, r.wallclock_ms, r.u);
    }
    out
}
