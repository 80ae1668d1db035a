//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=2,7` runs a subset. Criteria 2 to 4 share one Monte Carlo
//! sweep, so asking for any of them runs all three. The process exits 0 even
//! when a criterion fails, so `cargo test` reports the verdicts without
//! hiding the rest of the suite; `ACCEPTANCE_STRICT=1` turns any FAIL into a
//! non-zero exit.

mod common;

use std::collections::BTreeSet;
use std::process::{Command, ExitCode};
use std::time::Instant;

use coopd2d::config::{Overrides, Preset, RunConfig};
use coopd2d::coopshare::{
    brute_force_pair_opt, default_probe_grid, feasibility_interval, interval_hits_grid, nonconvexity_probe, QosConfig,
};
use coopd2d::dqn::{QNetwork, TrainConfig};
use coopd2d::harness::{monte_carlo, single_pair_study, PairStudy, RunResult, SchemeKind};
use coopd2d::matching::{brute_force_match, km_match, WeightMatrix};
use coopd2d::seeds;
use rand::Rng;

use common::{fd_probe_eigs, gammas_from_log10, rel_err};

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    // no feasible pair anywhere: both schemes score 0
    if b == 0.0 {
        1.0
    } else {
        a / b
    }
}

fn matching_exactness() -> Verdict {
    let t = Instant::now();
    let mut rng = seeds::rng(0xACCE_0001);
    let mut equal = 0;
    for _ in 0..200 {
        let (m, n) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < 0.3 {
                            0.0
                        } else {
                            rng.random_range(0.0..=10.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let u = WeightMatrix::from_rows(&rows).unwrap();
        if km_match(&u).total_weight == brute_force_match(&u).unwrap().total_weight {
            equal += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "matching exactness",
        pass: equal == 200 && secs < 5.0,
        detail: format!("{equal}/200 exact, {secs:.3} s (limit 5 s)"),
    }
}

fn learning_criteria() -> Vec<Verdict> {
    let t = Instant::now();
    let overrides = Overrides {
        runs: Some(20),
        n_sweep: Some(vec![6]),
        m: Some(6),
        ..Overrides::default()
    };
    let cfg = RunConfig::from_toml("", Preset::Desk, &overrides).unwrap();
    assert_eq!(cfg.training_grid.joint_size(), 4_608);
    assert_eq!((cfg.train.episodes, cfg.train.steps_per_episode), (200, 50));
    let (results, _) = monte_carlo(&cfg).unwrap();
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());

    let of = |k: SchemeKind| -> Vec<&RunResult> { results.iter().filter(|r| r.scheme == k).collect() };
    let (opt, rnd, plain, coop) = (
        of(SchemeKind::Optimal),
        of(SchemeKind::Random),
        of(SchemeKind::Proposed),
        of(SchemeKind::ProposedCoopSets),
    );
    assert!([&rnd, &plain, &coop].iter().all(|v| v.len() == opt.len()) && opt.len() == 20);

    let plain_ratio = median(plain.iter().zip(&opt).map(|(p, o)| ratio(p.wsee, o.wsee)).collect());
    let coop_ratio = median(coop.iter().zip(&opt).map(|(c, o)| ratio(c.wsee, o.wsee)).collect());
    let sparse = coop
        .iter()
        .zip(&plain)
        .filter(|(c, p)| c.nonzero_u <= p.nonzero_u)
        .count();
    let bounded = plain.iter().zip(&opt).filter(|(p, o)| o.wsee >= p.wsee).count();
    let beats_random = plain.iter().zip(&rnd).filter(|(p, r)| p.wsee > r.wsee).count();
    let mean_nz = |v: &[&RunResult]| v.iter().map(|r| r.nonzero_u as f64).sum::<f64>() / v.len() as f64;

    let budget = if cores >= 8 {
        format!("{minutes:.1} min on {cores} cores (budget 45)")
    } else {
        format!("{minutes:.1} min on {cores} core(s); the 45 min budget assumes 8 or more")
    };
    let budget_ok = cores < 8 || minutes <= 45.0;
    vec![
        Verdict {
            id: 2,
            name: "per-pair learning vs oracle",
            pass: plain_ratio >= 0.90 && budget_ok,
            detail: format!("median wsee ratio {plain_ratio:.4} (need >= 0.90), {budget}"),
        },
        Verdict {
            id: 3,
            name: "cooperative-set sparsity and cost",
            pass: sparse == 20 && coop_ratio >= 0.75,
            detail: format!(
                "nonzero_u coop <= plain in {sparse}/20 runs (mean {:.2} vs {:.2}), median wsee ratio {coop_ratio:.4} (need >= 0.75)",
                mean_nz(&coop),
                mean_nz(&plain)
            ),
        },
        Verdict {
            id: 4,
            name: "scheme ordering",
            pass: bounded == 20 && beats_random >= 18,
            detail: format!("optimal >= proposed in {bounded}/20, proposed > random in {beats_random}/20 (need 18)"),
        },
    ]
}

fn pair_study_criteria() -> Vec<Verdict> {
    let overrides = Overrides {
        episodes: Some(500),
        steps: Some(100),
        ..Overrides::default()
    };
    let cfg = RunConfig::from_toml("", Preset::Desk, &overrides).unwrap();
    assert_eq!(cfg.grid.joint_size(), 95_832);
    let study = PairStudy {
        distances: vec![500.0],
        ..PairStudy::default()
    };
    let report = single_pair_study(&study, &cfg).unwrap();

    let curve: Vec<f64> = report.episodes.iter().map(|(_, r)| r.greedy_u.unwrap_or(0.0)).collect();
    let last = *curve.last().unwrap();
    let reached = curve.iter().position(|&u| u >= 0.95 * last).unwrap();
    let best = brute_force_pair_opt(
        &coopd2d::dqn::PairChannel::from_gains(
            &coopd2d::channel::compute_gains(
                &coopd2d::topology::fixed_line_scenario(1000.0, 500.0, 500.0, 500.0, cfg.scenario.pl_exponent).unwrap(),
                cfg.noise,
            ),
            0,
            0,
        )
        .gammas,
        &cfg.qos,
        &cfg.training_grid,
    )
    .map_or(0.0, |o| o.u);

    let ms = |scheme: &str| report.timing.iter().find(|t| t.scheme == scheme).unwrap().wallclock_ms;
    let (deploy, exhaustive) = (ms("proposed"), ms("optimal"));
    vec![
        Verdict {
            id: 5,
            name: "convergence shape",
            pass: last > 0.0 && reached <= 200,
            detail: format!(
                "95% of final greedy utility first reached at episode {reached} of {} (need <= 200); final {last:.6e}, training-grid optimum {best:.6e}",
                curve.len()
            ),
        },
        Verdict {
            id: 6,
            name: "timing ordering",
            pass: exhaustive >= 10.0 * deploy,
            detail: format!(
                "exhaustive {exhaustive:.3} ms vs greedy deployment {deploy:.3} ms on {} actions: ratio {:.3} (need >= 10)",
                cfg.grid.joint_size(),
                exhaustive / deploy
            ),
        },
    ]
}

fn nonconvexity() -> Verdict {
    let (betas, xs, ys) = default_probe_grid();
    let (mut points, mut saddles) = (0, 0);
    let mut worst: f64 = 0.0;
    for &beta in &betas {
        for p in nonconvexity_probe(beta, &xs, &ys).unwrap() {
            points += 1;
            saddles += usize::from(p.lambda1 > 0.0 && p.lambda2 < 0.0);
            let (l1, l2) = fd_probe_eigs(beta, p.x, p.y);
            worst = worst.max(rel_err(p.lambda1, l1)).max(rel_err(p.lambda2, l2));
        }
    }
    Verdict {
        id: 7,
        name: "nonconvexity probe",
        pass: saddles == points && worst <= 1e-4,
        detail: format!("{saddles}/{points} points with l1 > 0 > l2, worst eigenvalue error vs finite differences {worst:.2e} (need <= 1e-4)"),
    }
}

fn interval_equivalence() -> Verdict {
    let q = QosConfig::default();
    let grid = coopd2d::coopshare::ActionGrid::build(q.p_min, q.p_max, 9.0, 0.05).unwrap();
    let mut rng = seeds::rng(0xACCE_0008);
    let (mut agree, mut feasible) = (0, 0);
    for _ in 0..500 {
        let g = gammas_from_log10([(); 4].map(|_| rng.random_range(2.0..12.0)));
        let quick = interval_hits_grid(feasibility_interval(&g, &q), &grid);
        let exhaustive = brute_force_pair_opt(&g, &q, &grid).is_some();
        agree += usize::from(quick == exhaustive);
        feasible += usize::from(exhaustive);
    }
    Verdict {
        id: 8,
        name: "closed-form interval equivalence",
        pass: agree == 500,
        detail: format!("{agree}/500 draws agree ({feasible} feasible)"),
    }
}

/// Smallest |pre-activation| over the hidden units for input `x`.
fn hidden_margin(net: &QNetwork, x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let mut margin = f64::INFINITY;
    let hidden = net.layers().len() - 1;
    for l in &net.layers()[..hidden] {
        a = (0..l.outputs)
            .map(|o| {
                let z = l.biases[o] + (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * a[i]).sum::<f64>();
                margin = margin.min(z.abs());
                z.max(0.0)
            })
            .collect();
    }
    margin
}

fn gradient_check() -> Verdict {
    let sizes = TrainConfig::default().layer_sizes();
    let mut rng = seeds::rng(0xACCE_0009);
    let net = QNetwork::init(&sizes, &mut rng).unwrap();
    // keep every ReLU away from its kink so a 1e-6 nudge cannot flip it
    let mut inputs = Vec::new();
    while inputs.len() < 8 {
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        if hidden_margin(&net, &x) > 1e-3 {
            inputs.push(x);
        }
    }
    let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grad) = net.mse_gradient(&inputs, &targets).unwrap();
    let params = net.params();
    let h = 1e-6;
    let mut probe = net.clone();
    let mut loss_at = |p: &[f64]| {
        probe.set_params(p).unwrap();
        probe.mse_gradient(&inputs, &targets).unwrap().0
    };
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = loss_at(&p);
        p[i] = params[i] - h;
        let down = loss_at(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let scale = grad[i].abs().max(fd.abs());
        if scale > 0.0 {
            worst = worst.max((grad[i] - fd).abs() / scale.max(1e-6));
        }
    }
    Verdict {
        id: 9,
        name: "gradient check",
        pass: worst <= 1e-4,
        detail: format!(
            "{} parameters of a {sizes:?} network, max relative error {worst:.2e} (need <= 1e-4)",
            params.len()
        ),
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[scenario]\nm = 3\n\n[train]\nepisodes = 10\nsteps = 10\n\n[run]\nn_sweep = [3, 4]\n",
    )
    .unwrap();
    let sweep = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_coopd2d"))
            .args(["sweep", "--preset", "desk", "-c"])
            .arg(&cfg)
            .args(["--runs", "2", "--seed", "123", "--workers", workers, "--out"])
            .arg(&out)
            .env_remove("COOPD2D_WORKERS")
            .status()
            .unwrap();
        assert!(status.success());
        ["sweep.csv", "runs.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let first = sweep("a", "1");
    let again = sweep("b", "1");
    let wide = sweep("c", "4");
    Verdict {
        id: 10,
        name: "determinism",
        pass: first == again && first == wide,
        detail: format!(
            "sweep.csv/runs.csv identical across invocations: {}, across workers 1 and 4: {}",
            first == again,
            first == wide
        ),
    }
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |ids: &[usize]| only.as_ref().is_none_or(|o| ids.iter().any(|i| o.contains(i)));

    let mut verdicts = Vec::new();
    let mut run = |ids: &[usize], f: &dyn Fn() -> Vec<Verdict>| {
        if wanted(ids) {
            for v in f() {
                println!(
                    "{} criterion {:>2} {}: {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.id,
                    v.name,
                    v.detail
                );
                verdicts.push(v);
            }
        }
    };
    run(&[1], &|| vec![matching_exactness()]);
    run(&[7], &|| vec![nonconvexity()]);
    run(&[8], &|| vec![interval_equivalence()]);
    run(&[9], &|| vec![gradient_check()]);
    run(&[10], &|| vec![determinism()]);
    run(&[5, 6], &pair_study_criteria);
    run(&[2, 3, 4], &learning_criteria);

    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if !failed.is_empty() {
        println!("failing: {failed:?}");
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
