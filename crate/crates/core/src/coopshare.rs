//! Per-pair cooperative spectrum sharing: spectral efficiency, power
//! consumption, energy efficiency and utility of one cellular/D2D pair, the
//! QoS-shaped reward, the discrete action lattice, the closed-form
//! feasibility interval for the sharing factor and the exhaustive per-pair
//! optimizer.
//!
//! Powers are in watts throughout; dBm only appears in [`dbm_to_watts`] and
//! [`watts_to_dbm`].

use std::f64::consts::LN_2;

use crate::channel::PairGammas;
use crate::error::{Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// QoS targets, link weights, power limits and reward-shaping constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosConfig {
    /// Minimum cellular SE, bps/Hz.
    pub q_c: f64,
    /// Minimum D2D SE, bps/Hz.
    pub q_d: f64,
    pub mu: f64,
    pub nu: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Penalty constant for a cellular QoS shortfall.
    pub phi: f64,
    /// Penalty constant for a D2D QoS shortfall.
    pub phi2: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        Self {
            q_c: 5.0,
            q_d: 3.0,
            mu: 1.0,
            nu: 1.0,
            p_min: dbm_to_watts(-40.0),
            p_max: dbm_to_watts(23.0),
            phi: 1.0,
            phi2: 1.0,
        }
    }
}

impl QosConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} must be positive, got {v}")))
            }
        };
        pos("q_c", self.q_c)?;
        pos("q_d", self.q_d)?;
        pos("mu", self.mu)?;
        pos("nu", self.nu)?;
        pos("p_min", self.p_min)?;
        pos("p_max", self.p_max)?;
        if self.p_min > self.p_max {
            return Err(Error::arg("p_min must not exceed p_max"));
        }
        if !(self.phi >= 0.0) || !(self.phi2 >= 0.0) {
            return Err(Error::arg("penalty constants must be non-negative"));
        }
        Ok(())
    }
}

/// Transmit powers and sharing factor of one matched pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceDecision {
    /// CU transmit power (phase one).
    pub p_c: f64,
    /// DT relaying power (phase two).
    pub p_r: f64,
    /// DT power for its own data (phase three).
    pub p_d: f64,
    /// Duration of each relay phase as a fraction of the resource block.
    pub theta: f64,
}

impl ResourceDecision {
    pub fn validate(&self, q: &QosConfig) -> Result<()> {
        let tol = 1e-12 * q.p_max;
        for (name, p) in [("p_c", self.p_c), ("p_r", self.p_r), ("p_d", self.p_d)] {
            if !(p >= q.p_min - tol && p <= q.p_max + tol) {
                return Err(Error::arg(format!("{name} = {p} W outside [{}, {}]", q.p_min, q.p_max)));
            }
        }
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return Err(Error::arg(format!("theta = {} outside (0, 0.5)", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvaluation {
    pub se_c: f64,
    pub se_d: f64,
    pub pbar_c: f64,
    pub pbar_d: f64,
    pub ee_c: f64,
    pub ee_d: f64,
    pub u: f64,
    pub c1_ok: bool,
    pub c2_ok: bool,
}

impl PairEvaluation {
    pub fn feasible(&self) -> bool {
        self.c1_ok && self.c2_ok
    }
}

#[inline]
pub(crate) fn evaluate_unchecked(g: &PairGammas, d: &ResourceDecision, q: &QosConfig) -> PairEvaluation {
    let direct = g.mn * d.p_c;
    let relayed = g.mb * d.p_c + g.nb * d.p_r;
    let se_c = d.theta * (1.0 + direct.min(relayed)).log2();
    let se_d = (1.0 - 2.0 * d.theta) * (1.0 + g.nn * d.p_d).log2();
    let pbar_c = d.theta * d.p_c;
    let pbar_d = d.theta * d.p_r + (1.0 - 2.0 * d.theta) * d.p_d;
    let ee_c = se_c / pbar_c;
    let ee_d = se_d / pbar_d;
    PairEvaluation {
        se_c,
        se_d,
        pbar_c,
        pbar_d,
        ee_c,
        ee_d,
        u: q.mu * ee_c + q.nu * ee_d,
        c1_ok: se_c >= q.q_c,
        c2_ok: se_d >= q.q_d,
    }
}

/// SE, average power, EE and weighted utility of one pair under decode-and-
/// forward relaying with sharing factor `theta`.
pub fn evaluate_pair(g: &PairGammas, d: &ResourceDecision, q: &QosConfig) -> Result<PairEvaluation> {
    g.validate()?;
    d.validate(q)?;
    Ok(evaluate_unchecked(g, d, q))
}

/// Utility scaled down in proportion to the relative QoS shortfalls.
pub fn reward(ev: &PairEvaluation, q: &QosConfig) -> f64 {
    let short_c = (ev.se_c - q.q_c).min(0.0) / q.q_c;
    let short_d = (ev.se_d - q.q_d).min(0.0) / q.q_d;
    ev.u * (1.0 + q.phi * short_c + q.phi2 * short_d)
}

/// Coordinates of one joint action on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionCoords {
    pub c: usize,
    pub r: usize,
    pub d: usize,
    pub theta: usize,
}

/// Discrete lattice of joint actions: three power levels and one sharing
/// factor, encoded mixed-radix as `((c * I + r) * I + d) * L + theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    power_levels: Vec<f64>,
    theta_levels: Vec<f64>,
}

impl ActionGrid {
    /// Geometric power levels from `p_min` to `p_max` in steps of `dp_db`,
    /// sharing factors `dtheta, 2 dtheta, ..., 0.5 - dtheta`.
    pub fn build(p_min: f64, p_max: f64, dp_db: f64, dtheta: f64) -> Result<Self> {
        if !(p_min > 0.0) || !(p_max >= p_min) {
            return Err(Error::config("grid.p_range", "need 0 < p_min <= p_max"));
        }
        if !(dp_db > 0.0) {
            return Err(Error::config("grid.dp_db", "must be positive"));
        }
        let span_db = 10.0 * (p_max / p_min).log10();
        let steps_f = span_db / dp_db;
        let steps = steps_f.round();
        if (steps_f - steps).abs() > 1e-9 {
            return Err(Error::config(
                "grid.dp_db",
                format!("{dp_db} dB does not divide the {span_db} dB power span"),
            ));
        }
        let steps = steps as usize;
        let mut power_levels: Vec<f64> = (0..=steps)
            .map(|i| p_min * 10f64.powf(i as f64 * dp_db / 10.0))
            .collect();
        *power_levels.last_mut().expect("at least one level") = p_max;

        if !(dtheta > 0.0) {
            return Err(Error::config("grid.dtheta", "must be positive"));
        }
        let parts_f = 0.5 / dtheta;
        let parts = parts_f.round();
        if (parts_f - parts).abs() > 1e-9 || parts < 2.0 {
            return Err(Error::config(
                "grid.dtheta",
                format!("0.5 / {dtheta} must be an integer >= 2"),
            ));
        }
        let theta_levels = (1..parts as usize).map(|k| k as f64 * dtheta).collect();
        Ok(Self {
            power_levels,
            theta_levels,
        })
    }

    /// Arbitrary lattice, mainly for restricted oracles.
    pub fn from_levels(power_levels: Vec<f64>, theta_levels: Vec<f64>) -> Result<Self> {
        if power_levels.is_empty() || theta_levels.is_empty() {
            return Err(Error::arg("grid needs at least one power and one theta level"));
        }
        if power_levels.windows(2).any(|w| !(w[0] < w[1])) || !(power_levels[0] > 0.0) {
            return Err(Error::arg("power levels must be positive and strictly increasing"));
        }
        if theta_levels.windows(2).any(|w| !(w[0] < w[1])) || theta_levels.iter().any(|&t| !(t > 0.0 && t < 0.5)) {
            return Err(Error::arg("theta levels must be strictly increasing within (0, 0.5)"));
        }
        Ok(Self {
            power_levels,
            theta_levels,
        })
    }

    pub fn power_levels(&self) -> &[f64] {
        &self.power_levels
    }

    pub fn theta_levels(&self) -> &[f64] {
        &self.theta_levels
    }

    pub fn n_power(&self) -> usize {
        self.power_levels.len()
    }

    pub fn n_theta(&self) -> usize {
        self.theta_levels.len()
    }

    pub fn joint_size(&self) -> usize {
        self.n_power().pow(3) * self.n_theta()
    }

    pub fn encode(&self, a: ActionCoords) -> usize {
        let i = self.n_power();
        ((a.c * i + a.r) * i + a.d) * self.n_theta() + a.theta
    }

    pub fn decode(&self, index: usize) -> ActionCoords {
        let i = self.n_power();
        let l = self.n_theta();
        ActionCoords {
            theta: index % l,
            d: (index / l) % i,
            r: (index / (l * i)) % i,
            c: index / (l * i * i),
        }
    }

    pub fn decision(&self, index: usize) -> ResourceDecision {
        let a = self.decode(index);
        ResourceDecision {
            p_c: self.power_levels[a.c],
            p_r: self.power_levels[a.r],
            p_d: self.power_levels[a.d],
            theta: self.theta_levels[a.theta],
        }
    }

    /// Index of the lattice point with every coordinate at its middle level.
    pub fn midpoint(&self) -> usize {
        let p = self.n_power() / 2;
        self.encode(ActionCoords {
            c: p,
            r: p,
            d: p,
            theta: self.n_theta() / 2,
        })
    }
}

/// Closed-form sharing-factor interval obtained by setting all three powers
/// to `p_max`. Returns `None` when the interval is empty or misses (0, 0.5).
pub fn feasibility_interval(g: &PairGammas, q: &QosConfig) -> Option<(f64, f64)> {
    let cell = (1.0 + q.p_max * g.mn.min(g.mb + g.nb)).log2();
    let d2d = (1.0 + q.p_max * g.nn).log2();
    let lo = q.q_c / cell;
    let hi = 0.5 - q.q_d / (2.0 * d2d);
    (lo <= hi && lo < 0.5 && hi > 0.0).then_some((lo, hi))
}

/// Whether any sharing-factor level of `grid` lies inside the interval.
pub fn interval_hits_grid(interval: Option<(f64, f64)>, grid: &ActionGrid) -> bool {
    interval.is_some_and(|(lo, hi)| grid.theta_levels().iter().any(|&t| t >= lo && t <= hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptimum {
    pub index: usize,
    pub decision: ResourceDecision,
    pub u: f64,
}

/// Exhaustive sweep of the joint action lattice. Among QoS-feasible actions
/// returns the utility maximizer, lowest index on ties.
pub fn brute_force_pair_opt(g: &PairGammas, q: &QosConfig, grid: &ActionGrid) -> Option<PairOptimum> {
    let mut best: Option<(usize, f64)> = None;
    for index in 0..grid.joint_size() {
        let ev = evaluate_unchecked(g, &grid.decision(index), q);
        if ev.feasible() && best.is_none_or(|(_, u)| ev.u > u) {
            best = Some((index, ev.u));
        }
    }
    best.map(|(index, u)| PairOptimum {
        index,
        decision: grid.decision(index),
        u,
    })
}

/// Hessian of `f(x, y) = (2y - 1) log2(1 + beta x)` and its eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePoint {
    pub beta: f64,
    pub x: f64,
    pub y: f64,
    pub h11: f64,
    pub h12: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

pub fn probe_point(beta: f64, x: f64, y: f64) -> ProbePoint {
    let s = 1.0 + beta * x;
    let h11 = beta * beta * (1.0 - 2.0 * y) / (s * s * LN_2);
    let h12 = 2.0 * beta / (s * LN_2);
    let half = h11 / 2.0;
    let root = half.hypot(h12);
    let lambda1 = half + root;
    // same root as half - root, without the cancellation when h11 >> h12
    let lambda2 = -(h12 * h12) / lambda1;
    ProbePoint {
        beta,
        x,
        y,
        h11,
        h12,
        lambda1,
        lambda2,
    }
}

/// Default probe grid: the four `beta` values, 50 log-spaced `x` in
/// `(1e-3, 1e2]` and 50 evenly spaced `y` strictly inside `(0.01, 0.49)`.
pub fn default_probe_grid() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let betas = vec![0.1, 1.0, 10.0, 1e3];
    let xs = (1..=50).map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / 50.0)).collect();
    let ys = (1..=50).map(|i| 0.01 + 0.48 * i as f64 / 51.0).collect();
    (betas, xs, ys)
}

/// `beta,x,y,h11,h12,lambda1,lambda2`.
pub fn probe_csv(points: &[ProbePoint]) -> String {
    let mut out = String::from("beta,x,y,h11,h12,lambda1,lambda2\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.beta, p.x, p.y, p.h11, p.h12, p.lambda1, p.lambda2
        ));
    }
    out
}

pub fn nonconvexity_probe(beta: f64, x_grid: &[f64], y_grid: &[f64]) -> Result<Vec<ProbePoint>> {
    if !(beta > 0.0) {
        return Err(Error::arg("beta must be positive"));
    }
    if x_grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::arg("x values must be positive"));
    }
    if y_grid.iter().any(|&y| !(y > 0.0 && y < 0.5)) {
        return Err(Error::arg("y values must lie in (0, 0.5)"));
    }
    Ok(x_grid
        .iter()
        .flat_map(|&x| y_grid.iter().map(move |&y| probe_point(beta, x, y)))
        .collect())
}
