//! Node layouts: random single-cell scenarios and fixed-distance single-pair
//! geometries.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Point2, b: Point2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// A single cell: base station at the origin, `M` cellular users and `N`
/// D2D pairs (transmitter `dt[n]`, receiver `dr[n]`).
#[derive(Debug, Clone, PartialEq)]
pub struct CellScenario {
    pub radius: f64,
    pub bs_pos: Point2,
    pub cu_positions: Vec<Point2>,
    pub dt_positions: Vec<Point2>,
    pub dr_positions: Vec<Point2>,
    pub pl_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub m_links: usize,
    pub n_links: usize,
    pub radius: f64,
    pub pl_exponent: f64,
    /// Optional cap on the DT–DR distance; a receiver farther than this from
    /// its transmitter is redrawn.
    pub d2d_max_pair_distance: Option<f64>,
}

impl CellScenario {
    pub fn m(&self) -> usize {
        self.cu_positions.len()
    }

    pub fn n(&self) -> usize {
        self.dt_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cu_positions.is_empty() {
            return Err(Error::arg("scenario needs at least one cellular user"));
        }
        if self.dt_positions.is_empty() || self.dt_positions.len() != self.dr_positions.len() {
            return Err(Error::arg("scenario needs N >= 1 transmitters and as many receivers"));
        }
        if !(self.pl_exponent > 0.0) || !self.pl_exponent.is_finite() {
            return Err(Error::arg("path-loss exponent must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::arg("cell radius must be positive"));
        }
        Ok(())
    }

    /// Copy with every coordinate (and the radius) multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let sc = |v: &[Point2]| v.iter().map(|p| p.scaled(k)).collect();
        Self {
            radius: self.radius * k,
            bs_pos: self.bs_pos.scaled(k),
            cu_positions: sc(&self.cu_positions),
            dt_positions: sc(&self.dt_positions),
            dr_positions: sc(&self.dr_positions),
            pl_exponent: self.pl_exponent,
        }
    }

    /// One row per node: `kind,index,x_m,y_m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,x_m,y_m\n");
        let _ = writeln!(out, "BS,0,{},{}", self.bs_pos.x, self.bs_pos.y);
        for (kind, pts) in [
            ("CU", &self.cu_positions),
            ("DT", &self.dt_positions),
            ("DR", &self.dr_positions),
        ] {
            for (i, p) in pts.iter().enumerate() {
                let _ = writeln!(out, "{kind},{i},{},{}", p.x, p.y);
            }
        }
        out
    }

    /// Inverse of [`CellScenario::to_csv`]. The CSV carries positions only, so
    /// the radius and path-loss exponent are supplied by the caller.
    pub fn from_csv(text: &str, radius: f64, pl_exponent: f64) -> Result<Self> {
        let mut bs = None;
        let mut cu: Vec<Option<Point2>> = Vec::new();
        let mut dt: Vec<Option<Point2>> = Vec::new();
        let mut dr: Vec<Option<Point2>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("kind")) {
                continue;
            }
            let bad = |reason: &str| Error::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let idx: usize = cols[1].parse().map_err(|_| bad("bad index"))?;
            let x: f64 = cols[2].parse().map_err(|_| bad("bad x_m"))?;
            let y: f64 = cols[3].parse().map_err(|_| bad("bad y_m"))?;
            let p = Point2::new(x, y);
            let slot = match cols[0] {
                "BS" => {
                    bs = Some(p);
                    continue;
                }
                "CU" => &mut cu,
                "DT" => &mut dt,
                "DR" => &mut dr,
                _ => return Err(bad("unknown node kind")),
            };
            if slot.len() <= idx {
                slot.resize(idx + 1, None);
            }
            if slot[idx].replace(p).is_some() {
                return Err(bad("duplicate node"));
            }
        }
        let collect = |v: Vec<Option<Point2>>, what: &str| -> Result<Vec<Point2>> {
            v.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::arg(format!("missing {what} index in CSV")))
        };
        let s = CellScenario {
            radius,
            bs_pos: bs.unwrap_or(Point2::ORIGIN),
            cu_positions: collect(cu, "CU")?,
            dt_positions: collect(dt, "DT")?,
            dr_positions: collect(dr, "DR")?,
            pl_exponent,
        };
        s.validate()?;
        Ok(s)
    }
}

fn disk_point<R: Rng>(rng: &mut R, radius: f64) -> Point2 {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    Point2::new(r * phi.cos(), r * phi.sin())
}

/// Uniform random layout in a disk of the given radius around the origin.
pub fn sample_scenario(
    m_links: usize,
    n_links: usize,
    radius: f64,
    pl_exponent: f64,
    seed: u64,
) -> Result<CellScenario> {
    sample_scenario_with(
        &ScenarioParams {
            m_links,
            n_links,
            radius,
            pl_exponent,
            d2d_max_pair_distance: None,
        },
        seed,
    )
}

pub fn sample_scenario_with(params: &ScenarioParams, seed: u64) -> Result<CellScenario> {
    if params.m_links == 0 || params.n_links == 0 {
        return Err(Error::arg("m_links and n_links must be at least 1"));
    }
    if !(params.radius > 0.0) || !params.radius.is_finite() {
        return Err(Error::arg("radius must be a positive finite number"));
    }
    if !(params.pl_exponent > 0.0) {
        return Err(Error::arg("path-loss exponent must be positive"));
    }
    if let Some(cap) = params.d2d_max_pair_distance {
        if !(cap > 0.0) {
            return Err(Error::arg("d2d_max_pair_distance must be positive"));
        }
    }
    let mut rng = seeds::stream_rng(seed, Stream::Scenario, &[]);
    let r = params.radius;
    let cu = (0..params.m_links).map(|_| disk_point(&mut rng, r)).collect();
    let dt: Vec<Point2> = (0..params.n_links).map(|_| disk_point(&mut rng, r)).collect();
    let dr = dt
        .iter()
        .map(|&t| loop {
            let p = disk_point(&mut rng, r);
            match params.d2d_max_pair_distance {
                Some(cap) if distance(p, t) > cap => continue,
                _ => break p,
            }
        })
        .collect();
    Ok(CellScenario {
        radius: r,
        bs_pos: Point2::ORIGIN,
        cu_positions: cu,
        dt_positions: dt,
        dr_positions: dr,
        pl_exponent: params.pl_exponent,
    })
}

/// Single-pair geometry with the DT on the positive x axis.
///
/// The CU sits on the intersection of the circle of radius `d_cu_bs` around
/// the BS and the circle of radius `d_cu_dt` around the DT (upper half-plane);
/// the DR sits `d_dt_dr` away from the DT, perpendicular to the BS–DT axis.
pub fn fixed_line_scenario(
    d_cu_bs: f64,
    d_dt_bs: f64,
    d_dt_dr: f64,
    d_cu_dt: f64,
    pl_exponent: f64,
) -> Result<CellScenario> {
    for (name, v) in [
        ("d_cu_bs", d_cu_bs),
        ("d_dt_bs", d_dt_bs),
        ("d_dt_dr", d_dt_dr),
        ("d_cu_dt", d_cu_dt),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
        }
    }
    let slack = 1e-12 * (d_cu_bs + d_dt_bs);
    if d_cu_dt < (d_cu_bs - d_dt_bs).abs() - slack || d_cu_dt > d_cu_bs + d_dt_bs + slack {
        return Err(Error::Geometry(format!(
            "no triangle with sides {d_cu_bs}, {d_dt_bs}, {d_cu_dt}"
        )));
    }
    let x = (d_cu_bs * d_cu_bs - d_cu_dt * d_cu_dt + d_dt_bs * d_dt_bs) / (2.0 * d_dt_bs);
    let y = (d_cu_bs * d_cu_bs - x * x).max(0.0).sqrt();
    let cu = Point2::new(x, y);
    let dt = Point2::new(d_dt_bs, 0.0);
    let dr = Point2::new(d_dt_bs, d_dt_dr);
    let radius = [cu.norm(), dt.norm(), dr.norm()]
        .into_iter()
        .fold(f64::MIN_POSITIVE, f64::max);
    Ok(CellScenario {
        radius,
        bs_pos: Point2::ORIGIN,
        cu_positions: vec![cu],
        dt_positions: vec![dt],
        dr_positions: vec![dr],
        pl_exponent,
    })
}
