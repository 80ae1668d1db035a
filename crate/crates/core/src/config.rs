//! Run configuration.
//!
//! A TOML file with the sections `scenario`, `qos`, `grid`, `train`,
//! `coopset`, `noise` and `run`. Every key is optional; missing keys take the
//! defaults below. Layers are merged in the order defaults, preset, file,
//! command-line overrides, and the result is validated as a whole.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::NoiseModel;
use crate::coopset::CoopSetConfig;
use crate::coopshare::{dbm_to_watts, ActionGrid, QosConfig};
use crate::dqn::{EpsilonSchedule, Optimizer, RewardTransform, TrainConfig};
use crate::error::{Error, Result};
use crate::harness::SchemeKind;
use crate::topology::ScenarioParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub m: usize,
    pub n: usize,
    pub radius: f64,
    pub pl_exponent: f64,
    /// Log-normal shadowing standard deviation in dB; 0 disables it.
    pub shadowing_db: f64,
    /// Redraw receivers farther than this from their transmitter.
    pub d2d_max_pair_distance: Option<f64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            m: 10,
            n: 10,
            radius: 500.0,
            pl_exponent: 3.8,
            shadowing_db: 0.0,
            d2d_max_pair_distance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QosSection {
    pub q_c: f64,
    pub q_d: f64,
    pub mu: f64,
    pub nu: f64,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub phi: f64,
    pub phi2: f64,
}

impl Default for QosSection {
    fn default() -> Self {
        Self {
            q_c: 5.0,
            q_d: 3.0,
            mu: 1.0,
            nu: 1.0,
            p_min_dbm: -40.0,
            p_max_dbm: 23.0,
            phi: 1.0,
            phi2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Power step of the reporting grid.
    pub dp_db: f64,
    pub dtheta: f64,
    /// Power step of the grid the learners and sweeps use.
    pub training_dp_db: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dp_db: 3.0,
            dtheta: 0.05,
            training_dp_db: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: usize,
    pub steps: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub discount: f64,
    pub replay: usize,
    pub hidden: Vec<usize>,
    pub epsilon_horizon: f64,
    pub epsilon_floor: f64,
    pub reward_transform: RewardTransform,
    pub target_candidates: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            episodes: t.episodes,
            steps: t.steps_per_episode,
            minibatch: t.minibatch,
            lr: t.learning_rate,
            optimizer: t.optimizer,
            discount: t.discount,
            replay: t.replay_capacity,
            hidden: t.hidden,
            epsilon_horizon: t.epsilon.horizon,
            epsilon_floor: t.epsilon.floor,
            reward_transform: t.reward_transform,
            target_candidates: t.target_candidates,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoopSetSection {
    pub r1_m: f64,
    pub r2_m: f64,
}

impl Default for CoopSetSection {
    fn default() -> Self {
        Self {
            r1_m: 375.0,
            r2_m: 375.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub n0_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            n0_dbm_per_hz: -174.0,
            bandwidth_hz: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub schemes: Vec<SchemeKind>,
    pub runs_per_point: usize,
    pub n_sweep: Vec<usize>,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Record wallclock columns. Off by default so output tables are
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            schemes: SchemeKind::ALL.to_vec(),
            runs_per_point: 1000,
            n_sweep: (5..=15).collect(),
            workers: 0,
            out_dir: PathBuf::from("out"),
            timing: false,
        }
    }
}

/// File-level view of the configuration, in the units users write.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: ScenarioSection,
    pub qos: QosSection,
    pub grid: GridSection,
    pub train: TrainSection,
    pub coopset: CoopSetSection,
    pub noise: NoiseSection,
    pub run: RunSection,
}

/// Named starting points that a file and flags then refine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Full-scale study: M = 10, N = 5..15, 1000 runs, 500 episodes of 100 steps.
    Full,
    /// A sweep that finishes on a workstation: M = 6, N = 3..8, 20 runs,
    /// 200 episodes of 50 steps, QoS penalty weights 20.
    Desk,
}

impl Preset {
    pub fn raw(self) -> RawConfig {
        let mut c = RawConfig::default();
        if self == Preset::Desk {
            c.scenario.m = 6;
            c.scenario.n = 6;
            c.run.n_sweep = (3..=8).collect();
            c.run.runs_per_point = 20;
            c.train.episodes = 200;
            c.train.steps = 50;
            c.qos.phi = 20.0;
            c.qos.phi2 = 20.0;
        }
        c
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub n_sweep: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub episodes: Option<usize>,
    pub steps: Option<usize>,
    pub timing: Option<bool>,
}

impl Overrides {
    fn apply(&self, c: &mut RawConfig) {
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.runs {
            c.run.runs_per_point = v;
        }
        if let Some(v) = self.workers {
            c.run.workers = v;
        }
        if let Some(v) = &self.out_dir {
            c.run.out_dir = v.clone();
        }
        if let Some(v) = &self.n_sweep {
            c.run.n_sweep = v.clone();
        }
        if let Some(v) = self.m {
            c.scenario.m = v;
        }
        if let Some(v) = self.episodes {
            c.train.episodes = v;
        }
        if let Some(v) = self.steps {
            c.train.steps = v;
        }
        if let Some(v) = self.timing {
            c.run.timing = v;
        }
    }
}

/// Validated configuration in internal units (watts, linear gains).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub scenario: ScenarioParams,
    pub shadowing_db: f64,
    pub qos: QosConfig,
    pub noise: NoiseModel,
    /// Reporting grid.
    pub grid: ActionGrid,
    pub training_grid: ActionGrid,
    pub train: TrainConfig,
    pub coop: CoopSetConfig,
    pub run: RunSection,
    /// Worker count came from the command line and beats the environment.
    pub workers_pinned: bool,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, "must be finite"))
    }
}

fn nonneg(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be non-negative, got {v}")))
    }
}

fn count(path: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::config(path, "must be at least 1"))
    }
}

/// Re-labels module validation errors with the file-level key.
fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { reason, .. } => Error::config(path, reason),
        other => Error::config(path, other.to_string()),
    })
}

impl RunConfig {
    /// Parses TOML text layered over `preset` and applies `overrides`.
    pub fn from_toml(text: &str, preset: Preset, overrides: &Overrides) -> Result<Self> {
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut table = toml::Table::try_from(preset.raw()).map_err(|e| Error::config("<preset>", e.to_string()))?;
        merge(&mut table, file);
        let mut raw: RawConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        overrides.apply(&mut raw);
        let mut cfg = Self::from_raw(raw)?;
        cfg.workers_pinned = overrides.workers.is_some();
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, preset: Preset, overrides: &Overrides) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?,
            None => String::new(),
        };
        Self::from_toml(&text, preset, overrides)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let s = &raw.scenario;
        count("scenario.m", s.m)?;
        count("scenario.n", s.n)?;
        positive("scenario.radius", s.radius)?;
        positive("scenario.pl_exponent", s.pl_exponent)?;
        nonneg("scenario.shadowing_db", s.shadowing_db)?;
        if let Some(d) = s.d2d_max_pair_distance {
            positive("scenario.d2d_max_pair_distance", d)?;
        }

        let qs = &raw.qos;
        finite("qos.p_min_dbm", qs.p_min_dbm)?;
        finite("qos.p_max_dbm", qs.p_max_dbm)?;
        if qs.p_min_dbm > qs.p_max_dbm {
            return Err(Error::config(
                "qos.p_min_dbm",
                format!("{} dBm exceeds qos.p_max_dbm = {} dBm", qs.p_min_dbm, qs.p_max_dbm),
            ));
        }
        positive("qos.q_c", qs.q_c)?;
        positive("qos.q_d", qs.q_d)?;
        nonneg("qos.mu", qs.mu)?;
        nonneg("qos.nu", qs.nu)?;
        nonneg("qos.phi", qs.phi)?;
        nonneg("qos.phi2", qs.phi2)?;
        let qos = QosConfig {
            q_c: qs.q_c,
            q_d: qs.q_d,
            mu: qs.mu,
            nu: qs.nu,
            p_min: dbm_to_watts(qs.p_min_dbm),
            p_max: dbm_to_watts(qs.p_max_dbm),
            phi: qs.phi,
            phi2: qs.phi2,
        };
        at("qos", qos.validate())?;

        let g = &raw.grid;
        let grid = at("grid.dp_db", ActionGrid::build(qos.p_min, qos.p_max, g.dp_db, g.dtheta))?;
        let training_grid = at(
            "grid.training_dp_db",
            ActionGrid::build(qos.p_min, qos.p_max, g.training_dp_db, g.dtheta),
        )?;

        let t = &raw.train;
        let train = TrainConfig {
            episodes: t.episodes,
            steps_per_episode: t.steps,
            minibatch: t.minibatch,
            learning_rate: t.lr,
            optimizer: t.optimizer,
            discount: t.discount,
            replay_capacity: t.replay,
            hidden: t.hidden.clone(),
            epsilon: EpsilonSchedule {
                horizon: t.epsilon_horizon,
                floor: t.epsilon_floor,
            },
            reward_transform: t.reward_transform,
            target_candidates: t.target_candidates,
            greedy_log_every: 1,
            seed: t.seed,
        };
        train.validate()?;

        let coop = CoopSetConfig {
            r_n1: raw.coopset.r1_m,
            r_n2: raw.coopset.r2_m,
        };
        positive("coopset.r1_m", coop.r_n1)?;
        positive("coopset.r2_m", coop.r_n2)?;

        let noise = at(
            "noise",
            NoiseModel::new(raw.noise.n0_dbm_per_hz, raw.noise.bandwidth_hz),
        )?;

        let r = &raw.run;
        count("run.runs_per_point", r.runs_per_point)?;
        if r.n_sweep.is_empty() || r.n_sweep.contains(&0) {
            return Err(Error::config("run.n_sweep", "needs at least one positive link count"));
        }
        if r.schemes.is_empty() {
            return Err(Error::config("run.schemes", "needs at least one scheme"));
        }

        Ok(Self {
            scenario: ScenarioParams {
                m_links: s.m,
                n_links: s.n,
                radius: s.radius,
                pl_exponent: s.pl_exponent,
                d2d_max_pair_distance: s.d2d_max_pair_distance,
            },
            shadowing_db: s.shadowing_db,
            qos,
            noise,
            grid,
            training_grid,
            train,
            coop,
            run: raw.run.clone(),
            raw,
            workers_pinned: false,
        })
    }

    /// Worker count: command line, then `COOPD2D_WORKERS`, then the file.
    pub fn workers(&self) -> usize {
        let from_env = std::env::var("COOPD2D_WORKERS")
            .ok()
            .and_then(|v| v.trim().parse().ok());
        let n = if self.workers_pinned {
            self.run.workers
        } else {
            from_env.unwrap_or(self.run.workers)
        };
        match n {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

/// Parses `start:end:step` (inclusive end) or a single value.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::arg(format!("`{s}` is not a number in range `{text}`")))
    };
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(Error::arg(format!("range `{text}` needs start <= end and step > 0")));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * step).collect())
        }
        [a, b] => {
            let (a, b) = (num(a)?, num(b)?);
            if b < a || a.fract() != 0.0 || b.fract() != 0.0 {
                return Err(Error::arg(format!("range `{text}` needs integers with start <= end")));
            }
            Ok((a as i64..=b as i64).map(|v| v as f64).collect())
        }
        _ => Err(Error::arg(format!("cannot parse range `{text}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Preset::Full, &Overrides::default())
    }

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = load("").unwrap();
        assert_eq!(c.raw, RawConfig::default());
        assert_eq!(c.scenario.m_links, 10);
        assert_eq!(c.run.n_sweep, (5..=15).collect::<Vec<_>>());
        assert_eq!(c.raw.scenario.radius, 500.0);
        assert_eq!(c.raw.coopset.r1_m, 375.0);
        assert_eq!(c.raw.scenario.pl_exponent, 3.8);
        assert_eq!(c.raw.noise.n0_dbm_per_hz, -174.0);
        assert_eq!(c.grid.joint_size(), 95_832);
        assert_eq!(
            (c.qos.q_c, c.qos.q_d, c.qos.mu, c.qos.nu, c.qos.phi, c.qos.phi2),
            (5.0, 3.0, 1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn inverted_power_range_names_the_field() {
        let e = load("[qos]\np_min_dbm = 30\n").unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "qos.p_min_dbm"),
            "{e}"
        );
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = load("[qos]\nq_x = 1\n").unwrap_err();
        assert!(e.to_string().contains("q_x"), "{e}");
        let e = load("[nonsense]\na = 1\n").unwrap_err();
        assert!(e.to_string().contains("nonsense"), "{e}");
        let e = load("[train]\nepisodes = \"many\"\n").unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "train.episodes"),
            "{e}"
        );
    }

    #[test]
    fn flags_override_file() {
        let o = Overrides {
            seed: Some(7),
            ..Default::default()
        };
        let c = RunConfig::from_toml("[train]\nseed = 3\n", Preset::Full, &o).unwrap();
        assert_eq!(c.train.seed, 7);
        let c = load("[train]\nseed = 3\n").unwrap();
        assert_eq!(c.train.seed, 3);
    }

    #[test]
    fn file_overrides_preset() {
        let c = RunConfig::from_toml("[run]\nruns_per_point = 2\n", Preset::Desk, &Overrides::default()).unwrap();
        assert_eq!(c.run.runs_per_point, 2);
        assert_eq!(c.scenario.m_links, 6);
        assert_eq!(c.train.episodes, 200);
    }

    #[test]
    fn ranges() {
        assert_eq!(
            parse_range("500:1500:250").unwrap(),
            vec![500.0, 750.0, 1000.0, 1250.0, 1500.0]
        );
        assert_eq!(parse_range("3:5").unwrap(), vec![3.0, 4.0, 5.0]);
        assert_eq!(parse_range("7").unwrap(), vec![7.0]);
        assert!(parse_range("5:3:1").is_err());
        assert!(parse_range("a:b").is_err());
    }
}
