//! Link budget: geometry to channel gains and per-watt SNR coefficients.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seeds::{self, Stream};
use crate::topology::{distance, CellScenario};

/// Thermal noise over one resource block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub n0_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
}

impl NoiseModel {
    pub fn new(n0_dbm_per_hz: f64, bandwidth_hz: f64) -> Result<Self> {
        if !n0_dbm_per_hz.is_finite() {
            return Err(Error::arg("noise density must be finite"));
        }
        if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
            return Err(Error::arg("bandwidth must be positive"));
        }
        Ok(Self {
            n0_dbm_per_hz,
            bandwidth_hz,
        })
    }

    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.n0_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz
    }
}

/// Large-scale gain `max(d, 1 m)^(-exponent)`.
pub fn path_gain(d: f64, pl_exponent: f64) -> f64 {
    d.max(1.0).powf(-pl_exponent)
}

pub fn snr_coeff(gain: f64, noise: &NoiseModel) -> f64 {
    gain / noise.noise_power_w()
}

/// Per-watt SNR coefficients of one cellular/D2D pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGammas {
    /// CU m to DT n.
    pub mn: f64,
    /// CU m to BS.
    pub mb: f64,
    /// DT n to BS.
    pub nb: f64,
    /// DT n to DR n.
    pub nn: f64,
}

impl PairGammas {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mn", self.mn), ("mb", self.mb), ("nb", self.nb), ("nn", self.nn)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("gamma_{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    /// `g_mn[m][n]`, CU m to DT n.
    pub g_mn: Vec<Vec<f64>>,
    pub g_mb: Vec<f64>,
    pub g_nb: Vec<f64>,
    pub g_nn: Vec<f64>,
    pub noise: NoiseModel,
}

impl ChannelGains {
    pub fn m(&self) -> usize {
        self.g_mb.len()
    }

    pub fn n(&self) -> usize {
        self.g_nb.len()
    }

    pub fn pair_gains(&self, m: usize, n: usize) -> [f64; 4] {
        [self.g_mn[m][n], self.g_mb[m], self.g_nb[n], self.g_nn[n]]
    }

    pub fn gammas(&self, m: usize, n: usize) -> PairGammas {
        let [mn, mb, nb, nn] = self.pair_gains(m, n).map(|g| snr_coeff(g, &self.noise));
        PairGammas { mn, mb, nb, nn }
    }

    /// `link_kind,m,n,gain`; the unused index of a per-node link is left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("link_kind,m,n,gain\n");
        for (m, row) in self.g_mn.iter().enumerate() {
            for (n, g) in row.iter().enumerate() {
                let _ = writeln!(out, "mn,{m},{n},{g}");
            }
        }
        for (m, g) in self.g_mb.iter().enumerate() {
            let _ = writeln!(out, "mb,{m},,{g}");
        }
        for (n, g) in self.g_nb.iter().enumerate() {
            let _ = writeln!(out, "nb,,{n},{g}");
        }
        for (n, g) in self.g_nn.iter().enumerate() {
            let _ = writeln!(out, "nn,,{n},{g}");
        }
        out
    }
}

pub fn compute_gains(scenario: &CellScenario, noise: NoiseModel) -> ChannelGains {
    let a = scenario.pl_exponent;
    let bs = scenario.bs_pos;
    let g_mn = scenario
        .cu_positions
        .iter()
        .map(|&c| {
            scenario
                .dt_positions
                .iter()
                .map(|&t| path_gain(distance(c, t), a))
                .collect()
        })
        .collect();
    ChannelGains {
        g_mn,
        g_mb: scenario
            .cu_positions
            .iter()
            .map(|&c| path_gain(distance(c, bs), a))
            .collect(),
        g_nb: scenario
            .dt_positions
            .iter()
            .map(|&t| path_gain(distance(t, bs), a))
            .collect(),
        g_nn: scenario
            .dt_positions
            .iter()
            .zip(&scenario.dr_positions)
            .map(|(&t, &r)| path_gain(distance(t, r), a))
            .collect(),
        noise,
    }
}

/// Applies independent log-normal shadowing with standard deviation
/// `sigma_db` to every link. Gains are capped at 1.
pub fn apply_shadowing(gains: &mut ChannelGains, sigma_db: f64, seed: u64) -> Result<()> {
    if sigma_db == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma_db).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = seeds::stream_rng(seed, Stream::Shadowing, &[]);
    let mut shade = |g: &mut f64| {
        let db: f64 = normal.sample(&mut rng);
        *g = (*g * 10f64.powf(db / 10.0)).min(1.0);
    };
    gains.g_mn.iter_mut().flatten().for_each(&mut shade);
    gains.g_mb.iter_mut().for_each(&mut shade);
    gains.g_nb.iter_mut().for_each(&mut shade);
    gains.g_nn.iter_mut().for_each(&mut shade);
    Ok(())
}
