//! Cooperative link sets: which cellular links each D2D link may pair with.

use std::fmt::Write as _;

use crate::channel::ChannelGains;
use crate::coopshare::{feasibility_interval, QosConfig};
use crate::error::{Error, Result};
use crate::matching::WeightMatrix;
use crate::topology::{distance, CellScenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoopSetConfig {
    /// Maximum CU–DT distance, meters.
    pub r_n1: f64,
    /// Maximum CU–BS distance, meters.
    pub r_n2: f64,
}

impl CoopSetConfig {
    /// Three quarters of the cell radius for both ranges.
    pub fn for_radius(radius: f64) -> Self {
        Self {
            r_n1: 0.75 * radius,
            r_n2: 0.75 * radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_n1 > 0.0 && self.r_n2 > 0.0 {
            Ok(())
        } else {
            Err(Error::arg("cooperative ranges must be positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoopSets {
    /// `sets[n]` lists the admitted cellular indices in ascending order.
    pub sets: Vec<Vec<usize>>,
}

impl CoopSets {
    pub fn contains(&self, m: usize, n: usize) -> bool {
        self.sets.get(n).is_some_and(|s| s.binary_search(&m).is_ok())
    }

    pub fn all(m_links: usize, n_links: usize) -> Self {
        Self {
            sets: vec![(0..m_links).collect(); n_links],
        }
    }

    pub fn none(n_links: usize) -> Self {
        Self {
            sets: vec![Vec::new(); n_links],
        }
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `n,m` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m\n");
        for (n, set) in self.sets.iter().enumerate() {
            for m in set {
                let _ = writeln!(out, "{n},{m}");
            }
        }
        out
    }
}

/// Distance gates on CU–DT and CU–BS plus the closed-form feasibility test.
pub fn cooperative_sets(scenario: &CellScenario, gains: &ChannelGains, q: &QosConfig, cfg: &CoopSetConfig) -> CoopSets {
    let sets = (0..scenario.n())
        .map(|n| {
            let dt = scenario.dt_positions[n];
            (0..scenario.m())
                .filter(|&m| {
                    let cu = scenario.cu_positions[m];
                    distance(cu, dt) <= cfg.r_n1
                        && distance(cu, scenario.bs_pos) <= cfg.r_n2
                        && feasibility_interval(&gains.gammas(m, n), q).is_some()
                })
                .collect()
        })
        .collect();
    CoopSets { sets }
}

pub fn masked_weight_matrix(u: &WeightMatrix, sets: &CoopSets) -> Result<WeightMatrix> {
    if sets.sets.len() != u.cols() || sets.sets.iter().flatten().any(|&m| m >= u.rows()) {
        return Err(Error::arg("cooperative sets do not match the weight matrix"));
    }
    let mut out = WeightMatrix::zeros(u.rows(), u.cols());
    for (n, set) in sets.sets.iter().enumerate() {
        for &m in set {
            out.set(m, n, u.get(m, n));
        }
    }
    Ok(out)
}

pub fn nonzero_count(u: &WeightMatrix) -> usize {
    u.nonzero_count()
}
