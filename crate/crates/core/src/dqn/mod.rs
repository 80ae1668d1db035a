//! Per-pair deep Q-learning agent.
//!
//! The network scores a `(state, action)` feature vector. State is the pair's
//! four link gains plus the decision currently in force; the action is one
//! point of the joint [`ActionGrid`]. Greedy selection sweeps the whole grid.

mod network;
mod replay;

pub use network::{Gradient, Layer, QNetwork};
pub use replay::{Experience, ReplayMemory};

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelGains, PairGammas};
use crate::coopshare::{evaluate_unchecked, reward, ActionGrid, QosConfig, ResourceDecision};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

pub const STATE_FEATURES: usize = 8;
pub const ACTION_FEATURES: usize = 4;
pub const INPUT_FEATURES: usize = STATE_FEATURES + ACTION_FEATURES;

const GAIN_DB_FLOOR: f64 = -160.0;

fn to_unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

fn power_feature(p: f64, q: &QosConfig) -> f64 {
    to_unit(dbm(p), dbm(q.p_min), dbm(q.p_max))
}

fn theta_feature(theta: f64) -> f64 {
    to_unit(theta, 0.0, 0.5)
}

/// Link gains and SNR coefficients of one candidate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairChannel {
    /// Linear gains `g_mn, g_mb, g_nb, g_nn`.
    pub gains: [f64; 4],
    pub gammas: PairGammas,
}

impl PairChannel {
    pub fn from_gains(gains: &ChannelGains, m: usize, n: usize) -> Self {
        Self {
            gains: gains.pair_gains(m, n),
            gammas: gains.gammas(m, n),
        }
    }
}

/// Normalized state features: gains in dB, then the current decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub features: [f64; STATE_FEATURES],
}

impl AgentState {
    pub fn new(gains: [f64; 4], current: &ResourceDecision, q: &QosConfig) -> Self {
        let mut f = [0.0; STATE_FEATURES];
        for (k, g) in gains.iter().enumerate() {
            f[k] = to_unit(10.0 * g.log10(), GAIN_DB_FLOOR, 0.0);
        }
        f[4] = power_feature(current.p_c, q);
        f[5] = power_feature(current.p_r, q);
        f[6] = power_feature(current.p_d, q);
        f[7] = theta_feature(current.theta);
        Self { features: f }
    }
}

/// Normalized per-axis action features of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFeatures {
    axes: Vec<Vec<f64>>,
    n_power: usize,
    n_theta: usize,
}

impl ActionFeatures {
    pub fn new(grid: &ActionGrid, q: &QosConfig) -> Self {
        let powers: Vec<f64> = grid.power_levels().iter().map(|&p| power_feature(p, q)).collect();
        let thetas: Vec<f64> = grid.theta_levels().iter().map(|&t| theta_feature(t)).collect();
        Self {
            axes: vec![powers.clone(), powers.clone(), powers, thetas],
            n_power: grid.n_power(),
            n_theta: grid.n_theta(),
        }
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn joint_size(&self) -> usize {
        self.n_power.pow(3) * self.n_theta
    }

    pub fn of(&self, index: usize) -> [f64; ACTION_FEATURES] {
        let l = self.n_theta;
        let i = self.n_power;
        [
            self.axes[0][index / (l * i * i)],
            self.axes[1][(index / (l * i)) % i],
            self.axes[2][(index / l) % i],
            self.axes[3][index % l],
        ]
    }

    pub fn input(&self, s: &AgentState, index: usize) -> [f64; INPUT_FEATURES] {
        let mut x = [0.0; INPUT_FEATURES];
        x[..STATE_FEATURES].copy_from_slice(&s.features);
        x[STATE_FEATURES..].copy_from_slice(&self.of(index));
        x
    }
}

/// Highest-valued action over the whole grid, lowest index on ties.
pub fn argmax_action(net: &QNetwork, s: &AgentState, feats: &ActionFeatures) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    net.sweep(&s.features, &feats.axes, |pos, q| {
        if q > best.1 {
            best = (pos, q);
        }
    });
    best
}

pub fn select_action<R: Rng>(
    net: &QNetwork,
    s: &AgentState,
    feats: &ActionFeatures,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..feats.joint_size())
    } else {
        argmax_action(net, s, feats).0
    }
}

/// Actions over which the bootstrap maximum is taken.
#[derive(Debug, Clone, Copy)]
pub enum TargetMax<'a> {
    FullGrid,
    Candidates(&'a [usize]),
}

pub fn td_target(target: &QNetwork, e: &Experience, feats: &ActionFeatures, discount: f64, over: TargetMax) -> f64 {
    if discount == 0.0 {
        return e.r;
    }
    let best = match over {
        TargetMax::FullGrid => argmax_action(target, &e.s_next, feats).1,
        TargetMax::Candidates(idx) => idx
            .iter()
            .map(|&a| {
                target
                    .forward(&feats.input(&e.s_next, a))
                    .expect("feature width fixed by construction")
            })
            .fold(f64::NEG_INFINITY, f64::max),
    };
    e.r + discount * best
}

/// One plain gradient-descent step on the minibatch; returns the loss
/// before the step.
pub fn train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Experience],
    feats: &ActionFeatures,
    discount: f64,
    learning_rate: f64,
    over: TargetMax,
) -> Result<f64> {
    let (loss, grad) = batch_gradient(net, target, batch, feats, discount, over)?;
    net.apply_gradient(&grad, learning_rate);
    Ok(loss)
}

fn batch_gradient(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[&Experience],
    feats: &ActionFeatures,
    discount: f64,
    over: TargetMax,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::arg("empty minibatch"));
    }
    let targets: Vec<f64> = batch
        .iter()
        .map(|e| td_target(target, e, feats, discount, over))
        .collect();
    let inputs: Vec<Vec<f64>> = batch.iter().map(|e| feats.input(&e.s, e.a_index).to_vec()).collect();
    let (loss, grad) = net.mse_gradient(&inputs, &targets)?;
    if !loss.is_finite() {
        let worst = targets.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        return Err(Error::Training(format!(
            "non-finite loss {loss} (batch of {}, largest |target| {worst})",
            batch.len()
        )));
    }
    Ok((loss, grad))
}

/// `max(1 - (1 - floor) t / horizon, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub horizon: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            horizon: 500.0,
            floor: 0.2,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        (1.0 - (1.0 - self.floor) * episode as f64 / self.horizon).max(self.floor)
    }
}

/// Map from the shaped reward to the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTransform {
    Identity,
    /// `sign(r) ln(1 + |r|)`, order-preserving and compressive.
    SignedLog,
    /// `max(r / r_max, -1)` with `r_max` the largest positive reward seen so
    /// far. Feasible rewards keep their linear spread in `(0, 1]` and deep
    /// penalties flatten to -1.
    Scaled,
}

impl RewardTransform {
    /// `r_max` only matters for [`RewardTransform::Scaled`].
    pub fn apply(self, r: f64, r_max: f64) -> f64 {
        match self {
            Self::Identity => r,
            Self::SignedLog => r.signum() * r.abs().ln_1p(),
            Self::Scaled => (r / r_max.max(f64::MIN_POSITIVE)).max(-1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam with the usual `beta1 = 0.9, beta2 = 0.999, eps = 1e-8`.
    Adam,
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Rescales `grad` in place into the Adam step direction.
    fn direction(&mut self, grad: &mut [f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((g, m), v) in grad.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * *g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * *g * *g;
            *g = (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub discount: f64,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    pub epsilon: EpsilonSchedule,
    pub reward_transform: RewardTransform,
    /// Size of the random action subset for the bootstrap maximum.
    pub target_candidates: usize,
    /// Greedy utility is logged every this many episodes and on the last.
    pub greedy_log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            steps_per_episode: 100,
            minibatch: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            discount: 0.0,
            replay_capacity: 20_000,
            hidden: vec![64, 64],
            epsilon: EpsilonSchedule::default(),
            reward_transform: RewardTransform::Scaled,
            target_candidates: 256,
            greedy_log_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train.episodes", self.episodes),
            ("train.steps", self.steps_per_episode),
            ("train.minibatch", self.minibatch),
            ("train.replay", self.replay_capacity),
            ("train.target_candidates", self.target_candidates),
            ("train.greedy_log_every", self.greedy_log_every),
        ];
        for (path, v) in positive {
            if v == 0 {
                return Err(Error::config(path, "must be positive"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("train.discount", "must lie in [0, 1)"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config(
                "train.hidden",
                "need at least one non-empty hidden layer",
            ));
        }
        if !(self.epsilon.horizon > 0.0) || !(0.0..=1.0).contains(&self.epsilon.floor) {
            return Err(Error::config(
                "train.epsilon",
                "horizon must be positive and floor in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![INPUT_FEATURES];
        s.extend(&self.hidden);
        s.push(1);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Mean shaped reward over the episode's interactions.
    pub mean_reward: f64,
    /// Utility of the greedy policy, 0 when it violates QoS. `None` on
    /// episodes that were not evaluated.
    pub greedy_u: Option<f64>,
    pub epsilon: f64,
    pub loss: f64,
}

pub fn episode_log_csv(log: &[EpisodeRecord]) -> String {
    let mut out = String::from("episode,mean_reward,greedy_u,epsilon,loss\n");
    for r in log {
        let g = r.greedy_u.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.episode, r.mean_reward, g, r.epsilon, r.loss);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub net: QNetwork,
    pub log: Vec<EpisodeRecord>,
}

/// Learner state that persists across calls, so a network can keep
/// training from where a previous run left off.
#[derive(Debug, Clone)]
pub struct Agent {
    net: QNetwork,
    target: QNetwork,
    replay: ReplayMemory,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    adam: Option<AdamState>,
    last_greedy: Option<usize>,
    r_max: f64,
}

impl Agent {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let net = QNetwork::init(
            &cfg.layer_sizes(),
            &mut seeds::stream_rng(cfg.seed, Stream::AgentInit, &[]),
        )?;
        Ok(Self::from_network(net, cfg))
    }

    /// Starts from existing weights with an empty replay memory.
    pub fn from_network(net: QNetwork, cfg: &TrainConfig) -> Self {
        Self {
            target: net.clone(),
            adam: (cfg.optimizer == Optimizer::Adam).then(|| AdamState::new(net.param_count())),
            net,
            replay: ReplayMemory::new(cfg.replay_capacity),
            explore_rng: seeds::stream_rng(cfg.seed, Stream::Exploration, &[]),
            replay_rng: seeds::stream_rng(cfg.seed, Stream::Replay, &[]),
            last_greedy: None,
            r_max: 0.0,
        }
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn into_network(self) -> QNetwork {
        self.net
    }

    /// Runs the configured number of episodes against one pair.
    pub fn train(
        &mut self,
        link: &PairChannel,
        q: &QosConfig,
        grid: &ActionGrid,
        cfg: &TrainConfig,
    ) -> Result<Vec<EpisodeRecord>> {
        cfg.validate()?;
        if self.net.input_size() != INPUT_FEATURES {
            return Err(Error::arg("network input width does not match the agent features"));
        }
        let feats = ActionFeatures::new(grid, q);
        let start = AgentState::new(link.gains, &grid.decision(grid.midpoint()), q);
        let mut candidates = Vec::with_capacity(cfg.target_candidates + 1);
        let mut log = Vec::with_capacity(cfg.episodes);
        for episode in 0..cfg.episodes {
            let epsilon = cfg.epsilon.at(episode);
            let mut state = start;
            let mut reward_sum = 0.0;
            let mut loss_sum = 0.0;
            for _ in 0..cfg.steps_per_episode {
                let explore = self.explore_rng.random::<f64>() < epsilon;
                let a = if explore {
                    self.explore_rng.random_range(0..feats.joint_size())
                } else {
                    let a = argmax_action(&self.net, &state, &feats).0;
                    self.last_greedy = Some(a);
                    a
                };
                let decision = grid.decision(a);
                let r = reward(&evaluate_unchecked(&link.gammas, &decision, q), q);
                reward_sum += r;
                self.r_max = self.r_max.max(r);
                let next = AgentState::new(link.gains, &decision, q);
                self.replay.push(Experience {
                    s: state,
                    a_index: a,
                    r,
                    s_next: next,
                });
                // replay keeps raw rewards; the scaled transform moves with r_max
                let batch: Vec<Experience> = self
                    .replay
                    .sample(cfg.minibatch, &mut self.replay_rng)
                    .into_iter()
                    .map(|e| Experience {
                        r: cfg.reward_transform.apply(e.r, self.r_max),
                        ..*e
                    })
                    .collect();
                let batch: Vec<&Experience> = batch.iter().collect();
                let over = if cfg.discount > 0.0 {
                    candidates.clear();
                    for _ in 0..cfg.target_candidates {
                        candidates.push(self.replay_rng.random_range(0..feats.joint_size()));
                    }
                    candidates.extend(self.last_greedy);
                    TargetMax::Candidates(&candidates)
                } else {
                    TargetMax::FullGrid
                };
                let (loss, mut grad) = batch_gradient(&self.net, &self.target, &batch, &feats, cfg.discount, over)?;
                if let Some(adam) = &mut self.adam {
                    adam.direction(&mut grad);
                }
                self.net.apply_gradient(&grad, cfg.learning_rate);
                loss_sum += loss;
                state = next;
            }
            self.target = self.net.clone();
            let last = episode + 1 == cfg.episodes;
            let greedy_u = (last || episode % cfg.greedy_log_every == 0)
                .then(|| greedy_decision(&self.net, link, grid, q).map_or(0.0, |(_, u)| u));
            let steps = cfg.steps_per_episode as f64;
            log.push(EpisodeRecord {
                episode,
                mean_reward: reward_sum / steps,
                greedy_u,
                epsilon,
                loss: loss_sum / steps,
            });
        }
        Ok(log)
    }
}

/// Trains a fresh agent for one pair.
pub fn train_agent(link: &PairChannel, q: &QosConfig, grid: &ActionGrid, cfg: &TrainConfig) -> Result<TrainedAgent> {
    let mut agent = Agent::new(cfg)?;
    let log = agent.train(link, q, grid, cfg)?;
    Ok(TrainedAgent {
        net: agent.into_network(),
        log,
    })
}

/// Greedy action from the episode-start state, kept only if it meets both
/// QoS constraints.
pub fn greedy_decision(
    net: &QNetwork,
    link: &PairChannel,
    grid: &ActionGrid,
    q: &QosConfig,
) -> Option<(ResourceDecision, f64)> {
    let feats = ActionFeatures::new(grid, q);
    let start = AgentState::new(link.gains, &grid.decision(grid.midpoint()), q);
    let (a, _) = argmax_action(net, &start, &feats);
    let decision = grid.decision(a);
    let ev = evaluate_unchecked(&link.gammas, &decision, q);
    ev.feasible().then_some((decision, ev.u))
}
