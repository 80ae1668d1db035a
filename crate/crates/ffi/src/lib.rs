//! C interface to the coopd2d library.
//!
//! Every fallible call returns a [`Coopd2dStatus`]; on failure the message is
//! kept per thread and can be copied out with [`coopd2d_last_error`].
//! Configurations and trained agents are opaque handles released with their
//! own `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use coopd2d::channel::{snr_coeff, PairGammas};
use coopd2d::config::{Overrides, Preset, RunConfig};
use coopd2d::coopshare::{self, brute_force_pair_opt, ResourceDecision};
use coopd2d::dqn::{self, PairChannel, QNetwork};
use coopd2d::matching::{km_match, WeightMatrix};
use coopd2d::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coopd2dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Geometry = 4,
    Training = 5,
    Parse = 6,
    Io = 7,
    /// The library panicked; the handle involved should not be reused.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coopd2dPreset {
    Full = 0,
    Desk = 1,
}

/// Which action lattice a call searches.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coopd2dGrid {
    Reporting = 0,
    Training = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coopd2dDecision {
    pub p_c: f64,
    pub p_r: f64,
    pub p_d: f64,
    pub theta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coopd2dEvaluation {
    pub se_c: f64,
    pub se_d: f64,
    pub ee_c: f64,
    pub ee_d: f64,
    pub u: f64,
    pub reward: f64,
    pub feasible: bool,
}

/// Parsed run configuration.
pub struct Coopd2dConfig(RunConfig);

/// A Q-network trained for one link pair, together with that pair's channel.
pub struct Coopd2dAgent {
    net: QNetwork,
    link: PairChannel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: Coopd2dStatus, msg: impl Into<String>) -> Coopd2dStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn status_of(err: &Error) -> Coopd2dStatus {
    match err {
        Error::Argument(_) => Coopd2dStatus::InvalidArgument,
        Error::Geometry(_) => Coopd2dStatus::Geometry,
        Error::Config { .. } => Coopd2dStatus::Config,
        Error::Training(_) => Coopd2dStatus::Training,
        Error::Parse { .. } => Coopd2dStatus::Parse,
        Error::Io(_) => Coopd2dStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Coopd2dStatus>) -> Coopd2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Coopd2dStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(Coopd2dStatus::Internal, "panic inside coopd2d"),
    }
}

fn check<T>(r: coopd2d::Result<T>) -> Result<T, Coopd2dStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Coopd2dStatus> {
    if p.is_null() {
        Err(fail(Coopd2dStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn pair_channel(cfg: &RunConfig, gains: &[f64; 4]) -> Result<PairChannel, Coopd2dStatus> {
    let [mn, mb, nb, nn] = gains.map(|g| snr_coeff(g, &cfg.noise));
    let gammas = PairGammas { mn, mb, nb, nn };
    check(gammas.validate())?;
    Ok(PairChannel { gains: *gains, gammas })
}

fn grid_of(cfg: &RunConfig, which: Coopd2dGrid) -> &coopshare::ActionGrid {
    match which {
        Coopd2dGrid::Reporting => &cfg.grid,
        Coopd2dGrid::Training => &cfg.training_grid,
    }
}

fn decision_out(d: &ResourceDecision) -> Coopd2dDecision {
    Coopd2dDecision {
        p_c: d.p_c,
        p_r: d.p_r,
        p_d: d.p_d,
        theta: d.theta,
    }
}

/// Copies the last error message of this thread, NUL-terminated and truncated
/// to `cap` bytes. Returns the untruncated length, so a call with `cap == 0`
/// sizes the buffer.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a configuration from a preset and an optional TOML file (`path`
/// may be null).
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_config_load(
    path: *const c_char,
    preset: Coopd2dPreset,
    out: *mut *mut Coopd2dConfig,
) -> Coopd2dStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = if path.is_null() {
            None
        } else {
            let s = CStr::from_ptr(path)
                .to_str()
                .map_err(|_| fail(Coopd2dStatus::InvalidArgument, "path is not UTF-8"))?;
            Some(Path::new(s))
        };
        let preset = match preset {
            Coopd2dPreset::Full => Preset::Full,
            Coopd2dPreset::Desk => Preset::Desk,
        };
        let cfg = check(RunConfig::load(path, preset, &Overrides::default()))?;
        *out = Box::into_raw(Box::new(Coopd2dConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`coopd2d_config_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_config_free(cfg: *mut Coopd2dConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Number of joint actions in the chosen lattice.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_grid_size(cfg: *const Coopd2dConfig, which: Coopd2dGrid) -> usize {
    if cfg.is_null() {
        return 0;
    }
    grid_of(&(*cfg).0, which).joint_size()
}

/// Evaluates one pair. `gains` holds the linear gains CU-DT, CU-BS, DT-BS and
/// DT-DR; the configured noise turns them into per-watt SNR coefficients.
///
/// # Safety
/// `gains` must point to four doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_evaluate_pair(
    cfg: *const Coopd2dConfig,
    gains: *const f64,
    decision: *const Coopd2dDecision,
    out: *mut Coopd2dEvaluation,
) -> Coopd2dStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(gains, "gains")?;
        non_null(decision, "decision")?;
        non_null(out, "out")?;
        let cfg = &(*cfg).0;
        let link = pair_channel(cfg, &*gains.cast::<[f64; 4]>())?;
        let d = &*decision;
        let d = ResourceDecision {
            p_c: d.p_c,
            p_r: d.p_r,
            p_d: d.p_d,
            theta: d.theta,
        };
        let ev = check(coopshare::evaluate_pair(&link.gammas, &d, &cfg.qos))?;
        *out = Coopd2dEvaluation {
            se_c: ev.se_c,
            se_d: ev.se_d,
            ee_c: ev.ee_c,
            ee_d: ev.ee_d,
            u: ev.u,
            reward: coopshare::reward(&ev, &cfg.qos),
            feasible: ev.feasible(),
        };
        Ok(())
    })
}

/// Exhaustive search of a lattice for the best feasible decision. `*found`
/// is false, and the other outputs untouched, when nothing is feasible.
///
/// # Safety
/// `gains` must point to four doubles; every output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_pair_optimum(
    cfg: *const Coopd2dConfig,
    gains: *const f64,
    which: Coopd2dGrid,
    found: *mut bool,
    decision: *mut Coopd2dDecision,
    u: *mut f64,
) -> Coopd2dStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(gains, "gains")?;
        non_null(found, "found")?;
        non_null(decision, "decision")?;
        non_null(u, "u")?;
        let cfg = &(*cfg).0;
        let link = pair_channel(cfg, &*gains.cast::<[f64; 4]>())?;
        let best = brute_force_pair_opt(&link.gammas, &cfg.qos, grid_of(cfg, which));
        *found = best.is_some();
        if let Some(b) = best {
            *decision = decision_out(&b.decision);
            *u = b.u;
        }
        Ok(())
    })
}

/// Maximum-weight matching of a row-major `rows x cols` matrix. Zero entries
/// are missing edges. `assignment[m]` receives the matched column of row `m`,
/// or -1.
///
/// # Safety
/// `weights` must hold `rows * cols` doubles and `assignment` `rows` slots.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_km_match(
    weights: *const f64,
    rows: usize,
    cols: usize,
    assignment: *mut i64,
    total: *mut f64,
) -> Coopd2dStatus {
    guard(|| {
        non_null(weights, "weights")?;
        non_null(assignment, "assignment")?;
        non_null(total, "total")?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(Coopd2dStatus::InvalidArgument, "matrix size overflows"))?;
        let flat = std::slice::from_raw_parts(weights, len);
        let mut u = WeightMatrix::zeros(rows, cols);
        for (i, &w) in flat.iter().enumerate() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(fail(
                    Coopd2dStatus::InvalidArgument,
                    format!(
                        "weight {w} at ({}, {}) is not a finite non-negative number",
                        i / cols,
                        i % cols
                    ),
                ));
            }
            u.set(i / cols, i % cols, w);
        }
        let matching = km_match(&u);
        let slots = std::slice::from_raw_parts_mut(assignment, rows);
        slots.fill(-1);
        for &(m, n) in &matching.pairs {
            slots[m] = n as i64;
        }
        *total = matching.total_weight;
        Ok(())
    })
}

/// Eigenvalues of the Hessian of the D2D rate term at one probe point.
///
/// # Safety
/// `lambda1` and `lambda2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_probe(
    beta: f64,
    x: f64,
    y: f64,
    lambda1: *mut f64,
    lambda2: *mut f64,
) -> Coopd2dStatus {
    guard(|| {
        non_null(lambda1, "lambda1")?;
        non_null(lambda2, "lambda2")?;
        if !(beta > 0.0 && x > 0.0 && y > 0.0 && y < 0.5) {
            return Err(fail(
                Coopd2dStatus::InvalidArgument,
                "need beta > 0, x > 0 and 0 < y < 0.5",
            ));
        }
        let p = coopshare::probe_point(beta, x, y);
        *lambda1 = p.lambda1;
        *lambda2 = p.lambda2;
        Ok(())
    })
}

/// Trains a Q-network for one pair on the training lattice with the
/// configured schedule. `seed` replaces the configured training seed.
///
/// # Safety
/// `gains` must point to four doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_agent_train(
    cfg: *const Coopd2dConfig,
    gains: *const f64,
    seed: u64,
    out: *mut *mut Coopd2dAgent,
) -> Coopd2dStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(gains, "gains")?;
        non_null(out, "out")?;
        let cfg = &(*cfg).0;
        let link = pair_channel(cfg, &*gains.cast::<[f64; 4]>())?;
        let mut train = cfg.train.clone();
        train.seed = seed;
        let trained = check(dqn::train_agent(&link, &cfg.qos, &cfg.training_grid, &train))?;
        *out = Box::into_raw(Box::new(Coopd2dAgent { net: trained.net, link }));
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or a handle from [`coopd2d_agent_train`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_agent_free(agent: *mut Coopd2dAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Greedy decision of a trained agent on the chosen lattice. `*feasible` is
/// false when the greedy action misses a QoS target; the decision is written
/// either way and `*u` is then 0.
///
/// # Safety
/// `cfg` and `agent` must be live handles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_agent_greedy(
    cfg: *const Coopd2dConfig,
    agent: *const Coopd2dAgent,
    which: Coopd2dGrid,
    feasible: *mut bool,
    decision: *mut Coopd2dDecision,
    u: *mut f64,
) -> Coopd2dStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(agent, "agent")?;
        non_null(feasible, "feasible")?;
        non_null(decision, "decision")?;
        non_null(u, "u")?;
        let cfg = &(*cfg).0;
        let agent = &*agent;
        let grid = grid_of(cfg, which);
        match dqn::greedy_decision(&agent.net, &agent.link, grid, &cfg.qos) {
            Some((d, value)) => {
                *feasible = true;
                *decision = decision_out(&d);
                *u = value;
            }
            None => {
                let (a, _) = dqn::argmax_action(
                    &agent.net,
                    &dqn::AgentState::new(agent.link.gains, &grid.decision(grid.midpoint()), &cfg.qos),
                    &dqn::ActionFeatures::new(grid, &cfg.qos),
                );
                *feasible = false;
                *decision = decision_out(&grid.decision(a));
                *u = 0.0;
            }
        }
        Ok(())
    })
}

/// Serializes the agent's network into `buf`. Returns the number of bytes
/// needed through `len`; nothing is written when `cap` is too small.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coopd2d_agent_checkpoint(
    agent: *const Coopd2dAgent,
    buf: *mut u8,
    cap: usize,
    len: *mut usize,
) -> Coopd2dStatus {
    guard(|| {
        non_null(agent, "agent")?;
        non_null(len, "len")?;
        let bytes = (*agent).net.to_bytes();
        *len = bytes.len();
        if !buf.is_null() && cap >= bytes.len() {
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        }
        Ok(())
    })
}
