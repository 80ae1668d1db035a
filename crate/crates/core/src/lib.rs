//! Cooperative D2D spectrum sharing: per-pair deep Q-learning for power and
//! sharing-factor control, plus maximum-weight matching at the base station.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod coopset;
pub mod coopshare;
pub mod dqn;
pub mod error;
pub mod harness;
pub mod matching;
pub mod seeds;
pub mod topology;

pub use error::{Error, Result};
