//! Conflict detection for trigger-action IoT rulesets.
//!
//! Seven safety policies (C1..C7) are checked online over a sliding window of
//! triggered actions and statically over rule pairs. A brute-force oracle
//! serves as the reference for both, and a deterministic smart-home simulator
//! produces event streams and measures the effect of conflicts.

pub mod cli;
pub mod detector;
pub mod error;
pub mod model;
pub mod oracle;
pub mod simulator;
pub mod trace;

pub use error::{Error, Result};
