//! Delay-aware device-vs-edge offloading optimizer for multi-cell OFDMA networks.
//!
//! The crate models a cellular network whose users either process a task locally
//! or offload it to an edge server over one OFDMA sub-channel. It provides the
//! joint (J-PAD) and comparison-based (C-PAD) optimizers, baselines, an
//! exhaustive oracle for tiny instances and a Monte-Carlo experiment runner.

pub mod algorithms;
pub mod assignment;
pub mod baselines;
pub mod dc;
pub mod error;
pub mod experiments;
pub mod model;
pub mod scenario;

pub use error::{Error, Result, SolverError};
