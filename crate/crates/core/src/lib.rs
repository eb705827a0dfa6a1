//! Stabilized second-order streaming Q-learning (S³Q) and its exploration
//! wrapper (S⁴Q) on finite-horizon low-rank MDPs, with exact
//! dynamic-programming oracles and analysis diagnostics.

pub mod baselines;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod policy;
pub mod qfunc;
pub mod record;
pub mod report;
pub mod s3q;
pub mod s4q;
pub mod streamls;

pub use error::{Error, Result};
