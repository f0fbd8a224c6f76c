//! Group-conditional modelling toolkit.
//!
//! The crate has two halves. [`gmm`] studies mean estimation in a
//! two-component Gaussian mixture whose component label is observed, and
//! checks closed-form bias/variance expressions against Monte Carlo draws.
//! The remaining modules form a small tabular classification harness:
//! base [`learners`], group- and cluster-conditioned composites in
//! [`conditioning`], per-subgroup [`metrics`], and the repeated-split
//! experiment protocol in [`harness`].

pub mod conditioning;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod learners;
pub mod metrics;
mod seed;

pub use error::{Error, Result};
