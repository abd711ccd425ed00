//! Statistical machinery: mixture fitting, power-law fitting, two-sample and
//! goodness-of-fit tests, and degree statistics for net-flow networks.

mod gmm;
mod graph;
mod hypothesis;
mod power_law;

pub use gmm::{fit_gmm, GmmComponent, GmmFit};
pub use graph::{
    assortativity, degree_sequences, value_by_degree, DegreeMode, DegreeSequences, ValueByDegree,
};
pub use hypothesis::{ad_exponential_test, ks_two_sample, AdResult, KsResult};
pub use power_law::{fit_power_law, fit_power_law_mle, log_binned_histogram, PowerLawFit};

use serde::Serialize;
use thiserror::Error;

/// Line y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("sample contains a non-finite value")]
    NonFiniteSample,
    #[error("sample values must be strictly positive")]
    NonPositiveSample,
    #[error("need at least {need} nonzero bins, got {have}")]
    TooFewBins { need: usize, have: usize },
    #[error("mixture fit collapsed in every restart")]
    MixtureCollapsed,
    #[error("bad mixture order {k} for sample size {n}")]
    BadMixtureOrder { k: usize, n: usize },
    #[error("fit is degenerate: {reason}")]
    Degenerate { reason: &'static str },
}
