//! Leakage analysis: chi-squared closed forms, Monte Carlo oracles and
//! nearest-neighbour estimators of entropy and mutual information.

pub mod chi2;
pub mod experiment;
pub mod ksg;
pub mod mc;
pub mod special;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("precision loss: {0}")]
    PrecisionLoss(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

pub use chi2::{chi2_entropy, expected_log_ncx2, g_family, h_family, ncx2_entropy, Ncx2};
pub use ksg::{kl_entropy, ksg_mi, Samples};
pub use mc::Estimate;
pub use experiment::{
    figure3_experiment, rows_to_csv, theorem1_mi, Figure3Config, Figure3Row, MiExperimentConfig, Quantity,
    TheoremMi,
};
