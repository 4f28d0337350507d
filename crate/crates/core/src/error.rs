use thiserror::Error;

use crate::timefeat::Timestamp;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp {t} outside feature domain [0, {domain_end}] of `{phi}`")]
    Domain {
        phi: String,
        t: Timestamp,
        domain_end: Timestamp,
    },

    #[error("time feature `{phi}` has zero marginal probability at t'={t_prime} (no common time feature support)")]
    NoTimeFeatureSupport { phi: String, t_prime: Timestamp },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("time slice {slice} of {k} contains no records")]
    EmptySlice { slice: usize, k: usize },

    #[error("feature {feature} of the forecast period is not observed among periods 1..={k}")]
    UnobservedPeriodFeature { feature: usize, k: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("non-finite gradient at iteration {iteration} (norm {norm})")]
    NonFiniteGradient { iteration: usize, norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
