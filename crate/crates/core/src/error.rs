use thiserror::Error;

/// Errors produced by the simulation, estimation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty series")]
    EmptySeries,

    #[error("max lag {d} must be smaller than the series length {n}")]
    LagTooLarge { d: usize, n: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    #[error("mean-reversion estimate clamped at zero (nonstationary data)")]
    ClampedEstimator,

    #[error("bandwidth {bandwidth} must be smaller than the usable length {usable}")]
    BandwidthTooLarge { bandwidth: usize, usable: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
