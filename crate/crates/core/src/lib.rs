//! Ornstein-Uhlenbeck processes driven by Levy subordinators.
//!
//! The crate covers the full workflow for gamma-OU and inverse-Gaussian-OU
//! models observed on an equally spaced grid:
//!
//! * [`simulation`]: exact path recursion with increments drawn from the
//!   shot-noise series representation of the Levy integral, plus a direct
//!   compound-Poisson sampler for the gamma case.
//! * [`estimation`]: method-of-moments estimators for the mean, the variance
//!   of the driving process and the mean-reversion rate.
//! * [`inference`]: plug-in long-run covariance of the moment vector and
//!   delta-method standard errors.
//! * [`diagnostics`]: autocorrelation comparison, residuals, Ljung-Box test
//!   and one-step-ahead prediction bands.
//! * [`mc_study`]: Monte Carlo harness for estimator accuracy and asymptotic
//!   normality.
//! * [`cli`]: the `levy-ou` command line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod mc_study;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use estimation::{AcfEstimate, LambdaEstimate, MomentEstimates};
pub use simulation::{Family, LevyOUModel, OUParams, SeriesTruncation, TimeSeries};
pub use special::RandomSource;
