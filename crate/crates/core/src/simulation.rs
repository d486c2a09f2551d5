//! Sample paths of gamma-OU and inverse-Gaussian-OU processes.
//!
//! The process is advanced on a grid of step `Δ` with the exact recursion
//!
//! ```text
//! Y(t+Δ) = e^{−λΔ} · ( Y(t) + ∫₀^{λΔ} e^u dL_u )
//! ```
//!
//! and the Levy integral is drawn from its shot-noise series
//! `Σᵢ Γ⁻¹(αᵢ/T) · e^{T·rᵢ}` with `T = λΔ`, where `αᵢ` are unit-rate Poisson
//! arrival times, `rᵢ` iid uniforms and `Γ⁻¹` the inverse tail mass of the
//! driving process' Levy measure.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    lambert_w0, sample_gamma, sample_inverse_gaussian, sample_poisson, RandomSource,
};

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

/// Background driving process family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Compound Poisson BDLP with exponential jumps; Gamma(a, b) marginal.
    Gamma,
    /// IG(a, b) marginal.
    #[serde(rename = "ig")]
    InverseGaussian,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gamma => f.write_str("gamma"),
            Family::InverseGaussian => f.write_str("ig"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Family::Gamma),
            "ig" | "inverse-gaussian" | "inverse_gaussian" => Ok(Family::InverseGaussian),
            other => Err(Error::domain(format!("unknown family `{other}`"))),
        }
    }
}

/// A Levy-driven OU marginal law, parametrised by its `(a, b)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyOUModel {
    pub family: Family,
    pub a: f64,
    pub b: f64,
}

impl LevyOUModel {
    pub fn new(family: Family, a: f64, b: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("b", b)?;
        Ok(Self { family, a, b })
    }

    pub fn gamma(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::Gamma, a, b)
    }

    pub fn inverse_gaussian(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::InverseGaussian, a, b)
    }

    /// Model whose driving process has mean `mu` and variance `sigma2`.
    pub fn from_moments(family: Family, mu: f64, sigma2: f64) -> Result<Self> {
        let (a, b) = match family {
            Family::Gamma => gamma_params_from_moments(mu, sigma2)?,
            Family::InverseGaussian => ig_params_from_moments(mu, sigma2)?,
        };
        Self::new(family, a, b)
    }

    /// Mean of the stationary law, equal to `E L₁`.
    pub fn stationary_mean(&self) -> f64 {
        self.a / self.b
    }

    /// Variance of the stationary law, equal to `Var L₁ / 2`.
    pub fn stationary_variance(&self) -> f64 {
        match self.family {
            Family::Gamma => self.a / (self.b * self.b),
            Family::InverseGaussian => self.a / (self.b * self.b * self.b),
        }
    }

    /// Generalised inverse of the tail mass function of the BDLP Levy measure.
    pub fn inverse_tail_mass(&self, x: f64) -> Result<f64> {
        check_positive("tail mass argument", x)?;
        Ok(self.inverse_tail_mass_unchecked(x))
    }

    #[inline]
    fn inverse_tail_mass_unchecked(&self, x: f64) -> f64 {
        match self.family {
            Family::Gamma => (-(x / self.a).ln() / self.b).max(0.0),
            Family::InverseGaussian => {
                let ab = self.a * self.b;
                let arg = ab * ab / (2.0 * PI * x * x);
                // The argument is finite and nonnegative for x > 0.
                lambert_w0(arg).unwrap_or(0.0) / (self.b * self.b)
            }
        }
    }
}

/// `a = 2μ²/σ²`, `b = 2μ/σ²`.
pub fn gamma_params_from_moments(mu: f64, sigma2: f64) -> Result<(f64, f64)> {
    check_positive("mu", mu)?;
    check_positive("sigma2", sigma2)?;
    Ok((2.0 * mu * mu / sigma2, 2.0 * mu / sigma2))
}

/// `b = √(2μ/σ²)`, `a = μ·b`.
pub fn ig_params_from_moments(mu: f64, sigma2: f64) -> Result<(f64, f64)> {
    check_positive("mu", mu)?;
    check_positive("sigma2", sigma2)?;
    let b = (2.0 * mu / sigma2).sqrt();
    Ok((mu * b, b))
}

/// Statistical parameters θ = (μ, σ², λ) and the sampling step Δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    /// Mean of `L₁` and of the stationary law.
    pub mu: f64,
    /// Variance of `L₁`; the stationary variance is `sigma2 / 2`.
    pub sigma2: f64,
    /// Mean-reversion rate. Zero flags nonstationarity.
    pub lambda: f64,
    pub delta: f64,
}

impl OUParams {
    pub fn new(mu: f64, sigma2: f64, lambda: f64, delta: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("mu must be finite, got {mu}")));
        }
        check_positive("sigma2", sigma2)?;
        check_positive("delta", delta)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("lambda must be nonnegative, got {lambda}")));
        }
        Ok(Self { mu, sigma2, lambda, delta })
    }

    pub fn model(&self, family: Family) -> Result<LevyOUModel> {
        LevyOUModel::from_moments(family, self.mu, self.sigma2)
    }
}

/// Stopping rule for the shot-noise series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub max_terms: usize,
    /// Stop once `Γ⁻¹(αᵢ/T)·e^T` drops below this value.
    pub tail_tol: f64,
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        Self { max_terms: 10_000, tail_tol: 1e-10 }
    }
}

impl SeriesTruncation {
    pub fn new(max_terms: usize, tail_tol: f64) -> Result<Self> {
        if max_terms == 0 {
            return Err(Error::domain("max_terms must be at least 1"));
        }
        check_positive("tail_tol", tail_tol)?;
        Ok(Self { max_terms, tail_tol })
    }
}

/// Equally spaced observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    delta: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, delta: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        check_positive("delta", delta)?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("series contains a non-finite value {bad}")));
        }
        Ok(Self { values, delta })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// One draw of a Levy integral together with truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementDraw {
    pub value: f64,
    pub terms: usize,
    /// `max_terms` was reached before the tail tolerance.
    pub budget_exceeded: bool,
}

/// Terms of the series for `∫₀^T e^u dL_u`, in emission order.
///
/// Returns the terms and whether the term budget ran out first.
pub fn series_terms(
    model: &LevyOUModel,
    horizon: f64,
    rng: &mut RandomSource,
    trunc: &SeriesTruncation,
) -> Result<(Vec<f64>, bool)> {
    let mut terms = Vec::new();
    let exceeded = walk_series(model, horizon, rng, trunc, |t| terms.push(t))?;
    Ok((terms, exceeded))
}

fn walk_series(
    model: &LevyOUModel,
    horizon: f64,
    rng: &mut RandomSource,
    trunc: &SeriesTruncation,
    mut emit: impl FnMut(f64),
) -> Result<bool> {
    check_positive("horizon", horizon)?;
    let bound = horizon.exp();
    let mut arrivals = 0.0;
    for _ in 0..trunc.max_terms {
        arrivals += rng.exp1();
        let jump = model.inverse_tail_mass_unchecked(arrivals / horizon);
        if jump * bound < trunc.tail_tol {
            return Ok(false);
        }
        let r = rng.uniform();
        emit(jump * (horizon * r).exp());
    }
    Ok(true)
}

/// Draw of `∫₀^T e^u dL_u` from the truncated series representation.
pub fn sample_levy_integral(
    model: &LevyOUModel,
    horizon: f64,
    rng: &mut RandomSource,
    trunc: &SeriesTruncation,
) -> Result<IncrementDraw> {
    let mut value = 0.0;
    let mut terms = 0;
    let budget_exceeded = walk_series(model, horizon, rng, trunc, |t| {
        value += t;
        terms += 1;
    })?;
    Ok(IncrementDraw { value, terms, budget_exceeded })
}

/// Draw of the OU increment `∫₀^Δ e^{λs} dL_{λs}`, i.e. the Levy integral
/// over `[0, λΔ]`.
pub fn sample_increment_integral(
    model: &LevyOUModel,
    lambda: f64,
    delta: f64,
    rng: &mut RandomSource,
    trunc: &SeriesTruncation,
) -> Result<IncrementDraw> {
    check_positive("lambda", lambda)?;
    check_positive("delta", delta)?;
    sample_levy_integral(model, lambda * delta, rng, trunc)
}

/// Jump times and sizes `(uᵢ, xᵢ)` of the gamma BDLP on `[0, λΔ]`: a
/// Poisson(a·λΔ) number of uniform times with exponential(b) sizes.
pub fn sample_cp_gamma_jumps(
    a: f64,
    b: f64,
    lambda: f64,
    delta: f64,
    rng: &mut RandomSource,
) -> Result<Vec<(f64, f64)>> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    if !(lambda >= 0.0 && delta >= 0.0) {
        return Err(Error::domain("lambda and delta must be nonnegative"));
    }
    let horizon = lambda * delta;
    let count = sample_poisson(rng, a * horizon)?;
    Ok((0..count)
        .map(|_| {
            let u = horizon * rng.uniform();
            let x = rng.exp1() / b;
            (u, x)
        })
        .collect())
}

/// Exact compound-Poisson draw of `∫₀^{λΔ} e^u dL_u` for the gamma BDLP.
pub fn sample_cp_gamma_increment(
    a: f64,
    b: f64,
    lambda: f64,
    delta: f64,
    rng: &mut RandomSource,
) -> Result<f64> {
    Ok(sample_cp_gamma_jumps(a, b, lambda, delta, rng)?
        .into_iter()
        .map(|(u, x)| x * u.exp())
        .sum())
}

/// Exact draw from the stationary law: Gamma(a, b) or IG(a, b).
pub fn sample_stationary_initial(model: &LevyOUModel, rng: &mut RandomSource) -> Result<f64> {
    match model.family {
        Family::Gamma => sample_gamma(rng, model.a, model.b),
        // IG(a, b) has mean a/b and Wald shape a².
        Family::InverseGaussian => sample_inverse_gaussian(rng, model.a / model.b, model.a * model.a),
    }
}

/// A simulated path and the number of increments that hit the term budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub series: TimeSeries,
    pub truncation_warnings: usize,
}

/// `n` observations of the stationary OU process with step `delta`.
pub fn simulate_path(
    model: &LevyOUModel,
    lambda: f64,
    n: usize,
    delta: f64,
    rng: &mut RandomSource,
    trunc: &SeriesTruncation,
) -> Result<SimulatedPath> {
    if n == 0 {
        return Err(Error::domain("path length must be at least 1"));
    }
    check_positive("lambda", lambda)?;
    check_positive("delta", delta)?;

    let decay = (-lambda * delta).exp();
    let mut values = Vec::with_capacity(n);
    let mut y = sample_stationary_initial(model, rng)?;
    values.push(y);
    let mut warnings = 0;
    for _ in 1..n {
        let inc = sample_increment_integral(model, lambda, delta, rng, trunc)?;
        if inc.budget_exceeded {
            warnings += 1;
        }
        y = decay * (y + inc.value);
        values.push(y);
    }
    Ok(SimulatedPath {
        series: TimeSeries::new(values, delta)?,
        truncation_warnings: warnings,
    })
}
