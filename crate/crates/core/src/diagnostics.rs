//! Fit diagnostics: ACF comparison, one-step residuals, Ljung-Box test and
//! simulated one-step-ahead prediction bands.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::MomentEstimates;
use crate::simulation::{sample_increment_integral, LevyOUModel, SeriesTruncation, TimeSeries};
use crate::special::{chi_square_sf, RandomSource};

/// Number of simulated continuations per observation unless overridden.
pub const DEFAULT_PREDICTION_PATHS: usize = 50;

/// Model autocorrelations `e^{−λhΔ}` for `h = 1..=d`.
pub fn theoretical_acf(lambda: f64, delta: f64, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::domain("need at least one lag"));
    }
    if !(lambda >= 0.0) || !(delta > 0.0) {
        return Err(Error::domain("lambda must be nonnegative and delta positive"));
    }
    Ok((1..=d).map(|h| (-lambda * h as f64 * delta).exp()).collect())
}

/// One-step conditional-mean residuals
/// `r_i = Y_{i+1} − e^{−λ̂Δ}·Y_i − μ̂·(1 − e^{−λ̂Δ})`, using λ̂₂.
pub fn residuals(series: &TimeSeries, estimates: &MomentEstimates) -> Result<Vec<f64>> {
    if estimates.lambda2_clamped {
        return Err(Error::ClampedEstimator);
    }
    if series.len() < 2 {
        return Err(Error::domain("residuals need at least two observations"));
    }
    let q = (-estimates.lambda2_hat * series.delta()).exp();
    let level = estimates.mu_hat * (1.0 - q);
    Ok(series
        .values()
        .windows(2)
        .map(|w| w[1] - q * w[0] - level)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LjungBoxResult {
    pub statistic: f64,
    pub lags: usize,
    pub p_value: f64,
}

/// `Q = n(n+2)·Σ_{k=1}^{m} ρ̂_k²/(n−k)`, referred to χ² with `m` degrees of
/// freedom.
pub fn ljung_box(x: &[f64], m: usize) -> Result<LjungBoxResult> {
    let n = x.len();
    if m == 0 || m >= n {
        return Err(Error::LagTooLarge { d: m, n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centred.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let nf = n as f64;
    let statistic = nf
        * (nf + 2.0)
        * (1..=m)
            .map(|k| {
                let num: f64 = centred[k..].iter().zip(&centred[..n - k]).map(|(a, b)| a * b).sum();
                let r = num / denom;
                r * r / (nf - k as f64)
            })
            .sum::<f64>();
    Ok(LjungBoxResult { statistic, lags: m, p_value: chi_square_sf(statistic, m)? })
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// One-step-ahead predictions with 95% simulation bands. Element `i`
/// predicts the value one step after `history[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionBand {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_paths: usize,
}

pub fn predict_one_step(
    model: &LevyOUModel,
    lambda: f64,
    delta: f64,
    history: &TimeSeries,
    n_paths: usize,
    rng: &mut RandomSource,
    trunc: &SeriesTruncation,
) -> Result<PredictionBand> {
    if n_paths < 2 {
        return Err(Error::domain("prediction bands need at least two paths"));
    }
    let decay = (-lambda * delta).exp();
    let root = rng.child_seed();
    let rows: Vec<(f64, f64, f64)> = history
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut stream = RandomSource::stream(root, i as u64);
            let mut draws = (0..n_paths)
                .map(|_| {
                    sample_increment_integral(model, lambda, delta, &mut stream, trunc)
                        .map(|inc| decay * (y + inc.value))
                })
                .collect::<Result<Vec<f64>>>()?;
            let point = draws.iter().sum::<f64>() / n_paths as f64;
            draws.sort_by(f64::total_cmp);
            let lower = quantile_sorted(&draws, 0.025);
            let upper = quantile_sorted(&draws, 0.975);
            Ok((point, lower, upper))
        })
        .collect::<Result<_>>()?;

    let mut band = PredictionBand {
        point: Vec::with_capacity(rows.len()),
        lower: Vec::with_capacity(rows.len()),
        upper: Vec::with_capacity(rows.len()),
        n_paths,
    };
    for (p, l, u) in rows {
        band.point.push(p);
        band.lower.push(l);
        band.upper.push(u);
    }
    Ok(band)
}

/// Fraction of `realized[i]` that fall inside `[lower[i], upper[i]]`.
pub fn band_coverage(band: &PredictionBand, realized: &[f64]) -> f64 {
    let k = realized.len().min(band.point.len());
    if k == 0 {
        return f64::NAN;
    }
    let inside = (0..k)
        .filter(|&i| realized[i] >= band.lower[i] && realized[i] <= band.upper[i])
        .count();
    inside as f64 / k as f64
}
