//! Method-of-moments estimators from equally spaced observations.
//!
//! With `γ̂(h)` the sample autocovariance (normalised by `n`) and
//! `ρ̂(h) = γ̂(h)/γ̂(0)`, the estimators are
//!
//! * `μ̂ = mean(Y)`
//! * `σ̂² = 2·γ̂(0)`
//! * `λ̂₁ = −ln ρ̂(1) / Δ`
//! * `λ̂₂ = argmin_λ Σ_{h=1}^{d} (ρ̂(h) − e^{−λhΔ})²`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulation::TimeSeries;

/// Number of autocorrelation lags used when the caller does not choose.
pub const DEFAULT_LAGS: usize = 10;

const ARGMIN_XTOL: f64 = 1e-8;
const GRID_POINTS: usize = 256;

/// Sample autocovariances and autocorrelations up to lag `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfEstimate {
    pub gamma_hat: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

impl AcfEstimate {
    /// Builds an estimate directly from autocorrelations `ρ(0..=d)`, taking
    /// `γ(0) = 1`.
    pub fn from_autocorrelations(rho: Vec<f64>, n: usize) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::domain("need at least ρ(0)"));
        }
        let d = rho.len() - 1;
        Ok(Self { gamma_hat: rho.clone(), rho_hat: rho, n, d })
    }
}

/// A mean-reversion estimate; `clamped` marks the nonstationary boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub value: f64,
    pub clamped: bool,
}

/// All four moment estimators computed from one shared ACF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    /// `None` when `ρ̂(1) ≤ 0`.
    pub lambda1_hat: Option<f64>,
    pub lambda1_clamped: bool,
    pub lambda2_hat: f64,
    pub lambda2_clamped: bool,
    pub acf: AcfEstimate,
    pub delta: f64,
    pub nonstationary_flag: bool,
}

impl MomentEstimates {
    pub fn lambda1_undefined(&self) -> bool {
        self.lambda1_hat.is_none()
    }

    /// Point estimate θ̂ = (μ̂, σ̂², λ̂₂).
    pub fn theta(&self) -> [f64; 3] {
        [self.mu_hat, self.sigma2_hat, self.lambda2_hat]
    }
}

pub fn sample_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Autocovariances `γ̂(0..=d)` centred at the sample mean, divided by `n`.
pub fn sample_autocovariance(values: &[f64], d: usize) -> Result<Vec<f64>> {
    let n = values.len();
    let mean = sample_mean(values)?;
    if d >= n {
        return Err(Error::LagTooLarge { d, n });
    }
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    Ok((0..=d)
        .map(|h| {
            centred[h..]
                .iter()
                .zip(&centred[..n - h])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect())
}

pub fn sample_acf(values: &[f64], d: usize) -> Result<AcfEstimate> {
    let gamma_hat = sample_autocovariance(values, d)?;
    let g0 = gamma_hat[0];
    let rho_hat = if g0 > 0.0 {
        gamma_hat.iter().map(|g| g / g0).collect()
    } else if d == 0 {
        vec![1.0]
    } else {
        return Err(Error::ZeroVariance);
    };
    Ok(AcfEstimate { gamma_hat, rho_hat, n: values.len(), d })
}

/// `σ̂² = 2·γ̂(0)`.
pub fn sigma2_estimate(acf: &AcfEstimate) -> f64 {
    2.0 * acf.gamma_hat[0]
}

pub fn lambda_hat_1(acf: &AcfEstimate, delta: f64) -> Result<LambdaEstimate> {
    if acf.d < 1 {
        return Err(Error::domain("lag-1 autocorrelation required"));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    let r1 = acf.rho_hat[1];
    if r1 >= 1.0 {
        Ok(LambdaEstimate { value: 0.0, clamped: true })
    } else if r1 > 0.0 {
        Ok(LambdaEstimate { value: -r1.ln() / delta, clamped: false })
    } else {
        Err(Error::EstimatorUndefined(format!(
            "lag-1 autocorrelation {r1} is not positive"
        )))
    }
}

/// Largest admissible decay rate: beyond it `e^{−λΔ}` falls under machine
/// epsilon.
pub fn lambda_upper_bound(delta: f64) -> f64 {
    -f64::EPSILON.ln() / delta
}

/// Least-squares distance between `ρ(1..=d)` and the exponential ACF.
pub fn acf_objective(rho: &[f64], d: usize, delta: f64, lambda: f64) -> f64 {
    (1..=d)
        .map(|h| {
            let r = rho[h] - (-lambda * h as f64 * delta).exp();
            r * r
        })
        .sum()
}

/// Half the derivative of [`acf_objective`] in `λ` and its own derivative.
fn first_order_condition(rho: &[f64], d: usize, delta: f64, lambda: f64) -> (f64, f64) {
    let mut g = 0.0;
    let mut dg = 0.0;
    for h in 1..=d {
        let t = h as f64 * delta;
        let q = (-lambda * t).exp();
        g += (rho[h] - q) * t * q;
        dg += t * t * q * (2.0 * q - rho[h]);
    }
    (g, dg)
}

/// Scalar minimiser on `[lo, hi]` combining golden-section and parabolic
/// steps. Returns `(x, f(x))` for the best point visited; `start` must lie
/// in the interval.
fn brent_minimize(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    xtol: f64,
) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut x, mut w, mut v) = (start, start, start);
    let fx0 = f(x);
    let (mut fx, mut fw, mut fv) = (fx0, fx0, fx0);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let tol1 = xtol / 3.0 + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (lo - x) && p < q * (hi - x) {
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = if mid >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { lo - x } else { hi - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Minimiser of [`acf_objective`] over `λ ∈ [0, Λ_max]`.
///
/// A coarse scan (uniform in `e^{−λΔ}`, plus `init`) locates the best
/// bracket, Brent refinement narrows it to `1e-8`, and Newton steps on the
/// first-order condition polish the result as long as the objective does not
/// increase. A minimiser at the lower boundary is reported as `0`, clamped.
pub fn fit_decay_rate(rho: &[f64], d: usize, delta: f64, init: Option<f64>) -> Result<LambdaEstimate> {
    if d == 0 || d >= rho.len() {
        return Err(Error::domain(format!(
            "need 1 ≤ d ≤ {}, got d = {d}",
            rho.len().saturating_sub(1)
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    let upper = lambda_upper_bound(delta);
    let objective = |lambda: f64| acf_objective(rho, d, delta, lambda);

    let mut grid: Vec<f64> = (0..=GRID_POINTS)
        .map(|k| {
            if k == GRID_POINTS {
                upper
            } else {
                let q = 1.0 - k as f64 / GRID_POINTS as f64;
                (-q.ln() / delta).min(upper)
            }
        })
        .collect();
    let init = init.unwrap_or(0.5 * upper);
    if init.is_finite() {
        grid.push(init.clamp(0.0, upper));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let values: Vec<f64> = grid.iter().map(|&l| objective(l)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut lambda, _) = brent_minimize(objective, lo, hi, grid[best], ARGMIN_XTOL);

    for _ in 0..20 {
        let (g, dg) = first_order_condition(rho, d, delta, lambda);
        if !(dg > 0.0) {
            break;
        }
        let candidate = lambda - g / dg;
        if !(candidate >= lo && candidate <= hi) {
            break;
        }
        let (gc, _) = first_order_condition(rho, d, delta, candidate);
        if gc.abs() >= g.abs() {
            break;
        }
        let moved = (candidate - lambda).abs();
        lambda = candidate;
        if moved <= 1e-15 * lambda.abs().max(1.0) {
            break;
        }
    }

    if lambda <= ARGMIN_XTOL {
        Ok(LambdaEstimate { value: 0.0, clamped: true })
    } else {
        Ok(LambdaEstimate { value: lambda, clamped: false })
    }
}

pub fn lambda_hat_2(
    acf: &AcfEstimate,
    d: usize,
    delta: f64,
    init: Option<f64>,
) -> Result<LambdaEstimate> {
    if d > acf.d {
        return Err(Error::LagTooLarge { d, n: acf.d + 1 });
    }
    fit_decay_rate(&acf.rho_hat, d, delta, init)
}

pub fn estimate_all(series: &TimeSeries, d: usize) -> Result<MomentEstimates> {
    if d == 0 {
        return Err(Error::domain("at least one lag is required"));
    }
    let delta = series.delta();
    let values = series.values();
    let mu_hat = sample_mean(values)?;
    let acf = sample_acf(values, d)?;
    let sigma2_hat = sigma2_estimate(&acf);

    let (lambda1_hat, lambda1_clamped) = match lambda_hat_1(&acf, delta) {
        Ok(est) => (Some(est.value), est.clamped),
        Err(Error::EstimatorUndefined(_)) => (None, false),
        Err(e) => return Err(e),
    };
    let lambda2 = lambda_hat_2(&acf, d, delta, lambda1_hat)?;

    Ok(MomentEstimates {
        mu_hat,
        sigma2_hat,
        lambda1_hat,
        lambda1_clamped,
        lambda2_hat: lambda2.value,
        lambda2_clamped: lambda2.clamped,
        acf,
        delta,
        nonstationary_flag: lambda1_clamped || lambda2.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALTERNATING: [f64; 4] = [0.0, 1.0, 0.0, 1.0];

    #[test]
    fn mean_examples() {
        assert_eq!(sample_mean(&ALTERNATING).unwrap(), 0.5);
        assert_eq!(sample_mean(&[3.25; 7]).unwrap(), 3.25);
        assert_eq!(sample_mean(&[]), Err(Error::EmptySeries));
    }

    #[test]
    fn hand_computed_acf() {
        let acf = sample_acf(&ALTERNATING, 1).unwrap();
        assert_eq!(acf.gamma_hat, vec![0.25, -0.1875]);
        assert_eq!(acf.rho_hat, vec![1.0, -0.75]);
        assert_eq!(sigma2_estimate(&acf), 0.5);
        assert!(matches!(lambda_hat_1(&acf, 1.0), Err(Error::EstimatorUndefined(_))));
    }

    #[test]
    fn acf_errors() {
        assert_eq!(sample_acf(&[1.0, 2.0], 2), Err(Error::LagTooLarge { d: 2, n: 2 }));
        assert_eq!(sample_acf(&[4.0; 5], 1), Err(Error::ZeroVariance));
        let flat = sample_acf(&[4.0; 5], 0).unwrap();
        assert_eq!(flat.rho_hat, vec![1.0]);
        assert_eq!(sigma2_estimate(&flat), 0.0);
    }

    #[test]
    fn lambda1_exact_inversion_and_clamp() {
        let acf = AcfEstimate::from_autocorrelations(vec![1.0, (-0.05f64).exp()], 100).unwrap();
        let est = lambda_hat_1(&acf, 0.1).unwrap();
        assert!((est.value - 0.5).abs() < 1e-12);
        assert!(!est.clamped);

        let acf = AcfEstimate::from_autocorrelations(vec![1.0, 1.0], 100).unwrap();
        assert_eq!(lambda_hat_1(&acf, 0.1).unwrap(), LambdaEstimate { value: 0.0, clamped: true });
    }

    #[test]
    fn lambda2_recovers_exact_acf() {
        let rho: Vec<f64> = (0..=10).map(|h| (-0.5 * h as f64 * 0.1).exp()).collect();
        let acf = AcfEstimate::from_autocorrelations(rho, 1000).unwrap();
        for init in [None, Some(0.1), Some(30.0)] {
            let est = lambda_hat_2(&acf, 10, 0.1, init).unwrap();
            assert!((est.value - 0.5).abs() < 1e-6, "{est:?}");
            assert!(!est.clamped);
        }
    }

    #[test]
    fn lambda2_clamps_on_flat_acf() {
        let acf = AcfEstimate::from_autocorrelations(vec![1.0; 11], 1000).unwrap();
        let est = lambda_hat_2(&acf, 10, 0.1, Some(0.0)).unwrap();
        assert_eq!(est, LambdaEstimate { value: 0.0, clamped: true });
    }

    #[test]
    fn lambda2_precondition() {
        let acf = AcfEstimate::from_autocorrelations(vec![1.0, 0.5], 10).unwrap();
        assert!(lambda_hat_2(&acf, 2, 1.0, None).is_err());
        assert!(lambda_hat_2(&acf, 0, 1.0, None).is_err());
    }

    #[test]
    fn two_point_series() {
        let series = TimeSeries::new(vec![1.0, 2.0], 1.0).unwrap();
        let est = estimate_all(&series, 1).unwrap();
        assert_eq!(est.mu_hat, 1.5);
        assert_eq!(est.sigma2_hat, 0.5);
        // γ̂(1) = (0.5·−0.5)/2, so ρ̂(1) = −0.5.
        assert_eq!(est.acf.rho_hat[1], -0.5);
        assert!(est.lambda1_undefined());
    }

    #[test]
    fn white_noise_gives_large_rate() {
        let mut rng = crate::special::RandomSource::new(21);
        let values: Vec<f64> = (0..5000).map(|_| rng.standard_normal()).collect();
        let series = TimeSeries::new(values, 1.0).unwrap();
        let est = estimate_all(&series, 10).unwrap();
        assert!(est.lambda2_hat > 2.0, "{}", est.lambda2_hat);
        if let Some(l1) = est.lambda1_hat {
            assert!(l1 > 2.0);
        }
    }

    #[test]
    fn objective_certificate() {
        let rho = vec![1.0, 0.93, 0.9, 0.84, 0.8, 0.79, 0.7, 0.69, 0.6, 0.61, 0.5];
        let acf = AcfEstimate::from_autocorrelations(rho.clone(), 500).unwrap();
        let l1 = lambda_hat_1(&acf, 0.1).unwrap().value;
        let l2 = lambda_hat_2(&acf, 10, 0.1, Some(l1)).unwrap().value;
        let f = |l| acf_objective(&rho, 10, 0.1, l);
        assert!(f(l2) <= f(l1));
        assert!(f(l2) <= f(0.0));
        assert!(f(l2) <= f(lambda_upper_bound(0.1)));
        let (g, _) = first_order_condition(&rho, 10, 0.1, l2);
        assert!(g.abs() < 1e-12, "{g}");
    }
}
