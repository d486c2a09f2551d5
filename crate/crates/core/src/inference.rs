//! Asymptotic covariance of the moment estimators.
//!
//! The moment vector `ψ̂ = (μ̂, γ̂(0), …, γ̂(d))` is an average of the rows
//! `Zᵢ = (Yᵢ, (Yᵢ−μ̂)², (Y_{i+1}−μ̂)(Yᵢ−μ̂), …, (Y_{i+d}−μ̂)(Yᵢ−μ̂))`, so its
//! limiting covariance is the long-run covariance of `Z`. That is estimated
//! with Bartlett-weighted autocovariances and then pushed through the
//! Jacobians of `ψ ↦ ρ` and `ψ ↦ θ = (μ, 2γ(0), F(ρ))`, where `F` is the
//! least-squares decay-rate fit.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimation::{fit_decay_rate, sample_autocovariance, sample_mean, MomentEstimates};
use crate::special::normal_quantile;

/// `(μ̂, γ̂(0), …, γ̂(d))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiVector {
    entries: Vec<f64>,
}

impl PsiVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::domain("ψ needs at least (μ, γ(0))"));
        }
        if entries[1] < 0.0 {
            return Err(Error::domain("γ(0) must be nonnegative"));
        }
        Ok(Self { entries })
    }

    pub fn from_series(values: &[f64], d: usize) -> Result<Self> {
        let mut entries = vec![sample_mean(values)?];
        entries.extend(sample_autocovariance(values, d)?);
        Self::new(entries)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn d(&self) -> usize {
        self.entries.len() - 2
    }

    pub fn gamma0(&self) -> f64 {
        self.entries[1]
    }

    /// `ρ(h) = γ(h)/γ(0)` for `h = 0..=d`.
    pub fn rho(&self) -> Result<Vec<f64>> {
        let g0 = self.gamma0();
        if !(g0 > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok(self.entries[1..].iter().map(|g| g / g0).collect())
    }
}

/// Symmetric covariance matrix plus the number of eigenvalues that had to
/// be clipped to keep it positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
    clipped_eigenvalues: usize,
}

impl CovMatrix {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::domain("covariance matrix must be square"));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix: sym, clipped_eigenvalues: 0 })
    }

    /// Replaces negative eigenvalues by zero.
    fn clip_negative_eigenvalues(mut self) -> Self {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let negatives = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        if negatives > 0 {
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            let v = &eig.eigenvectors;
            let m = v * DMatrix::from_diagonal(&clipped) * v.transpose();
            self.matrix = (&m + m.transpose()) * 0.5;
            let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
            self.clipped_eigenvalues =
                eig.eigenvalues.iter().filter(|&&v| v < -1e-12 * scale).count();
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues that were materially negative before clipping.
    pub fn clipped_eigenvalues(&self) -> usize {
        self.clipped_eigenvalues
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn sandwich(jacobian: &DMatrix<f64>, inner: &CovMatrix) -> Result<CovMatrix> {
        CovMatrix::from_matrix(jacobian * &inner.matrix * jacobian.transpose())
    }
}

impl Serialize for CovMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

/// `⌊4·(n/100)^{2/9}⌋`, at least 1.
pub fn default_bandwidth(n: usize) -> usize {
    ((4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize).max(1)
}

/// Rows `Zᵢ` for `i = 0..n−d`, centred at the plug-in mean `mu`.
pub fn z_series(values: &[f64], d: usize, mu: f64) -> Result<DMatrix<f64>> {
    let n = values.len();
    if d >= n {
        return Err(Error::LagTooLarge { d, n });
    }
    let m = n - d;
    Ok(DMatrix::from_fn(m, d + 2, |i, k| match k {
        0 => values[i],
        _ => (values[i + k - 1] - mu) * (values[i] - mu),
    }))
}

/// Bartlett-weighted long-run covariance of the `Z` rows.
pub fn estimate_sigma(values: &[f64], d: usize, bandwidth: usize) -> Result<CovMatrix> {
    let mu = sample_mean(values)?;
    let z = z_series(values, d, mu)?;
    let m = z.nrows();
    if bandwidth >= m {
        return Err(Error::BandwidthTooLarge { bandwidth, usable: m });
    }
    let means = z.row_mean();
    let mut centred = z;
    for mut row in centred.row_iter_mut() {
        row -= &means;
    }

    let lag_cov = |j: usize| -> DMatrix<f64> {
        centred.rows(0, m - j).transpose() * centred.rows(j, m - j) / m as f64
    };
    let mut sigma = lag_cov(0);
    for j in 1..=bandwidth {
        let w = 1.0 - j as f64 / (bandwidth as f64 + 1.0);
        let c = lag_cov(j);
        sigma += (&c + c.transpose()) * w;
    }
    Ok(CovMatrix::from_matrix(sigma)?.clip_negative_eigenvalues())
}

/// Jacobian of `ψ ↦ (ρ(0), …, ρ(d))`, shape `(d+1) × (d+2)`.
pub fn rho_jacobian(psi: &PsiVector) -> Result<DMatrix<f64>> {
    let g0 = psi.gamma0();
    if !(g0 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let d = psi.d();
    let gamma = &psi.entries()[1..];
    let mut jac = DMatrix::zeros(d + 1, d + 2);
    for h in 1..=d {
        jac[(h, 1)] = -gamma[h] / (g0 * g0);
        jac[(h, h + 1)] = 1.0 / g0;
    }
    Ok(jac)
}

/// Asymptotic covariance of `√n(ρ̂ − ρ)`.
pub fn sigma_rho(sigma: &CovMatrix, psi: &PsiVector) -> Result<CovMatrix> {
    check_dims(sigma, psi)?;
    CovMatrix::sandwich(&rho_jacobian(psi)?, sigma)
}

fn check_dims(sigma: &CovMatrix, psi: &PsiVector) -> Result<()> {
    if sigma.dim() != psi.entries().len() {
        return Err(Error::domain(format!(
            "Σ has dimension {} but ψ has length {}",
            sigma.dim(),
            psi.entries().len()
        )));
    }
    Ok(())
}

fn lag_one_init(rho: &[f64], delta: f64) -> Option<f64> {
    match rho.get(1) {
        Some(&r) if r > 0.0 && r < 1.0 => Some(-r.ln() / delta),
        _ => None,
    }
}

/// Gradient of the decay-rate fit `F` with respect to `ρ(0..=d)`, evaluated
/// at its minimiser `lambda`.
///
/// Implicit differentiation of the first-order condition
/// `Σ_h (ρ_h − q_h)·hΔ·q_h = 0` with `q_h = e^{−λhΔ}` gives
/// `∂F/∂ρ_h = −hΔ·q_h / Σ_h (hΔ)²·q_h·(2q_h − ρ_h)`. When the denominator is
/// numerically singular the gradient is taken by central differences.
pub fn decay_rate_gradient(rho: &[f64], d: usize, delta: f64, lambda: f64) -> Result<Vec<f64>> {
    let mut denom = 0.0;
    for h in 1..=d {
        let t = h as f64 * delta;
        let q = (-lambda * t).exp();
        denom += t * t * q * (2.0 * q - rho[h]);
    }
    let mut grad = vec![0.0; d + 1];
    if denom.abs() >= 1e-12 {
        for (h, g) in grad.iter_mut().enumerate().skip(1) {
            let t = h as f64 * delta;
            *g = -t * (-lambda * t).exp() / denom;
        }
        return Ok(grad);
    }
    let init = Some(lambda);
    for h in 1..=d {
        let step = 1e-6 * rho[h].abs().max(1e-3);
        let mut up = rho[..=d].to_vec();
        let mut down = up.clone();
        up[h] += step;
        down[h] -= step;
        let fu = fit_decay_rate(&up, d, delta, init)?.value;
        let fd = fit_decay_rate(&down, d, delta, init)?.value;
        grad[h] = (fu - fd) / (2.0 * step);
    }
    Ok(grad)
}

/// Jacobian of `ψ ↦ (μ, 2γ(0), F(ρ(γ)))`, shape `3 × (d+2)`.
///
/// Fails with [`Error::ClampedEstimator`] when the implied decay rate sits
/// at the zero boundary.
pub fn theta_jacobian(psi: &PsiVector, d: usize, delta: f64) -> Result<DMatrix<f64>> {
    if d != psi.d() {
        return Err(Error::domain(format!("d = {d} but ψ carries {} lags", psi.d())));
    }
    let rho = psi.rho()?;
    let fit = fit_decay_rate(&rho, d, delta, lag_one_init(&rho, delta))?;
    if fit.clamped {
        return Err(Error::ClampedEstimator);
    }
    let grad = decay_rate_gradient(&rho, d, delta, fit.value)?;
    let rho_jac = rho_jacobian(psi)?;

    let mut jac = DMatrix::zeros(3, d + 2);
    jac[(0, 0)] = 1.0;
    jac[(1, 1)] = 2.0;
    let row = DMatrix::from_row_slice(1, d + 1, &grad) * rho_jac;
    jac.row_mut(2).copy_from(&row.row(0));
    Ok(jac)
}

/// Asymptotic covariance of `√n(θ̂ − θ)` for θ̂ = (μ̂, σ̂², λ̂₂).
pub fn sigma_theta(sigma: &CovMatrix, psi: &PsiVector, d: usize, delta: f64) -> Result<CovMatrix> {
    check_dims(sigma, psi)?;
    CovMatrix::sandwich(&theta_jacobian(psi, d, delta)?, sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Normal-theory intervals `θ̂ᵢ ± z·√(Σ_θ(i,i)/n)`; the σ² and λ lower
/// limits are floored at zero.
pub fn confidence_intervals(
    estimates: &MomentEstimates,
    sigma_theta: &CovMatrix,
    level: f64,
) -> Result<[Interval; 3]> {
    if estimates.lambda2_clamped {
        return Err(Error::ClampedEstimator);
    }
    if sigma_theta.dim() != 3 {
        return Err(Error::domain("Σ_θ must be 3×3"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must be in (0,1), got {level}")));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    let n = estimates.acf.n as f64;
    let theta = estimates.theta();
    Ok(std::array::from_fn(|i| {
        let half = z * (sigma_theta.get(i, i).max(0.0) / n).sqrt();
        let mut lower = theta[i] - half;
        if i > 0 {
            lower = lower.max(0.0);
        }
        Interval { lower, upper: theta[i] + half }
    }))
}

/// Standard errors `√(Σ_θ(i,i)/n)`.
pub fn standard_errors(sigma_theta: &CovMatrix, n: usize) -> [f64; 3] {
    std::array::from_fn(|i| (sigma_theta.get(i, i).max(0.0) / n as f64).sqrt())
}

/// Everything the `estimate --ci` report needs.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaInference {
    pub bandwidth: usize,
    pub sigma: CovMatrix,
    pub sigma_theta: CovMatrix,
    pub standard_errors: [f64; 3],
    pub level: f64,
    pub intervals: [Interval; 3],
    pub clipped_eigenvalues: usize,
}

pub fn theta_inference(
    values: &[f64],
    estimates: &MomentEstimates,
    bandwidth: Option<usize>,
    level: f64,
) -> Result<ThetaInference> {
    let d = estimates.acf.d;
    let bandwidth = bandwidth.unwrap_or_else(|| default_bandwidth(values.len()));
    let sigma = estimate_sigma(values, d, bandwidth)?;
    let psi = PsiVector::from_series(values, d)?;
    let st = sigma_theta(&sigma, &psi, d, estimates.delta)?;
    let intervals = confidence_intervals(estimates, &st, level)?;
    Ok(ThetaInference {
        bandwidth,
        clipped_eigenvalues: sigma.clipped_eigenvalues(),
        standard_errors: standard_errors(&st, values.len()),
        sigma,
        sigma_theta: st,
        level,
        intervals,
    })
}
