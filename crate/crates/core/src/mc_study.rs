//! Monte Carlo harness: repeated simulate-then-estimate runs and an
//! empirical check of asymptotic normality.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate_all, MomentEstimates};
use crate::simulation::{simulate_path, Family, LevyOUModel, SeriesTruncation};
use crate::special::{normal_cdf, RandomSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub family: Family,
    /// True θ₀ = (μ, σ², λ).
    pub theta0: [f64; 3],
    pub n_obs: usize,
    pub delta: f64,
    pub n_paths: usize,
    pub d: usize,
    pub seed: u64,
    #[serde(default)]
    pub truncation: SeriesTruncation,
}

impl StudyConfig {
    /// Gamma-OU with θ₀ = (2, 0.25, 0.5), Δ = 0.1, 100 paths of 1000
    /// observations and 10 lags.
    pub fn baseline(family: Family, lambda: f64, seed: u64) -> Self {
        Self {
            family,
            theta0: [2.0, 0.25, lambda],
            n_obs: 1000,
            delta: 0.1,
            n_paths: 100,
            d: 10,
            seed,
            truncation: SeriesTruncation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::domain("at least one lag is required"));
        }
        if self.n_obs < self.d + 2 {
            return Err(Error::domain(format!(
                "n_obs = {} must be at least d + 2 = {}",
                self.n_obs,
                self.d + 2
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::domain("need at least two paths for a standard error"));
        }
        if !(self.theta0[2] > 0.0) {
            return Err(Error::domain("lambda must be positive for a stationary study"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::domain("delta must be positive"));
        }
        self.model().map(|_| ())
    }

    pub fn model(&self) -> Result<LevyOUModel> {
        LevyOUModel::from_moments(self.family, self.theta0[0], self.theta0[1])
    }
}

/// Estimates from one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEstimate {
    pub stream: u64,
    pub estimates: MomentEstimates,
    pub truncation_warnings: usize,
}

/// Simulates and fits the path driven by RNG stream `(config.seed, stream)`.
pub fn estimate_path(config: &StudyConfig, stream: u64) -> Result<PathEstimate> {
    let model = config.model()?;
    let mut rng = RandomSource::stream(config.seed, stream);
    let path = simulate_path(
        &model,
        config.theta0[2],
        config.n_obs,
        config.delta,
        &mut rng,
        &config.truncation,
    )?;
    let estimates = estimate_all(&path.series, config.d)?;
    Ok(PathEstimate { stream, estimates, truncation_warnings: path.truncation_warnings })
}

fn run_paths(config: &StudyConfig, count: usize) -> Vec<Result<PathEstimate>> {
    (0..count as u64)
        .into_par_iter()
        .map(|p| estimate_path(config, p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub truth: f64,
    pub mean: f64,
    /// Cross-path sample standard deviation.
    pub std_error: f64,
    pub count: usize,
}

impl EstimatorSummary {
    fn from_values(truth: f64, values: &[f64]) -> Self {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            f64::NAN
        };
        Self { truth, mean, std_error: var.sqrt(), count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub schema: u32,
    pub config: StudyConfig,
    pub mu: EstimatorSummary,
    pub sigma2: EstimatorSummary,
    pub lambda1: EstimatorSummary,
    pub lambda2: EstimatorSummary,
    pub lambda1_undefined: usize,
    pub lambda1_clamped: usize,
    pub lambda2_clamped: usize,
    pub failed_paths: usize,
    pub truncation_warnings: usize,
}

impl StudyReport {
    /// Four-row summary table: μ, σ², λ via λ̂₁, λ via λ̂₂.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>14} {:>18}   Comments",
            "True Values", "Est. Values", "Sample Std. Error"
        );
        let rows = [
            (format!("mu={}", self.mu.truth), &self.mu, "-"),
            (format!("sigma2={}", self.sigma2.truth), &self.sigma2, "-"),
            (format!("lambda={}", self.lambda1.truth), &self.lambda1, "lambda_hat = lambda_hat_1"),
            (format!("lambda={}", self.lambda2.truth), &self.lambda2, "lambda_hat = lambda_hat_2"),
        ];
        for (label, s, comment) in rows {
            let _ = writeln!(out, "{:<18} {:>14.7} {:>18.7}   {}", label, s.mean, s.std_error, comment);
        }
        out
    }
}

fn summarize(config: &StudyConfig, results: Vec<Result<PathEstimate>>) -> Result<StudyReport> {
    let mut failed = 0;
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(p) => ok.push(p),
            Err(_) => failed += 1,
        }
    }
    if ok.len() < 2 {
        return Err(Error::domain(format!(
            "only {} of {} paths produced estimates",
            ok.len(),
            config.n_paths
        )));
    }
    let collect = |f: &dyn Fn(&MomentEstimates) -> Option<f64>| -> Vec<f64> {
        ok.iter().filter_map(|p| f(&p.estimates)).collect()
    };
    let [mu0, s0, l0] = config.theta0;
    let lambda1_values = collect(&|e| e.lambda1_hat);
    Ok(StudyReport {
        schema: 1,
        config: config.clone(),
        mu: EstimatorSummary::from_values(mu0, &collect(&|e| Some(e.mu_hat))),
        sigma2: EstimatorSummary::from_values(s0, &collect(&|e| Some(e.sigma2_hat))),
        lambda1: EstimatorSummary::from_values(l0, &lambda1_values),
        lambda2: EstimatorSummary::from_values(l0, &collect(&|e| Some(e.lambda2_hat))),
        lambda1_undefined: ok.len() - lambda1_values.len(),
        lambda1_clamped: ok.iter().filter(|p| p.estimates.lambda1_clamped).count(),
        lambda2_clamped: ok.iter().filter(|p| p.estimates.lambda2_clamped).count(),
        failed_paths: failed,
        truncation_warnings: ok.iter().map(|p| p.truncation_warnings).sum(),
    })
}

/// Simulates `n_paths` independent paths and summarises the estimators.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    summarize(config, run_paths(config, config.n_paths))
}

/// Shape statistics of one standardised estimator across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateNormality {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// One-sample Kolmogorov-Smirnov distance of the standardised errors
    /// from N(0, 1).
    pub ks_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub n_reps: usize,
    pub n_obs: usize,
    pub coordinates: Vec<CoordinateNormality>,
}

impl NormalityReport {
    pub fn coordinate(&self, name: &str) -> Option<&CoordinateNormality> {
        self.coordinates.iter().find(|c| c.name == name)
    }
}

/// Sample skewness and excess kurtosis from central moments.
pub fn shape_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let c = v - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// `sup |F_n − Φ|` of the sample against the standard normal.
pub fn ks_against_normal(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn coordinate(name: &str, truth: f64, values: &[f64]) -> CoordinateNormality {
    let summary = EstimatorSummary::from_values(truth, values);
    let standardized: Vec<f64> = values.iter().map(|v| (v - truth) / summary.std_error).collect();
    let (skewness, excess_kurtosis) = shape_moments(&standardized);
    CoordinateNormality {
        name: name.to_string(),
        truth,
        mean: summary.mean,
        sd: summary.std_error,
        skewness,
        excess_kurtosis,
        ks_statistic: ks_against_normal(&standardized),
    }
}

/// Standardised errors `(θ̂ − θ₀)/sd` over `n_reps` replications, with sd
/// the cross-replication standard deviation.
pub fn clt_check(config: &StudyConfig, n_reps: usize) -> Result<NormalityReport> {
    if n_reps < 100 {
        return Err(Error::domain("the normality check needs at least 100 replications"));
    }
    let cfg = StudyConfig { n_paths: n_reps, ..config.clone() };
    cfg.validate()?;
    let paths: Vec<PathEstimate> = run_paths(&cfg, n_reps).into_iter().filter_map(|r| r.ok()).collect();
    if paths.len() < 100 {
        return Err(Error::domain("too many replications failed"));
    }
    let [mu0, s0, l0] = cfg.theta0;
    let pick = |f: fn(&MomentEstimates) -> f64| -> Vec<f64> {
        paths.iter().map(|p| f(&p.estimates)).collect()
    };
    Ok(NormalityReport {
        n_reps: paths.len(),
        n_obs: cfg.n_obs,
        coordinates: vec![
            coordinate("mu", mu0, &pick(|e| e.mu_hat)),
            coordinate("sigma2", s0, &pick(|e| e.sigma2_hat)),
            coordinate("lambda2", l0, &pick(|e| e.lambda2_hat)),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> StudyConfig {
        StudyConfig { n_obs: 200, n_paths: 8, ..StudyConfig::baseline(Family::Gamma, 0.5, seed) }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(1);
        cfg.n_paths = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = small(1);
        cfg.n_obs = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = small(1);
        cfg.theta0[2] = 0.0;
        assert!(run_study(&cfg).is_err());
    }

    #[test]
    fn study_is_deterministic() {
        let a = run_study(&small(42)).unwrap();
        let b = run_study(&small(42)).unwrap();
        assert_eq!(a, b);
        let c = run_study(&small(43)).unwrap();
        assert_ne!(a.mu.mean, c.mu.mean);
        assert!(a.mu.std_error >= 0.0 && a.lambda2.std_error >= 0.0);
        assert!(a.lambda1_undefined + a.lambda1.count <= a.config.n_paths);
    }

    #[test]
    fn table_has_four_rows() {
        let table = run_study(&small(3)).unwrap().to_table();
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("lambda_hat_2"));
    }

    #[test]
    fn shape_moments_of_symmetric_sample() {
        let v = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let (s, k) = shape_moments(&v);
        assert!(s.abs() < 1e-15);
        // m2 = 2, m4 = 6.8
        assert!((k - (6.8 / 4.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn ks_of_a_single_point() {
        assert!((ks_against_normal(&[0.0]) - 0.5).abs() < 1e-12);
    }
}
