//! Scalar special functions and the random source shared by every sampler.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian, Poisson, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Seedable, stream-splittable pseudo-random generator.
///
/// A source is identified by a `(seed, stream)` pair. Two sources with the
/// same pair produce bit-identical draws; sources that differ in either
/// component share no state.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Independent stream `stream` derived from the root `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream
    }

    /// Derives a child root seed from the current state. Children created
    /// with [`RandomSource::stream`] on this seed are independent of `self`.
    pub fn child_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Unit-rate exponential draw.
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

const LAMBERT_MAX_ITER: usize = 64;
const LAMBERT_SERIES_CUTOFF: f64 = 1e-3;

/// Principal branch of the Lambert W function on `[0, ∞)`.
///
/// Solves `w·e^w = x` for `w ≥ 0`. Small arguments use the Taylor series
/// around zero; everything else starts from a `ln(1+x)` based guess and is
/// refined with Halley steps until `|w·e^w − x| ≤ 1e-13·max(1, x)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "lambert_w0 needs a finite nonnegative argument, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < LAMBERT_SERIES_CUTOFF {
        // W(x) = Σ (−n)^{n−1} xⁿ / n!
        const C: [f64; 7] = [
            1.0,
            -1.0,
            1.5,
            -8.0 / 3.0,
            125.0 / 24.0,
            -54.0 / 5.0,
            16807.0 / 720.0,
        ];
        let w = C.iter().rev().fold(0.0, |acc, c| acc * x + c) * x;
        return Ok(w);
    }

    let l = x.ln_1p();
    let mut w = l * (1.0 - (1.0 + l).ln() / (2.0 + l));
    let tol = 1e-13 * x.max(1.0);
    for _ in 0..LAMBERT_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= tol {
            break;
        }
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w.max(0.0))
}

/// Arrival times of a unit-rate Poisson process, generated lazily.
pub struct PoissonArrivals<'a> {
    rng: &'a mut RandomSource,
    current: f64,
}

impl<'a> PoissonArrivals<'a> {
    pub fn new(rng: &'a mut RandomSource) -> Self {
        Self { rng, current: 0.0 }
    }
}

impl Iterator for PoissonArrivals<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.current += self.rng.exp1();
        Some(self.current)
    }
}

/// All unit-rate Poisson arrival times in `(0, horizon]`.
pub fn poisson_arrivals(rng: &mut RandomSource, horizon: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(PoissonArrivals::new(rng)
        .take_while(|&t| t <= horizon)
        .collect())
}

/// Draw from Gamma(shape, rate), density ∝ x^{shape−1} e^{−rate·x}.
pub fn sample_gamma(rng: &mut RandomSource, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!(
            "gamma sampler needs positive shape and rate, got ({shape}, {rate})"
        )));
    }
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Draw from the inverse Gaussian law with the given mean and shape.
pub fn sample_inverse_gaussian(rng: &mut RandomSource, mean: f64, shape: f64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) || !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::domain(format!(
            "inverse Gaussian sampler needs positive mean and shape, got ({mean}, {shape})"
        )));
    }
    let dist = InverseGaussian::new(mean, shape).map_err(|e| Error::domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Poisson(mean) count. A zero mean yields zero.
pub fn sample_poisson(rng: &mut RandomSource, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::domain(format!("Poisson mean must be nonnegative, got {mean}")));
    }
    let dist = Poisson::new(mean).map_err(|e| Error::domain(e.to_string()))?;
    let k: f64 = dist.sample(rng);
    Ok(k as u64)
}

/// Upper-tail probability `P(χ²_dof > x)`.
pub fn chi_square_sf(x: f64, dof: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!(
            "chi-square statistic must be nonnegative, got {x}"
        )));
    }
    if dof == 0 {
        return Err(Error::domain("chi-square needs at least one degree of freedom"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let p = statrs::function::gamma::gamma_ur(dof as f64 / 2.0, x / 2.0);
    Ok(p.clamp(0.0, 1.0))
}

fn standard_normal_dist() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal_dist().cdf(x)
}

/// Standard normal quantile for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    Ok(standard_normal_dist().inverse_cdf(p))
}
