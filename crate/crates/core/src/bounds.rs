//! Closed-form convergence bounds and their Monte-Carlo verifiers.
//!
//! Logarithms are natural. Every quantity that involves `u̲` and `ū` depends
//! on them only through the ratio `u̲/ū`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, DenseMatrix, SpectralSummary};
use crate::problem::LlspInstance;
use crate::rng::{mix_seed, rng_from_seed};
use crate::sampling::{draw_batch, weighted_row_max, Batch, SamplingDistribution};

/// All computable bounds for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub sigma: f64,
    pub weighted_max: f64,
    pub eps_max_theorem: f64,
    pub eps_max_corollary: f64,
    pub batch_min: u64,
    pub rate_bound: f64,
    pub h_bound: f64,
    pub confusion_radius: f64,
}

impl BoundReport {
    /// `(field, value)` rows in a fixed order.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("sigma", self.sigma),
            ("weighted_max", self.weighted_max),
            ("eps_max_theorem", self.eps_max_theorem),
            ("eps_max_corollary", self.eps_max_corollary),
            ("batch_min", self.batch_min as f64),
            ("rate_bound", self.rate_bound),
            ("h_bound", self.h_bound),
            ("confusion_radius", self.confusion_radius),
        ]
    }
}

/// Deviation bound `σ(B)` on `E‖M − AᵀA‖₂`.
pub fn sigma_bound(
    spectral: &SpectralSummary,
    dist: &SamplingDistribution,
    batch_size: usize,
    d: usize,
) -> Result<f64> {
    let w = weighted_row_max(spectral, dist);
    sigma_from_weighted(spectral, w, batch_size, d)
}

fn sigma_from_weighted(spectral: &SpectralSummary, w: f64, batch_size: usize, d: usize) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let excess = w - spectral.lambda_min;
    if !(excess > 0.0) {
        return Err(Error::Numerical(format!(
            "weighted row maximum {w:e} does not exceed lambda_min {:e}",
            spectral.lambda_min
        )));
    }
    let b = batch_size as f64;
    let log2d = (2.0 * d as f64).ln();
    let norm_sq = spectral.spectral_norm * spectral.spectral_norm;
    Ok((2.0 * excess * norm_sq * log2d / b).sqrt() + log2d * excess / (3.0 * b))
}

/// `(eps_max_theorem, eps_max_corollary)`. The theorem value may be non-positive.
pub fn eps_admissible(
    spectral: &SpectralSummary,
    dist: &SamplingDistribution,
    batch_size: usize,
    u_lower: f64,
    u_upper: f64,
    d: usize,
) -> Result<(f64, f64)> {
    let sigma = sigma_bound(spectral, dist, batch_size, d)?;
    Ok((
        eps_theorem(spectral, sigma, u_lower, u_upper),
        eps_corollary(spectral, u_lower, u_upper),
    ))
}

fn eps_theorem(s: &SpectralSummary, sigma: f64, u_lower: f64, u_upper: f64) -> f64 {
    2.0 * (u_lower * s.lambda_min - u_upper * sigma) / (u_upper * (s.lambda_max + s.lambda_min))
}

fn eps_corollary(s: &SpectralSummary, u_lower: f64, u_upper: f64) -> f64 {
    u_lower * s.lambda_min / (2.0 * u_upper * (s.lambda_max + s.lambda_min))
}

/// Smallest batch size for which `σ ≤ u̲λ_d/(4ū)`, from the closed-form sufficient condition.
pub fn batch_lower_bound(
    spectral: &SpectralSummary,
    dist: &SamplingDistribution,
    u_lower: f64,
    u_upper: f64,
    d: usize,
) -> u64 {
    let w = weighted_row_max(spectral, dist);
    batch_min_from_weighted(spectral, w, u_lower, u_upper, d)
}

fn batch_min_from_weighted(s: &SpectralSummary, w: f64, u_lower: f64, u_upper: f64, d: usize) -> u64 {
    let ld = s.lambda_min;
    let lead = 4.0 * u_upper * u_upper * (2.0 * d as f64).ln() * w / (u_lower * u_lower);
    let inner = 2.0 * 2f64.sqrt() * s.spectral_norm / ld + (u_lower / (3.0 * u_upper * ld)).sqrt();
    let value = (lead * inner * inner).ceil();
    (value as u64).max(1)
}

/// Contraction factor `1 − u̲λ_d/(ū(λ₁+λ_d))`.
pub fn rate_bound(spectral: &SpectralSummary, u_lower: f64, u_upper: f64) -> f64 {
    1.0 - u_lower * spectral.lambda_min / (u_upper * (spectral.lambda_max + spectral.lambda_min))
}

/// Bound on `E‖h‖₂` for the residual noise term; zero when `r* = 0`.
pub fn h_bound(
    spectral: &SpectralSummary,
    dist: &SamplingDistribution,
    r_star: &[f64],
    batch_size: usize,
    d: usize,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if r_star.len() != dist.len() {
        return Err(Error::Config(format!(
            "residual has {} entries, distribution {}",
            r_star.len(),
            dist.len()
        )));
    }
    let r_norm_sq: f64 = r_star.iter().map(|r| r * r).sum();
    if r_norm_sq == 0.0 {
        return Ok(0.0);
    }
    let w = weighted_row_max(spectral, dist);
    let b = batch_size as f64;
    let log = (d as f64 + 1.0).ln();
    let peak = spectral
        .row_norms_sq
        .iter()
        .zip(r_star)
        .zip(&dist.probs)
        .map(|((a2, r), p)| a2.sqrt() * r.abs() / p)
        .fold(0.0, f64::max);
    Ok((2.0 * w * r_norm_sq * log / b).sqrt() + log / (3.0 * b) * peak)
}

/// Radius `R` of the region the iterates settle in for inconsistent problems.
#[allow(clippy::too_many_arguments)]
pub fn confusion_radius(
    spectral: &SpectralSummary,
    dist: &SamplingDistribution,
    r_star: &[f64],
    batch_size: usize,
    u_lower: f64,
    u_upper: f64,
    d: usize,
) -> Result<f64> {
    let h = h_bound(spectral, dist, r_star, batch_size, d)?;
    Ok(radius_factor(spectral, u_lower, u_upper) * h)
}

fn radius_factor(s: &SpectralSummary, u_lower: f64, u_upper: f64) -> f64 {
    2.0 * (u_upper / u_lower).powf(1.5) / s.lambda_min
}

/// Evaluates every bound for one instance, batch size and `(u̲, ū)`.
pub fn bound_report(
    inst: &LlspInstance,
    dist: &SamplingDistribution,
    batch_size: usize,
    u_lower: f64,
    u_upper: f64,
) -> Result<BoundReport> {
    if !(u_lower > 0.0 && u_lower < u_upper) {
        return Err(Error::Config(format!(
            "need 0 < u_lower < u_upper, got {u_lower} and {u_upper}"
        )));
    }
    let s = &inst.spectral;
    let d = inst.d();
    let w = weighted_row_max(s, dist);
    let sigma = sigma_from_weighted(s, w, batch_size, d)?;
    let h = h_bound(s, dist, &inst.r_star, batch_size, d)?;
    Ok(BoundReport {
        sigma,
        weighted_max: w,
        eps_max_theorem: eps_theorem(s, sigma, u_lower, u_upper),
        eps_max_corollary: eps_corollary(s, u_lower, u_upper),
        batch_min: batch_min_from_weighted(s, w, u_lower, u_upper, d),
        rate_bound: rate_bound(s, u_lower, u_upper),
        h_bound: h,
        confusion_radius: radius_factor(s, u_lower, u_upper) * h,
    })
}

/// `M = (1/B) Σ a_ξ a_ξᵀ / p_ξ` for one batch.
pub fn batch_matrix(a: &DenseMatrix, dist: &SamplingDistribution, batch: &Batch) -> DenseMatrix {
    let d = a.cols();
    let mut m = vec![0.0; d * d];
    for &i in &batch.indices {
        let row = a.row(i);
        let w = 1.0 / dist.probs[i];
        for k in 0..d {
            let s = w * row[k];
            for l in k..d {
                m[k * d + l] += s * row[l];
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for k in 0..d {
        for l in k..d {
            let v = m[k * d + l] * scale;
            m[k * d + l] = v;
            m[l * d + k] = v;
        }
    }
    DenseMatrix::new(d, d, m).expect("batch matrix is finite")
}

/// Monte-Carlo mean of `‖M − AᵀA‖₂` over `trials` independent batches.
pub fn empirical_matrix_deviation(
    inst: &LlspInstance,
    dist: &SamplingDistribution,
    batch_size: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let g = linalg::gram(&inst.a)?;
    let d = inst.d();
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(mix_seed(seed, t as u64));
            let batch = draw_batch(dist, batch_size, &mut rng);
            let m = batch_matrix(&inst.a, dist, &batch);
            let dev = DenseMatrix::from_fn(d, d, |i, j| m.get(i, j) - g.get(i, j));
            linalg::sym_spectral_norm(&dev, linalg::DEFAULT_EIGEN_TOL)
        })
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / trials as f64)
}

/// `h = (1/B) Σ r*_ξ a_ξ / p_ξ` for one batch.
pub fn residual_term(inst: &LlspInstance, dist: &SamplingDistribution, batch: &Batch) -> Vec<f64> {
    let mut h = vec![0.0; inst.d()];
    for &i in &batch.indices {
        let w = inst.r_star[i] / dist.probs[i];
        linalg::axpy(w, inst.a.row(i), &mut h);
    }
    let scale = 1.0 / batch.len() as f64;
    h.iter_mut().for_each(|v| *v *= scale);
    h
}

/// Monte-Carlo mean of `‖h‖₂` over `trials` independent batches.
pub fn empirical_h_norm(
    inst: &LlspInstance,
    dist: &SamplingDistribution,
    batch_size: usize,
    trials: usize,
    seed: u64,
) -> f64 {
    let total: f64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(mix_seed(seed, t as u64));
            let batch = draw_batch(dist, batch_size, &mut rng);
            norm2(&residual_term(inst, dist, &batch))
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / trials as f64
}
