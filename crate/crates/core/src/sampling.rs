//! Row-importance sampling and mini-batch gradients.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{dot, SpectralSummary};
use crate::problem::LlspInstance;
use crate::rng::Rng;

/// Discrete distribution over rows with a Vose alias table for O(1) draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    pub probs: Vec<f64>,
    pub alias_prob: Vec<f64>,
    pub alias_index: Vec<usize>,
}

/// Indices of one mini-batch, drawn i.i.d. with replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl SamplingDistribution {
    /// Builds the alias table for strictly positive `probs` summing to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::Domain("empty probability vector".into()));
        }
        if let Some(j) = probs.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!(
                "probability of row {j} is {}, must be positive",
                probs[j]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }

        let mut scaled: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
        let mut alias_prob = vec![1.0; n];
        let mut alias_index: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias_prob[s] = scaled[s];
            alias_index[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to round-off
        for i in small.into_iter().chain(large) {
            alias_prob[i] = 1.0;
            alias_index[i] = i;
        }
        Ok(SamplingDistribution {
            probs,
            alias_prob,
            alias_index,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_probs(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability mass the alias table assigns to each index.
    pub fn reconstructed_mass(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mass = vec![0.0; self.len()];
        for (i, (&q, &a)) in self.alias_prob.iter().zip(&self.alias_index).enumerate() {
            mass[i] += q / n;
            mass[a] += (1.0 - q) / n;
        }
        mass
    }

    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let i = rng.random_range(0..self.len());
        if rng.random::<f64>() < self.alias_prob[i] {
            i
        } else {
            self.alias_index[i]
        }
    }
}

/// `p_j = ‖a_j‖² / ‖A‖_F²`.
pub fn squared_norm_probs(spectral: &SpectralSummary) -> Result<SamplingDistribution> {
    if let Some(j) = spectral.row_norms_sq.iter().position(|&r| r == 0.0) {
        return Err(Error::Domain(format!(
            "row {j} is zero; squared-norm sampling needs every row nonzero"
        )));
    }
    let total: f64 = spectral.row_norms_sq.iter().sum();
    let mut probs: Vec<f64> = spectral.row_norms_sq.iter().map(|r| r / total).collect();
    // renormalize so the sum is 1 to the last ulp the table check sees
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
    SamplingDistribution::from_probs(probs)
}

/// `max_j ‖a_j‖² / p_j`.
pub fn weighted_row_max(spectral: &SpectralSummary, dist: &SamplingDistribution) -> f64 {
    spectral
        .row_norms_sq
        .iter()
        .zip(&dist.probs)
        .map(|(r, p)| r / p)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn draw_batch(dist: &SamplingDistribution, batch_size: usize, rng: &mut Rng) -> Batch {
    Batch {
        indices: (0..batch_size).map(|_| dist.sample(rng)).collect(),
    }
}

/// `g = (1/B) Σ (1/p_i) a_i (a_iᵀx − b_i)`.
pub fn minibatch_gradient(
    inst: &LlspInstance,
    x: &[f64],
    batch: &Batch,
    dist: &SamplingDistribution,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; inst.d()];
    minibatch_gradient_into(inst, x, batch, dist, &mut g)?;
    Ok(g)
}

/// Allocation-free form of [`minibatch_gradient`].
pub fn minibatch_gradient_into(
    inst: &LlspInstance,
    x: &[f64],
    batch: &Batch,
    dist: &SamplingDistribution,
    g: &mut [f64],
) -> Result<()> {
    g.iter_mut().for_each(|v| *v = 0.0);
    for &i in &batch.indices {
        let row = inst.a.row(i);
        let w = (dot(row, x) - inst.b[i]) / dist.probs[i];
        for (gj, aj) in g.iter_mut().zip(row) {
            *gj += w * aj;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for v in g.iter_mut() {
        *v *= scale;
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite stochastic gradient at iterate with ‖x‖ = {:e}",
            crate::linalg::norm2(x)
        )));
    }
    Ok(())
}

/// `Aᵀ(Ax − b)`.
pub fn full_gradient(inst: &LlspInstance, x: &[f64]) -> Vec<f64> {
    let mut r = inst.a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(&inst.b) {
        *ri -= bi;
    }
    inst.a.t_matvec(&r)
}
