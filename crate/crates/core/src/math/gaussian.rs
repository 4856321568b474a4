//! Diagonal Gaussians in mean/precision form and product-of-experts fusion.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::math::rng::SeededRng;

/// A K-dimensional Gaussian with diagonal precision.
///
/// A precision of exactly 0 marks a dimension the distribution says
/// nothing about (infinite variance). Such experts are legal inputs to
/// [`poe_fuse`] but have no KL, entropy or samples of their own.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    precision: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, precision: Vec<f64>) -> Result<Self> {
        if mean.len() != precision.len() {
            return Err(Error::invalid(format!(
                "mean has {} entries but precision has {}",
                mean.len(),
                precision.len()
            )));
        }
        if let Some(p) = precision.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!("precision must be finite and >= 0, got {p}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mean must be finite"));
        }
        Ok(Self { mean, precision })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], precision: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    pub fn variance(&self) -> Vec<f64> {
        self.precision.iter().map(|p| 1.0 / p).collect()
    }

    fn require_proper(&self, what: &str) -> Result<()> {
        match self.precision.iter().position(|&p| p <= 0.0) {
            Some(k) => Err(Error::invalid(format!("{what} undefined: precision is zero in dimension {k}"))),
            None => Ok(()),
        }
    }

    /// Log-density at `z`.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.require_proper("log-density")?;
        if z.len() != self.dim() {
            return Err(Error::invalid("point has wrong dimension"));
        }
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.precision)
            .map(|((z, m), p)| 0.5 * (p.ln() - (2.0 * PI).ln() - p * (z - m) * (z - m)))
            .sum())
    }
}

/// Fuses `experts` with the standard-normal prior.
///
/// Precision is `1 + Σ λ_g` and mean is `(Σ λ_g μ_g) / (1 + Σ λ_g)`
/// per dimension; the prior is always included, so callers never pass it.
pub fn poe_fuse(dim: usize, experts: &[DiagGaussian]) -> Result<DiagGaussian> {
    let mut precision = vec![1.0; dim];
    let mut weighted = vec![0.0; dim];
    for (i, e) in experts.iter().enumerate() {
        if e.dim() != dim {
            return Err(Error::invalid(format!("expert {i} has dimension {} but fusion is over {dim}", e.dim())));
        }
        for k in 0..dim {
            precision[k] += e.precision[k];
            weighted[k] += e.precision[k] * e.mean[k];
        }
    }
    let mean = weighted.iter().zip(&precision).map(|(w, p)| w / p).collect();
    Ok(DiagGaussian { mean, precision })
}

/// `KL(q ‖ N(0, I)) = ½ Σ (σ² + μ² − 1 − ln σ²)`.
pub fn kl_to_standard_normal(q: &DiagGaussian) -> Result<f64> {
    q.require_proper("KL divergence")?;
    Ok(q.mean
        .iter()
        .zip(&q.precision)
        .map(|(m, p)| {
            let var = 1.0 / p;
            0.5 * (var + m * m - 1.0 - var.ln())
        })
        .sum())
}

/// Differential entropy `½ Σ ln(2πe σ²)`.
pub fn entropy(q: &DiagGaussian) -> Result<f64> {
    q.require_proper("entropy")?;
    Ok(q.precision.iter().map(|p| 0.5 * (2.0 * PI * E / p).ln()).sum())
}

/// `μ + σ ⊙ ε` with `ε` drawn from `rng`.
pub fn reparam_sample(q: &DiagGaussian, rng: &mut SeededRng) -> Result<Vec<f64>> {
    q.require_proper("sampling")?;
    Ok(q.mean.iter().zip(&q.precision).map(|(m, p)| m + rng.standard_normal() / p.sqrt()).collect())
}
