//! Group-lasso penalty on the columns of each `Φ⁽ᵍ⁾` and its proximal map.

use crate::error::{Error, Result};
use crate::math::tensor::norm2;
use crate::model::FactVaeModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    pub lambda: f64,
    pub eta: f64,
}

impl SparsityConfig {
    pub fn new(lambda: f64, eta: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::invalid(format!("eta must be finite and > 0, got {eta}")));
        }
        Ok(Self { lambda, eta })
    }

    pub fn threshold(&self) -> f64 {
        self.eta * self.lambda
    }
}

/// `λ Σ_g Σ_j ‖Φ⁽ᵍ⁾·,j‖₂`.
pub fn penalty(model: &FactVaeModel, lambda: f64) -> f64 {
    let total: f64 = (0..model.num_groups())
        .map(|g| {
            let phi = model.phi(g);
            (0..model.latent()).map(|j| phi.column_norm(j)).sum::<f64>()
        })
        .sum();
    lambda * total
}

/// Block soft-threshold: `x/‖x‖ · (‖x‖ − ηλ)₊`.
///
/// Columns with norm at or below `ηλ` come back as exact zeros.
pub fn prox_group_lasso(column: &[f64], eta: f64, lambda: f64) -> Vec<f64> {
    let t = eta * lambda;
    if t == 0.0 {
        return column.to_vec();
    }
    let n = norm2(column);
    if n <= t {
        return vec![0.0; column.len()];
    }
    let shrink = (n - t) / n;
    column.iter().map(|x| x * shrink).collect()
}

/// Applies [`prox_group_lasso`] to every column of every `Φ⁽ᵍ⁾` in place.
pub fn prox_step(model: &mut FactVaeModel, config: &SparsityConfig) {
    if config.threshold() == 0.0 {
        return;
    }
    for g in 0..model.num_groups() {
        let mut phi = model.phi_mut(g);
        for j in 0..phi.view().cols() {
            let col = phi.view().column(j);
            let shrunk = prox_group_lasso(&col, config.eta, config.lambda);
            phi.set_column(j, &shrunk);
        }
    }
}

/// Fraction of the `G·K` columns of Φ that are exactly zero.
pub fn zero_column_fraction(model: &FactVaeModel) -> f64 {
    let total = model.num_groups() * model.latent();
    let zeros: usize = (0..model.num_groups())
        .map(|g| {
            let phi = model.phi(g);
            (0..model.latent()).filter(|&j| phi.column_is_zero(j)).count()
        })
        .sum();
    zeros as f64 / total as f64
}
