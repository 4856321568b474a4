//! Collapsed stochastic variational inference with a group-lasso prox step.
//!
//! Each iteration draws a minibatch, picks a random inference subset of
//! every sample's observed groups, and ascends the minibatch mean of `L̃`:
//! Adam on the dense parameters, a plain gradient step of size `eta` on
//! every `Φ⁽ᵍ⁾`, then the proximal map on each `Φ` column.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tape;
use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::model::{FactVaeModel, ParamRole};
use crate::optim::{adam_step, AdamState};
use crate::sparsity::{penalty, prox_step, zero_column_fraction, SparsityConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Adam learning rate for the dense parameters.
    pub lr: f64,
    /// Gradient step size on Φ, also scaling the prox threshold.
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Probability of keeping each observed group in the inference subset.
    pub keep_prob: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lambda: 1.0, lr: 1e-3, eta: 1e-4, epochs: 200, batch_size: 32, keep_prob: 0.5, mc_samples: 1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        SparsityConfig::new(self.lambda, self.eta)?;
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid(format!("keep probability must lie in (0, 1], got {}", self.keep_prob)));
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::invalid("batch size and mc samples must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the minibatch objectives over the epoch.
    pub elbo_tilde: f64,
    pub penalty: f64,
    pub zero_col_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,elbo_tilde,penalty,zero_col_fraction\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:.9e},{:.9e},{:.9e}", r.epoch, r.elbo_tilde, r.penalty, r.zero_col_fraction);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Keeps each observed group independently with probability `keep_prob`,
/// redrawing until at least one survives.
pub fn sample_inference_subset(observed: &[usize], keep_prob: f64, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if observed.is_empty() {
        return Err(Error::invalid("observed set is empty"));
    }
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::invalid(format!("keep probability must lie in (0, 1], got {keep_prob}")));
    }
    loop {
        let subset: Vec<usize> = observed.iter().copied().filter(|_| rng.bernoulli(keep_prob)).collect();
        if !subset.is_empty() {
            return Ok(subset);
        }
    }
}

/// Seed offset separating model initialization from the training stream.
const INIT_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Initializes a model for `dataset`'s groups from `config.seed` and trains it.
pub fn fit(
    dataset: &GroupedDataset,
    latent: usize,
    hidden: usize,
    config: &TrainConfig,
) -> Result<(FactVaeModel, TrainHistory)> {
    config.validate()?;
    let mut init_rng = SeededRng::new(config.seed ^ INIT_SEED_MIX);
    let mut model = FactVaeModel::new(dataset.specs().to_vec(), latent, hidden, &mut init_rng)?;
    let history = train(dataset, &mut model, config)?;
    Ok((model, history))
}

/// Runs `config.epochs` passes of minibatch training over `dataset`.
pub fn train(dataset: &GroupedDataset, model: &mut FactVaeModel, config: &TrainConfig) -> Result<TrainHistory> {
    config.validate()?;
    if dataset.specs() != model.groups() {
        return Err(Error::invalid("dataset groups do not match the model's groups"));
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 || dataset.is_empty() {
        return Ok(history);
    }

    let sparsity = SparsityConfig::new(config.lambda, config.eta)?;
    let mut theta_ids = model.ids_with_role(ParamRole::Body);
    theta_ids.extend(model.ids_with_role(ParamRole::ObsLogVar));
    theta_ids.sort();
    let phi_ids = model.ids_with_role(ParamRole::Phi);
    let mut adam = AdamState::new(model.params(), &theta_ids);
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut iteration = 0usize;
    // the prior is shared by the whole dataset, so each sample carries 1/N of it
    let prior_weight = 1.0 / dataset.len() as f64;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut objective_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            iteration += 1;
            let at_iteration = |e: Error| match e {
                Error::Numerical { op, detail } => {
                    Error::Numerical { op, detail: format!("iteration {iteration} (epoch {epoch}): {detail}") }
                }
                other => other,
            };

            let mut tape = Tape::new();
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let sample = &dataset.samples()[i];
                let observed = sample.observed();
                let subset = sample_inference_subset(&observed, config.keep_prob, &mut rng)?;
                let noise: Vec<Vec<f64>> = (0..config.mc_samples).map(|_| rng.normals(model.latent())).collect();
                terms.push(model.tape_sample_objective(&mut tape, sample, &subset, &observed, &noise)?);
            }
            let total = tape.add_all(&terms);
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            let prior = model.tape_log_prior(&mut tape);
            let prior = tape.scale(prior, prior_weight);
            let objective = tape.add(mean, prior);
            let loss = tape.scale(objective, -1.0);
            tape.backward(loss, model.params_mut()).map_err(at_iteration)?;
            objective_sum += tape.scalar(objective);
            batches += 1;
            drop(tape);

            adam_step(model.params_mut(), &mut adam, config.lr)?;
            model.clamp_obs_logvar();
            for &id in &phi_ids {
                let p = model.params_mut().get_mut(id);
                for (x, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                    *x -= config.eta * g;
                }
            }
            prox_step(model, &sparsity);
        }
        let record = EpochRecord {
            epoch,
            elbo_tilde: objective_sum / batches as f64,
            penalty: penalty(model, config.lambda),
            zero_col_fraction: zero_column_fraction(model),
        };
        if !record.elbo_tilde.is_finite() {
            return Err(Error::Numerical {
                op: "objective",
                detail: format!("epoch {epoch} mean objective is {}", record.elbo_tilde),
            });
        }
        history.records.push(record);
    }
    Ok(history)
}
