//! Conditional reconstruction, heldout likelihood, sparsity export and PGM output.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::math::{reparam_sample, DiagGaussian, SeededRng};
use crate::model::{FactVaeModel, GroupedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructMode {
    /// Decode the fused posterior mean.
    Mean,
    /// Decode one reparameterized draw from the fused posterior.
    Sample,
}

/// Decoder means for every group, conditioned only on the groups in `observe`.
pub fn reconstruct(
    model: &FactVaeModel,
    sample: &GroupedSample,
    observe: &[usize],
    mode: ReconstructMode,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f64>>> {
    if observe.is_empty() {
        return Err(Error::invalid("observe set is empty"));
    }
    let q = model.encode(sample, observe)?;
    let z = match mode {
        ReconstructMode::Mean => q.mean().to_vec(),
        ReconstructMode::Sample => reparam_sample(&q, rng)?,
    };
    (0..model.num_groups()).map(|g| model.decode_group(g, &z).map(|(mean, _)| mean)).collect()
}

/// Reconstructs every sample of `dataset` from the named groups and
/// returns the result as a fully observed dataset.
pub fn reconstruct_dataset(
    model: &FactVaeModel,
    dataset: &GroupedDataset,
    observe: &[usize],
    mode: ReconstructMode,
    rng: &mut SeededRng,
) -> Result<GroupedDataset> {
    let samples = dataset
        .samples()
        .iter()
        .map(|s| reconstruct(model, s, observe, mode, rng).and_then(GroupedSample::fully_observed))
        .collect::<Result<Vec<_>>>()?;
    GroupedDataset::new(dataset.specs().to_vec(), samples)
}

/// Importance-weighted log-likelihood estimate of the observed groups,
/// `log (1/S) Σ_s p(x|z_s) p(z_s) / q(z_s|x)` with `z_s` drawn from the
/// posterior fused over every observed group.
pub fn heldout_ll(
    model: &FactVaeModel,
    sample: &GroupedSample,
    num_samples: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if num_samples == 0 {
        return Err(Error::invalid("heldout estimate needs at least one sample"));
    }
    let observed = sample.observed();
    let q = model.encode(sample, &observed)?;
    let prior = DiagGaussian::standard(model.latent());
    let mut log_weights = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let z = reparam_sample(&q, rng)?;
        let mut lw = prior.log_density(&z)? - q.log_density(&z)?;
        for &g in &observed {
            let (mean, var) = model.decode_group(g, &z)?;
            lw += FactVaeModel::gaussian_loglik(sample.get(g).expect("observed"), &mean, &var);
        }
        log_weights.push(lw);
    }
    let est = log_mean_exp(&log_weights);
    if !est.is_finite() {
        return Err(Error::Numerical { op: "heldout_ll", detail: "importance weights are not finite".into() });
    }
    Ok(est)
}

pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + (s / xs.len() as f64).ln()
}

/// `‖Φ⁽ᵍ⁾·,j‖₂` for every group `g` and latent dimension `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityMatrix {
    pub groups: Vec<String>,
    /// Row-major `G × K`.
    pub entries: Vec<Vec<f64>>,
}

impl SparsityMatrix {
    pub fn latent(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Entries above `rel · max`. An all-zero matrix has no active entries.
    pub fn active(&self, rel: f64) -> Vec<Vec<bool>> {
        let max = self.max();
        self.entries.iter().map(|row| row.iter().map(|&x| max > 0.0 && x > rel * max).collect()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for j in 1..=self.latent() {
            let _ = write!(out, ",z{j}");
        }
        out.push('\n');
        for (name, row) in self.groups.iter().zip(&self.entries) {
            out.push_str(name);
            for x in row {
                let _ = write!(out, ",{x:.9e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn sparsity_matrix(model: &FactVaeModel) -> SparsityMatrix {
    SparsityMatrix {
        groups: model.groups().iter().map(|g| g.name.clone()).collect(),
        entries: (0..model.num_groups())
            .map(|g| {
                let phi = model.phi(g);
                (0..model.latent()).map(|j| phi.column_norm(j)).collect()
            })
            .collect(),
    }
}

/// Binary PGM bytes for a `size × size` image, affinely mapping
/// `[min, max]` to `[0, 255]` with round-half-up. Constant images map to 0.
pub fn encode_pgm(image: &[f64], size: usize) -> Result<Vec<u8>> {
    if image.len() != size * size || size == 0 {
        return Err(Error::invalid(format!("expected {} pixels, got {}", size * size, image.len())));
    }
    if image.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("image contains non-finite values"));
    }
    let min = image.iter().copied().fold(f64::INFINITY, f64::min);
    let max = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{size} {size}\n255\n").into_bytes();
    let range = max - min;
    out.extend(image.iter().map(|&x| {
        if range > 0.0 {
            ((x - min) / range * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn write_pgm(image: &[f64], size: usize, path: &Path) -> Result<()> {
    let bytes = encode_pgm(image, size)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
