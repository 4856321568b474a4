//! The factorized VAE: one encoder/decoder pair per group, joined through a
//! product-of-experts posterior over a shared latent code.
//!
//! For group `g` with input `x` of dimension `p`, hidden width `H` and
//! latent dimension `K`:
//!
//! ```text
//! h      = tanh(A x + a)                 A: H×p
//! mean   = M h + m                       M: K×H
//! prec   = |V h|                         V: K×H
//! x̂      = D tanh(B (W z) + b) + d       W: p×K, B: H×p, D: p×H
//! x | z  ~ N(x̂, diag(exp(obs_logvar)))
//! ```
//!
//! `W` and `V` together form the group's sparsity target `Φ = [Wᵀ, V]ᵀ`:
//! column `j` of `Φ` is column `j` of `W` stacked on row `j` of `V`. When
//! it is zero the group neither reads from nor writes to latent `j`.

pub(crate) mod io;
mod sample;

pub use io::{read_model, write_model, MODEL_MAGIC};
pub use sample::{resolve_groups, validate_specs, GroupSpec, GroupedSample};

use std::f64::consts::PI;

use crate::autodiff::{ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::math::{poe_fuse, DiagGaussian, SeededRng, Tensor};

pub const OBS_LOGVAR_MIN: f64 = -8.0;
pub const OBS_LOGVAR_MAX: f64 = 4.0;

/// How a parameter is treated by the objective and the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Encoder/decoder weights and biases: Adam, standard-normal prior.
    Body,
    /// `W` or `V`: gradient step plus group-lasso prox, no normal prior.
    Phi,
    /// Observation log-variance: Adam, no prior, clamped.
    ObsLogVar,
}

/// Parameter handles for one group's networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupNetworks {
    pub enc_hidden_w: ParamId,
    pub enc_hidden_b: ParamId,
    pub enc_mean_w: ParamId,
    pub enc_mean_b: ParamId,
    pub v: ParamId,
    pub w: ParamId,
    pub dec_hidden_w: ParamId,
    pub dec_hidden_b: ParamId,
    pub dec_out_w: ParamId,
    pub dec_out_b: ParamId,
    pub obs_logvar: ParamId,
}

impl GroupNetworks {
    /// `(field name, handle)` in serialization order.
    pub fn fields(&self) -> [(&'static str, ParamId); 11] {
        [
            ("enc_hidden_w", self.enc_hidden_w),
            ("enc_hidden_b", self.enc_hidden_b),
            ("enc_mean_w", self.enc_mean_w),
            ("enc_mean_b", self.enc_mean_b),
            ("v", self.v),
            ("w", self.w),
            ("dec_hidden_w", self.dec_hidden_w),
            ("dec_hidden_b", self.dec_hidden_b),
            ("dec_out_w", self.dec_out_w),
            ("dec_out_b", self.dec_out_b),
            ("obs_logvar", self.obs_logvar),
        ]
    }

    pub fn role_of(field: &str) -> ParamRole {
        match field {
            "v" | "w" => ParamRole::Phi,
            "obs_logvar" => ParamRole::ObsLogVar,
            _ => ParamRole::Body,
        }
    }

    /// Shape of each field for a group of dimension `p`.
    pub fn field_shapes(p: usize, hidden: usize, latent: usize) -> [(&'static str, Vec<usize>); 11] {
        [
            ("enc_hidden_w", vec![hidden, p]),
            ("enc_hidden_b", vec![hidden]),
            ("enc_mean_w", vec![latent, hidden]),
            ("enc_mean_b", vec![latent]),
            ("v", vec![latent, hidden]),
            ("w", vec![p, latent]),
            ("dec_hidden_w", vec![hidden, p]),
            ("dec_hidden_b", vec![hidden]),
            ("dec_out_w", vec![p, hidden]),
            ("dec_out_b", vec![p]),
            ("obs_logvar", vec![p]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactVaeModel {
    latent: usize,
    hidden: usize,
    groups: Vec<GroupSpec>,
    nets: Vec<GroupNetworks>,
    params: ParamSet,
    roles: Vec<ParamRole>,
}

impl FactVaeModel {
    /// Randomly initialized model.
    ///
    /// Dense weights are `N(0, 1/fan_in)`, `V` and `W` entries `N(0, 0.1²)`,
    /// biases and observation log-variances zero.
    pub fn new(groups: Vec<GroupSpec>, latent: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::build(groups, latent, hidden, |field, shape| {
            let n: usize = shape.iter().product();
            let std = match field {
                "v" | "w" => 0.1,
                "enc_hidden_w" | "enc_mean_w" | "dec_hidden_w" | "dec_out_w" => (1.0 / shape[1] as f64).sqrt(),
                _ => 0.0,
            };
            let data = if std == 0.0 { vec![0.0; n] } else { rng.normals(n).into_iter().map(|e| std * e).collect() };
            Tensor::new(shape.to_vec(), data).expect("shape matches data")
        })
    }

    /// Model with every parameter zero.
    pub fn zeroed(groups: Vec<GroupSpec>, latent: usize, hidden: usize) -> Result<Self> {
        Self::build(groups, latent, hidden, |_, shape| Tensor::zeros(shape))
    }

    pub(crate) fn build(
        groups: Vec<GroupSpec>,
        latent: usize,
        hidden: usize,
        mut init: impl FnMut(&str, &[usize]) -> Tensor,
    ) -> Result<Self> {
        validate_specs(&groups)?;
        if latent == 0 || hidden == 0 {
            return Err(Error::invalid("latent and hidden sizes must be positive"));
        }
        let mut params = ParamSet::new();
        let mut roles = Vec::new();
        let mut nets = Vec::with_capacity(groups.len());
        for spec in &groups {
            let mut ids = Vec::with_capacity(11);
            for (field, shape) in GroupNetworks::field_shapes(spec.dim, hidden, latent) {
                let value = init(field, &shape);
                if value.shape() != shape.as_slice() {
                    return Err(Error::invalid(format!(
                        "{}.{field} has shape {:?}, expected {shape:?}",
                        spec.name,
                        value.shape()
                    )));
                }
                ids.push(params.add(format!("{}.{field}", spec.name), value));
                roles.push(GroupNetworks::role_of(field));
            }
            nets.push(GroupNetworks {
                enc_hidden_w: ids[0],
                enc_hidden_b: ids[1],
                enc_mean_w: ids[2],
                enc_mean_b: ids[3],
                v: ids[4],
                w: ids[5],
                dec_hidden_w: ids[6],
                dec_hidden_b: ids[7],
                dec_out_w: ids[8],
                dec_out_b: ids[9],
                obs_logvar: ids[10],
            });
        }
        let mut model = Self { latent, hidden, groups, nets, params, roles };
        model.clamp_obs_logvar();
        Ok(model)
    }

    pub fn latent(&self) -> usize {
        self.latent
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn nets(&self) -> &[GroupNetworks] {
        &self.nets
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn role(&self, id: ParamId) -> ParamRole {
        self.roles[id.index()]
    }

    pub fn ids_with_role(&self, role: ParamRole) -> Vec<ParamId> {
        self.params.ids().filter(|&id| self.role(id) == role).collect()
    }

    pub fn clamp_obs_logvar(&mut self) {
        for net in &self.nets {
            for v in self.params.value_mut(net.obs_logvar).data_mut() {
                *v = v.clamp(OBS_LOGVAR_MIN, OBS_LOGVAR_MAX);
            }
        }
    }

    fn check_group(&self, g: usize) -> Result<&GroupSpec> {
        self.groups.get(g).ok_or_else(|| Error::invalid(format!("group index {g} out of range")))
    }

    pub fn check_sample(&self, sample: &GroupedSample) -> Result<()> {
        sample.check_against(&self.groups)
    }

    // ----- tape builders -------------------------------------------------

    /// Expert `(mean, precision)` nodes for group `g`.
    pub fn tape_expert(&self, tape: &mut Tape, g: usize, x: Var) -> (Var, Var) {
        let net = &self.nets[g];
        let p = &self.params;
        let pre = tape.matvec(p, net.enc_hidden_w, x);
        let bias = tape.param(p, net.enc_hidden_b);
        let pre = tape.add(pre, bias);
        let h = tape.tanh(pre);
        let mean = tape.matvec(p, net.enc_mean_w, h);
        let mb = tape.param(p, net.enc_mean_b);
        let mean = tape.add(mean, mb);
        let vh = tape.matvec(p, net.v, h);
        let prec = tape.abs(vh);
        (mean, prec)
    }

    /// Fused posterior `(mean, precision)` over the given expert nodes.
    pub fn tape_fuse(&self, tape: &mut Tape, experts: &[(Var, Var)]) -> (Var, Var) {
        let precs: Vec<Var> = experts.iter().map(|e| e.1).collect();
        let weighted: Vec<Var> = experts.iter().map(|&(m, p)| tape.mul(p, m)).collect();
        let total = tape.add_all(&precs);
        let precision = tape.offset(total, 1.0);
        let num = tape.add_all(&weighted);
        let mean = tape.div(num, precision);
        (mean, precision)
    }

    /// Decoder mean for group `g` at latent node `z`.
    pub fn tape_decode(&self, tape: &mut Tape, g: usize, z: Var) -> Var {
        let net = &self.nets[g];
        let p = &self.params;
        let a = tape.matvec(p, net.w, z);
        let pre = tape.matvec(p, net.dec_hidden_w, a);
        let bias = tape.param(p, net.dec_hidden_b);
        let pre = tape.add(pre, bias);
        let h = tape.tanh(pre);
        let out = tape.matvec(p, net.dec_out_w, h);
        let ob = tape.param(p, net.dec_out_b);
        tape.add(out, ob)
    }

    /// `log N(x; mean, diag(exp(obs_logvar)))` for group `g`.
    pub fn tape_group_loglik(&self, tape: &mut Tape, g: usize, x: Var, mean: Var) -> Var {
        let lv = tape.param(&self.params, self.nets[g].obs_logvar);
        let diff = tape.sub(x, mean);
        let sq = tape.square(diff);
        let neg_lv = tape.scale(lv, -1.0);
        let inv_var = tape.exp(neg_lv);
        let quad = tape.mul(sq, inv_var);
        let inner = tape.add(quad, lv);
        let inner = tape.offset(inner, (2.0 * PI).ln());
        let total = tape.sum(inner);
        tape.scale(total, -0.5)
    }

    /// `KL(N(mean, 1/precision) ‖ N(0, I))`.
    pub fn tape_kl(&self, tape: &mut Tape, mean: Var, precision: Var) -> Var {
        let log_prec = tape.log(precision);
        let neg = tape.scale(log_prec, -1.0);
        let var = tape.exp(neg);
        let msq = tape.square(mean);
        let t = tape.add(var, msq);
        let t = tape.add(t, log_prec);
        let t = tape.offset(t, -1.0);
        let s = tape.sum(t);
        tape.scale(s, 0.5)
    }

    /// `-½ ‖θ‖²` over the body parameters.
    pub fn tape_log_prior(&self, tape: &mut Tape) -> Var {
        let terms: Vec<Var> = self
            .ids_with_role(ParamRole::Body)
            .into_iter()
            .map(|id| {
                let v = tape.param(&self.params, id);
                let sq = tape.square(v);
                tape.sum(sq)
            })
            .collect();
        let total = tape.add_all(&terms);
        tape.scale(total, -0.5)
    }

    /// Per-sample part of `L̃` (everything but `log p(θ)`).
    ///
    /// `noise` holds one standard-normal vector of length K per Monte
    /// Carlo sample. The posterior is fused over `subset`; the likelihood
    /// is summed over `observed`.
    pub fn tape_sample_objective(
        &self,
        tape: &mut Tape,
        sample: &GroupedSample,
        subset: &[usize],
        observed: &[usize],
        noise: &[Vec<f64>],
    ) -> Result<Var> {
        self.check_subsets(sample, subset, observed)?;
        if noise.is_empty() {
            return Err(Error::invalid("at least one Monte Carlo sample is required"));
        }
        let inputs: Vec<(usize, Var)> =
            observed.iter().map(|&g| (g, tape.constant(sample.get(g).expect("checked present").to_vec()))).collect();
        let input_of = |g: usize| inputs.iter().find(|(h, _)| *h == g).map(|(_, v)| *v).expect("subset of observed");
        let experts: Vec<(Var, Var)> = subset.iter().map(|&g| self.tape_expert(tape, g, input_of(g))).collect();
        let (mean, precision) = self.tape_fuse(tape, &experts);
        let log_prec = tape.log(precision);
        let half = tape.scale(log_prec, -0.5);
        let std = tape.exp(half);

        let mut recon_terms = Vec::with_capacity(noise.len());
        for eps in noise {
            if eps.len() != self.latent {
                return Err(Error::invalid("noise vector has wrong length"));
            }
            let eps = tape.constant(eps.clone());
            let scaled = tape.mul(std, eps);
            let z = tape.add(mean, scaled);
            let per_group: Vec<Var> = inputs
                .iter()
                .map(|&(g, x)| {
                    let m = self.tape_decode(tape, g, z);
                    self.tape_group_loglik(tape, g, x, m)
                })
                .collect();
            recon_terms.push(tape.add_all(&per_group));
        }
        let recon = tape.add_all(&recon_terms);
        let recon = tape.scale(recon, 1.0 / noise.len() as f64);
        let kl = self.tape_kl(tape, mean, precision);
        Ok(tape.sub(recon, kl))
    }

    fn check_subsets(&self, sample: &GroupedSample, subset: &[usize], observed: &[usize]) -> Result<()> {
        self.check_sample(sample)?;
        if subset.is_empty() {
            return Err(Error::invalid("inference subset is empty"));
        }
        for &g in observed {
            self.check_group(g)?;
            if !sample.is_present(g) {
                return Err(Error::invalid(format!("group {} is not present in the sample", self.groups[g].name)));
            }
        }
        if let Some(&g) = subset.iter().find(|g| !observed.contains(g)) {
            return Err(Error::invalid(format!(
                "inference group {} is not in the observed set",
                self.groups.get(g).map_or("?", |s| s.name.as_str())
            )));
        }
        Ok(())
    }

    // ----- plain evaluation ----------------------------------------------

    /// Group `g`'s expert: mean from the mean head, precision `|V φ(x)|`.
    pub fn encode_group(&self, g: usize, x: &[f64]) -> Result<DiagGaussian> {
        let spec = self.check_group(g)?;
        if x.len() != spec.dim {
            return Err(Error::invalid(format!("group {} expects {} values, got {}", spec.name, spec.dim, x.len())));
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.to_vec());
        let (mean, prec) = self.tape_expert(&mut tape, g, xv);
        tape.status()?;
        DiagGaussian::new(tape.value(mean).to_vec(), tape.value(prec).to_vec())
    }

    /// Posterior `p(z) ∏_{g∈subset} q_g(z | x⁽ᵍ⁾)`.
    pub fn encode(&self, sample: &GroupedSample, subset: &[usize]) -> Result<DiagGaussian> {
        self.check_sample(sample)?;
        if subset.is_empty() {
            return Err(Error::invalid("inference subset is empty"));
        }
        let experts = subset
            .iter()
            .map(|&g| {
                self.check_group(g)?;
                let x = sample.get(g).ok_or_else(|| {
                    Error::invalid(format!("group {} is not present in the sample", self.groups[g].name))
                })?;
                self.encode_group(g, x)
            })
            .collect::<Result<Vec<_>>>()?;
        poe_fuse(self.latent, &experts)
    }

    /// Decoder mean and (z-independent) variance for group `g`.
    pub fn decode_group(&self, g: usize, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_group(g)?;
        if z.len() != self.latent {
            return Err(Error::invalid(format!("latent code has {} entries, expected {}", z.len(), self.latent)));
        }
        let mut tape = Tape::new();
        let zv = tape.constant(z.to_vec());
        let mean = self.tape_decode(&mut tape, g, zv);
        tape.status()?;
        let var = self.params.value(self.nets[g].obs_logvar).data().iter().map(|lv| lv.exp()).collect();
        Ok((tape.value(mean).to_vec(), var))
    }

    /// `log N(x; mean, diag(var))`.
    pub fn gaussian_loglik(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
        x.iter().zip(mean).zip(var).map(|((x, m), v)| -0.5 * ((2.0 * PI * v).ln() + (x - m) * (x - m) / v)).sum()
    }

    pub fn log_prior(&self) -> f64 {
        -0.5 * self
            .ids_with_role(ParamRole::Body)
            .into_iter()
            .map(|id| self.params.value(id).sum_squares())
            .sum::<f64>()
    }

    /// Monte Carlo estimate of `L̃` for one sample: reconstruction of the
    /// `observed` groups averaged over `mc_samples` draws from the
    /// posterior fused over `subset`, minus its KL to the prior, plus
    /// `log p(θ)`.
    pub fn elbo_tilde(
        &self,
        sample: &GroupedSample,
        subset: &[usize],
        observed: &[usize],
        rng: &mut SeededRng,
        mc_samples: usize,
    ) -> Result<f64> {
        self.check_subsets(sample, subset, observed)?;
        if mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be at least 1"));
        }
        let noise: Vec<Vec<f64>> = (0..mc_samples).map(|_| rng.normals(self.latent)).collect();
        let mut tape = Tape::new();
        let per_sample = self.tape_sample_objective(&mut tape, sample, subset, observed, &noise)?;
        let prior = self.tape_log_prior(&mut tape);
        let total = tape.add(per_sample, prior);
        tape.status()?;
        Ok(tape.scalar(total))
    }

    // ----- Φ ---------------------------------------------------------------

    /// `Φ⁽ᵍ⁾ = [Wᵀ, V]ᵀ` as a fresh `(p + H) × K` matrix.
    pub fn assemble_phi(&self, g: usize) -> Tensor {
        let view = self.phi(g);
        let rows = view.rows();
        let mut out = Tensor::zeros(&[rows, self.latent]);
        for j in 0..self.latent {
            for (r, v) in view.column(j).into_iter().enumerate() {
                out.set(r, j, v);
            }
        }
        out
    }

    pub fn phi(&self, g: usize) -> PhiView<'_> {
        let net = &self.nets[g];
        PhiView { w: self.params.value(net.w), v: self.params.value(net.v) }
    }

    pub fn phi_mut(&mut self, g: usize) -> PhiMut<'_> {
        let net = self.nets[g];
        PhiMut { params: &mut self.params, w: net.w, v: net.v }
    }
}

/// Read-only view of one group's `Φ`.
pub struct PhiView<'a> {
    w: &'a Tensor,
    v: &'a Tensor,
}

impl PhiView<'_> {
    pub fn rows(&self) -> usize {
        self.w.rows() + self.v.cols()
    }

    pub fn cols(&self) -> usize {
        self.w.cols()
    }

    /// Column `j` of `W` followed by row `j` of `V`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let mut col = self.w.column(j);
        col.extend_from_slice(self.v.row(j));
        col
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        let w: f64 = (0..self.w.rows()).map(|r| self.w.at(r, j).powi(2)).sum();
        let v: f64 = self.v.row(j).iter().map(|x| x * x).sum();
        (w + v).sqrt()
    }

    pub fn column_is_zero(&self, j: usize) -> bool {
        (0..self.w.rows()).all(|r| self.w.at(r, j) == 0.0) && self.v.row(j).iter().all(|&x| x == 0.0)
    }
}

/// Write-through view of one group's `Φ`; column writes land in `W` and `V`.
pub struct PhiMut<'a> {
    params: &'a mut ParamSet,
    w: ParamId,
    v: ParamId,
}

impl PhiMut<'_> {
    pub fn view(&self) -> PhiView<'_> {
        PhiView { w: self.params.value(self.w), v: self.params.value(self.v) }
    }

    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        let p = self.params.value(self.w).rows();
        let h = self.params.value(self.v).cols();
        assert_eq!(col.len(), p + h, "Φ column has wrong length");
        let w = self.params.value_mut(self.w);
        for (r, &x) in col[..p].iter().enumerate() {
            w.set(r, j, x);
        }
        let v = self.params.value_mut(self.v);
        for (c, &x) in col[p..].iter().enumerate() {
            v.set(j, c, x);
        }
    }
}
