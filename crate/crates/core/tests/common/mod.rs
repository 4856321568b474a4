//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use factvae::autodiff::{ParamSet, Tape, Var};
use factvae::data::GroupedDataset;
use factvae::math::SeededRng;
use factvae::model::{FactVaeModel, GroupSpec, GroupedSample};

/// Normalized mean and variance of `N(0,1) · ∏ N(μ_i, 1/λ_i)` by Riemann
/// sum of the log-density on `[-20, 20]` with step `1e-4`.
pub fn grid_fuse_1d(experts: &[(f64, f64)]) -> (f64, f64) {
    let step = 1e-4;
    let n = (40.0 / step) as usize;
    let logp = |z: f64| -> f64 { -0.5 * z * z - experts.iter().map(|(m, l)| 0.5 * l * (z - m) * (z - m)).sum::<f64>() };
    let zs: Vec<f64> = (0..=n).map(|i| -20.0 + i as f64 * step).collect();
    let peak = zs.iter().map(|&z| logp(z)).fold(f64::NEG_INFINITY, f64::max);
    let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
    for &z in &zs {
        let w = (logp(z) - peak).exp();
        w0 += w;
        w1 += w * z;
        w2 += w * z * z;
    }
    let mean = w1 / w0;
    (mean, w2 / w0 - mean * mean)
}

/// Central finite differences of `f` with respect to every coordinate of
/// every parameter, compared against the tape gradient. Returns the worst
/// relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn max_grad_rel_error<F>(params: &mut ParamSet, h: f64, floor: f64, f: F) -> f64
where
    F: Fn(&mut Tape, &ParamSet) -> Var,
{
    let eval = |ps: &ParamSet| {
        let mut t = Tape::new();
        let out = f(&mut t, ps);
        t.scalar(out)
    };
    let mut tape = Tape::new();
    let out = f(&mut tape, params);
    tape.backward(out, params).unwrap();
    let analytic: Vec<Vec<f64>> = params.ids().map(|id| params.grad(id).data().to_vec()).collect();
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = params.ids().collect();
    for (id, grads) in ids.into_iter().zip(&analytic) {
        for (i, &a) in grads.iter().enumerate() {
            let orig = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = orig + h;
            let up = eval(params);
            params.value_mut(id).data_mut()[i] = orig - h;
            let down = eval(params);
            params.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn tiny_specs() -> Vec<GroupSpec> {
    vec![GroupSpec::new("a", 3), GroupSpec::new("b", 2)]
}

/// Random model with weights large enough that every path carries signal.
pub fn random_tiny_model(seed: u64) -> FactVaeModel {
    let mut rng = SeededRng::new(seed);
    let mut m = FactVaeModel::new(tiny_specs(), 2, 4, &mut rng).unwrap();
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for x in m.params_mut().value_mut(id).data_mut() {
            *x = 0.6 * rng.standard_normal();
        }
    }
    m.clamp_obs_logvar();
    m
}

pub fn random_sample(specs: &[GroupSpec], rng: &mut SeededRng) -> GroupedSample {
    GroupedSample::fully_observed(specs.iter().map(|s| rng.normals(s.dim)).collect()).unwrap()
}

/// Per-pixel mean of the training set's observed quadrants.
pub fn mean_predictor(train: &GroupedDataset) -> Vec<Vec<f64>> {
    train.group_means()
}
