//! Adaptive-moment (Adam) updates for the dense network parameters.

use crate::autodiff::{ParamId, ParamSet};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    ids: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, ids: &[ParamId]) -> Self {
        let zeros = |id: &ParamId| vec![0.0; params.value(*id).len()];
        Self { ids: ids.to_vec(), m: ids.iter().map(zeros).collect(), v: ids.iter().map(zeros).collect(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }
}

/// One bias-corrected Adam step that descends the gradients currently
/// stored in `params` for the parameters tracked by `state`.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState, lr: f64) -> Result<()> {
    state.t += 1;
    let bc1 = 1.0 - BETA1.powf(state.t as f64);
    let bc2 = 1.0 - BETA2.powf(state.t as f64);
    for (k, &id) in state.ids.iter().enumerate() {
        let p = params.get_mut(id);
        if p.value.len() != state.m[k].len() {
            return Err(Error::invalid(format!("optimizer state does not match parameter {}", p.name)));
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (((x, &g), mi), vi) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m.iter_mut()).zip(v.iter_mut())
        {
            *mi = BETA1 * *mi + (1.0 - BETA1) * g;
            *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Tensor;

    fn setup(values: Vec<f64>, grads: Vec<f64>) -> (ParamSet, AdamState, ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.add("p", Tensor::vector(values));
        ps.get_mut(id).grad.data_mut().copy_from_slice(&grads);
        let st = AdamState::new(&ps, &[id]);
        (ps, st, id)
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut ps, mut st, id) = setup(vec![1.0, -2.0], vec![0.0, 0.0]);
        adam_step(&mut ps, &mut st, 0.1).unwrap();
        assert_eq!(ps.value(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let (mut ps, mut st, id) = setup(vec![0.0, 0.0, 0.0], vec![3.0, -0.02, 1e3]);
        adam_step(&mut ps, &mut st, 1e-3).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
        for (x, g) in ps.value(id).data().iter().zip([3.0f64, -0.02, 1e3]) {
            let expect = -1e-3 * g / (g.abs() + EPSILON);
            assert!((x - expect).abs() < 1e-15, "{x} vs {expect}");
        }
    }

    #[test]
    fn update_is_scale_invariant() {
        let (mut ps, mut st, id) = setup(vec![0.0, 0.0], vec![0.5, 50.0]);
        adam_step(&mut ps, &mut st, 0.01).unwrap();
        let d = ps.value(id).data();
        assert!((d[0] - d[1]).abs() < 1e-9);
    }
}
