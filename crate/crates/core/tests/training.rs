mod common;

use common::random_tiny_model;
use factvae::data::{generate_bars, BarsConfig, GroupedDataset};
use factvae::math::tensor::norm2;
use factvae::math::SeededRng;
use factvae::model::{FactVaeModel, GroupSpec, GroupedSample, ParamRole};
use factvae::sparsity::{penalty, prox_group_lasso, zero_column_fraction};
use factvae::trainer::{fit, sample_inference_subset, train, TrainConfig};
use proptest::prelude::*;

fn small_bars(seed: u64) -> GroupedDataset {
    generate_bars(&BarsConfig { n: 40, size: 4, seed, ..Default::default() }).unwrap()
}

fn quick(lambda: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { lambda, epochs, seed, batch_size: 8, eta: 1e-3, ..Default::default() }
}

#[test]
fn subset_frequencies_are_uniform_over_nonempty_sets() {
    let mut rng = SeededRng::new(21);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        match sample_inference_subset(&[4, 7], 0.5, &mut rng).unwrap().as_slice() {
            [4] => counts[0] += 1,
            [7] => counts[1] += 1,
            [4, 7] => counts[2] += 1,
            other => panic!("unexpected subset {other:?}"),
        }
    }
    let p = 1.0 / 3.0;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for c in counts {
        assert!((c as f64 / n as f64 - p).abs() < 3.0 * se, "{counts:?}");
    }
}

#[test]
fn zero_epochs_is_a_no_op() {
    let data = small_bars(1);
    let mut rng = SeededRng::new(1);
    let mut m = FactVaeModel::new(data.specs().to_vec(), 3, 5, &mut rng).unwrap();
    let before = m.clone();
    let history = train(&data, &mut m, &quick(1.0, 0, 1)).unwrap();
    assert!(history.records.is_empty());
    assert_eq!(m, before);
}

#[test]
fn one_record_per_epoch() {
    let data = small_bars(2);
    let (m, history) = fit(&data, 3, 5, &quick(0.5, 3, 2)).unwrap();
    assert_eq!(history.records.len(), 3);
    for (i, r) in history.records.iter().enumerate() {
        assert_eq!(r.epoch, i);
        assert!(r.elbo_tilde.is_finite());
    }
    let last = history.records.last().unwrap();
    assert_eq!(last.penalty, penalty(&m, 0.5));
    assert_eq!(last.zero_col_fraction, zero_column_fraction(&m));
}

#[test]
fn huge_lambda_zeroes_phi_in_one_epoch() {
    let data = small_bars(3);
    let (m, history) = fit(&data, 3, 5, &quick(1e6, 1, 3)).unwrap();
    assert_eq!(history.records[0].zero_col_fraction, 1.0);
    for id in m.ids_with_role(ParamRole::Phi) {
        assert!(m.params().value(id).data().iter().all(|x| *x == 0.0));
    }
}

#[test]
fn fixed_seed_is_bit_identical() {
    let data = small_bars(4);
    let (a, ha) = fit(&data, 3, 5, &quick(1.0, 3, 9)).unwrap();
    let (b, hb) = fit(&data, 3, 5, &quick(1.0, 3, 9)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(ha, hb);
    let (c, _) = fit(&data, 3, 5, &quick(1.0, 3, 10)).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

#[test]
fn missing_storage_is_never_read() {
    let data = small_bars(5);
    let mut poisoned = data.clone();
    let mut hits = 0;
    for s in poisoned.samples_mut() {
        for g in 0..4 {
            if !s.is_present(g) {
                s.storage_mut(g).fill(f64::NAN);
                hits += 1;
            }
        }
    }
    assert!(hits > 0);
    let (a, ha) = fit(&data, 3, 5, &quick(1.0, 2, 5)).unwrap();
    let (b, hb) = fit(&poisoned, 3, 5, &quick(1.0, 2, 5)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(ha.to_csv(), hb.to_csv());
}

#[test]
fn silent_decoder_keeps_phi_at_zero() {
    // with no output weights and no hidden offset nothing flows back to W or V
    let data = small_bars(6);
    for lambda in [0.0, 0.3] {
        let mut rng = SeededRng::new(6);
        let mut m = FactVaeModel::new(data.specs().to_vec(), 3, 5, &mut rng).unwrap();
        for g in 0..4 {
            let nets = m.nets()[g];
            for id in [nets.w, nets.v, nets.dec_out_w, nets.dec_hidden_b] {
                m.params_mut().value_mut(id).fill(0.0);
            }
        }
        let history = train(&data, &mut m, &quick(lambda, 3, 6)).unwrap();
        assert!(history.records.iter().all(|r| r.zero_col_fraction == 1.0));
    }
}

#[test]
fn lambda_zero_never_zeroes_columns() {
    let data = small_bars(7);
    let (_, history) = fit(&data, 3, 5, &quick(0.0, 2, 7)).unwrap();
    assert!(history.records.iter().all(|r| r.zero_col_fraction == 0.0 && r.penalty == 0.0));
}

#[test]
fn non_finite_objective_names_the_iteration() {
    let specs = vec![GroupSpec::new("a", 2)];
    let samples = vec![GroupedSample::fully_observed(vec![vec![1e200, -1e200]]).unwrap(); 4];
    let data = GroupedDataset::new(specs, samples).unwrap();
    let err = fit(&data, 2, 3, &quick(1.0, 1, 0)).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    assert!(err.to_string().contains("iteration 1"), "{err}");
}

#[test]
fn mismatched_groups_are_rejected() {
    let data = small_bars(8);
    let mut m = random_tiny_model(8);
    assert!(train(&data, &mut m, &quick(1.0, 1, 0)).is_err());
}

fn prox_objective(u: &[f64], x: &[f64], t: f64) -> f64 {
    let d: f64 = u.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * d + t * norm2(u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_is_the_minimizer(x in prop::collection::vec(-3.0f64..3.0, 1..6), eta in 0.01f64..2.0, lambda in 0.0f64..3.0, seed in 0u64..1000) {
        let t = eta * lambda;
        let out = prox_group_lasso(&x, eta, lambda);
        let best = prox_objective(&out, &x, t);
        let mut rng = SeededRng::new(seed);
        for k in 0..1000 {
            let scale = 10f64.powi(-(k % 4));
            let u: Vec<f64> = out.iter().map(|o| o + scale * rng.standard_normal()).collect();
            prop_assert!(prox_objective(&u, &x, t) >= best - 1e-12 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn prox_shrinks_norm_by_threshold(x in prop::collection::vec(-3.0f64..3.0, 1..6), eta in 0.01f64..2.0, lambda in 0.0f64..3.0) {
        let out = prox_group_lasso(&x, eta, lambda);
        let expect = (norm2(&x) - eta * lambda).max(0.0);
        prop_assert!((norm2(&out) - expect).abs() < 1e-12);
        if norm2(&x) <= eta * lambda {
            prop_assert!(out.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn prox_is_nonexpansive(
        xy in (1usize..6).prop_flat_map(|n| (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(-3.0f64..3.0, n))),
        eta in 0.01f64..2.0,
        lambda in 0.0f64..3.0,
    ) {
        let (x, y) = xy;
        let (px, py) = (prox_group_lasso(&x, eta, lambda), prox_group_lasso(&y, eta, lambda));
        let dp: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(norm2(&dp) <= norm2(&dx) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn subsets_stay_inside_observed(observed in prop::collection::btree_set(0usize..8, 1..6), keep in 0.05f64..1.0, seed in 0u64..1000) {
        let observed: Vec<usize> = observed.into_iter().collect();
        let subset = sample_inference_subset(&observed, keep, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(!subset.is_empty());
        prop_assert!(subset.iter().all(|g| observed.contains(g)));
    }
}
