//! End-to-end acceptance run. Prints one `[PASS]` or `[FAIL]` line per
//! criterion and exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{grid_fuse_1d, max_grad_rel_error, random_sample, random_tiny_model};
use factvae::data::{generate_bars, BarsConfig, GroupedDataset};
use factvae::eval::{heldout_ll, reconstruct, sparsity_matrix, ReconstructMode, SparsityMatrix};
use factvae::math::tensor::norm2;
use factvae::math::{entropy, poe_fuse, DiagGaussian, SeededRng};
use factvae::model::{write_model, FactVaeModel};
use factvae::sparsity::prox_group_lasso;
use factvae::trainer::{fit, TrainConfig, TrainHistory};
use factvae::Result;

type Outcome = Result<(bool, String)>;

struct Trained {
    model: FactVaeModel,
    history: TrainHistory,
}

fn train_bars(data: &GroupedDataset, lambda: f64, seed: u64) -> Result<Trained> {
    let cfg = TrainConfig { lambda, seed, ..Default::default() };
    let (model, history) = fit(data, 8, 32, &cfg)?;
    Ok(Trained { model, history })
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for cfg in 0..10u64 {
        let mut m = random_tiny_model(1000 + cfg);
        let mut rng = SeededRng::new(cfg);
        let sample = random_sample(m.groups(), &mut rng);
        let subset = match cfg % 3 {
            0 => vec![0],
            1 => vec![1],
            _ => vec![0, 1],
        };
        let noise = vec![rng.normals(2)];
        let model = m.clone();
        let err = max_grad_rel_error(m.params_mut(), 1e-5, 1e-6, |t, ps| {
            let mut local = model.clone();
            *local.params_mut() = ps.clone();
            let obj = local.tape_sample_objective(t, &sample, &subset, &[0, 1], &noise).unwrap();
            let prior = local.tape_log_prior(t);
            t.add(obj, prior)
        });
        worst = worst.max(err);
    }
    Ok((worst < 1e-4, format!("worst relative error {worst:.2e} over 10 configurations")))
}

fn poe_oracle() -> Outcome {
    let mut rng = SeededRng::new(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = (rng.uniform() * 5.0) as usize;
        let experts: Vec<(f64, f64)> = (0..n).map(|_| (6.0 * rng.uniform() - 3.0, 5.0 * rng.uniform())).collect();
        let gs = experts.iter().map(|&(m, l)| DiagGaussian::new(vec![m], vec![l])).collect::<Result<Vec<_>>>()?;
        let fused = poe_fuse(1, &gs)?;
        let (gm, gv) = grid_fuse_1d(&experts);
        worst = worst.max((fused.mean()[0] - gm).abs()).max((fused.variance()[0] - gv).abs());
    }
    Ok((worst < 1e-6, format!("worst deviation from grid integration {worst:.2e}")))
}

fn prox_objective(u: &[f64], x: &[f64], t: f64) -> f64 {
    let d: f64 = u.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * d + t * norm2(u)
}

fn prox_check() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut beaten = 0usize;
    let mut nonzero_below = 0usize;
    for c in 0..100 {
        let dim = 1 + (rng.uniform() * 8.0) as usize;
        let x = rng.normals(dim);
        let (eta, lambda) = match c % 4 {
            // threshold exactly at the norm
            0 => (0.5, 2.0 * norm2(&x)),
            1 => (0.1 + rng.uniform(), norm2(&x) * (1.0 + rng.uniform()) * 2.0),
            _ => (0.1 + rng.uniform(), rng.uniform()),
        };
        let t = eta * lambda;
        let out = prox_group_lasso(&x, eta, lambda);
        if norm2(&x) <= t && out.iter().any(|v| *v != 0.0) {
            nonzero_below += 1;
        }
        let best = prox_objective(&out, &x, t);
        for k in 0..10_000 {
            let scale = 10f64.powi(-(k % 4));
            let u: Vec<f64> = out.iter().map(|o| o + scale * rng.standard_normal()).collect();
            if prox_objective(&u, &x, t) < best - 1e-12 * (1.0 + best.abs()) {
                beaten += 1;
            }
        }
    }
    let mut expansive = 0usize;
    for _ in 0..1000 {
        let dim = 1 + (rng.uniform() * 8.0) as usize;
        let (x, y) = (rng.normals(dim), rng.normals(dim));
        let (eta, lambda) = (rng.uniform(), 3.0 * rng.uniform());
        let (px, py) = (prox_group_lasso(&x, eta, lambda), prox_group_lasso(&y, eta, lambda));
        let dp: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        if norm2(&dp) > norm2(&dx) * (1.0 + 1e-12) {
            expansive += 1;
        }
    }
    let ok = beaten == 0 && nonzero_below == 0 && expansive == 0;
    Ok((ok, format!("{beaten} improving perturbations, {nonzero_below} inexact zeros, {expansive} expansive pairs")))
}

fn entropy_monotone() -> Outcome {
    let mut rng = SeededRng::new(4);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let dim = 1 + (rng.uniform() * 5.0) as usize;
        let len = 1 + (rng.uniform() * 8.0) as usize;
        let mut experts = Vec::with_capacity(len);
        let mut previous = entropy(&poe_fuse(dim, &[])?)?;
        for _ in 0..len {
            let precision: Vec<f64> =
                (0..dim).map(|_| if rng.bernoulli(0.2) { 0.0 } else { 10.0 * rng.uniform() }).collect();
            experts.push(DiagGaussian::new(rng.normals(dim), precision)?);
            let h = entropy(&poe_fuse(dim, &experts)?)?;
            if h > previous {
                violations += 1;
            }
            previous = h;
        }
    }
    Ok((violations == 0, format!("{violations} increases over 1000 sequences")))
}

fn sparsity_pattern(sm: &SparsityMatrix) -> (bool, bool, usize) {
    let active = sm.active(0.1);
    let (tl, tr, bl, br) = (&active[0], &active[1], &active[2], &active[3]);
    let k = sm.latent();
    let top_shared = (0..k).any(|j| tl[j] && tr[j]);
    let bottom_shared = (0..k).any(|j| bl[j] && br[j]);
    let crossing = (0..k).filter(|&j| (tl[j] || tr[j]) && (bl[j] || br[j])).count();
    (top_shared, bottom_shared, crossing)
}

fn bars_sparsity(sparse: &Trained, dense: &Trained) -> Outcome {
    let sm = sparsity_matrix(&sparse.model);
    let (top, bottom, crossing) = sparsity_pattern(&sm);
    let dense_sm = sparsity_matrix(&dense.model);
    let cells = dense_sm.active(0.1).iter().flatten().filter(|a| **a).count();
    let total = dense_sm.groups.len() * dense_sm.latent();
    let ok = top && bottom && crossing <= 1 && cells as f64 >= 0.9 * total as f64;
    Ok((
        ok,
        format!(
            "lambda=1: top shared {top}, bottom shared {bottom}, {crossing} crossing components; lambda=0: {cells}/{total} active"
        ),
    ))
}

fn heldout_bars(n: usize, seed: u64) -> Result<GroupedDataset> {
    generate_bars(&BarsConfig { n, noise: 0.0, p_miss: 0.0, seed, ..Default::default() })
}

fn cross_reconstruction(train: &GroupedDataset, sparse: &Trained) -> Outcome {
    let test = heldout_bars(200, 1000)?;
    let means = train.group_means();
    let mut rng = SeededRng::new(6);
    let (mut model_se, mut mean_se) = (0.0, 0.0);
    for s in test.samples() {
        let rec = reconstruct(&sparse.model, s, &[0, 2], ReconstructMode::Mean, &mut rng)?;
        for g in [1, 3] {
            let truth = s.get(g).expect("heldout samples are complete");
            for ((x, r), m) in truth.iter().zip(&rec[g]).zip(&means[g]) {
                model_se += (x - r) * (x - r);
                mean_se += (x - m) * (x - m);
            }
        }
    }
    let ratio = model_se / mean_se;
    Ok((ratio < 0.5, format!("MSE ratio to mean predictor {ratio:.4}")))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn small_data_likelihood() -> Outcome {
    let test = heldout_bars(200, 1000)?;
    let mut sparse = Vec::new();
    let mut dense = Vec::new();
    for seed in 0..5u64 {
        let train = generate_bars(&BarsConfig { n: 50, seed, ..Default::default() })?;
        for (lambda, out) in [(1.0, &mut sparse), (0.0, &mut dense)] {
            let t = train_bars(&train, lambda, seed)?;
            let mut rng = SeededRng::new(7);
            let mut total = 0.0;
            for s in test.samples() {
                total += heldout_ll(&t.model, s, 64, &mut rng)?;
            }
            out.push(total / test.len() as f64);
        }
    }
    let (ms, md) = (median(&mut sparse), median(&mut dense));
    Ok((ms >= md, format!("median heldout_ll lambda=1 {ms:.4}, lambda=0 {md:.4}")))
}

fn model_bytes(model: &FactVaeModel, dir: &std::path::Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    write_model(model, &path)?;
    Ok(std::fs::read(&path).expect("model file just written"))
}

fn determinism(train: &GroupedDataset, first: &Trained) -> Outcome {
    let second = train_bars(train, 1.0, 0)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let same_model =
        model_bytes(&first.model, dir.path(), "a.txt")? == model_bytes(&second.model, dir.path(), "b.txt")?;
    let same_csv = sparsity_matrix(&first.model).to_csv() == sparsity_matrix(&second.model).to_csv();
    Ok((same_model && same_csv, format!("model files identical {same_model}, sparsity CSVs identical {same_csv}")))
}

fn missing_robustness(train: &GroupedDataset, reference: &Trained) -> Outcome {
    let mut poisoned = train.clone();
    let mut overwritten = 0usize;
    for s in poisoned.samples_mut() {
        for g in 0..s.num_groups() {
            if !s.is_present(g) {
                s.storage_mut(g).fill(f64::NAN);
                overwritten += 1;
            }
        }
    }
    let again = train_bars(&poisoned, 1.0, 0)?;
    let same = again.model.to_text() == reference.model.to_text()
        && again.history.to_csv() == reference.history.to_csv()
        && sparsity_matrix(&again.model).to_csv() == sparsity_matrix(&reference.model).to_csv();
    Ok((
        same && overwritten > 0,
        format!("{overwritten} missing groups overwritten with NaN, outputs identical {same}"),
    ))
}

fn report(failures: &mut usize, n: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let (ok, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if !ok {
        *failures += 1;
    }
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {n}: {name}: {detail} ({:.1?})", start.elapsed());
}

fn main() -> ExitCode {
    let mut failures = 0;
    report(&mut failures, 1, "gradient correctness", gradient_check);
    report(&mut failures, 2, "product-of-experts oracle", poe_oracle);
    report(&mut failures, 3, "proximal correctness", prox_check);
    report(&mut failures, 4, "entropy monotonicity", entropy_monotone);

    let start = Instant::now();
    let bars = generate_bars(&BarsConfig::default());
    let trained = bars.and_then(|b| {
        let sparse = train_bars(&b, 1.0, 0)?;
        let dense = train_bars(&b, 0.0, 0)?;
        Ok((b, sparse, dense))
    });
    println!("       bars models trained in {:.1?}", start.elapsed());
    match &trained {
        Ok((bars, sparse, dense)) => {
            report(&mut failures, 5, "bars sparsity recovery", || bars_sparsity(sparse, dense));
            report(&mut failures, 6, "cross-group reconstruction", || cross_reconstruction(bars, sparse));
        }
        Err(e) => {
            for (n, name) in [(5, "bars sparsity recovery"), (6, "cross-group reconstruction")] {
                report(&mut failures, n, name, || Ok((false, format!("training failed: {e}"))));
            }
        }
    }
    report(&mut failures, 7, "small-data heldout likelihood", small_data_likelihood);
    match &trained {
        Ok((bars, sparse, _)) => {
            report(&mut failures, 8, "determinism", || determinism(bars, sparse));
            report(&mut failures, 9, "missing-data robustness", || missing_robustness(bars, sparse));
        }
        Err(e) => {
            for (n, name) in [(8, "determinism"), (9, "missing-data robustness")] {
                report(&mut failures, n, name, || Ok((false, format!("training failed: {e}"))));
            }
        }
    }

    println!("{} of 9 criteria passed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
