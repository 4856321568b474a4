//! C ABI for `factvae`.
//!
//! Every fallible function returns an [`FvStatus`]. On failure a
//! description is available from [`fv_last_error_message`] on the same
//! thread until the next failing call. Handles returned through `out`
//! pointers are owned by the caller and released with the matching
//! `*_free` function. Panics never cross the boundary; they surface as
//! [`FvStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use factvae::data::{generate_bars, read_dataset, write_dataset, BarsConfig, GroupedDataset};
use factvae::eval::{heldout_ll, reconstruct, sparsity_matrix, ReconstructMode};
use factvae::math::{poe_fuse, DiagGaussian, SeededRng};
use factvae::model::{read_model, write_model, FactVaeModel};
use factvae::sparsity::{prox_group_lasso, SparsityConfig};
use factvae::trainer::{fit, TrainConfig};
use factvae::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvStatus {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Io = 3,
    Numerical = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque trained model.
pub struct FvModel {
    inner: FactVaeModel,
}

/// Opaque grouped dataset.
pub struct FvDataset {
    inner: GroupedDataset,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FvBarsConfig {
    pub n: usize,
    pub size: usize,
    pub p_row: f64,
    pub noise: f64,
    pub p_miss: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FvTrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub keep_prob: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl From<&FvBarsConfig> for BarsConfig {
    fn from(c: &FvBarsConfig) -> Self {
        BarsConfig { n: c.n, size: c.size, p_row: c.p_row, noise: c.noise, p_miss: c.p_miss, seed: c.seed }
    }
}

impl From<&FvTrainConfig> for TrainConfig {
    fn from(c: &FvTrainConfig) -> Self {
        TrainConfig {
            lambda: c.lambda,
            lr: c.lr,
            eta: c.eta,
            epochs: c.epochs,
            batch_size: c.batch_size,
            keep_prob: c.keep_prob,
            mc_samples: c.mc_samples,
            seed: c.seed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => FvStatus::InvalidArgument,
            Error::Numerical { .. } => FvStatus::Numerical,
            Error::Parse { .. } => FvStatus::Parse,
            Error::Io { .. } => FvStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FvStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            FvStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure(FvStatus::NullPointer, format!("{what} is null")))
}

fn check_out<T>(ptr: *mut T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        Err(Failure(FvStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(Failure(FvStatus::NullPointer, "path is null".into()));
    }
    let s = CStr::from_ptr(ptr).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    check_out(ptr as *mut T, what)?;
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_out(out: *mut f64, len: usize, values: &[f64], what: &str) -> Result<(), Failure> {
    if len != values.len() {
        return Err(invalid(format!("{what} holds {len} values, {} required", values.len())));
    }
    check_out(out, what)?;
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fv_bars_config_default() -> FvBarsConfig {
    let d = BarsConfig::default();
    FvBarsConfig { n: d.n, size: d.size, p_row: d.p_row, noise: d.noise, p_miss: d.p_miss, seed: d.seed }
}

#[no_mangle]
pub extern "C" fn fv_train_config_default() -> FvTrainConfig {
    let d = TrainConfig::default();
    FvTrainConfig {
        lambda: d.lambda,
        lr: d.lr,
        eta: d.eta,
        epochs: d.epochs,
        batch_size: d.batch_size,
        keep_prob: d.keep_prob,
        mc_samples: d.mc_samples,
        seed: d.seed,
    }
}

// ----- datasets -------------------------------------------------------------

/// # Safety
/// `config` must be null or valid; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fv_bars_generate(config: *const FvBarsConfig, out: *mut *mut FvDataset) -> FvStatus {
    guard(|| {
        let cfg = BarsConfig::from(deref(config, "config")?);
        check_out(out, "out")?;
        cfg.validate()?;
        let inner = generate_bars(&cfg)?;
        *out = Box::into_raw(Box::new(FvDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a nul-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fv_dataset_read(path: *const c_char, out: *mut *mut FvDataset) -> FvStatus {
    guard(|| {
        let path = path_arg(path)?;
        check_out(out, "out")?;
        let inner = read_dataset(&path)?;
        *out = Box::into_raw(Box::new(FvDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a live handle; `path` null or nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn fv_dataset_write(dataset: *const FvDataset, path: *const c_char) -> FvStatus {
    guard(|| {
        let ds = deref(dataset, "dataset")?;
        write_dataset(&ds.inner, &path_arg(path)?)?;
        Ok(())
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fv_dataset_len(dataset: *const FvDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fv_dataset_free(dataset: *mut FvDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// ----- models ---------------------------------------------------------------

/// # Safety
/// `path` must be null or nul-terminated; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fv_model_read(path: *const c_char, out: *mut *mut FvModel) -> FvStatus {
    guard(|| {
        let path = path_arg(path)?;
        check_out(out, "out")?;
        let inner = read_model(&path)?;
        *out = Box::into_raw(Box::new(FvModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; `path` null or nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn fv_model_write(model: *const FvModel, path: *const c_char) -> FvStatus {
    guard(|| {
        let m = deref(model, "model")?;
        write_model(&m.inner, &path_arg(path)?)?;
        Ok(())
    })
}

/// Initializes a model for `dataset` and trains it.
///
/// # Safety
/// Pointers must be null or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_model_fit(
    dataset: *const FvDataset,
    latent: usize,
    hidden: usize,
    config: *const FvTrainConfig,
    out: *mut *mut FvModel,
) -> FvStatus {
    guard(|| {
        let ds = deref(dataset, "dataset")?;
        let cfg = TrainConfig::from(deref(config, "config")?);
        check_out(out, "out")?;
        let (inner, _) = fit(&ds.inner, latent, hidden, &cfg)?;
        *out = Box::into_raw(Box::new(FvModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fv_model_latent(model: *const FvModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.latent())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fv_model_num_groups(model: *const FvModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_groups())
}

/// Dimension of group `group`, or 0 when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fv_model_group_dim(model: *const FvModel, group: usize) -> usize {
    model.as_ref().and_then(|m| m.inner.groups().get(group)).map_or(0, |g| g.dim)
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fv_model_free(model: *mut FvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ----- evaluation -----------------------------------------------------------

/// Writes the row-major `groups × latent` column-norm matrix into `out`,
/// which must hold exactly that many values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fv_sparsity_matrix(model: *const FvModel, out: *mut f64, len: usize) -> FvStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let flat: Vec<f64> = sparsity_matrix(&m.inner).entries.concat();
        write_out(out, len, &flat, "out")
    })
}

/// Reconstructs every group of record `index` from the groups listed in
/// `observe`. The decoder means are written back to back in group order;
/// `out_len` must equal the sum of the group dimensions. `sample` selects
/// a posterior draw instead of the posterior mean.
///
/// # Safety
/// `observe` must point to `n_observe` values and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fv_reconstruct(
    model: *const FvModel,
    dataset: *const FvDataset,
    index: usize,
    observe: *const usize,
    n_observe: usize,
    sample: bool,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> FvStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let ds = deref(dataset, "dataset")?;
        let observe = slice_arg(observe, n_observe, "observe")?;
        let record = ds.inner.samples().get(index).ok_or_else(|| invalid(format!("record {index} out of range")))?;
        let mode = if sample { ReconstructMode::Sample } else { ReconstructMode::Mean };
        let groups = reconstruct(&m.inner, record, observe, mode, &mut SeededRng::new(seed))?;
        write_out(out, out_len, &groups.concat(), "out")
    })
}

/// Importance-weighted log-likelihood of record `index` with `samples` draws.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fv_heldout_ll(
    model: *const FvModel,
    dataset: *const FvDataset,
    index: usize,
    samples: usize,
    seed: u64,
    out: *mut f64,
) -> FvStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let ds = deref(dataset, "dataset")?;
        check_out(out, "out")?;
        let record = ds.inner.samples().get(index).ok_or_else(|| invalid(format!("record {index} out of range")))?;
        *out = heldout_ll(&m.inner, record, samples, &mut SeededRng::new(seed))?;
        Ok(())
    })
}

// ----- primitives -----------------------------------------------------------

/// Block soft-threshold of a column of length `len` into `out`.
///
/// # Safety
/// `column` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fv_prox_group_lasso(
    column: *const f64,
    len: usize,
    eta: f64,
    lambda: f64,
    out: *mut f64,
) -> FvStatus {
    guard(|| {
        SparsityConfig::new(lambda, eta)?;
        let col = slice_arg(column, len, "column")?;
        write_out(out, len, &prox_group_lasso(col, eta, lambda), "out")
    })
}

/// Fuses a standard-normal prior with `n_experts` diagonal Gaussians of
/// dimension `dim`. `means` and `precisions` are row-major `n_experts × dim`.
///
/// # Safety
/// Inputs must hold `n_experts * dim` doubles, outputs `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fv_poe_fuse(
    dim: usize,
    means: *const f64,
    precisions: *const f64,
    n_experts: usize,
    out_mean: *mut f64,
    out_precision: *mut f64,
) -> FvStatus {
    guard(|| {
        let total = dim.checked_mul(n_experts).ok_or_else(|| invalid("expert array size overflows"))?;
        let means = slice_arg(means, total, "means")?;
        let precisions = slice_arg(precisions, total, "precisions")?;
        let experts = (0..n_experts)
            .map(|e| {
                let r = e * dim..(e + 1) * dim;
                DiagGaussian::new(means[r.clone()].to_vec(), precisions[r].to_vec())
            })
            .collect::<factvae::Result<Vec<_>>>()?;
        let fused = poe_fuse(dim, &experts)?;
        write_out(out_mean, dim, fused.mean(), "out_mean")?;
        write_out(out_precision, dim, fused.precision(), "out_precision")
    })
}
