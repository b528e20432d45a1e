//! C ABI for the gsnr-lab toolkit.
//!
//! Every constructor returns an opaque handle through an out-pointer and a
//! status code; `gsnr_lab_last_error` retrieves the message for the most
//! recent failure on the calling thread. Handles must be released with the
//! matching `_free` function exactly once.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gsnr_lab::dynamics::{train_with_probes, ProbeConfig, ProbeSeries, TestSchedule, TrainConfig};
use gsnr_lab::netcore::{init_params, Activation, FreezeMask, LossKind, MlpParams, MlpSpec};
use gsnr_lab::synthdata::{gen_dataset, DataSpec, Dataset, TaskKind};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsnrLabStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments were rejected before any computation started.
    InvalidArgument = 2,
    /// The computation itself failed (non-finite loss, degenerate data, ...).
    ComputeFailed = 3,
    /// The callee panicked; the handle state is unchanged.
    Panicked = 4,
}

/// Probe series selector for `gsnr_lab_run_series`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsnrLabSeries {
    /// Recorded epoch indices (as f64).
    Epochs = 0,
    TrainLoss = 1,
    TestLoss = 2,
    /// Average GSNR over all non-floored parameters.
    AvgGsnr = 3,
    /// Mean proportion of samples sharing the majority gradient sign.
    PSameSign = 4,
}

/// A generated dataset. Opaque; create with `gsnr_lab_dataset_regression`
/// or `gsnr_lab_dataset_classification`, release with
/// `gsnr_lab_dataset_free`.
pub struct GsnrLabDataset(Dataset);

/// A finished training run with its recorded probe series. Opaque; create
/// with `gsnr_lab_run_training`, release with `gsnr_lab_run_free`.
pub struct GsnrLabRun(ProbeSeries);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: GsnrLabStatus, msg: &str) -> GsnrLabStatus {
    set_error(msg);
    status
}

/// Copy the message of the calling thread's most recent error into `buf`
/// (nul-terminated, truncated to `cap` bytes). Returns the full message
/// length in bytes excluding the terminator. `buf` may be null when `cap`
/// is 0, to query the length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes when `cap > 0`.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if cap > 0 && !buf.is_null() {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn guard<F: FnOnce() -> GsnrLabStatus>(f: F) -> GsnrLabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(GsnrLabStatus::Panicked, "internal panic"),
    }
}

unsafe fn store_dataset(
    spec: Result<DataSpec, gsnr_lab::Error>,
    seed: u64,
    out: *mut *mut GsnrLabDataset,
) -> GsnrLabStatus {
    let spec = match spec {
        Ok(s) => s,
        Err(e) => return fail(GsnrLabStatus::InvalidArgument, &e.to_string()),
    };
    match gen_dataset(&spec, seed) {
        Ok(data) => {
            *out = Box::into_raw(Box::new(GsnrLabDataset(data)));
            GsnrLabStatus::Ok
        }
        Err(e) => fail(GsnrLabStatus::ComputeFailed, &e.to_string()),
    }
}

/// Generate the 2-d product regression dataset (y = x0*x1 + noise).
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_dataset_regression(
    n: usize,
    noise_half_width: f64,
    seed: u64,
    out: *mut *mut GsnrLabDataset,
) -> GsnrLabStatus {
    if out.is_null() {
        return fail(GsnrLabStatus::NullPointer, "out handle is null");
    }
    guard(|| store_dataset(DataSpec::regression(n, noise_half_width), seed, out))
}

/// Generate the teacher-labeled classification dataset.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_dataset_classification(
    input_dim: usize,
    n: usize,
    num_classes: usize,
    teacher_seed: u64,
    seed: u64,
    out: *mut *mut GsnrLabDataset,
) -> GsnrLabStatus {
    if out.is_null() {
        return fail(GsnrLabStatus::NullPointer, "out handle is null");
    }
    guard(|| {
        store_dataset(
            DataSpec::classification(input_dim, n, num_classes, teacher_seed),
            seed,
            out,
        )
    })
}

/// Number of samples in the dataset.
///
/// # Safety
/// `ds` must be a live handle from a dataset constructor; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_dataset_len(
    ds: *const GsnrLabDataset,
    out: *mut usize,
) -> GsnrLabStatus {
    if ds.is_null() || out.is_null() {
        return fail(GsnrLabStatus::NullPointer, "dataset or out pointer is null");
    }
    *out = (*ds).0.len();
    GsnrLabStatus::Ok
}

/// Release a dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be a handle from a dataset constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_dataset_free(ds: *mut GsnrLabDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Train a one-hidden-layer MLP with full-batch gradient descent on
/// `train`, recording probes every `record_every` epochs, and return the
/// finished run. `init_scale` multiplies the initial weights (1.0 for the
/// standard initialization). The loss follows the training dataset's task.
///
/// # Safety
/// `train` and `test` must be live dataset handles; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_run_training(
    train: *const GsnrLabDataset,
    test: *const GsnrLabDataset,
    hidden_width: usize,
    init_scale: f64,
    epochs: usize,
    learning_rate: f64,
    record_every: usize,
    init_seed: u64,
    out: *mut *mut GsnrLabRun,
) -> GsnrLabStatus {
    if train.is_null() || test.is_null() || out.is_null() {
        return fail(GsnrLabStatus::NullPointer, "dataset or out pointer is null");
    }
    guard(|| {
        let train = &(*train).0;
        let test = &(*test).0;
        if !(init_scale > 0.0 && init_scale.is_finite()) {
            return fail(GsnrLabStatus::InvalidArgument, "init_scale must be positive and finite");
        }
        if hidden_width == 0 || record_every == 0 {
            return fail(
                GsnrLabStatus::InvalidArgument,
                "hidden_width and record_every must be positive",
            );
        }
        let (out_dim, loss) = match train.spec().task {
            TaskKind::Regression => (1, LossKind::Mse),
            TaskKind::Classification => (train.spec().num_classes, LossKind::SoftmaxCrossEntropy),
        };
        let dims = vec![train.spec().input_dim, hidden_width, out_dim];
        let spec = match MlpSpec::new(dims, Activation::Relu, loss) {
            Ok(s) => s,
            Err(e) => return fail(GsnrLabStatus::InvalidArgument, &e.to_string()),
        };
        let mut params = init_params(&spec, init_seed);
        if init_scale != 1.0 {
            let flat: Vec<f64> = params.flatten().iter().map(|v| v * init_scale).collect();
            params = match MlpParams::unflatten(&spec, &flat) {
                Ok(p) => p,
                Err(e) => return fail(GsnrLabStatus::ComputeFailed, &e.to_string()),
            };
        }
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            record_every,
            record_epochs: None,
            freeze: FreezeMask::none(spec.param_count()),
            probes: ProbeConfig::default(),
            test_schedule: TestSchedule::Every,
        };
        match train_with_probes(&params, train, test, &cfg) {
            Ok((_, _, series)) => {
                *out = Box::into_raw(Box::new(GsnrLabRun(series)));
                GsnrLabStatus::Ok
            }
            Err(e) => fail(GsnrLabStatus::ComputeFailed, &e.to_string()),
        }
    })
}

/// Number of recorded epochs in the run; every series has this length.
///
/// # Safety
/// `run` must be a live handle from `gsnr_lab_run_training`; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_run_len(
    run: *const GsnrLabRun,
    out: *mut usize,
) -> GsnrLabStatus {
    if run.is_null() || out.is_null() {
        return fail(GsnrLabStatus::NullPointer, "run or out pointer is null");
    }
    *out = (*run).0.epochs.len();
    GsnrLabStatus::Ok
}

/// Copy one recorded series into `buf`. `len` must equal
/// `gsnr_lab_run_len`; epochs are delivered as f64 for a uniform ABI.
///
/// # Safety
/// `run` must be a live handle; `buf` must point to `len` writable f64.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_run_series(
    run: *const GsnrLabRun,
    which: GsnrLabSeries,
    buf: *mut f64,
    len: usize,
) -> GsnrLabStatus {
    if run.is_null() || buf.is_null() {
        return fail(GsnrLabStatus::NullPointer, "run or buffer pointer is null");
    }
    let series = &(*run).0;
    if len != series.epochs.len() {
        return fail(
            GsnrLabStatus::InvalidArgument,
            "buffer length does not match the recorded epoch count",
        );
    }
    let dst = std::slice::from_raw_parts_mut(buf, len);
    match which {
        GsnrLabSeries::Epochs => {
            for (d, &e) in dst.iter_mut().zip(&series.epochs) {
                *d = e as f64;
            }
        }
        GsnrLabSeries::TrainLoss => dst.copy_from_slice(&series.train_loss),
        GsnrLabSeries::TestLoss => dst.copy_from_slice(&series.test_loss),
        GsnrLabSeries::AvgGsnr => dst.copy_from_slice(&series.avg_gsnr_all),
        GsnrLabSeries::PSameSign => dst.copy_from_slice(&series.p_same_sign_mean),
    }
    GsnrLabStatus::Ok
}

/// Release a run handle. Null is ignored.
///
/// # Safety
/// `run` must be a handle from `gsnr_lab_run_training`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsnr_lab_run_free(run: *mut GsnrLabRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
