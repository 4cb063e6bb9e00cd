//! C ABI over the fedsec library.
//!
//! Every function returns an [`FdsStatus`]; on failure a description is
//! kept per thread and can be read with [`fds_last_error_message`].
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Panics never unwind into C.

use fedsec::error::{DecodeError, RunError};
use fedsec::federation::{self, EncodedUpdate, RoundMessage};
use fedsec::params::ParamVector;
use fedsec::privacy::{self, DpConfig};
use fedsec::runner::{self, ExperimentConfig, RunReport};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DecodeFailed = 4,
    ConfigInvalid = 5,
    RuntimeFailed = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed and validated experiment configuration.
pub struct FdsConfig(ExperimentConfig);

/// Result of a completed run.
pub struct FdsReport(RunReport);

/// A decoded wire message.
pub struct FdsMessage(RoundMessage);

/// Owned byte buffer returned by the library.
pub struct FdsBuffer(Vec<u8>);

/// Kind of an [`FdsMessage`], matching the frame type byte.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdsMessageKind {
    Broadcast = 1,
    DenseUpdate = 2,
    Shutdown = 3,
    SparseUpdate = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = bytes);
}

struct Failure(FdsStatus, String);

impl Failure {
    fn new(status: FdsStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let status = match e {
            RunError::Config(_) => FdsStatus::ConfigInvalid,
            _ => FdsStatus::RuntimeFailed,
        };
        Failure(status, e.to_string())
    }
}

impl From<DecodeError> for Failure {
    fn from(e: DecodeError) -> Self {
        Failure(FdsStatus::DecodeFailed, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FdsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(FdsStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must point to `len` readable values, or be null with `len == 0`.
unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must point to `len` writable values.
unsafe fn output<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    non_null(p, name)?;
    Ok(slice::from_raw_parts_mut(p, len))
}

fn vector(values: &[f64]) -> Result<ParamVector, Failure> {
    ParamVector::new(values.to_vec()).map_err(|e| Failure::new(FdsStatus::InvalidArgument, e.to_string()))
}

fn rows(data: &[f64], n: usize, dim: usize) -> Result<Vec<ParamVector>, Failure> {
    if n == 0 || dim == 0 {
        return Err(Failure::new(FdsStatus::InvalidArgument, "need at least one vector of positive dimension"));
    }
    data.chunks_exact(dim).take(n).map(vector).collect()
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator. `buf` may be null when
/// `len` is 0.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fds_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Weighted sum of `n` row-major vectors of length `dim` into `out`.
/// `weights` must be non-negative and sum to 1.
///
/// # Safety
/// `vectors` holds `n * dim` values, `weights` holds `n`, `out` has room
/// for `dim`.
#[no_mangle]
pub unsafe extern "C" fn fds_aggregate(
    vectors: *const f64,
    n: usize,
    dim: usize,
    weights: *const f64,
    out: *mut f64,
) -> FdsStatus {
    guard(|| {
        let clients = rows(input(vectors, n * dim, "vectors")?, n, dim)?;
        let p = input(weights, n, "weights")?;
        let agg = federation::aggregate(&clients, p).map_err(|e| Failure::new(FdsStatus::InvalidArgument, e.to_string()))?;
        output(out, dim, "out")?.copy_from_slice(agg.as_slice());
        Ok(())
    })
}

/// Sum of squared distances from `n` vectors to `global`.
///
/// # Safety
/// `vectors` holds `n * dim` values, `global` holds `dim`.
#[no_mangle]
pub unsafe extern "C" fn fds_sync_error(
    vectors: *const f64,
    n: usize,
    dim: usize,
    global: *const f64,
    out: *mut f64,
) -> FdsStatus {
    guard(|| {
        let clients = rows(input(vectors, n * dim, "vectors")?, n, dim)?;
        let g = vector(input(global, dim, "global")?)?;
        let e = federation::sync_error(&clients, &g).map_err(|e| Failure::new(FdsStatus::DimensionMismatch, e.to_string()))?;
        output(out, 1, "out")?[0] = e;
        Ok(())
    })
}

/// Scales `theta` down to L2 norm at most `clip_norm`, writing to `out`.
///
/// # Safety
/// `theta` holds `dim` values and `out` has room for `dim`.
#[no_mangle]
pub unsafe extern "C" fn fds_clip(theta: *const f64, dim: usize, clip_norm: f64, out: *mut f64) -> FdsStatus {
    guard(|| {
        if !(clip_norm.is_finite() && clip_norm > 0.0) {
            return Err(Failure::new(FdsStatus::InvalidArgument, "clip_norm must be positive"));
        }
        let v = vector(input(theta, dim, "theta")?)?;
        output(out, dim, "out")?.copy_from_slice(privacy::clip(&v, clip_norm).as_slice());
        Ok(())
    })
}

/// Per-round privacy loss of the Gaussian mechanism.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fds_epsilon(sigma: f64, clip_norm: f64, delta: f64, out: *mut f64) -> FdsStatus {
    guard(|| {
        let cfg = DpConfig::gaussian(sigma, clip_norm, delta).map_err(|e| Failure::new(FdsStatus::InvalidArgument, e.to_string()))?;
        let eps = privacy::epsilon_report(&cfg).map_err(|e| Failure::new(FdsStatus::InvalidArgument, e.to_string()))?;
        output(out, 1, "out")?[0] = eps;
        Ok(())
    })
}

/// Parses a TOML experiment configuration.
///
/// # Safety
/// `text` is a NUL-terminated UTF-8 string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_config_from_toml(text: *const c_char, out: *mut *mut FdsConfig) -> FdsStatus {
    guard(|| {
        non_null(text, "text")?;
        non_null(out, "out")?;
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Failure::new(FdsStatus::InvalidArgument, "config is not UTF-8"))?;
        let cfg = ExperimentConfig::from_toml_str(s).map_err(RunError::from)?;
        *out = Box::into_raw(Box::new(FdsConfig(cfg)));
        Ok(())
    })
}

/// Overrides the seed of a configuration.
///
/// # Safety
/// `cfg` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn fds_config_set_seed(cfg: *mut FdsConfig, seed: u64) -> FdsStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fds_config_free(cfg: *mut FdsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs an experiment to completion.
///
/// # Safety
/// `cfg` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_run(cfg: *const FdsConfig, out: *mut *mut FdsReport) -> FdsStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let report = runner::run_experiment(&(*cfg).0)?;
        *out = Box::into_raw(Box::new(FdsReport(report)));
        Ok(())
    })
}

/// Writes the report's CSV files and resolved config into `dir`.
///
/// # Safety
/// Handles are live; `dir` is a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn fds_report_write(report: *const FdsReport, cfg: *const FdsConfig, dir: *const c_char) -> FdsStatus {
    guard(|| {
        non_null(report, "report")?;
        non_null(cfg, "cfg")?;
        non_null(dir, "dir")?;
        let dir = CStr::from_ptr(dir)
            .to_str()
            .map_err(|_| Failure::new(FdsStatus::InvalidArgument, "path is not UTF-8"))?;
        runner::write_run(Path::new(dir), &(*cfg).0, &(*report).0)?;
        Ok(())
    })
}

/// Final test accuracy, false-positive and false-negative rates. An
/// undefined rate is reported as NaN.
///
/// # Safety
/// `report` is a live handle; the outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn fds_report_metrics(
    report: *const FdsReport,
    accuracy: *mut f64,
    fpr: *mut f64,
    fnr: *mut f64,
) -> FdsStatus {
    guard(|| {
        non_null(report, "report")?;
        let s = &(*report).0.summary;
        output(accuracy, 1, "accuracy")?[0] = s.accuracy;
        output(fpr, 1, "fpr")?[0] = s.fpr.unwrap_or(f64::NAN);
        output(fnr, 1, "fnr")?[0] = s.fnr.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Number of metric rows, including the initial model's.
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_report_row_count(report: *const FdsReport, out: *mut usize) -> FdsStatus {
    guard(|| {
        non_null(report, "report")?;
        output(out, 1, "out")?[0] = (*report).0.rows.len();
        Ok(())
    })
}

/// Copies the final parameters into `out`. `dim_out` receives the
/// parameter count; if `len` is smaller nothing is copied and
/// `FDS_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `report` is a live handle; `out` has room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn fds_report_theta(report: *const FdsReport, out: *mut f64, len: usize, dim_out: *mut usize) -> FdsStatus {
    guard(|| {
        non_null(report, "report")?;
        let theta = (*report).0.theta.as_slice();
        output(dim_out, 1, "dim_out")?[0] = theta.len();
        if len < theta.len() {
            return Err(Failure::new(
                FdsStatus::BufferTooSmall,
                format!("need room for {} values", theta.len()),
            ));
        }
        output(out, theta.len(), "out")?.copy_from_slice(theta);
        Ok(())
    })
}

/// # Safety
/// `report` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fds_report_free(report: *mut FdsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Decodes one complete frame.
///
/// # Safety
/// `bytes` holds `len` readable bytes; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_message_decode(bytes: *const u8, len: usize, out: *mut *mut FdsMessage) -> FdsStatus {
    guard(|| {
        non_null(out, "out")?;
        let msg = federation::decode_message(input(bytes, len, "bytes")?)?;
        *out = Box::into_raw(Box::new(FdsMessage(msg)));
        Ok(())
    })
}

/// Builds a global-model broadcast.
///
/// # Safety
/// `theta` holds `dim` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_message_broadcast(round: u32, theta: *const f64, dim: usize, out: *mut *mut FdsMessage) -> FdsStatus {
    guard(|| {
        non_null(out, "out")?;
        let theta = vector(input(theta, dim, "theta")?)?;
        *out = Box::into_raw(Box::new(FdsMessage(RoundMessage::GlobalBroadcast { round, theta })));
        Ok(())
    })
}

/// # Safety
/// `msg` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_message_kind(msg: *const FdsMessage, out: *mut FdsMessageKind) -> FdsStatus {
    guard(|| {
        non_null(msg, "msg")?;
        let kind = match &(*msg).0 {
            RoundMessage::GlobalBroadcast { .. } => FdsMessageKind::Broadcast,
            RoundMessage::ClientUpdate {
                update: EncodedUpdate::Dense(_),
                ..
            } => FdsMessageKind::DenseUpdate,
            RoundMessage::ClientUpdate {
                update: EncodedUpdate::Sparse(_),
                ..
            } => FdsMessageKind::SparseUpdate,
            RoundMessage::Shutdown => FdsMessageKind::Shutdown,
        };
        output(out, 1, "out")?[0] = kind;
        Ok(())
    })
}

/// Encodes a message into a new buffer.
///
/// # Safety
/// `msg` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fds_message_encode(msg: *const FdsMessage, out: *mut *mut FdsBuffer) -> FdsStatus {
    guard(|| {
        non_null(msg, "msg")?;
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(FdsBuffer(federation::encode_message(&(*msg).0))));
        Ok(())
    })
}

/// # Safety
/// `msg` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fds_message_free(msg: *mut FdsMessage) {
    if !msg.is_null() {
        drop(Box::from_raw(msg));
    }
}

/// Start of the buffer's bytes; valid until the buffer is freed.
///
/// # Safety
/// `buf` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn fds_buffer_data(buf: *const FdsBuffer) -> *const u8 {
    if buf.is_null() {
        ptr::null()
    } else {
        (*buf).0.as_ptr()
    }
}

/// # Safety
/// `buf` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fds_buffer_len(buf: *const FdsBuffer) -> usize {
    if buf.is_null() {
        0
    } else {
        (*buf).0.len()
    }
}

/// # Safety
/// `buf` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fds_buffer_free(buf: *mut FdsBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}
