//! C ABI for the sxrm library: opaque operator handles, flat f64 buffers
//! in column-major order, and integer status codes.
//!
//! Every function is panic-safe (unwinding is caught and reported as
//! an internal-error status) and null-checks its pointer arguments.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use sxrm::baseline::{trace_min, BaselineConfig};
use sxrm::numkernel::{check_finite, DenseMatrix, RankTolerance};
use sxrm::operators::{
    adjoint, apply, gen_gaussian, gen_sparse_onehot, read_operator, write_operator, Ensemble,
    MeasurementOperator,
};
use sxrm::recovery::{recover, RecoveryConfig, RecoveryStatus};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxrmStatus {
    SxrmStatusOk = 0,
    SxrmStatusNullPointer = 1,
    SxrmStatusBadParameter = 2,
    SxrmStatusDimensionMismatch = 3,
    SxrmStatusNonFinite = 4,
    SxrmStatusIoError = 5,
    SxrmStatusBadFile = 6,
    SxrmStatusSizeCapExceeded = 7,
    SxrmStatusDecompositionFailed = 8,
    SxrmStatusInternal = 9,
}

/// Outcome classification mirrored from the recovery module.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxrmRecoveryOutcome {
    SxrmRecoveryExact = 0,
    SxrmRecoveryApproximate = 1,
    SxrmRecoveryFailedInconsistent = 2,
    SxrmRecoveryDegenerateSubspace = 3,
}

/// Operator ensembles.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxrmEnsemble {
    SxrmEnsembleGaussian = 0,
    SxrmEnsembleSparseOnehot = 1,
}

/// Opaque measurement-operator handle. Create with one of the
/// `sxrm_operator_*` constructors, release with `sxrm_operator_free`.
pub struct SxrmOperator {
    inner: MeasurementOperator,
}

/// Operator metadata.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SxrmOperatorInfo {
    pub n: u32,
    pub m: u32,
    pub d: u32,
    pub ensemble: SxrmEnsemble,
    pub seed: u64,
}

/// Options for `sxrm_recover`. Non-positive fields select defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SxrmRecoverOptions {
    /// Relative rank-tolerance factor (default: machine epsilon).
    pub rank_tol_factor: f64,
    /// Residual threshold classifying the result as exact (default 1e-8).
    pub exact_tol: f64,
}

/// Result summary for `sxrm_recover`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SxrmRecoveryInfo {
    pub outcome: SxrmRecoveryOutcome,
    pub subspace_dim: u32,
    pub rank_y: u32,
    pub residual_rel: f64,
}

/// Options for `sxrm_trace_min`. Non-positive fields select defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SxrmTraceMinOptions {
    /// Iteration budget (default 2000).
    pub max_iters: i64,
    /// ADMM penalty parameter (default 1.0).
    pub penalty: f64,
    /// Stop tolerance on residual and iterate change (default 1e-7).
    pub stop_tol: f64,
    /// Trace objective weight (default 1.0).
    pub trace_weight: f64,
}

/// Result summary for `sxrm_trace_min`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SxrmTraceMinInfo {
    pub iterations: u64,
    pub converged: bool,
    pub residual_rel: f64,
}

fn classify_operator_error(e: &sxrm::operators::OperatorError) -> SxrmStatus {
    use sxrm::operators::OperatorError::*;
    match e {
        Dimension(_) => SxrmStatus::SxrmStatusDimensionMismatch,
        Kernel(k) => classify_kernel_error(k),
        Io(_) => SxrmStatus::SxrmStatusIoError,
        BadMagic | BadVersion(_) | BadEnsemble(_) | Corrupt(_) => SxrmStatus::SxrmStatusBadFile,
        BadParameter(_) => SxrmStatus::SxrmStatusBadParameter,
    }
}

fn classify_kernel_error(e: &sxrm::numkernel::KernelError) -> SxrmStatus {
    use sxrm::numkernel::KernelError::*;
    match e {
        Dimension(_) => SxrmStatus::SxrmStatusDimensionMismatch,
        NonFinite { .. } => SxrmStatus::SxrmStatusNonFinite,
        SizeCap { .. } => SxrmStatus::SxrmStatusSizeCapExceeded,
        Convergence => SxrmStatus::SxrmStatusDecompositionFailed,
    }
}

fn guard<F: FnOnce() -> SxrmStatus>(body: F) -> SxrmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => SxrmStatus::SxrmStatusInternal,
    }
}

unsafe fn path_from_cstr(path: *const c_char) -> Option<PathBuf> {
    if path.is_null() {
        return None;
    }
    let bytes = unsafe { CStr::from_ptr(path) };
    Some(PathBuf::from(bytes.to_string_lossy().into_owned()))
}

/// Copy a column-major buffer of `rows * cols` values into a matrix,
/// rejecting non-finite entries.
unsafe fn matrix_from_ptr(data: *const f64, rows: usize, cols: usize) -> Option<DenseMatrix> {
    if data.is_null() {
        return None;
    }
    let slice = unsafe { std::slice::from_raw_parts(data, rows * cols) };
    let matrix = DenseMatrix::from_column_slice(rows, cols, slice);
    check_finite(&matrix).ok()?;
    Some(matrix)
}

unsafe fn write_matrix_to_ptr(matrix: &DenseMatrix, out: *mut f64) {
    let len = matrix.nrows() * matrix.ncols();
    unsafe { std::ptr::copy_nonoverlapping(matrix.as_slice().as_ptr(), out, len) };
}

fn finish_operator(
    result: Result<MeasurementOperator, sxrm::operators::OperatorError>,
    out: *mut *mut SxrmOperator,
) -> SxrmStatus {
    match result {
        Ok(inner) => {
            let handle = Box::new(SxrmOperator { inner });
            unsafe { *out = Box::into_raw(handle) };
            SxrmStatus::SxrmStatusOk
        }
        Err(e) => classify_operator_error(&e),
    }
}

/// Generate a Gaussian-ensemble operator.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sxrm_operator_gen_gaussian(
    n: u32,
    m: u32,
    d: u32,
    seed: u64,
    out: *mut *mut SxrmOperator,
) -> SxrmStatus {
    if out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    guard(|| finish_operator(gen_gaussian(n as usize, m as usize, d as usize, seed), out))
}

/// Generate a sparse one-hot-ensemble operator.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sxrm_operator_gen_sparse_onehot(
    n: u32,
    m: u32,
    d: u32,
    seed: u64,
    out: *mut *mut SxrmOperator,
) -> SxrmStatus {
    if out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    guard(|| {
        finish_operator(
            gen_sparse_onehot(n as usize, m as usize, d as usize, seed),
            out,
        )
    })
}

/// Read an operator from a file in the binary operator format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as in the constructors.
#[no_mangle]
pub unsafe extern "C" fn sxrm_operator_read(
    path: *const c_char,
    out: *mut *mut SxrmOperator,
) -> SxrmStatus {
    if out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    let Some(path) = (unsafe { path_from_cstr(path) }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    guard(|| finish_operator(read_operator(&path), out))
}

/// Write an operator to a file in the binary operator format.
///
/// # Safety
/// `op` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sxrm_operator_write(
    op: *const SxrmOperator,
    path: *const c_char,
) -> SxrmStatus {
    let Some(op) = (unsafe { op.as_ref() }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    let Some(path) = (unsafe { path_from_cstr(path) }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    guard(|| match write_operator(&op.inner, &path) {
        Ok(()) => SxrmStatus::SxrmStatusOk,
        Err(e) => classify_operator_error(&e),
    })
}

/// Release an operator handle. Passing NULL is a no-op.
///
/// # Safety
/// `op` must be NULL or a handle returned by a constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sxrm_operator_free(op: *mut SxrmOperator) {
    if !op.is_null() {
        drop(unsafe { Box::from_raw(op) });
    }
}

/// Fetch operator metadata.
///
/// # Safety
/// `op` must be a live handle; `info` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn sxrm_operator_info(
    op: *const SxrmOperator,
    info: *mut SxrmOperatorInfo,
) -> SxrmStatus {
    let Some(op) = (unsafe { op.as_ref() }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    if info.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    let ensemble = match op.inner.ensemble() {
        Ensemble::Gaussian => SxrmEnsemble::SxrmEnsembleGaussian,
        Ensemble::SparseOnehot => SxrmEnsemble::SxrmEnsembleSparseOnehot,
    };
    unsafe {
        *info = SxrmOperatorInfo {
            n: op.inner.n() as u32,
            m: op.inner.m() as u32,
            d: op.inner.d() as u32,
            ensemble,
            seed: op.inner.seed(),
        };
    }
    SxrmStatus::SxrmStatusOk
}

/// Apply the operator: `Y = A(X)`.
///
/// # Safety
/// `x` must point to n*n readable f64 values (column-major); `y_out` to
/// m*m writable values. Buffers must not alias.
#[no_mangle]
pub unsafe extern "C" fn sxrm_apply(
    op: *const SxrmOperator,
    x: *const f64,
    y_out: *mut f64,
) -> SxrmStatus {
    let Some(op) = (unsafe { op.as_ref() }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    if y_out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    let n = op.inner.n();
    let Some(x) = (unsafe { matrix_from_ptr(x, n, n) }) else {
        return SxrmStatus::SxrmStatusNonFinite;
    };
    guard(|| match apply(&op.inner, &x) {
        Ok(y) => {
            unsafe { write_matrix_to_ptr(&y, y_out) };
            SxrmStatus::SxrmStatusOk
        }
        Err(e) => classify_operator_error(&e),
    })
}

/// Apply the adjoint: `X = A*(Y)`.
///
/// # Safety
/// `y` must point to m*m readable f64 values (column-major); `x_out` to
/// n*n writable values. Buffers must not alias.
#[no_mangle]
pub unsafe extern "C" fn sxrm_adjoint(
    op: *const SxrmOperator,
    y: *const f64,
    x_out: *mut f64,
) -> SxrmStatus {
    let Some(op) = (unsafe { op.as_ref() }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    if x_out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    let m = op.inner.m();
    let Some(y) = (unsafe { matrix_from_ptr(y, m, m) }) else {
        return SxrmStatus::SxrmStatusNonFinite;
    };
    guard(|| match adjoint(&op.inner, &y) {
        Ok(x) => {
            unsafe { write_matrix_to_ptr(&x, x_out) };
            SxrmStatus::SxrmStatusOk
        }
        Err(e) => classify_operator_error(&e),
    })
}

/// Recover X from a measurement by subspace identification.
///
/// # Safety
/// `y` must point to m*m readable f64 values; `x_out` to n*n writable
/// values. `options` may be NULL for defaults; `info` may be NULL when
/// the caller only wants the matrix.
#[no_mangle]
pub unsafe extern "C" fn sxrm_recover(
    op: *const SxrmOperator,
    y: *const f64,
    options: *const SxrmRecoverOptions,
    x_out: *mut f64,
    info: *mut SxrmRecoveryInfo,
) -> SxrmStatus {
    let Some(op) = (unsafe { op.as_ref() }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    if x_out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    let m = op.inner.m();
    let Some(y) = (unsafe { matrix_from_ptr(y, m, m) }) else {
        return SxrmStatus::SxrmStatusNonFinite;
    };
    let mut cfg = RecoveryConfig::default();
    if let Some(opts) = unsafe { options.as_ref() } {
        if opts.rank_tol_factor > 0.0 {
            cfg.rank_tol = RankTolerance::Relative(opts.rank_tol_factor);
        }
        if opts.exact_tol > 0.0 {
            cfg.exact_tol = opts.exact_tol;
        }
    }
    guard(|| match recover(&op.inner, &y, &cfg) {
        Ok(result) => {
            unsafe { write_matrix_to_ptr(&result.x_hat, x_out) };
            if let Some(info) = unsafe { info.as_mut() } {
                info.outcome = match result.status {
                    RecoveryStatus::Exact => SxrmRecoveryOutcome::SxrmRecoveryExact,
                    RecoveryStatus::Approximate => SxrmRecoveryOutcome::SxrmRecoveryApproximate,
                    RecoveryStatus::FailedOverdeterminedInconsistent => {
                        SxrmRecoveryOutcome::SxrmRecoveryFailedInconsistent
                    }
                    RecoveryStatus::DegenerateSubspace => {
                        SxrmRecoveryOutcome::SxrmRecoveryDegenerateSubspace
                    }
                };
                info.subspace_dim = result.subspace_dim as u32;
                info.rank_y = result.rank_y as u32;
                info.residual_rel = result.residual_rel;
            }
            SxrmStatus::SxrmStatusOk
        }
        Err(e) => match e {
            sxrm::recovery::RecoveryError::Kernel(k) => classify_kernel_error(&k),
            sxrm::recovery::RecoveryError::Operator(o) => classify_operator_error(&o),
            sxrm::recovery::RecoveryError::Dimension(_) => {
                SxrmStatus::SxrmStatusDimensionMismatch
            }
        },
    })
}

/// Approximate the trace-minimal PSD preimage of a measurement.
///
/// # Safety
/// As for `sxrm_recover`, with `options`/`info` of the trace-min types.
#[no_mangle]
pub unsafe extern "C" fn sxrm_trace_min(
    op: *const SxrmOperator,
    y: *const f64,
    options: *const SxrmTraceMinOptions,
    x_out: *mut f64,
    info: *mut SxrmTraceMinInfo,
) -> SxrmStatus {
    let Some(op) = (unsafe { op.as_ref() }) else {
        return SxrmStatus::SxrmStatusNullPointer;
    };
    if x_out.is_null() {
        return SxrmStatus::SxrmStatusNullPointer;
    }
    let m = op.inner.m();
    let Some(y) = (unsafe { matrix_from_ptr(y, m, m) }) else {
        return SxrmStatus::SxrmStatusNonFinite;
    };
    let mut cfg = BaselineConfig::default();
    if let Some(opts) = unsafe { options.as_ref() } {
        if opts.max_iters > 0 {
            cfg.max_iters = opts.max_iters as usize;
        }
        if opts.penalty > 0.0 {
            cfg.penalty = opts.penalty;
        }
        if opts.stop_tol > 0.0 {
            cfg.stop_tol = opts.stop_tol;
        }
        if opts.trace_weight > 0.0 {
            cfg.trace_weight = opts.trace_weight;
        }
    }
    guard(|| match trace_min(&op.inner, &y, &cfg) {
        Ok(result) => {
            unsafe { write_matrix_to_ptr(&result.x_hat, x_out) };
            if let Some(info) = unsafe { info.as_mut() } {
                info.iterations = result.iterations as u64;
                info.converged = result.converged;
                info.residual_rel = result.residual_rel;
            }
            SxrmStatus::SxrmStatusOk
        }
        Err(e) => match e {
            sxrm::baseline::BaselineError::Kernel(k) => classify_kernel_error(&k),
            sxrm::baseline::BaselineError::Operator(o) => classify_operator_error(&o),
            sxrm::baseline::BaselineError::Dimension(_) => {
                SxrmStatus::SxrmStatusDimensionMismatch
            }
        },
    })
}

/// Human-readable description of a status code. The returned string is
/// static; do not free it.
#[no_mangle]
pub extern "C" fn sxrm_strerror(status: SxrmStatus) -> *const c_char {
    let text: &'static [u8] = match status {
        SxrmStatus::SxrmStatusOk => b"ok\0",
        SxrmStatus::SxrmStatusNullPointer => b"null pointer argument\0",
        SxrmStatus::SxrmStatusBadParameter => b"invalid parameter\0",
        SxrmStatus::SxrmStatusDimensionMismatch => b"dimension mismatch\0",
        SxrmStatus::SxrmStatusNonFinite => b"non-finite value in input\0",
        SxrmStatus::SxrmStatusIoError => b"io error\0",
        SxrmStatus::SxrmStatusBadFile => b"unrecognized or corrupt operator file\0",
        SxrmStatus::SxrmStatusSizeCapExceeded => b"result exceeds the size cap\0",
        SxrmStatus::SxrmStatusDecompositionFailed => b"decomposition failed to converge\0",
        SxrmStatus::SxrmStatusInternal => b"internal error\0",
    };
    text.as_ptr() as *const c_char
}
