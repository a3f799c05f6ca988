//! Exercises the C ABI end to end from Rust: handle lifecycle, file
//! round trips, apply/adjoint/recover on flat buffers, and error codes.

use std::ffi::CString;
use std::ptr;

use sxrm_ffi::*;

fn gen(n: u32, m: u32, d: u32, seed: u64) -> *mut SxrmOperator {
    let mut op: *mut SxrmOperator = ptr::null_mut();
    let status = unsafe { sxrm_operator_gen_gaussian(n, m, d, seed, &mut op) };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);
    assert!(!op.is_null());
    op
}

#[test]
fn lifecycle_and_info() {
    let op = gen(10, 7, 2, 42);
    let mut info = SxrmOperatorInfo {
        n: 0,
        m: 0,
        d: 0,
        ensemble: SxrmEnsemble::SxrmEnsembleGaussian,
        seed: 0,
    };
    let status = unsafe { sxrm_operator_info(op, &mut info) };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);
    assert_eq!((info.n, info.m, info.d, info.seed), (10, 7, 2, 42));
    unsafe { sxrm_operator_free(op) };
    unsafe { sxrm_operator_free(ptr::null_mut()) }; // no-op
}

#[test]
fn apply_recover_roundtrip_via_abi() {
    let (n, m) = (12usize, 9usize);
    let op = gen(n as u32, m as u32, 2, 7);

    // rank-2 PSD ground truth as a flat column-major buffer
    let mut rng = sxrm::sampling::trial_rng(7, 0);
    let x = sxrm::sampling::random_psd(&mut rng, n, 2);
    let x_buf: Vec<f64> = x.as_slice().to_vec();

    let mut y_buf = vec![0.0f64; m * m];
    let status = unsafe { sxrm_apply(op, x_buf.as_ptr(), y_buf.as_mut_ptr()) };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);

    let mut x_hat = vec![0.0f64; n * n];
    let mut info = SxrmRecoveryInfo {
        outcome: SxrmRecoveryOutcome::SxrmRecoveryDegenerateSubspace,
        subspace_dim: 0,
        rank_y: 0,
        residual_rel: 1.0,
    };
    let status = unsafe {
        sxrm_recover(op, y_buf.as_ptr(), ptr::null(), x_hat.as_mut_ptr(), &mut info)
    };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);
    assert_eq!(info.outcome, SxrmRecoveryOutcome::SxrmRecoveryExact);
    assert_eq!(info.rank_y, 4);
    assert!(info.residual_rel < 1e-10);

    let err: f64 = x_hat
        .iter()
        .zip(x_buf.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = x_buf.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err < 1e-8 * scale);

    unsafe { sxrm_operator_free(op) };
}

#[test]
fn adjoint_matches_library() {
    let (n, m) = (8usize, 5usize);
    let op = gen(n as u32, m as u32, 3, 11);
    let mut rng = sxrm::sampling::trial_rng(11, 0);
    let y = sxrm::numkernel::symmetrize(&sxrm::sampling::random_gaussian(&mut rng, m, m));
    let mut x_buf = vec![0.0f64; n * n];
    let status = unsafe { sxrm_adjoint(op, y.as_slice().as_ptr(), x_buf.as_mut_ptr()) };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);

    let expected = {
        let reference = sxrm::operators::gen_gaussian(n, m, 3, 11).unwrap();
        sxrm::operators::adjoint(&reference, &y).unwrap()
    };
    for (a, b) in x_buf.iter().zip(expected.as_slice().iter()) {
        assert_eq!(a, b);
    }
    unsafe { sxrm_operator_free(op) };
}

#[test]
fn trace_min_converges_via_abi() {
    let (n, m) = (12usize, 10usize);
    let op = gen(n as u32, m as u32, 2, 13);
    let mut rng = sxrm::sampling::trial_rng(13, 0);
    let x = sxrm::sampling::random_psd(&mut rng, n, 2);
    let mut y_buf = vec![0.0f64; m * m];
    unsafe { sxrm_apply(op, x.as_slice().as_ptr(), y_buf.as_mut_ptr()) };

    let mut x_hat = vec![0.0f64; n * n];
    let mut info = SxrmTraceMinInfo {
        iterations: 0,
        converged: false,
        residual_rel: 1.0,
    };
    let status = unsafe {
        sxrm_trace_min(op, y_buf.as_ptr(), ptr::null(), x_hat.as_mut_ptr(), &mut info)
    };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);
    assert!(info.converged);
    assert!(info.residual_rel < 1e-6);
    unsafe { sxrm_operator_free(op) };
}

#[test]
fn file_roundtrip_via_abi() {
    let dir = std::env::temp_dir().join("sxrm_ffi_file");
    std::fs::create_dir_all(&dir).unwrap();
    let path = CString::new(dir.join("op.sxrm").to_str().unwrap()).unwrap();

    let op = gen(6, 4, 2, 99);
    let status = unsafe { sxrm_operator_write(op, path.as_ptr()) };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);

    let mut back: *mut SxrmOperator = ptr::null_mut();
    let status = unsafe { sxrm_operator_read(path.as_ptr(), &mut back) };
    assert_eq!(status, SxrmStatus::SxrmStatusOk);

    // identical operators act identically
    let x = vec![1.0f64; 36];
    let mut y_a = vec![0.0f64; 16];
    let mut y_b = vec![0.0f64; 16];
    unsafe {
        sxrm_apply(op, x.as_ptr(), y_a.as_mut_ptr());
        sxrm_apply(back, x.as_ptr(), y_b.as_mut_ptr());
        sxrm_operator_free(op);
        sxrm_operator_free(back);
    }
    assert_eq!(y_a, y_b);
}

#[test]
fn error_codes() {
    // null pointers
    let status = unsafe { sxrm_operator_gen_gaussian(4, 3, 1, 0, ptr::null_mut()) };
    assert_eq!(status, SxrmStatus::SxrmStatusNullPointer);

    let mut op: *mut SxrmOperator = ptr::null_mut();
    let status = unsafe { sxrm_operator_gen_gaussian(0, 3, 1, 0, &mut op) };
    assert_eq!(status, SxrmStatus::SxrmStatusBadParameter);

    // reading a missing file
    let path = CString::new("/nonexistent/op.sxrm").unwrap();
    let status = unsafe { sxrm_operator_read(path.as_ptr(), &mut op) };
    assert_eq!(status, SxrmStatus::SxrmStatusIoError);

    // non-finite input rejected
    let op = gen(4, 3, 1, 5);
    let mut x = vec![0.0f64; 16];
    x[3] = f64::NAN;
    let mut y = vec![0.0f64; 9];
    let status = unsafe { sxrm_apply(op, x.as_ptr(), y.as_mut_ptr()) };
    assert_eq!(status, SxrmStatus::SxrmStatusNonFinite);
    unsafe { sxrm_operator_free(op) };

    // strerror returns NUL-terminated static strings
    let text = unsafe {
        std::ffi::CStr::from_ptr(sxrm_strerror(SxrmStatus::SxrmStatusBadFile))
    };
    assert_eq!(text.to_str().unwrap(), "unrecognized or corrupt operator file");
}
