//! Iterative trace-minimization baseline: approximately solves
//! `min trace(X)  s.t.  A(X) = Y, X >= 0` by ADMM-style splitting
//! between the affine constraint set and the PSD cone, with the trace
//! objective folded into the affine step.
//!
//! One SVD of the matricized operator is taken up front and reused for
//! every affine projection. This is a success/failure and timing
//! baseline, not a polished SDP solver.

use thiserror::Error;

use crate::numkernel::{
    eig_sym, numerical_rank, svd, symmetrize, vec_mat, DenseMatrix, KernelError, RankTolerance,
};
use crate::operators::{apply, matricize_sym, svec, unsvec, MeasurementOperator, OperatorError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    pub max_iters: usize,
    /// ADMM penalty parameter; larger values weaken the trace pressure
    /// per iteration.
    pub penalty: f64,
    /// Convergence threshold on both the relative residual and the
    /// relative iterate change.
    pub stop_tol: f64,
    /// Weight on the trace objective.
    pub trace_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            max_iters: 2000,
            penalty: 1.0,
            stop_tol: 1e-7,
            trace_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceMinResult {
    /// Final iterate, PSD by construction of the last projection.
    pub x_hat: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// `||A(x_hat) - Y||_F / ||Y||_F`.
    pub residual_rel: f64,
    /// Relative residual after each iteration.
    pub residual_history: Vec<f64>,
}

/// Project a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues to zero.
pub fn project_psd(x: &DenseMatrix) -> Result<DenseMatrix, KernelError> {
    let (lambdas, w) = eig_sym(x)?;
    let n = x.nrows();
    let mut scaled = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let clipped = lambdas[j].max(0.0);
        if clipped > 0.0 {
            for i in 0..n {
                scaled[(i, j)] = w[(i, j)] * clipped;
            }
        }
    }
    Ok(symmetrize(&(&scaled * w.transpose())))
}

/// Approximate the trace-minimal PSD preimage of Y.
pub fn trace_min(
    op: &MeasurementOperator,
    y: &DenseMatrix,
    cfg: &BaselineConfig,
) -> Result<TraceMinResult, BaselineError> {
    let (n, m) = (op.n(), op.m());
    if y.shape() != (m, m) {
        return Err(BaselineError::Dimension(format!(
            "measurement must be {m}x{m}, got {}x{}",
            y.nrows(),
            y.ncols()
        )));
    }
    let y = symmetrize(y);
    let y_norm = y.norm();
    if y_norm == 0.0 {
        // zero is feasible, PSD, and trace-minimal
        return Ok(TraceMinResult {
            x_hat: DenseMatrix::zeros(n, n),
            iterations: 1,
            converged: true,
            residual_rel: 0.0,
            residual_history: vec![0.0],
        });
    }

    let l = matricize_sym(op)?;
    let y_vec = nalgebra::DVector::from_vec(vec_mat(&y));

    // one factorization, reused by every affine projection
    let (lu, ls, lv) = svd(&l)?;
    let rank = numerical_rank(&ls, RankTolerance::default(), l.shape());
    let u_r = lu.columns(0, rank).into_owned();
    let v_r = lv.columns(0, rank).into_owned();
    let s_inv: Vec<f64> = ls[..rank].iter().map(|&s| 1.0 / s).collect();

    let project_affine = |w: &nalgebra::DVector<f64>| {
        let residual = &y_vec - &l * w;
        let mut coeffs = u_r.transpose() * residual;
        for i in 0..rank {
            coeffs[i] *= s_inv[i];
        }
        w + &v_r * coeffs
    };

    let p = l.ncols();
    let shrink = cfg.trace_weight / cfg.penalty;
    let trace_grad = nalgebra::DVector::from_vec(svec(&DenseMatrix::identity(n, n)));

    let mut z = nalgebra::DVector::<f64>::zeros(p);
    let mut dual = nalgebra::DVector::<f64>::zeros(p);
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let w = &z - &dual - shrink * &trace_grad;
        let x = project_affine(&w);

        let z_prev = z.clone();
        let z_mat = project_psd(&unsvec((&x + &dual).as_slice(), n)?)?;
        z = nalgebra::DVector::from_vec(svec(&z_mat));
        dual += &x - &z;

        let res = (&l * &z - &y_vec).norm() / y_norm;
        history.push(res);
        let change = (&z - &z_prev).norm() / z.norm().max(f64::MIN_POSITIVE);
        if res <= cfg.stop_tol && change <= cfg.stop_tol {
            converged = true;
            break;
        }
    }

    let x_hat = unsvec(z.as_slice(), n)?;
    let residual_rel = (&apply(op, &x_hat)? - &y).norm() / y_norm;
    Ok(TraceMinResult {
        x_hat,
        iterations,
        converged,
        residual_rel,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::gen_gaussian;
    use crate::recovery::{recover, RecoveryConfig, RecoveryStatus};
    use crate::sampling;

    fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        let denom = b.norm();
        if denom == 0.0 {
            a.norm()
        } else {
            (a - b).norm() / denom
        }
    }

    #[test]
    fn zero_measurement_solves_in_one_iteration() {
        let op = gen_gaussian(8, 6, 2, 1).unwrap();
        let result = trace_min(&op, &DenseMatrix::zeros(6, 6), &BaselineConfig::default()).unwrap();
        assert_eq!(result.iterations, 1);
        assert!(result.converged);
        assert_eq!(result.x_hat, DenseMatrix::zeros(8, 8));
    }

    #[test]
    fn recovers_interior_instance() {
        let op = gen_gaussian(20, 16, 2, 2).unwrap();
        let mut rng = sampling::trial_rng(2, 0);
        let x = sampling::random_psd(&mut rng, 20, 2);
        let y = apply(&op, &x).unwrap();
        let result = trace_min(&op, &y, &BaselineConfig::default()).unwrap();
        assert!(result.converged, "stopped after {} iters", result.iterations);
        assert!(
            rel_err(&result.x_hat, &x) < 1e-4,
            "error {}",
            rel_err(&result.x_hat, &x)
        );
    }

    #[test]
    fn agrees_with_subspace_recovery() {
        // the feasible low-rank PSD point is unique, so both solvers
        // must land on it
        let op = gen_gaussian(20, 16, 2, 3).unwrap();
        let mut rng = sampling::trial_rng(3, 0);
        let x = sampling::random_psd(&mut rng, 20, 2);
        let y = apply(&op, &x).unwrap();
        let alg1 = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(alg1.status, RecoveryStatus::Exact);
        let admm = trace_min(&op, &y, &BaselineConfig::default()).unwrap();
        assert!(admm.converged);
        assert!(rel_err(&admm.x_hat, &alg1.x_hat) < 1e-4);
    }

    #[test]
    fn output_is_psd() {
        let op = gen_gaussian(14, 11, 2, 4).unwrap();
        let mut rng = sampling::trial_rng(4, 0);
        let x = sampling::random_psd(&mut rng, 14, 2);
        let y = apply(&op, &x).unwrap();
        let result = trace_min(&op, &y, &BaselineConfig::default()).unwrap();
        let (lambdas, _) = eig_sym(&result.x_hat).unwrap();
        assert!(lambdas[lambdas.len() - 1] >= -1e-9 * lambdas[0].max(f64::MIN_POSITIVE));
    }

    #[test]
    fn residual_trend_non_increasing_by_windows() {
        let op = gen_gaussian(16, 13, 2, 5).unwrap();
        let mut rng = sampling::trial_rng(5, 0);
        let x = sampling::random_psd(&mut rng, 16, 2);
        let y = apply(&op, &x).unwrap();
        let cfg = BaselineConfig {
            stop_tol: 0.0, // run the full budget to observe the trend
            max_iters: 400,
            ..BaselineConfig::default()
        };
        let result = trace_min(&op, &y, &cfg).unwrap();
        let h = &result.residual_history;
        assert!(h.len() >= 200);
        let window_max =
            |start: usize| h[start..start + 50].iter().cloned().fold(0.0f64, f64::max);
        let mut start = 0;
        while start + 100 <= h.len() {
            let here = window_max(start);
            let next = window_max(start + 50);
            assert!(
                next <= here + 1e-12,
                "residual windows increased: {here} -> {next} at {start}"
            );
            start += 50;
        }
    }

    #[test]
    fn non_convergence_is_reported_not_thrown() {
        let op = gen_gaussian(12, 9, 2, 6).unwrap();
        let mut rng = sampling::trial_rng(6, 0);
        let x = sampling::random_psd(&mut rng, 12, 2);
        let y = apply(&op, &x).unwrap();
        let cfg = BaselineConfig {
            max_iters: 3,
            ..BaselineConfig::default()
        };
        let result = trace_min(&op, &y, &cfg).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 3);
        assert!(result.x_hat.nrows() == 12);
    }
}
