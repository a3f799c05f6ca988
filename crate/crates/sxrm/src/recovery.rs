//! Reconstruction of a low-rank symmetric matrix from `Y = A(X)` by
//! subspace identification: project out the column space of Y, intersect
//! the per-term null spaces to find the candidate subspace Q, then solve
//! the overdetermined Kronecker system for the r x r core.

use thiserror::Error;

use crate::numkernel::{
    self, eig_sym, kron_with_cap, null_basis, numerical_rank, solve_min_norm, symmetrize, unvec,
    DenseMatrix, KernelError, RankTolerance, DEFAULT_SIZE_CAP,
};
use crate::operators::{apply, MeasurementOperator, OperatorError};

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Outcome classification of one recovery attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryStatus {
    /// Residual within the exactness tolerance and the subspace stayed
    /// strictly smaller than m.
    Exact,
    /// Residual small but above the exactness tolerance.
    Approximate,
    /// The overdetermined core system had no consistent solution; the
    /// identified subspace missed directions of the truth.
    FailedOverdeterminedInconsistent,
    /// Empty subspace for a nonzero Y, or a subspace too large to solve
    /// (at or above the cap, or past the Kronecker size limit).
    DegenerateSubspace,
}

impl RecoveryStatus {
    pub fn name(self) -> &'static str {
        match self {
            RecoveryStatus::Exact => "exact",
            RecoveryStatus::Approximate => "approximate",
            RecoveryStatus::FailedOverdeterminedInconsistent => {
                "failed_overdetermined_inconsistent"
            }
            RecoveryStatus::DegenerateSubspace => "degenerate_subspace",
        }
    }
}

/// Residual level separating `Approximate` from
/// `FailedOverdeterminedInconsistent`.
const APPROXIMATE_RESIDUAL_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct RecoveryConfig {
    /// Tolerance for the rank of Y and the null-space step.
    pub rank_tol: RankTolerance,
    /// Residual threshold classifying a recovery as exact.
    pub exact_tol: f64,
    /// Abort threshold on the subspace dimension; `None` means m.
    pub subspace_cap: Option<usize>,
    /// Entry cap for the Kronecker system.
    pub kron_cap: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            rank_tol: RankTolerance::default(),
            exact_tol: 1e-8,
            subspace_cap: None,
            kron_cap: DEFAULT_SIZE_CAP,
        }
    }
}

/// Result of one recovery attempt.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    /// Recovered n x n symmetric matrix.
    pub x_hat: DenseMatrix,
    /// Dimension of the identified subspace (columns of Q).
    pub subspace_dim: usize,
    /// Numerical rank of the measurement Y.
    pub rank_y: usize,
    /// Relative residual of the re-measured reconstruction.
    pub residual_rel: f64,
    pub status: RecoveryStatus,
}

/// Per-stage diagnostics alongside a [`RecoveryResult`].
#[derive(Debug, Clone)]
pub struct RecoveryDiagnostics {
    pub rank_y: usize,
    /// Trailing singular values of the stacked `[P G_1; ...; P G_d]`
    /// matrix (the subspace_dim smallest, ascending).
    pub stacked_sv_tail: Vec<f64>,
    /// Equations in the core system: m^2.
    pub system_rows: usize,
    /// Unknowns in the core system: subspace_dim^2.
    pub system_cols: usize,
    /// Condition estimate of the core matrix restricted to its row
    /// space (largest over smallest retained singular value).
    pub core_condition: f64,
}

impl RecoveryDiagnostics {
    /// Whether the identified subspace dimension respects the theoretical
    /// bound `r < rank_y / (1 - epsilon)` for expansion quality `epsilon`.
    pub fn subspace_within_bound(&self, epsilon: f64, subspace_dim: usize) -> bool {
        debug_assert!((0.0..1.0).contains(&epsilon));
        (subspace_dim as f64) < self.rank_y as f64 / (1.0 - epsilon)
    }
}

/// Recover X from `Y = A(X)`.
pub fn recover(
    op: &MeasurementOperator,
    y: &DenseMatrix,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult, RecoveryError> {
    let (result, _) = recover_stages(op, y, cfg, false)?;
    Ok(result)
}

/// As [`recover`], with per-stage diagnostics.
pub fn recover_diagnostics(
    op: &MeasurementOperator,
    y: &DenseMatrix,
    cfg: &RecoveryConfig,
) -> Result<(RecoveryResult, RecoveryDiagnostics), RecoveryError> {
    let (result, diag) = recover_stages(op, y, cfg, true)?;
    Ok((result, diag.expect("diagnostics requested")))
}

fn recover_stages(
    op: &MeasurementOperator,
    y: &DenseMatrix,
    cfg: &RecoveryConfig,
    want_diagnostics: bool,
) -> Result<(RecoveryResult, Option<RecoveryDiagnostics>), RecoveryError> {
    let (n, m) = (op.n(), op.m());
    if y.shape() != (m, m) {
        return Err(RecoveryError::Dimension(format!(
            "measurement must be {m}x{m}, got {}x{}",
            y.nrows(),
            y.ncols()
        )));
    }
    let y = symmetrize(y);
    let y_norm = y.norm();
    let subspace_cap = cfg.subspace_cap.unwrap_or(m);

    // Column space of Y from its eigendecomposition; rank counted on
    // absolute eigenvalues so the indefinite case works unchanged.
    let (lambdas, w) = eig_sym(&y)?;
    let mut abs_sorted: Vec<(f64, usize)> = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| (l.abs(), i))
        .collect();
    abs_sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let abs_values: Vec<f64> = abs_sorted.iter().map(|&(v, _)| v).collect();
    let rank_y = numerical_rank(&abs_values, cfg.rank_tol, (m, m));

    let mut s = DenseMatrix::zeros(m, rank_y);
    for (dst, &(_, src)) in abs_sorted.iter().take(rank_y).enumerate() {
        s.set_column(dst, &w.column(src));
    }

    // Projector onto the complement of the column space of Y.
    let p = DenseMatrix::identity(m, m) - &s * s.transpose();

    // Candidate subspace: vectors u with P G_i u = 0 for every term.
    let mut stacked = DenseMatrix::zeros(op.d() * m, n);
    for (i, g) in op.matrices().iter().enumerate() {
        stacked.view_mut((i * m, 0), (m, n)).copy_from(&(&p * g));
    }
    let q = null_basis(&stacked, cfg.rank_tol)?;
    let r = q.ncols();

    let diag_tail = if want_diagnostics {
        let (_, sv, _) = numkernel::svd(&stacked)?;
        let tail_len = r.min(sv.len());
        let mut tail: Vec<f64> = sv[sv.len() - tail_len..].to_vec();
        tail.reverse(); // ascending: smallest first
        Some(tail)
    } else {
        None
    };

    let degenerate = |x_hat: DenseMatrix, residual_rel: f64, core_cond: f64| {
        let diag = want_diagnostics.then(|| RecoveryDiagnostics {
            rank_y,
            stacked_sv_tail: diag_tail.clone().unwrap_or_default(),
            system_rows: m * m,
            system_cols: r * r,
            core_condition: core_cond,
        });
        (
            RecoveryResult {
                x_hat,
                subspace_dim: r,
                rank_y,
                residual_rel,
                status: RecoveryStatus::DegenerateSubspace,
            },
            diag,
        )
    };

    if r == 0 {
        let x_hat = DenseMatrix::zeros(n, n);
        if y_norm == 0.0 {
            let diag = want_diagnostics.then(|| RecoveryDiagnostics {
                rank_y,
                stacked_sv_tail: Vec::new(),
                system_rows: m * m,
                system_cols: 0,
                core_condition: 1.0,
            });
            return Ok((
                RecoveryResult {
                    x_hat,
                    subspace_dim: 0,
                    rank_y,
                    residual_rel: 0.0,
                    status: RecoveryStatus::Exact,
                },
                diag,
            ));
        }
        return Ok(degenerate(x_hat, 1.0, f64::INFINITY));
    }
    if r >= subspace_cap || (m * m).checked_mul(r * r).is_none_or(|e| e > cfg.kron_cap) {
        return Ok(degenerate(DenseMatrix::zeros(n, n), 1.0, f64::INFINITY));
    }

    // Core system: M = sum_i B_i (x) B_i with B_i = G_i Q, solved in the
    // minimum-norm least-squares sense against vec(Y).
    let mut core = DenseMatrix::zeros(m * m, r * r);
    for g in op.matrices() {
        let b = g * &q;
        core += kron_with_cap(&b, &b, cfg.kron_cap)?;
    }
    let v = solve_min_norm(&core, y.as_slice(), cfg.rank_tol)?;
    let v = symmetrize(&unvec(&v, r, r)?);
    let x_hat = symmetrize(&(&q * &v * q.transpose()));

    let remeasured = apply(op, &x_hat)?;
    let residual_rel = if y_norm == 0.0 {
        remeasured.norm()
    } else {
        (&remeasured - &y).norm() / y_norm
    };

    let status = if residual_rel <= cfg.exact_tol && r < m {
        RecoveryStatus::Exact
    } else if residual_rel <= APPROXIMATE_RESIDUAL_LIMIT {
        RecoveryStatus::Approximate
    } else {
        RecoveryStatus::FailedOverdeterminedInconsistent
    };

    let diag = if want_diagnostics {
        let (_, core_sv, _) = numkernel::svd(&core)?;
        let core_rank = numerical_rank(&core_sv, cfg.rank_tol, core.shape());
        let core_condition = if core_rank == 0 {
            f64::INFINITY
        } else {
            core_sv[0] / core_sv[core_rank - 1]
        };
        Some(RecoveryDiagnostics {
            rank_y,
            stacked_sv_tail: diag_tail.unwrap_or_default(),
            system_rows: m * m,
            system_cols: r * r,
            core_condition,
        })
    } else {
        None
    };

    Ok((
        RecoveryResult {
            x_hat,
            subspace_dim: r,
            rank_y,
            residual_rel,
            status,
        },
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::gen_gaussian;
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
    fn zero_measurement_recovers_zero() {
        let op = gen_gaussian(8, 5, 2, 1).unwrap();
        let result = recover(&op, &DenseMatrix::zeros(5, 5), &RecoveryConfig::default()).unwrap();
        assert_eq!(result.status, RecoveryStatus::Exact);
        assert_eq!(result.x_hat, DenseMatrix::zeros(8, 8));
        assert_eq!(result.subspace_dim, 0);
        assert_eq!(result.rank_y, 0);
    }

    #[test]
    fn psd_roundtrip_n20() {
        let op = gen_gaussian(20, 15, 3, 100).unwrap();
        for trial in 0..5u64 {
            let mut trng = sampling::trial_rng(100, trial);
            let x = sampling::random_psd(&mut trng, 20, 3);
            let y = apply(&op, &x).unwrap();
            let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
            assert_eq!(result.status, RecoveryStatus::Exact, "trial {trial}");
            assert!(
                rel_err(&result.x_hat, &x) < 1e-8,
                "trial {trial}: {}",
                rel_err(&result.x_hat, &x)
            );
        }
    }

    #[test]
    fn hermitian_roundtrip_n20() {
        let op = gen_gaussian(20, 18, 3, 200).unwrap();
        for trial in 0..5u64 {
            let mut trng = sampling::trial_rng(200, trial);
            let x = sampling::random_indefinite(&mut trng, 20, 2, 2);
            let y = apply(&op, &x).unwrap();
            let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
            assert_eq!(result.status, RecoveryStatus::Exact, "trial {trial}");
            assert!(rel_err(&result.x_hat, &x) < 1e-8, "trial {trial}");
        }
    }

    #[test]
    fn paper_operating_point_single_instance() {
        let op = gen_gaussian(50, 39, 2, 300).unwrap();
        let mut trng = sampling::trial_rng(300, 0);
        let x = sampling::random_psd(&mut trng, 50, 10);
        let y = apply(&op, &x).unwrap();
        let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(result.status, RecoveryStatus::Exact);
        assert!(rel_err(&result.x_hat, &x) < 1e-6);
    }

    #[test]
    fn subspace_contains_true_factor_directions() {
        // every column u of the true factor satisfies P G_i u ~ 0; the
        // recovered x_hat reproduces X, so its column space matches
        let op = gen_gaussian(16, 12, 3, 400).unwrap();
        let mut trng = sampling::trial_rng(400, 0);
        let f = sampling::random_gaussian(&mut trng, 16, 2);
        let x = &f * f.transpose();
        let y = apply(&op, &x).unwrap();
        let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(result.status, RecoveryStatus::Exact);

        let (lambdas, w) = eig_sym(&y).unwrap();
        let rank_y = lambdas.iter().filter(|&&l| l.abs() > 1e-9 * lambdas[0]).count();
        let s = w.columns(0, rank_y).into_owned();
        let p = DenseMatrix::identity(12, 12) - &s * s.transpose();
        for g in op.matrices() {
            for col in 0..2 {
                let u = f.column(col);
                let residual = (&p * g) * u;
                assert!(residual.norm() < 1e-9 * (g * u).norm());
            }
        }
        assert!(result.subspace_dim <= result.rank_y);
        assert!(result.subspace_dim < 12);
    }

    #[test]
    fn recovery_is_idempotent() {
        let op = gen_gaussian(14, 11, 3, 500).unwrap();
        let mut trng = sampling::trial_rng(500, 0);
        let x = sampling::random_psd(&mut trng, 14, 2);
        let y = apply(&op, &x).unwrap();
        let first = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(first.status, RecoveryStatus::Exact);
        let y2 = apply(&op, &first.x_hat).unwrap();
        let second = recover(&op, &y2, &RecoveryConfig::default()).unwrap();
        assert_eq!(second.status, RecoveryStatus::Exact);
        assert!(rel_err(&second.x_hat, &first.x_hat) < 1e-8);
    }

    #[test]
    fn psd_input_yields_psd_output() {
        let op = gen_gaussian(12, 10, 3, 600).unwrap();
        let mut trng = sampling::trial_rng(600, 0);
        let x = sampling::random_psd(&mut trng, 12, 3);
        let y = apply(&op, &x).unwrap();
        let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(result.status, RecoveryStatus::Exact);
        let (lambdas, _) = eig_sym(&result.x_hat).unwrap();
        assert!(lambdas[lambdas.len() - 1] >= -1e-8 * lambdas[0]);
    }

    #[test]
    fn x_hat_is_symmetric() {
        let op = gen_gaussian(10, 8, 2, 700).unwrap();
        let mut trng = sampling::trial_rng(700, 0);
        let x = sampling::random_psd(&mut trng, 10, 2);
        let y = apply(&op, &x).unwrap();
        let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        let defect = (&result.x_hat - result.x_hat.transpose()).amax();
        assert!(defect <= 1e-12 * result.x_hat.amax());
    }

    #[test]
    fn permutation_equivariance() {
        // recovering (G_i Pi, measurements of Pi^T X Pi) must give
        // Pi^T x_hat Pi
        let n = 10;
        let op = gen_gaussian(n, 8, 2, 800).unwrap();
        let mut trng = sampling::trial_rng(800, 0);
        let x = sampling::random_psd(&mut trng, n, 2);

        let mut pi = DenseMatrix::zeros(n, n);
        for i in 0..n {
            pi[(i, n - 1 - i)] = 1.0;
        }

        let y = apply(&op, &x).unwrap();
        let base = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(base.status, RecoveryStatus::Exact);

        let permuted = crate::operators::MeasurementOperator::from_matrices(
            op.matrices().iter().map(|g| g * &pi).collect(),
            op.ensemble(),
            op.seed(),
        )
        .unwrap();
        let x_perm = pi.transpose() * &x * &pi;
        let y_perm = apply(&permuted, &x_perm).unwrap();
        assert!((&y_perm - &y).amax() < 1e-10 * y.amax());

        let result = recover(&permuted, &y_perm, &RecoveryConfig::default()).unwrap();
        let expected = pi.transpose() * &base.x_hat * &pi;
        assert!(rel_err(&result.x_hat, &expected) < 1e-8);
    }

    #[test]
    fn diagnostics_report_dimensions() {
        let op = gen_gaussian(20, 15, 3, 900).unwrap();
        let mut trng = sampling::trial_rng(900, 0);
        let x = sampling::random_psd(&mut trng, 20, 3);
        let y = apply(&op, &x).unwrap();
        let (result, diag) =
            recover_diagnostics(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(result.status, RecoveryStatus::Exact);
        assert_eq!(diag.system_rows, 225);
        assert_eq!(diag.system_cols, result.subspace_dim * result.subspace_dim);
        assert!(diag.system_rows >= diag.system_cols, "overdetermined");
        // rank_y matches the generic rank identity min(d k, m)
        assert_eq!(diag.rank_y, 9);
        assert!(diag.core_condition.is_finite());
        assert_eq!(diag.stacked_sv_tail.len(), result.subspace_dim);
        assert!(diag.subspace_within_bound(0.5, result.subspace_dim));
    }

    #[test]
    fn diagnostics_trivial_on_zero() {
        let op = gen_gaussian(6, 4, 2, 901).unwrap();
        let (result, diag) =
            recover_diagnostics(&op, &DenseMatrix::zeros(4, 4), &RecoveryConfig::default())
                .unwrap();
        assert_eq!(result.subspace_dim, 0);
        assert_eq!(diag.rank_y, 0);
        assert_eq!(diag.system_cols, 0);
    }

    #[test]
    fn saturated_rank_yields_degenerate_status() {
        // k large enough that rank(Y) = m leaves P = 0 and the whole
        // space as candidate subspace
        let op = gen_gaussian(12, 6, 2, 902).unwrap();
        let mut trng = sampling::trial_rng(902, 0);
        let x = sampling::random_psd(&mut trng, 12, 6);
        let y = apply(&op, &x).unwrap();
        let result = recover(&op, &y, &RecoveryConfig::default()).unwrap();
        assert_eq!(result.status, RecoveryStatus::DegenerateSubspace);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let op = gen_gaussian(8, 5, 2, 903).unwrap();
        let bad = DenseMatrix::zeros(4, 4);
        assert!(matches!(
            recover(&op, &bad, &RecoveryConfig::default()),
            Err(RecoveryError::Dimension(_))
        ));
    }
}
