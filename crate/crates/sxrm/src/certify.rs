//! Empirical certification of the operator properties the recovery
//! guarantees rest on: the generic rank identity, expansion ratios over
//! sampled projections, PSD preservation, and the negative-eigenvalue
//! signature of null-space elements.
//!
//! Everything here is statistical: a report says "no violation observed
//! in T trials", never more.

use std::fmt;

use crate::numkernel::{eig_sym, null_basis, numerical_rank, svd, RankTolerance};
use crate::operators::{
    apply, factored_apply, matricize_sym, unsvec, MeasurementOperator, OperatorError,
};
use crate::sampling::{
    random_indefinite, random_orthonormal, random_psd, random_unit_vector, trial_rng,
};

/// Relative cutoff below which an eigenvalue counts as negative when
/// classifying null-space elements.
pub const DEFAULT_NEG_EIG_TOL: f64 = 1e-9;

/// How test matrices are drawn when estimating expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionMode {
    /// Random rank-r orthogonal projections, ranks measured through the
    /// factored form.
    PsdProjection,
    /// Random rank-r symmetric matrices with mixed-sign eigenvalues,
    /// ranks measured on the applied output.
    Hermitian,
}

impl ExpansionMode {
    pub fn name(self) -> &'static str {
        match self {
            ExpansionMode::PsdProjection => "psd_projection",
            ExpansionMode::Hermitian => "hermitian",
        }
    }
}

/// One trial of the rank-identity or PSD-preservation checks.
#[derive(Debug, Clone, Copy)]
pub struct TrialOutcome {
    pub trial: u64,
    pub observed: usize,
    pub expected: usize,
    pub pass: bool,
}

/// Per-trial ranks for the generic identity
/// `rank(A(X)) = min(d * rank(X), m)` on random rank-k PSD inputs.
pub fn rank_identity_trials(
    op: &MeasurementOperator,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>, OperatorError> {
    let expected = (op.d() * k).min(op.m());
    let mut outcomes = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = trial_rng(seed, trial);
        let x = random_psd(&mut rng, op.n(), k);
        let y = apply(op, &x)?;
        let (_, s, _) = svd(&y)?;
        let observed = numerical_rank(&s, RankTolerance::default(), y.shape());
        outcomes.push(TrialOutcome {
            trial,
            observed,
            expected,
            pass: observed == expected,
        });
    }
    Ok(outcomes)
}

/// Count of trials where the rank identity held.
pub fn check_rank_identity(
    op: &MeasurementOperator,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<usize, OperatorError> {
    Ok(rank_identity_trials(op, k, trials, seed)?
        .iter()
        .filter(|t| t.pass)
        .count())
}

/// Measured expansion statistics at one tested rank.
#[derive(Debug, Clone)]
pub struct ExpanderReport {
    pub r: usize,
    pub trials: usize,
    /// Smallest observed rank(A(P)) / min(d r, m).
    pub min_ratio: f64,
    pub mean_ratio: f64,
    /// 1 - min_ratio: the empirical expansion defect.
    pub epsilon_hat: f64,
    /// Trials where the observed rank exceeded d r.
    pub violations_upper: usize,
    pub mode: ExpansionMode,
    /// Whether d r >= m, i.e. ratios are measured against the saturated
    /// ceiling m rather than d r.
    pub saturated: bool,
    /// Observed rank per trial, in trial order.
    pub observed_ranks: Vec<usize>,
}

/// Sample rank-r inputs and measure how much the operator expands them.
pub fn estimate_expansion(
    op: &MeasurementOperator,
    r: usize,
    trials: usize,
    seed: u64,
    mode: ExpansionMode,
) -> Result<ExpanderReport, OperatorError> {
    assert!(r >= 1 && r <= op.n(), "tested rank must be in 1..=n");
    let full = op.d() * r;
    let denom = full.min(op.m());
    let mut observed_ranks = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = trial_rng(seed, trial);
        let rank = match mode {
            ExpansionMode::PsdProjection => {
                let u = random_orthonormal(&mut rng, op.n(), r);
                let b = factored_apply(op, &u)?;
                let (_, s, _) = svd(&b)?;
                numerical_rank(&s, RankTolerance::default(), b.shape())
            }
            ExpansionMode::Hermitian => {
                let x = random_indefinite(&mut rng, op.n(), r - r / 2, r / 2);
                let y = apply(op, &x)?;
                let (_, s, _) = svd(&y)?;
                numerical_rank(&s, RankTolerance::default(), y.shape())
            }
        };
        observed_ranks.push(rank);
    }
    let ratios: Vec<f64> = observed_ranks
        .iter()
        .map(|&rank| rank as f64 / denom as f64)
        .collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_ratio = ratios.iter().sum::<f64>() / trials.max(1) as f64;
    let violations_upper = observed_ranks.iter().filter(|&&rank| rank > full).count();
    Ok(ExpanderReport {
        r,
        trials,
        min_ratio,
        mean_ratio,
        epsilon_hat: 1.0 - min_ratio,
        violations_upper,
        mode,
        saturated: full >= op.m(),
        observed_ranks,
    })
}

impl fmt::Display for ExpanderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "expansion at rank r={} ({} mode, {} trials{})",
            self.r,
            self.mode.name(),
            self.trials,
            if self.saturated { ", saturated" } else { "" }
        )?;
        writeln!(
            f,
            "  rank ratio: min {:.4}, mean {:.4}  (epsilon_hat = {:.4})",
            self.min_ratio, self.mean_ratio, self.epsilon_hat
        )?;
        if self.violations_upper == 0 {
            write!(
                f,
                "  upper bound rank <= d*r: no violation observed in {} trials",
                self.trials
            )
        } else {
            write!(
                f,
                "  upper bound rank <= d*r: VIOLATED in {} of {} trials",
                self.violations_upper, self.trials
            )
        }
    }
}

/// Distribution of negative-eigenvalue counts over sampled null-space
/// elements of the matricized operator.
#[derive(Debug, Clone)]
pub struct NullspaceSignature {
    /// Dimension of the computed null space (0 means the operator is
    /// injective on symmetric matrices and there was nothing to sample).
    pub null_dim: usize,
    pub samples: usize,
    /// Smallest eta_minus over the samples.
    pub min_neg_eigs: usize,
    /// histogram[c] = number of samples with exactly c negative
    /// eigenvalues.
    pub histogram: Vec<usize>,
}

impl fmt::Display for NullspaceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.null_dim == 0 {
            return write!(f, "null space is trivial: operator injective on symmetric inputs");
        }
        writeln!(
            f,
            "null space dimension {}, {} sampled elements",
            self.null_dim, self.samples
        )?;
        writeln!(f, "  min negative eigenvalues: {}", self.min_neg_eigs)?;
        write!(f, "  eta_minus histogram:")?;
        for (count, &occurrences) in self.histogram.iter().enumerate() {
            if occurrences > 0 {
                write!(f, " {count}:{occurrences}")?;
            }
        }
        Ok(())
    }
}

/// Unit-Frobenius-norm symmetric elements of the operator null space,
/// drawn uniformly on the sphere of the computed null-space basis.
pub fn sample_nullspace_elements(
    op: &MeasurementOperator,
    samples: usize,
    seed: u64,
) -> Result<Vec<crate::numkernel::DenseMatrix>, OperatorError> {
    let l = matricize_sym(op)?;
    let basis = null_basis(&l, RankTolerance::default())?;
    let q = basis.ncols();
    if q == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(samples);
    for sample in 0..samples as u64 {
        let mut rng = trial_rng(seed, sample);
        let coef = random_unit_vector(&mut rng, q);
        let w_vec = &basis * nalgebra::DVector::from_column_slice(&coef);
        out.push(unsvec(w_vec.as_slice(), op.n())?);
    }
    Ok(out)
}

/// Sample null-space elements and record their negative-eigenvalue
/// counts. Eigenvalues below `-tol * max|lambda|` count as negative.
pub fn sample_nullspace_signature(
    op: &MeasurementOperator,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<NullspaceSignature, OperatorError> {
    let l = matricize_sym(op)?;
    let basis = null_basis(&l, RankTolerance::default())?;
    let null_dim = basis.ncols();
    if null_dim == 0 {
        return Ok(NullspaceSignature {
            null_dim: 0,
            samples: 0,
            min_neg_eigs: 0,
            histogram: Vec::new(),
        });
    }
    let mut histogram = vec![0usize; op.n() + 1];
    let mut min_neg = usize::MAX;
    for sample in 0..samples as u64 {
        let mut rng = trial_rng(seed, sample);
        let coef = random_unit_vector(&mut rng, null_dim);
        let w_vec = &basis * nalgebra::DVector::from_column_slice(&coef);
        let w = unsvec(w_vec.as_slice(), op.n())?;
        let neg = count_negative_eigs(&w, tol)?;
        histogram[neg] += 1;
        min_neg = min_neg.min(neg);
    }
    Ok(NullspaceSignature {
        null_dim,
        samples,
        min_neg_eigs: if samples == 0 { 0 } else { min_neg },
        histogram,
    })
}

/// Number of eigenvalues below `-tol * max|lambda|`.
pub fn count_negative_eigs(
    w: &crate::numkernel::DenseMatrix,
    tol: f64,
) -> Result<usize, OperatorError> {
    let (lambdas, _) = eig_sym(w).map_err(OperatorError::Kernel)?;
    let lam_max_abs = lambdas.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    Ok(lambdas
        .iter()
        .filter(|&&l| l < -tol * lam_max_abs)
        .count())
}

/// Per-trial outcomes for PSD preservation: the smallest eigenvalue of
/// `A(X)` must not fall below `-1e-10 * lambda_max` for random PSD X.
pub fn psd_preservation_trials(
    op: &MeasurementOperator,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>, OperatorError> {
    let mut outcomes = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = trial_rng(seed, trial);
        let k = rand::RngExt::random_range(&mut rng, 1..=op.n());
        let x = random_psd(&mut rng, op.n(), k);
        let y = apply(op, &x)?;
        let (lambdas, _) = eig_sym(&y).map_err(OperatorError::Kernel)?;
        let lam_max = lambdas[0].max(0.0);
        let lam_min = lambdas[lambdas.len() - 1];
        let pass = lam_min >= -1e-10 * lam_max.max(f64::MIN_POSITIVE);
        outcomes.push(TrialOutcome {
            trial,
            observed: if pass { 1 } else { 0 },
            expected: 1,
            pass,
        });
    }
    Ok(outcomes)
}

/// Count of trials where the applied output stayed PSD.
pub fn check_psd_preservation(
    op: &MeasurementOperator,
    trials: usize,
    seed: u64,
) -> Result<usize, OperatorError> {
    Ok(psd_preservation_trials(op, trials, seed)?
        .iter()
        .filter(|t| t.pass)
        .count())
}
