//! Dense numerical linear-algebra kernels: decompositions, null spaces,
//! Kronecker products, and minimum-norm least squares.
//!
//! Everything here is deterministic: the same inputs produce bit-identical
//! outputs within one build. Decompositions are delegated to nalgebra;
//! the rank / null-space / pseudo-inverse logic on top is ours.

use nalgebra::DMatrix;
use thiserror::Error;

/// Column-major dense matrix of f64, the universal numeric carrier.
pub type DenseMatrix = DMatrix<f64>;

/// Default cap on the entry count of Kronecker products and matricized
/// operators. Guards against misconfigured sweeps allocating gigabytes.
pub const DEFAULT_SIZE_CAP: usize = 100_000_000;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("result would have {entries} entries, exceeding the cap of {cap}")]
    SizeCap { entries: usize, cap: usize },
    #[error("decomposition did not converge")]
    Convergence,
}

/// Threshold policy for deciding which singular values count as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankTolerance {
    /// Threshold = `factor * max(rows, cols) * s_max`.
    Relative(f64),
    /// Fixed cutoff, independent of scale.
    Absolute(f64),
}

impl RankTolerance {
    /// The threshold a singular value must strictly exceed to count
    /// toward the rank.
    pub fn threshold(&self, s_max: f64, dims: (usize, usize)) -> f64 {
        match *self {
            RankTolerance::Relative(factor) => factor * dims.0.max(dims.1) as f64 * s_max,
            RankTolerance::Absolute(cutoff) => cutoff,
        }
    }
}

impl Default for RankTolerance {
    /// Unit roundoff scaled by the larger dimension, the standard
    /// numerical-rank threshold.
    fn default() -> Self {
        RankTolerance::Relative(f64::EPSILON)
    }
}

/// Validate that every entry is finite. Construction boundaries (file
/// readers, FFI) call this before handing matrices to the kernels.
pub fn check_finite(a: &DenseMatrix) -> Result<(), KernelError> {
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            if !a[(row, col)].is_finite() {
                return Err(KernelError::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// Thin SVD: `A = U * diag(s) * V^T` with `U` (m x k), `V` (n x k),
/// k = min(m, n), and `s` sorted descending.
pub fn svd(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix), KernelError> {
    if a.is_empty() {
        return Err(KernelError::Dimension("svd of empty matrix".into()));
    }
    let decomp = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(KernelError::Convergence)?;
    let u = decomp.u.expect("u requested");
    let v_t = decomp.v_t.expect("v_t requested");
    let s = decomp.singular_values.as_slice().to_vec();
    Ok((u, s, v_t.transpose()))
}

/// Eigendecomposition of a symmetric matrix: `A * W = W * diag(lambdas)`
/// with `W` orthonormal and eigenvalues sorted descending.
///
/// The input is symmetrized as `(A + A^T) / 2` first; inputs whose
/// symmetry defect exceeds `1e-9 * max|A|` are rejected.
pub fn eig_sym(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), KernelError> {
    if a.nrows() != a.ncols() {
        return Err(KernelError::Dimension(format!(
            "eig_sym needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let max_abs = a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            defect = defect.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if defect > 1e-9 * max_abs.max(f64::MIN_POSITIVE) {
        return Err(KernelError::Dimension(format!(
            "input is not symmetric: defect {defect:.3e} vs max entry {max_abs:.3e}"
        )));
    }
    let sym = symmetrize(a);
    let eig = nalgebra::SymmetricEigen::new(sym);

    // nalgebra gives no ordering guarantee; sort descending and permute W.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut w = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        w.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((lambdas, w))
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DenseMatrix) -> DenseMatrix {
    (a + a.transpose()) * 0.5
}

/// Count of singular values strictly above the tolerance threshold.
/// `s` must be sorted descending and nonnegative. A zero leading value
/// (or an empty sequence) means rank 0.
pub fn numerical_rank(s: &[f64], tol: RankTolerance, dims: (usize, usize)) -> usize {
    let s_max = s.first().copied().unwrap_or(0.0);
    if s_max == 0.0 {
        return 0;
    }
    let threshold = tol.threshold(s_max, dims);
    s.iter().take_while(|&&x| x > threshold).count()
}

/// Orthonormal basis of the numerical null space of `A`: an n x q matrix
/// `Q` with `Q^T Q = I` and `q = cols(A) - numerical_rank(A)`. A full-rank
/// input yields an n x 0 matrix.
pub fn null_basis(a: &DenseMatrix, tol: RankTolerance) -> Result<DenseMatrix, KernelError> {
    let (rows, cols) = a.shape();
    if a.is_empty() {
        return Err(KernelError::Dimension("null_basis of empty matrix".into()));
    }
    // nalgebra's SVD is thin, so a wide input would not expose the null
    // directions in V. Padding with zero rows makes the matrix square
    // without changing singular values or right singular vectors.
    let padded;
    let work: &DenseMatrix = if rows < cols {
        let mut p = DenseMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        padded = p;
        &padded
    } else {
        a
    };
    let (_, s, v) = svd(work)?;
    let rank = numerical_rank(&s, tol, (rows, cols));
    Ok(v.columns(rank, cols - rank).into_owned())
}

/// Kronecker product with the default size cap.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, KernelError> {
    kron_with_cap(a, b, DEFAULT_SIZE_CAP)
}

/// Kronecker product `A (x) B`: block (i, j) equals `A[i,j] * B`.
pub fn kron_with_cap(
    a: &DenseMatrix,
    b: &DenseMatrix,
    cap: usize,
) -> Result<DenseMatrix, KernelError> {
    let entries = a
        .nrows()
        .checked_mul(b.nrows())
        .and_then(|r| r.checked_mul(a.ncols()))
        .and_then(|r| r.checked_mul(b.ncols()))
        .ok_or(KernelError::SizeCap {
            entries: usize::MAX,
            cap,
        })?;
    if entries > cap {
        return Err(KernelError::SizeCap { entries, cap });
    }
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DenseMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let scale = a[(i, j)];
            if scale == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * br, j * bc), (br, bc));
            for jb in 0..bc {
                for ib in 0..br {
                    block[(ib, jb)] = scale * b[(ib, jb)];
                }
            }
        }
    }
    Ok(out)
}

/// Column-major stacking of a matrix into a vector.
pub fn vec_mat(a: &DenseMatrix) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Inverse of [`vec_mat`]: reshape a column-major vector into a matrix.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix, KernelError> {
    if v.len() != rows * cols {
        return Err(KernelError::Dimension(format!(
            "unvec: {} values cannot fill a {}x{} matrix",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(DenseMatrix::from_column_slice(rows, cols, v))
}

/// Minimum-norm least-squares solution `M^+ y`, computed by SVD with
/// singular values at or below the tolerance threshold zeroed.
pub fn solve_min_norm(
    m: &DenseMatrix,
    y: &[f64],
    tol: RankTolerance,
) -> Result<Vec<f64>, KernelError> {
    if y.len() != m.nrows() {
        return Err(KernelError::Dimension(format!(
            "solve_min_norm: rhs has {} entries but M has {} rows",
            y.len(),
            m.nrows()
        )));
    }
    let (u, s, v) = svd(m)?;
    let rank = numerical_rank(&s, tol, m.shape());
    let yv = nalgebra::DVector::from_column_slice(y);
    let uty = u.columns(0, rank).transpose() * yv;
    let mut scaled = uty;
    for i in 0..rank {
        scaled[i] /= s[i];
    }
    let x = v.columns(0, rank) * scaled;
    Ok(x.as_slice().to_vec())
}

/// Frobenius norm.
pub fn fro_norm(a: &DenseMatrix) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(a: &DenseMatrix) -> f64 {
    a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn svd_identity() {
        let a = DenseMatrix::identity(3, 3);
        let (u, s, v) = svd(&a).unwrap();
        assert_eq!(s, vec![1.0, 1.0, 1.0]);
        assert!((u.transpose() * &u - DenseMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((v.transpose() * &v - DenseMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn svd_diagonal_singular_values() {
        let a = DenseMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        let (_, s, _) = svd(&a).unwrap();
        assert_eq!(s, vec![3.0, 0.0]);
    }

    #[test]
    fn svd_reconstructs_random_4x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = randn_matrix(&mut rng, 4, 3);
        let (u, s, v) = svd(&a).unwrap();
        let recon = &u * DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone()))
            * v.transpose();
        assert!((&a - recon).amax() < 1e-12 * s[0]);
        for i in 1..s.len() {
            assert!(s[i - 1] >= s[i]);
        }
    }

    #[test]
    fn svd_reconstruction_over_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for _ in 0..30 {
            let rows = rng.random_range(1..9usize);
            let cols = rng.random_range(1..9usize);
            let a = randn_matrix(&mut rng, rows, cols);
            let (u, s, v) = svd(&a).unwrap();
            let recon =
                &u * DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone()))
                    * v.transpose();
            assert!((&a - recon).amax() <= 1e-12 * s[0].max(1e-300));
        }
    }

    #[test]
    fn eig_sym_diagonal() {
        let a = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, -2.0, 0.0]));
        let (lambdas, _) = eig_sym(&a).unwrap();
        assert_eq!(lambdas, vec![5.0, 0.0, -2.0]);
    }

    #[test]
    fn eig_sym_identity() {
        let a = DenseMatrix::identity(4, 4);
        let (lambdas, _) = eig_sym(&a).unwrap();
        assert_eq!(lambdas, vec![1.0; 4]);
    }

    #[test]
    fn eig_sym_residual_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = randn_matrix(&mut rng, 6, 6);
        let a = symmetrize(&g);
        let (lambdas, w) = eig_sym(&a).unwrap();
        let lam_max = lambdas.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        for j in 0..6 {
            let col = w.column(j);
            let residual = &a * col - lambdas[j] * col;
            assert!(residual.amax() < 1e-10 * lam_max, "column {j}");
        }
        assert!((w.transpose() * &w - DenseMatrix::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn eig_sym_rejects_rectangular() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(eig_sym(&a), Err(KernelError::Dimension(_))));
    }

    #[test]
    fn eig_sym_rejects_asymmetric() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 1.0]);
        assert!(eig_sym(&a).is_err());
    }

    #[test]
    fn rank_counts_strictly_above_threshold() {
        assert_eq!(
            numerical_rank(&[1.0, 1.0, 0.0], RankTolerance::Relative(1e-12), (3, 3)),
            2
        );
        assert_eq!(numerical_rank(&[], RankTolerance::default(), (0, 0)), 0);
        // threshold = 1e-12 * 3 * 1 = 3e-12, so only the leading value counts
        assert_eq!(
            numerical_rank(
                &[1.0, 1e-13, 1e-14],
                RankTolerance::Relative(1e-12),
                (3, 3)
            ),
            1
        );
        assert_eq!(
            numerical_rank(&[0.0, 0.0], RankTolerance::default(), (2, 2)),
            0
        );
    }

    #[test]
    fn null_basis_full_rank_is_empty() {
        let a = DenseMatrix::identity(2, 2);
        let q = null_basis(&a, RankTolerance::default()).unwrap();
        assert_eq!(q.shape(), (2, 0));
    }

    #[test]
    fn null_basis_coordinate() {
        let a = DenseMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let q = null_basis(&a, RankTolerance::default()).unwrap();
        assert_eq!(q.shape(), (2, 1));
        assert!((q[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(q[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn null_basis_wide_rank_deficient() {
        // rank-5 5x8 matrix: the null space has dimension 3
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = randn_matrix(&mut rng, 5, 8);
        let q = null_basis(&a, RankTolerance::default()).unwrap();
        assert_eq!(q.shape(), (8, 3));
        assert!((&a * &q).amax() < 1e-10 * a.amax());
        assert!((q.transpose() * &q - DenseMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn null_basis_rank_plus_nullity_over_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let rows = rng.random_range(1..8usize);
            let cols = rng.random_range(1..8usize);
            let inner = rng.random_range(1..=rows.min(cols));
            let a = randn_matrix(&mut rng, rows, inner) * randn_matrix(&mut rng, inner, cols);
            let (_, s, _) = svd(&a).unwrap();
            let rank = numerical_rank(&s, RankTolerance::default(), (rows, cols));
            let q = null_basis(&a, RankTolerance::default()).unwrap();
            assert_eq!(q.ncols() + rank, cols);
            if q.ncols() > 0 {
                let qtq = q.transpose() * &q;
                assert!((qtq - DenseMatrix::identity(q.ncols(), q.ncols())).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn kron_identity() {
        let i2 = DenseMatrix::identity(2, 2);
        let k = kron(&i2, &i2).unwrap();
        assert_eq!(k, DenseMatrix::identity(4, 4));
    }

    #[test]
    fn kron_definition_expansion() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let k = kron(&a, &b).unwrap();
        let expected = DenseMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 2.0, //
                1.0, 0.0, 2.0, 0.0, //
                0.0, 3.0, 0.0, 4.0, //
                3.0, 0.0, 4.0, 0.0,
            ],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_vectorization_identity() {
        // vec(B V B^T) = (B (x) B) vec(V) for symmetric V, column-major vec
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let b = randn_matrix(&mut rng, 3, 2);
        let v = symmetrize(&randn_matrix(&mut rng, 2, 2));
        let lhs = vec_mat(&(&b * &v * b.transpose()));
        let k = kron(&b, &b).unwrap();
        let rhs = &k * nalgebra::DVector::from_column_slice(&vec_mat(&v));
        let scale = lhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            assert!((l - r).abs() < 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn kron_mixed_product_random_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let a = randn_matrix(&mut rng, 2, 2);
            let b = randn_matrix(&mut rng, 2, 2);
            let c = randn_matrix(&mut rng, 2, 2);
            let d = randn_matrix(&mut rng, 2, 2);
            let lhs = kron(&a, &b).unwrap() * kron(&c, &d).unwrap();
            let rhs = kron(&(&a * &c), &(&b * &d)).unwrap();
            assert!((lhs - &rhs).amax() < 1e-12 * rhs.amax().max(1.0));
        }
    }

    #[test]
    fn kron_size_cap() {
        let a = DenseMatrix::zeros(100, 100);
        let b = DenseMatrix::zeros(100, 100);
        assert!(matches!(
            kron_with_cap(&a, &b, 1_000_000),
            Err(KernelError::SizeCap { .. })
        ));
    }

    #[test]
    fn vec_is_column_major() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec_mat(&a), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unvec_zero_and_roundtrip() {
        let z = unvec(&[0.0; 4], 2, 2).unwrap();
        assert_eq!(z, DenseMatrix::zeros(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let a = randn_matrix(&mut rng, 4, 5);
        let back = unvec(&vec_mat(&a), 4, 5).unwrap();
        assert_eq!(a, back);
        assert!(unvec(&[1.0; 3], 2, 2).is_err());
    }

    #[test]
    fn solve_min_norm_identity_and_zero() {
        let m = DenseMatrix::identity(3, 3);
        let x = solve_min_norm(&m, &[1.0, 2.0, 3.0], RankTolerance::default()).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);

        let z = DenseMatrix::zeros(2, 2);
        let x = solve_min_norm(&z, &[5.0, -1.0], RankTolerance::default()).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn solve_min_norm_consistent_overdetermined() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let m = randn_matrix(&mut rng, 9, 4);
        let x0 = randn_matrix(&mut rng, 4, 1);
        let y = &m * &x0;
        let x = solve_min_norm(&m, y.as_slice(), RankTolerance::default()).unwrap();
        let x = nalgebra::DVector::from_vec(x);
        assert!((&x - &x0).norm() < 1e-10 * x0.norm());
    }

    #[test]
    fn solve_min_norm_is_minimum_norm() {
        // rank-deficient system: adding null-space perturbations to the
        // solution must never shrink its Euclidean norm
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..10 {
            let m = randn_matrix(&mut rng, 5, 3) * randn_matrix(&mut rng, 3, 7);
            let y: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = nalgebra::DVector::from_vec(
                solve_min_norm(&m, &y, RankTolerance::default()).unwrap(),
            );
            let null = null_basis(&m, RankTolerance::default()).unwrap();
            assert!(null.ncols() > 0);
            for _ in 0..5 {
                let z = randn_matrix(&mut rng, null.ncols(), 1);
                let alt = &x + &null * z;
                assert!(alt.norm() >= x.norm() - 1e-12);
            }
        }
    }

    #[test]
    fn check_finite_flags_nan() {
        let mut a = DenseMatrix::zeros(2, 2);
        assert!(check_finite(&a).is_ok());
        a[(1, 0)] = f64::NAN;
        assert!(matches!(
            check_finite(&a),
            Err(KernelError::NonFinite { row: 1, col: 0 })
        ));
    }
}
