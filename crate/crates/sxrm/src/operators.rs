//! The low-density measurement operator `A(X) = sum_i G_i X G_i^T`:
//! generation from seeded ensembles, application, adjoint, factored
//! application, explicit matricization over symmetric inputs, and the
//! binary operator file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::numkernel::{self, DenseMatrix, KernelError, DEFAULT_SIZE_CAP};

const MAGIC: [u8; 4] = *b"SXRM";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an operator file (bad magic)")]
    BadMagic,
    #[error("unsupported operator file version {0}")]
    BadVersion(u8),
    #[error("unknown ensemble tag {0}")]
    BadEnsemble(u8),
    #[error("corrupt operator file: {0}")]
    Corrupt(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Distribution family the `G_i` matrices are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Each row has a single 1 in a uniformly random column.
    SparseOnehot,
}

impl Ensemble {
    pub fn tag(self) -> u8 {
        match self {
            Ensemble::Gaussian => 0,
            Ensemble::SparseOnehot => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, OperatorError> {
        match tag {
            0 => Ok(Ensemble::Gaussian),
            1 => Ok(Ensemble::SparseOnehot),
            t => Err(OperatorError::BadEnsemble(t)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::SparseOnehot => "sparse_onehot",
        }
    }
}

/// The measurement operator: `d` matrices of shape m x n plus the
/// generation metadata. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    n: usize,
    m: usize,
    d: usize,
    ensemble: Ensemble,
    seed: u64,
    gs: Vec<DenseMatrix>,
}

impl MeasurementOperator {
    /// Build an operator from explicit matrices. All matrices must share
    /// one m x n shape and carry only finite entries.
    pub fn from_matrices(
        gs: Vec<DenseMatrix>,
        ensemble: Ensemble,
        seed: u64,
    ) -> Result<Self, OperatorError> {
        let first = gs
            .first()
            .ok_or_else(|| OperatorError::BadParameter("need at least one matrix".into()))?;
        let (m, n) = first.shape();
        if m == 0 || n == 0 {
            return Err(OperatorError::BadParameter("matrices must be nonempty".into()));
        }
        for g in &gs {
            if g.shape() != (m, n) {
                return Err(OperatorError::Dimension(format!(
                    "all matrices must be {m}x{n}, found {}x{}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            numkernel::check_finite(g)?;
        }
        Ok(MeasurementOperator {
            n,
            m,
            d: gs.len(),
            ensemble,
            seed,
            gs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.gs
    }
}

/// RNG for matrix `index` of the operator with the given seed. Each matrix
/// draws from its own ChaCha stream, so operators that share a seed but
/// differ in `d` share their first `min(d, d')` matrices.
fn matrix_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_gen_params(n: usize, m: usize, d: usize) -> Result<(), OperatorError> {
    if n == 0 || m == 0 || d == 0 {
        return Err(OperatorError::BadParameter(format!(
            "n, m, d must all be at least 1, got n={n} m={m} d={d}"
        )));
    }
    Ok(())
}

/// Draw `d` independent m x n matrices with i.i.d. standard normal entries.
pub fn gen_gaussian(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
) -> Result<MeasurementOperator, OperatorError> {
    check_gen_params(n, m, d)?;
    let gs = (0..d)
        .map(|i| {
            let mut rng = matrix_rng(seed, i);
            let mut g = DenseMatrix::zeros(m, n);
            for col in 0..n {
                for row in 0..m {
                    g[(row, col)] = StandardNormal.sample(&mut rng);
                }
            }
            g
        })
        .collect();
    Ok(MeasurementOperator {
        n,
        m,
        d,
        ensemble: Ensemble::Gaussian,
        seed,
        gs,
    })
}

/// Draw `d` matrices where every row has exactly one 1 in a uniformly
/// random column position.
pub fn gen_sparse_onehot(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
) -> Result<MeasurementOperator, OperatorError> {
    check_gen_params(n, m, d)?;
    let gs = (0..d)
        .map(|i| {
            let mut rng = matrix_rng(seed, i);
            let mut g = DenseMatrix::zeros(m, n);
            for row in 0..m {
                let col = rng.random_range(0..n);
                g[(row, col)] = 1.0;
            }
            g
        })
        .collect();
    Ok(MeasurementOperator {
        n,
        m,
        d,
        ensemble: Ensemble::SparseOnehot,
        seed,
        gs,
    })
}

/// Apply the operator: `Y = sum_i G_i X G_i^T` for an n x n input.
/// The output is symmetrized when the input is symmetric.
pub fn apply(op: &MeasurementOperator, x: &DenseMatrix) -> Result<DenseMatrix, OperatorError> {
    if x.shape() != (op.n, op.n) {
        return Err(OperatorError::Dimension(format!(
            "apply expects a {0}x{0} input, got {1}x{2}",
            op.n,
            x.nrows(),
            x.ncols()
        )));
    }
    let mut y = DenseMatrix::zeros(op.m, op.m);
    for g in &op.gs {
        y += g * x * g.transpose();
    }
    let defect = (&y - y.transpose()).amax();
    if is_symmetric(x) && defect > 0.0 {
        y = numkernel::symmetrize(&y);
    }
    Ok(y)
}

/// Adjoint of [`apply`] under the Frobenius inner product:
/// `A*(Y) = sum_i G_i^T Y G_i`.
pub fn adjoint(op: &MeasurementOperator, y: &DenseMatrix) -> Result<DenseMatrix, OperatorError> {
    if y.shape() != (op.m, op.m) {
        return Err(OperatorError::Dimension(format!(
            "adjoint expects a {0}x{0} input, got {1}x{2}",
            op.m,
            y.nrows(),
            y.ncols()
        )));
    }
    let mut x = DenseMatrix::zeros(op.n, op.n);
    for g in &op.gs {
        x += g.transpose() * y * g;
    }
    Ok(x)
}

/// Factored application `B(U) = [G_1 U | ... | G_d U]`, an m x (d r)
/// matrix. For any factor U, `rank(B(U)) = rank(apply(U U^T))`, which
/// makes this the cheap route to expansion ranks.
pub fn factored_apply(
    op: &MeasurementOperator,
    u: &DenseMatrix,
) -> Result<DenseMatrix, OperatorError> {
    if u.nrows() != op.n {
        return Err(OperatorError::Dimension(format!(
            "factored_apply expects {} rows, got {}",
            op.n,
            u.nrows()
        )));
    }
    let r = u.ncols();
    let mut b = DenseMatrix::zeros(op.m, op.d * r);
    for (i, g) in op.gs.iter().enumerate() {
        b.view_mut((0, i * r), (op.m, r)).copy_from(&(g * u));
    }
    Ok(b)
}

fn is_symmetric(x: &DenseMatrix) -> bool {
    if x.nrows() != x.ncols() {
        return false;
    }
    let scale = x.amax();
    (x - x.transpose()).amax() <= 1e-12 * scale
}

/// Length of the `svec` of an n x n symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Isometric vectorization of a symmetric matrix: the lower triangle
/// stacked column-major with off-diagonal entries scaled by sqrt(2),
/// so that the Euclidean norm equals the Frobenius norm.
pub fn svec(x: &DenseMatrix) -> Vec<f64> {
    let n = x.nrows();
    debug_assert_eq!(n, x.ncols());
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in j..n {
            if i == j {
                out.push(x[(i, j)]);
            } else {
                out.push(sqrt2 * x[(i, j)]);
            }
        }
    }
    out
}

/// Inverse of [`svec`]: rebuild the symmetric matrix.
pub fn unsvec(v: &[f64], n: usize) -> Result<DenseMatrix, OperatorError> {
    if v.len() != svec_len(n) {
        return Err(OperatorError::Dimension(format!(
            "unsvec: {} values cannot fill the lower triangle of an {n}x{n} matrix",
            v.len()
        )));
    }
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut x = DenseMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                x[(i, j)] = v[idx];
            } else {
                let val = v[idx] * inv_sqrt2;
                x[(i, j)] = val;
                x[(j, i)] = val;
            }
            idx += 1;
        }
    }
    Ok(x)
}

/// Explicit matrix of the operator restricted to symmetric inputs: the
/// m^2 x n(n+1)/2 matrix `L` with `L * svec(X) = vec(apply(X))`.
///
/// Each column is `vec(apply(W))` for a Frobenius-orthonormal basis
/// element W, assembled from outer products of the G_i columns.
pub fn matricize_sym(op: &MeasurementOperator) -> Result<DenseMatrix, OperatorError> {
    matricize_sym_with_cap(op, DEFAULT_SIZE_CAP)
}

pub fn matricize_sym_with_cap(
    op: &MeasurementOperator,
    cap: usize,
) -> Result<DenseMatrix, OperatorError> {
    let (n, m) = (op.n, op.m);
    let cols = svec_len(n);
    let entries = cols
        .checked_mul(m * m)
        .ok_or(OperatorError::Kernel(KernelError::SizeCap {
            entries: usize::MAX,
            cap,
        }))?;
    if entries > cap {
        return Err(OperatorError::Kernel(KernelError::SizeCap { entries, cap }));
    }
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut l = DenseMatrix::zeros(m * m, cols);
    let mut col_idx = 0;
    for j in 0..n {
        for i in j..n {
            {
                let mut col = l.column_mut(col_idx);
                for g in &op.gs {
                    let ci = g.column(i);
                    let cj = g.column(j);
                    if i == j {
                        // apply(E_ii) = sum_g c_i c_i^T
                        for b in 0..m {
                            for a in 0..m {
                                col[b * m + a] += ci[a] * ci[b];
                            }
                        }
                    } else {
                        // apply((E_ij + E_ji)/sqrt(2))
                        for b in 0..m {
                            for a in 0..m {
                                col[b * m + a] += inv_sqrt2 * (ci[a] * cj[b] + cj[a] * ci[b]);
                            }
                        }
                    }
                }
            }
            col_idx += 1;
        }
    }
    Ok(l)
}

/// Parameter choices for an expander operator at ambient dimension `n`
/// and target rank `r0`, with design constants `c1, c2 > 1`:
/// `m = round(sqrt(c1 c2 n r0))`, `d = round(sqrt(c2 n / (c1 r0)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpanderDesign {
    pub n: usize,
    pub r0: usize,
    pub c1: f64,
    pub c2: f64,
    pub m: usize,
    pub d: usize,
    /// m >= sqrt(n r0) up to rounding.
    pub m_at_least_sqrt_nr0: bool,
    /// m d >= c2 n up to rounding.
    pub md_covers_n: bool,
    /// d r0 <= m / c1 up to rounding.
    pub dr0_within_m: bool,
    /// m < n; false means the design is not compressive (usable for
    /// testing, flagged as a warning).
    pub compressive: bool,
}

/// Evaluate the design formulas and the consistency flags.
pub fn design_params(
    n: usize,
    r0: usize,
    c1: f64,
    c2: f64,
) -> Result<ExpanderDesign, OperatorError> {
    if r0 < 1 || n < r0 {
        return Err(OperatorError::BadParameter(format!(
            "need n >= r0 >= 1, got n={n} r0={r0}"
        )));
    }
    if !(c1 >= 1.0 && c2 >= 1.0) {
        return Err(OperatorError::BadParameter(format!(
            "need c1, c2 >= 1, got c1={c1} c2={c2}"
        )));
    }
    let nf = n as f64;
    let r0f = r0 as f64;
    let m = (c1 * c2 * nf * r0f).sqrt().round() as usize;
    let d = ((c2 * nf / (c1 * r0f)).sqrt().round() as usize).max(1);
    let mf = m as f64;
    let df = d as f64;
    // Rounding each of m and d perturbs products by at most half a unit
    // per factor; the flags allow exactly that slack.
    let m_at_least_sqrt_nr0 = (mf + 0.5) * (mf + 0.5) >= nf * r0f;
    let md_covers_n = mf * df + 0.5 * (mf + df) + 0.25 >= c2 * nf;
    let dr0_within_m = df * r0f <= (mf + 0.5) / c1 + 0.5 * r0f + 1e-9;
    Ok(ExpanderDesign {
        n,
        r0,
        c1,
        c2,
        m,
        d,
        m_at_least_sqrt_nr0,
        md_covers_n,
        dr0_within_m,
        compressive: m < n,
    })
}

/// Write the operator in the binary file format (magic "SXRM", version 1).
pub fn write_operator(op: &MeasurementOperator, path: &Path) -> Result<(), OperatorError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(op.n as u32).to_le_bytes())?;
    w.write_all(&(op.m as u32).to_le_bytes())?;
    w.write_all(&(op.d as u32).to_le_bytes())?;
    w.write_all(&[op.ensemble.tag()])?;
    w.write_all(&op.seed.to_le_bytes())?;
    match op.ensemble {
        Ensemble::Gaussian => {
            for g in &op.gs {
                for value in g.as_slice() {
                    w.write_all(&value.to_le_bytes())?;
                }
            }
        }
        Ensemble::SparseOnehot => {
            for g in &op.gs {
                for row in 0..op.m {
                    let col = (0..op.n)
                        .find(|&c| g[(row, c)] == 1.0)
                        .expect("sparse_onehot invariant: one 1 per row");
                    w.write_all(&(col as u32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read an operator file, rejecting unknown magic or version.
pub fn read_operator(path: &Path) -> Result<MeasurementOperator, OperatorError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(OperatorError::BadMagic);
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    if byte[0] != FORMAT_VERSION {
        return Err(OperatorError::BadVersion(byte[0]));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let m = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut byte)?;
    let ensemble = Ensemble::from_tag(byte[0])?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let seed = u64::from_le_bytes(u64buf);
    if n == 0 || m == 0 || d == 0 {
        return Err(OperatorError::Corrupt(format!(
            "zero dimension in header: n={n} m={m} d={d}"
        )));
    }
    let gs = match ensemble {
        Ensemble::Gaussian => {
            let mut gs = Vec::with_capacity(d);
            let mut f64buf = [0u8; 8];
            for _ in 0..d {
                let mut data = Vec::with_capacity(m * n);
                for _ in 0..m * n {
                    r.read_exact(&mut f64buf)?;
                    let value = f64::from_le_bytes(f64buf);
                    if !value.is_finite() {
                        return Err(OperatorError::Corrupt("non-finite entry".into()));
                    }
                    data.push(value);
                }
                gs.push(DenseMatrix::from_column_slice(m, n, &data));
            }
            gs
        }
        Ensemble::SparseOnehot => {
            let mut gs = Vec::with_capacity(d);
            for _ in 0..d {
                let mut g = DenseMatrix::zeros(m, n);
                for row in 0..m {
                    r.read_exact(&mut u32buf)?;
                    let col = u32::from_le_bytes(u32buf) as usize;
                    if col >= n {
                        return Err(OperatorError::Corrupt(format!(
                            "column index {col} out of range for n={n}"
                        )));
                    }
                    g[(row, col)] = 1.0;
                }
                gs.push(g);
            }
            gs
        }
    };
    Ok(MeasurementOperator {
        n,
        m,
        d,
        ensemble,
        seed,
        gs,
    })
}
