//! Seeded sampling helpers shared by the certification and harness code:
//! Gaussian matrices, Haar-distributed orthonormal factors, low-rank test
//! matrices, and the deterministic seed schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numkernel::DenseMatrix;

/// Deterministically combine seed components into a new 64-bit seed
/// (splitmix64 over the running state). Stable across platforms and
/// builds, unlike the std hasher.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for &part in parts {
        state = state.wrapping_add(part).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

/// RNG for one trial of a trial schedule: identical whether trials run
/// sequentially or across workers.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, trial]))
}

/// Matrix with i.i.d. standard normal entries, filled column-major.
pub fn random_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(rows, cols);
    for col in 0..cols {
        for row in 0..rows {
            a[(row, col)] = StandardNormal.sample(rng);
        }
    }
    a
}

/// n x r matrix with orthonormal columns whose span is Haar-distributed:
/// the Q factor of a Gaussian matrix.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DenseMatrix {
    assert!(r <= n, "cannot have {r} orthonormal columns in dimension {n}");
    let g = random_gaussian(rng, n, r);
    let qr = g.qr();
    qr.q()
}

/// Random PSD matrix of rank k: `F F^T` with F an n x k Gaussian factor.
/// k = 0 yields the zero matrix.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DenseMatrix {
    if k == 0 {
        return DenseMatrix::zeros(n, n);
    }
    let f = random_gaussian(rng, n, k);
    &f * f.transpose()
}

/// Random symmetric indefinite matrix with `pos` positive and `neg`
/// negative eigenvalues (magnitudes in [0.5, 1.5]) on a Haar-random
/// eigenbasis.
pub fn random_indefinite(
    rng: &mut ChaCha8Rng,
    n: usize,
    pos: usize,
    neg: usize,
) -> DenseMatrix {
    let r = pos + neg;
    if r == 0 {
        return DenseMatrix::zeros(n, n);
    }
    let u = random_orthonormal(rng, n, r);
    let mut scaled = DenseMatrix::zeros(n, r);
    for j in 0..r {
        let magnitude: f64 = 0.5 + rand::RngExt::random::<f64>(rng);
        let sign = if j < pos { 1.0 } else { -1.0 };
        let lambda = sign * magnitude;
        for i in 0..n {
            scaled[(i, j)] = u[(i, j)] * lambda;
        }
    }
    let x = &scaled * u.transpose();
    crate::numkernel::symmetrize(&x)
}

/// Uniform point on the unit sphere in `dim` dimensions.
pub fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
