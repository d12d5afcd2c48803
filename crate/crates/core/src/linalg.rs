//! Small complex linear-algebra helpers shared by the channel, saturation and
//! beamforming code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Unit-modulus phasor `e^{j phase}`.
#[inline]
pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Squared Frobenius norm.
pub fn fro_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn vec_norm_sq(v: impl IntoIterator<Item = Complex64>) -> f64 {
    v.into_iter().map(|z| z.norm_sqr()).sum()
}

/// Largest eigenvalue of a Hermitian matrix.
///
/// 1×1 and 2×2 inputs use the closed form; larger ones go through a
/// Hermitian eigen-decomposition.
pub fn hermitian_max_eig(g: &CMat) -> f64 {
    debug_assert_eq!(g.nrows(), g.ncols());
    match g.nrows() {
        0 => 0.0,
        1 => g[(0, 0)].re,
        2 => max_eig_2x2(g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)]),
        _ => SymmetricEigen::new(g.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Largest eigenvalue of `[[a, b], [conj(b), d]]`.
#[inline]
pub fn max_eig_2x2(a: f64, d: f64, b: Complex64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    half_tr + (half_diff * half_diff + b.norm_sqr()).sqrt()
}

/// Squared largest singular value, computed from the Gram matrix of the
/// smaller side.
pub fn sigma_max_sq(a: &CMat) -> f64 {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    if m.min(n) == 1 {
        return fro_sq(a);
    }
    let gram = if n <= m { a.adjoint() * a } else { a * a.adjoint() };
    hermitian_max_eig(&gram).max(0.0)
}

/// Kronecker product of two vectors, `(a ⊗ b)[i * len(b) + j] = a[i] b[j]`.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let nb = b.len();
    CVec::from_fn(a.len() * nb, |k, _| a[k / nb] * b[k % nb])
}

/// Matrix whose columns are the given vectors.
pub fn hstack(cols: &[&CVec]) -> CMat {
    let rows = cols.first().map_or(0, |c| c.len());
    CMat::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}
