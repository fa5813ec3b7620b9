//! Small complex linear-algebra kernels shared by the estimation and
//! processing code.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex64`. Vectors that
//! live inside flat storage (channels, estimates, combiner blocks) are
//! handled as plain slices so that the hot loops avoid allocation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigenvalues below this fraction of the largest one are treated as zero
/// by the pseudo-inverse.
pub const PINV_REL_THRESHOLD: f64 = 1e-12;

/// Negative eigenvalues down to `-CLIP_REL * Σ|λ|/n` are rounding noise and
/// get clipped to zero when taking a Hermitian square root.
pub const CLIP_REL: f64 = 1e-10;

/// `a^H b` for two equally long slices.
#[inline]
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `x^H M x`, real part (M is Hermitian).
pub fn quad_form(m: &CMatrix, x: &[Complex64]) -> f64 {
    let n = x.len();
    debug_assert_eq!(m.nrows(), n);
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..n {
        let mut col = Complex64::new(0.0, 0.0);
        for r in 0..n {
            col += m[(r, c)] * x[r].conj();
        }
        acc += col * x[c];
    }
    acc.re
}

/// `y = M x` written into a new vector.
pub fn mat_vec(m: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    let (rows, cols) = m.shape();
    debug_assert_eq!(cols, x.len());
    let mut y = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        let xc = x[c];
        for r in 0..rows {
            y[r] += m[(r, c)] * xc;
        }
    }
    y
}

/// Adds `weight * x x^H` to the Hermitian matrix `acc`.
///
/// Only the upper triangle is accumulated; the lower one is then overwritten
/// with its mirror, so `acc` must be Hermitian on entry. Returns the number
/// of complex multiplications spent, `n(n+1)/2`.
pub fn rank_one_update(acc: &mut CMatrix, x: &[Complex64], weight: f64) -> u64 {
    let n = x.len();
    debug_assert_eq!(acc.nrows(), n);
    let data = acc.as_mut_slice();
    for c in 0..n {
        let xc = x[c].conj() * weight;
        let col = &mut data[c * n..c * n + c + 1];
        for (a, xr) in col.iter_mut().zip(&x[..=c]) {
            *a += xr * xc;
        }
    }
    for c in 0..n {
        for r in 0..c {
            data[r * n + c] = data[c * n + r].conj();
        }
    }
    (n * (n + 1) / 2) as u64
}

/// Sets the diagonal to its real part, removing rounding residue.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for c in 0..n {
        m[(c, c)].im = 0.0;
        for r in 0..c {
            let avg = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
            m[(r, c)] = avg;
            m[(c, r)] = avg.conj();
        }
    }
}

pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Sorted (ascending) eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Small negative eigenvalues (rounding) are clipped to zero; anything more
/// negative than `CLIP_REL * Σ|λ|/n` is rejected.
pub fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if scale == 0.0 {
        return Ok(CMatrix::zeros(n, n));
    }
    let mut roots = Vec::with_capacity(n);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -CLIP_REL * scale {
            return Err(Error::Numeric(format!(
                "matrix is not positive semi-definite (eigenvalue {lambda:e}, scale {scale:e})"
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    let u = &eig.eigenvectors;
    let mut out = CMatrix::zeros(n, n);
    for (j, &s) in roots.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for c in 0..n {
            let ucj = u[(c, j)].conj() * s;
            for r in 0..n {
                out[(r, c)] += u[(r, j)] * ucj;
            }
        }
    }
    hermitize(&mut out);
    Ok(out)
}

/// Moore–Penrose pseudo-inverse of a Hermitian matrix via its
/// eigendecomposition; eigenvalues below `rel * λ_max` are dropped.
pub fn hermitian_pinv(m: &CMatrix, rel: f64) -> CMatrix {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut out = CMatrix::zeros(n, n);
    if lmax == 0.0 {
        return out;
    }
    let u = &eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= rel * lmax {
            continue;
        }
        let inv = 1.0 / lambda;
        for c in 0..n {
            let ucj = u[(c, j)].conj() * inv;
            for r in 0..n {
                out[(r, c)] += u[(r, j)] * ucj;
            }
        }
    }
    out
}

enum SolverKind {
    Cholesky(Cholesky<Complex64, Dyn>),
    Pinv(CMatrix),
}

/// Solves `A x = b` for Hermitian `A`.
///
/// Positive-definite systems go through a Cholesky factorization. When the
/// factorization fails the solver falls back to the pseudo-inverse, so the
/// result is `A^† b` for singular Gram matrices.
pub struct HermitianSolver {
    kind: SolverKind,
    dim: usize,
}

impl HermitianSolver {
    pub fn new(a: CMatrix) -> Self {
        let dim = a.nrows();
        match Cholesky::new(a.clone()) {
            Some(chol) => HermitianSolver {
                kind: SolverKind::Cholesky(chol),
                dim,
            },
            None => HermitianSolver {
                kind: SolverKind::Pinv(hermitian_pinv(&a, PINV_REL_THRESHOLD)),
                dim,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_pseudo_inverse(&self) -> bool {
        matches!(self.kind, SolverKind::Pinv(_))
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        match &self.kind {
            SolverKind::Cholesky(chol) => {
                let rhs = CVector::from_column_slice(b);
                chol.solve(&rhs).as_slice().to_vec()
            }
            SolverKind::Pinv(p) => mat_vec(p, b),
        }
    }

    /// `x^H A^† x`.
    pub fn inverse_quad_form(&self, x: &[Complex64]) -> f64 {
        dot_h(x, &self.solve(x)).re
    }
}

/// Dense inverse of a Hermitian positive-definite matrix.
pub fn hermitian_inverse(a: &CMatrix) -> Result<CMatrix> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let mut inv = chol.inverse();
    hermitize(&mut inv);
    Ok(inv)
}
