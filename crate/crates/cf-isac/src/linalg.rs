//! Complex linear-algebra helpers shared across the detection and
//! estimation modules.
//!
//! All noise covariances in this crate are Hermitian positive definite by
//! construction; every solve goes through [`HermSolver`], which verifies
//! Hermitian symmetry, factorizes once, and never forms an explicit inverse
//! unless the caller asks for the full matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const C_ZERO: C64 = C64::new(0.0, 0.0);
pub const C_ONE: C64 = C64::new(1.0, 0.0);

/// Relative tolerance on `‖A − Aᴴ‖_F` before a matrix is accepted as
/// Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[inline]
pub fn cplx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn creal(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Symmetrize round-off: returns `(A + Aᴴ)/2`.
pub fn hermitize(a: &CMat) -> CMat {
    let mut out = a.clone();
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
        }
    }
    out
}

/// Relative Hermitian residual `‖A − Aᴴ‖_F / (1 + ‖A‖_F)`.
pub fn hermitian_residual(a: &CMat) -> f64 {
    let mut num = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            num += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
    }
    num.sqrt() / (1.0 + a.norm())
}

/// Cholesky-backed solver for Hermitian positive-definite systems.
pub struct HermSolver {
    chol: Cholesky<C64, Dyn>,
    dim: usize,
}

impl HermSolver {
    /// Checks Hermitian symmetry, symmetrizes round-off, and factorizes.
    ///
    /// Fails with [`Error::Numerical`] when the matrix is materially
    /// non-Hermitian or not positive definite; the failure message carries
    /// the smallest eigenvalue so conditioning problems are diagnosable.
    pub fn new(a: &CMat, context: &str) -> Result<Self> {
        let res = hermitian_residual(a);
        if res > HERMITIAN_TOL {
            return Err(Error::numerical(
                context,
                format!("matrix is not Hermitian (relative residual {res:.3e})"),
            ));
        }
        let sym = hermitize(a);
        let dim = sym.nrows();
        let not_pd = |sym: &CMat| {
            let eig = sym.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            Error::numerical(
                context,
                format!("matrix is not positive definite (min eigenvalue {min:.3e})"),
            )
        };
        match Cholesky::new(sym.clone()) {
            Some(chol) => {
                // nalgebra's complex Cholesky never fails (complex sqrt is
                // total); a Hermitian input is PD iff the factor diagonal
                // came out real positive.
                let l = chol.l_dirty();
                for i in 0..dim {
                    let d = l[(i, i)];
                    if !(d.re > 0.0 && d.im.abs() <= 1e-9 * d.re) {
                        return Err(not_pd(&sym));
                    }
                }
                Ok(Self { chol, dim })
            }
            None => Err(not_pd(&sym)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `A⁻¹ b`.
    pub fn solve_vec(&self, b: &CVec) -> CVec {
        self.chol.solve(b)
    }

    /// `A⁻¹ B`.
    pub fn solve_mat(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    /// Full inverse; used only where the matrix itself is the deliverable
    /// (posterior covariances), never as a solving device.
    pub fn inverse(&self) -> CMat {
        self.chol.inverse()
    }
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Stacks vectors vertically.
pub fn stack_vecs(vecs: &[CVec]) -> CVec {
    let n: usize = vecs.iter().map(|v| v.len()).sum();
    let mut out = CVec::zeros(n);
    let mut r = 0;
    for v in vecs {
        out.rows_mut(r, v.len()).copy_from(v);
        r += v.len();
    }
    out
}

/// Rotates a unit vector so its largest-magnitude entry is real positive.
///
/// SVD vectors are unique only up to a global phase; fixing it keeps
/// precoders deterministic across runs and platforms.
pub fn fix_global_phase(v: &mut CVec) {
    let mut best = 0usize;
    let mut best_mag = 0.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.norm_sqr();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best] / creal(v[best].norm());
        let rot = phase.conj();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// Real part of a scalar that is real in exact arithmetic; debug-asserts the
/// imaginary residue stays below `1e-9` of the magnitude.
pub fn assert_real(z: C64, context: &str) -> f64 {
    let mag = z.norm();
    debug_assert!(
        z.im.abs() <= 1e-9 * (1.0 + mag),
        "{context}: imaginary residue {:.3e} on magnitude {:.3e}",
        z.im,
        mag
    );
    z.re
}
