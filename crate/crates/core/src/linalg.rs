//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Diagonal loading applied before every solve, relative to `trace / dim`.
pub const DIAGONAL_LOADING: f64 = 1e-8;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|d| d.re).sum()
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// `m + rel * tr(m)/dim * I`.
pub fn load_diagonal(m: &CMatrix, rel: f64) -> CMatrix {
    let dim = m.nrows();
    let delta = rel * trace_re(m) / dim as f64;
    let mut out = m.clone();
    for i in 0..dim {
        out[(i, i)] += c(delta);
    }
    out
}

/// Solves `a x = b` for Hermitian positive-definite `a`, falling back to LU.
pub fn solve_hermitian(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Some(x);
        }
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn unit(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = c(1.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_solve_and_eigenvalues() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[c(2.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0), c(2.0)],
        );
        let b = CMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        let x = solve_hermitian(&a, &b).unwrap();
        assert!((&a * &x - &b).norm() < 1e-12);
        let ev = hermitian_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn loading_is_trace_relative() {
        let m = CMatrix::identity(4, 4) * c(3.0);
        let l = load_diagonal(&m, 0.5);
        assert!((l[(0, 0)].re - 4.5).abs() < 1e-15);
    }
}
