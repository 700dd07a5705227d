//! Small dense complex matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm bound via the Frobenius norm.
pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Determinant and inverse of a small Hermitian matrix given row-major.
/// Closed forms for n <= 2, LU otherwise.
pub fn small_det_inv(n: usize, a: &[Complex64]) -> (Complex64, Vec<Complex64>) {
    match n {
        1 => (a[0], vec![a[0].inv()]),
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            let r = det.inv();
            (det, vec![a[3] * r, -a[1] * r, -a[2] * r, a[0] * r])
        }
        _ => {
            let m = CMat::from_row_slice(n, n, a);
            let det = m.determinant();
            let inv = m.try_inverse().unwrap_or_else(|| CMat::from_element(n, n, Complex64::new(f64::NAN, 0.0)));
            let mut out = Vec::with_capacity(n * n);
            for r in 0..n {
                for c in 0..n {
                    out.push(inv[(r, c)]);
                }
            }
            (det, out)
        }
    }
}

/// Positive definiteness of a small Hermitian matrix given row-major.
pub fn small_is_positive_definite(n: usize, a: &[Complex64]) -> bool {
    match n {
        1 => a[0].re > 0.0,
        2 => a[0].re > 0.0 && (a[0] * a[3] - a[1] * a[2]).re > 0.0,
        _ => min_hermitian_eigenvalue(&CMat::from_row_slice(n, n, a)) > 0.0,
    }
}

pub fn cvec(v: &[Complex64]) -> DVector<Complex64> {
    DVector::from_row_slice(v)
}
