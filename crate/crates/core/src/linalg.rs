//! Small dense helpers on complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(r: usize) -> CMat {
    CMat::identity(r, r)
}

/// Hermitian part `(h + hᴴ)/2`, which is exactly Hermitian.
pub fn hermitize(h: &CMat) -> CMat {
    let mut out = (h + h.adjoint()) * c(0.5);
    for i in 0..out.nrows() {
        out[(i, i)] = c(out[(i, i)].re);
    }
    out
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &CMat) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    h.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn sigma_min(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return f64::INFINITY;
    }
    a.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(a.clone());
    }
    a.clone().try_inverse()
}

/// Metric adjoint `hE⁻¹ Aᴴ hF` of `A: E -> F`.
pub fn metric_adjoint(a: &CMat, h_e: &CMat, h_f: &CMat) -> Option<CMat> {
    Some(inverse(h_e)? * a.adjoint() * h_f)
}

/// Apply a real function to a matrix that is self-adjoint for the inner product `h`,
/// i.e. `X = L⁻ᴴ M Lᴴ` with `h = LLᴴ` and `M` Hermitian.
pub fn metric_spectral_apply(x: &CMat, h: &CMat, f: impl Fn(f64) -> f64) -> Option<CMat> {
    let n = x.nrows();
    if n == 0 {
        return Some(x.clone());
    }
    let l = h.clone().cholesky()?.l();
    let lh = l.adjoint();
    let lh_inv = inverse(&lh)?;
    let m = hermitize(&(&lh * x * &lh_inv));
    let eig = m.symmetric_eigen();
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = c(f(eig.eigenvalues[i]));
    }
    let fm = &eig.eigenvectors * d * eig.eigenvectors.adjoint();
    Some(lh_inv * fm * lh)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_square_root_squares_back() {
        let h = CMat::from_row_slice(2, 2, &[c(2.0), Complex64::new(0.3, 0.1), Complex64::new(0.3, -0.1), c(1.0)]);
        let a = CMat::from_row_slice(2, 1, &[Complex64::new(1.0, 0.5), c(-0.7)]);
        let he = CMat::from_element(1, 1, c(1.7));
        let x = &a * metric_adjoint(&a, &he, &h).unwrap();
        let r = metric_spectral_apply(&x, &h, |t| t.max(0.0).sqrt()).unwrap();
        assert!(frobenius(&(&r * &r - &x)) < 1e-12);
    }
}
