//! Pushforward connections of a bundle map and their smoothing family.
//!
//! For `α: E -> F` with local matrices `A`, connection matrices `ω_E`, `ω_F` and the
//! smoothed partial inverse `β_s`, the family
//! `D_s = α D_E β_s + D_F (1 − α β_s)` has connection matrix
//! `ω_s = ω_F + Θ β_s` with `Θ = A ω_E − dA − ω_F A`, so that `∂_s ω_s = Θ ∂_s β_s`.
//! For surjective maps the mirrored family `β_s D_F α + (1 − β_s α) D_E` lives on `E`
//! with matrix `ω_E − β_s Θ`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bundle::{matrix_gradient, BundleMapData, ConnectionData, FiberMetric, MatrixFn};
use crate::error::{Error, Result};
use crate::geom::{ManifoldCover, MatrixForm};
use crate::linalg::{self, c, CMat};

/// Parameter standing in for `s = ∞`.
pub const S_MAX: f64 = 1e6;

/// Monotone `χ: [0, ∞] -> [0, 1]` with `χ(0) = 0`, `χ(∞) = 1`.
#[derive(Clone, Copy)]
pub struct ApproximateOne {
    pub name: &'static str,
    pub chi: fn(f64) -> f64,
    pub dchi: fn(f64) -> f64,
}

impl fmt::Debug for ApproximateOne {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl Default for ApproximateOne {
    fn default() -> Self {
        ApproximateOne::rational()
    }
}

impl ApproximateOne {
    /// `χ(t) = t / (1 + t)`, which makes `β_s = α*(αα* + s²)⁻¹`.
    pub fn rational() -> Self {
        ApproximateOne {
            name: "t/(1+t)",
            chi: |t| t / (1.0 + t),
            dchi: |t| 1.0 / ((1.0 + t) * (1.0 + t)),
        }
    }

    /// `χ(t) = 1 − exp(−t)`.
    pub fn exponential() -> Self {
        ApproximateOne {
            name: "1-exp(-t)",
            chi: |t| -(-t).exp_m1(),
            dchi: |t| (-t).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let chi = self.chi;
        if chi(0.0).abs() > 1e-15 {
            return Err(Error::InvalidParameter(format!("{}: chi(0) = {}", self.name, chi(0.0))));
        }
        if (chi(1e12) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("{}: chi(1e12) = {}", self.name, chi(1e12))));
        }
        for k in -120..=120 {
            let t = 10f64.powf(k as f64 / 10.0);
            if (self.dchi)(t) < 0.0 {
                return Err(Error::InvalidParameter(format!("{}: chi' < 0 at {t}", self.name)));
            }
        }
        Ok(())
    }

    /// `χ(t/s²)/t`, extended continuously to `t = 0`.
    pub fn f_s(&self, t: f64, s: f64) -> f64 {
        let s2 = s * s;
        let u = t.max(0.0) / s2;
        if u < 1e-12 {
            (self.dchi)(0.0) / s2
        } else {
            (self.chi)(u) / (u * s2)
        }
    }

    /// `∂_s [χ(t/s²)/t] = −2 χ'(t/s²) / s³`.
    pub fn df_s(&self, t: f64, s: f64) -> f64 {
        -2.0 * (self.dchi)(t.max(0.0) / (s * s)) / (s * s * s)
    }
}

/// Pointwise spectral data of the smaller of `α*α`, `αα*`, self-adjoint for the
/// metric of its space, with `β_s = left · diag(f_s(λ)) · right`. Using the smaller
/// Gram matrix keeps structurally zero eigenvalues out of `f_s`.
#[derive(Debug, Clone)]
pub struct SpectralPencil {
    pub left: CMat,
    pub right: CMat,
    pub lambda: Vec<f64>,
}

impl SpectralPencil {
    /// `a: E -> F`, metrics `h_e`, `h_f`.
    pub fn new(a: &CMat, h_e: &CMat, h_f: &CMat) -> Option<Self> {
        let astar = linalg::metric_adjoint(a, h_e, h_f)?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Some(SpectralPencil {
                left: CMat::zeros(a.ncols(), 0),
                right: CMat::zeros(0, a.nrows()),
                lambda: Vec::new(),
            });
        }
        let injective = a.nrows() >= a.ncols();
        let (gram, h) = if injective { (&astar * a, h_e) } else { (a * &astar, h_f) };
        let lh = h.clone().cholesky()?.l().adjoint();
        let lh_inv = linalg::inverse(&lh)?;
        let m = linalg::hermitize(&(&lh * gram * &lh_inv));
        let eig = m.symmetric_eigen();
        let v = eig.eigenvectors;
        let (left, right) = if injective {
            // f(α*α) α*
            (lh_inv * &v, v.adjoint() * lh * astar)
        } else {
            // α* f(αα*)
            (astar * lh_inv * &v, v.adjoint() * lh)
        };
        Some(SpectralPencil {
            left,
            right,
            lambda: eig.eigenvalues.iter().copied().collect(),
        })
    }

    fn apply(&self, f: impl Fn(f64) -> f64) -> CMat {
        let mut left = self.left.clone();
        for (j, &l) in self.lambda.iter().enumerate() {
            let v = c(f(l));
            for i in 0..left.nrows() {
                left[(i, j)] *= v;
            }
        }
        left * &self.right
    }

    pub fn beta_s(&self, s: f64, chi: &ApproximateOne) -> CMat {
        self.apply(|t| chi.f_s(t, s))
    }

    pub fn beta_s_dot(&self, s: f64, chi: &ApproximateOne) -> CMat {
        self.apply(|t| chi.df_s(t, s))
    }
}

/// `β_s` at one point.
pub fn beta_s_matrix(a: &CMat, h_e: &CMat, h_f: &CMat, s: f64, chi: &ApproximateOne) -> Result<CMat> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("beta_s needs s > 0, got {s}")));
    }
    SpectralPencil::new(a, h_e, h_f)
        .map(|p| p.beta_s(s, chi))
        .ok_or_else(|| Error::InvalidParameter("metric is not positive definite".into()))
}

/// `β = (α*α)⁻¹α*` for injective `α`, or `α*(αα*)⁻¹` for surjective `α`.
pub fn beta_matrix(a: &CMat, h_e: &CMat, h_f: &CMat) -> Option<CMat> {
    let astar = linalg::metric_adjoint(a, h_e, h_f)?;
    if a.nrows() >= a.ncols() {
        Some(linalg::inverse(&(&astar * a))? * astar)
    } else {
        Some(&astar * linalg::inverse(&(a * &astar))?)
    }
}

fn check_floor(alpha: &BundleMapData) -> Result<()> {
    let cover = alpha.cover();
    for (i, ch) in cover.charts().iter().enumerate() {
        let mask = alpha.mask(i);
        for node in 0..ch.node_count() {
            if mask[node] {
                continue;
            }
            let s = linalg::sigma_min(&alpha.sampled(i).at(node, 0));
            if s < crate::bundle::DEFAULT_INJECTIVITY_FLOOR {
                return Err(Error::InjectivityFloor {
                    chart: ch.name().to_string(),
                    node,
                    sigma_min: s,
                });
            }
        }
    }
    Ok(())
}

/// The partial inverse `β` as a bundle map `F -> E` (singular at declared points).
pub fn beta(alpha: &BundleMapData, h_e: &FiberMetric, h_f: &FiberMetric) -> Result<BundleMapData> {
    check_floor(alpha)?;
    let maps = (0..alpha.maps().len())
        .map(|i| {
            let (a, he, hf) = (alpha.maps()[i].clone(), h_e.fns()[i].clone(), h_f.fns()[i].clone());
            Arc::new(move |x: &[f64]| {
                let m = a(x);
                beta_matrix(&m, &he(x), &hf(x)).unwrap_or_else(|| CMat::zeros(m.ncols(), m.nrows()))
            }) as MatrixFn
        })
        .collect();
    alpha.rebind(alpha.target().clone(), alpha.source().clone(), maps)
}

/// The smoothed partial inverse `β_s`, defined on all of the base.
pub fn beta_s(
    alpha: &BundleMapData,
    s: f64,
    chi: ApproximateOne,
    h_e: &FiberMetric,
    h_f: &FiberMetric,
) -> Result<BundleMapData> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("beta_s needs s > 0, got {s}")));
    }
    let maps = (0..alpha.maps().len())
        .map(|i| {
            let (a, he, hf) = (alpha.maps()[i].clone(), h_e.fns()[i].clone(), h_f.fns()[i].clone());
            Arc::new(move |x: &[f64]| {
                let m = a(x);
                beta_s_matrix(&m, &he(x), &hf(x), s, &chi).unwrap_or_else(|_| CMat::zeros(m.ncols(), m.nrows()))
            }) as MatrixFn
        })
        .collect();
    alpha.rebind(alpha.target().clone(), alpha.source().clone(), maps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FamilyKind {
    /// Lives on `F`; `s = ∞` is `D_F`, `s -> 0` is the pushforward connection.
    Pushforward,
    /// Lives on `E` for surjective `α`; `s = ∞` is `D_E`, `s -> 0` is `D_F ⊕ D_K`.
    Pullback,
}

/// A one-parameter family of connections `ω_s`, `s ∈ (0, ∞)`, with `∂_s ω_s` in closed form.
#[derive(Clone)]
pub struct ConnectionFamily {
    pub kind: FamilyKind,
    pub chi: ApproximateOne,
    cover: Arc<ManifoldCover>,
    base: Vec<MatrixForm>,
    theta: Vec<MatrixForm>,
    pencils: Vec<Vec<SpectralPencil>>,
    rank: usize,
}

impl fmt::Debug for ConnectionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionFamily")
            .field("kind", &self.kind)
            .field("chi", &self.chi)
            .field("rank", &self.rank)
            .finish()
    }
}

/// `Θ = A ω_E − dA − ω_F A` at one point, from the map closure and connection values.
pub fn theta_at(a_fn: &dyn Fn(&[f64]) -> CMat, x: &[f64], w_e: &[CMat], w_f: &[CMat]) -> Vec<CMat> {
    let a = a_fn(x);
    let da = matrix_gradient(a_fn, x);
    (0..x.len())
        .map(|k| &a * &w_e[k] - &da[k] - &w_f[k] * &a)
        .collect()
}

fn build_family(
    kind: FamilyKind,
    alpha: &BundleMapData,
    d_e: &ConnectionData,
    d_f: &ConnectionData,
    chi: ApproximateOne,
    h_e: &FiberMetric,
    h_f: &FiberMetric,
) -> Result<ConnectionFamily> {
    chi.validate()?;
    let cover = alpha.cover().clone();
    let (re, rf) = (alpha.source().rank(), alpha.target().rank());
    if d_e.rank() != re || d_f.rank() != rf {
        return Err(Error::ShapeMismatch("connection ranks do not match the bundle map".into()));
    }
    let mut base = Vec::new();
    let mut theta = Vec::new();
    let mut pencils = Vec::new();
    for (i, ch) in cover.charts().iter().enumerate() {
        let a_fn = alpha.maps()[i].clone();
        let ch2 = ch.clone();
        let t = MatrixForm::from_nodes(ch.clone(), 1, rf, re, |n| {
            let x = ch2.node_coords(n);
            theta_at(a_fn.as_ref(), &x, &d_e.omega(i).at_node(n), &d_f.omega(i).at_node(n))
        })?;
        let p: Vec<SpectralPencil> = (0..ch.node_count())
            .into_par_iter()
            .map(|n| {
                SpectralPencil::new(&alpha.sampled(i).at(n, 0), &h_e.at_node(i, n), &h_f.at_node(i, n)).ok_or_else(
                    || Error::SingularMetric {
                        chart: ch.name().to_string(),
                        node: n,
                        min_eigenvalue: 0.0,
                    },
                )
            })
            .collect::<Result<_>>()?;
        theta.push(t);
        pencils.push(p);
        base.push(match kind {
            FamilyKind::Pushforward => d_f.omega(i).clone(),
            FamilyKind::Pullback => d_e.omega(i).clone(),
        });
    }
    Ok(ConnectionFamily {
        kind,
        chi,
        cover,
        base,
        theta,
        pencils,
        rank: match kind {
            FamilyKind::Pushforward => rf,
            FamilyKind::Pullback => re,
        },
    })
}

/// Family on `F` interpolating `D_F` (s = ∞) and the pushforward connection (s -> 0).
pub fn pushforward_family(
    alpha: &BundleMapData,
    d_e: &ConnectionData,
    d_f: &ConnectionData,
    chi: ApproximateOne,
    h_e: &FiberMetric,
    h_f: &FiberMetric,
) -> Result<ConnectionFamily> {
    build_family(FamilyKind::Pushforward, alpha, d_e, d_f, chi, h_e, h_f)
}

/// Family on `E` for surjective `α`, interpolating `D_E` (s = ∞) and `D_F ⊕ D_K` (s -> 0).
pub fn pullback_family(
    alpha: &BundleMapData,
    d_e: &ConnectionData,
    d_f: &ConnectionData,
    chi: ApproximateOne,
    h_e: &FiberMetric,
    h_f: &FiberMetric,
) -> Result<ConnectionFamily> {
    let (re, rf) = (alpha.source().rank(), alpha.target().rank());
    if rf > re {
        return Err(Error::NotSurjective {
            chart: alpha.cover().chart(0).name().to_string(),
            node: 0,
            sigma_min: 0.0,
        });
    }
    let cover = alpha.cover();
    for (i, ch) in cover.charts().iter().enumerate() {
        let mask = alpha.mask(i);
        for node in 0..ch.node_count() {
            if mask[node] {
                continue;
            }
            let s = linalg::sigma_min(&alpha.sampled(i).at(node, 0));
            if s < crate::bundle::DEFAULT_INJECTIVITY_FLOOR {
                return Err(Error::NotSurjective {
                    chart: ch.name().to_string(),
                    node,
                    sigma_min: s,
                });
            }
        }
    }
    build_family(FamilyKind::Pullback, alpha, d_e, d_f, chi, h_e, h_f)
}

impl ConnectionFamily {
    pub fn cover(&self) -> &Arc<ManifoldCover> {
        &self.cover
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn charts(&self) -> usize {
        self.base.len()
    }

    /// Connection at `s = ∞`.
    pub fn far_end(&self, i: usize) -> &MatrixForm {
        &self.base[i]
    }

    pub fn theta(&self, i: usize) -> &MatrixForm {
        &self.theta[i]
    }

    fn field(&self, i: usize, f: impl Fn(&SpectralPencil) -> CMat + Sync) -> Result<MatrixForm> {
        let ch = self.cover.chart(i).clone();
        let (r, cdim) = {
            let p = &self.pencils[i][0];
            (p.left.nrows(), p.right.ncols())
        };
        MatrixForm::field(ch, r, cdim, |n| f(&self.pencils[i][n]))
    }

    fn combine(&self, i: usize, b: &MatrixForm) -> Result<MatrixForm> {
        match self.kind {
            FamilyKind::Pushforward => self.theta[i].matrix_wedge(b),
            FamilyKind::Pullback => Ok(b.matrix_wedge(&self.theta[i])?.scale(c(-1.0))),
        }
    }

    /// `ω_s` in chart `i`.
    pub fn omega_at(&self, i: usize, s: f64) -> Result<MatrixForm> {
        let b = self.field(i, |p| p.beta_s(s, &self.chi))?;
        self.base[i].add(&self.combine(i, &b)?)
    }

    /// `∂_s ω_s` in chart `i`.
    pub fn omega_dot_at(&self, i: usize, s: f64) -> Result<MatrixForm> {
        let b = self.field(i, |p| p.beta_s_dot(s, &self.chi))?;
        self.combine(i, &b)
    }

    /// Connection with `β_s` replaced by the exact partial inverse (the `s -> 0` end).
    pub fn near_end(&self, i: usize) -> Result<MatrixForm> {
        let b = self.field(i, |p| {
            let top = p.lambda.iter().copied().fold(0.0, f64::max);
            p.apply(|t| if t > 1e-10 * top { 1.0 / t } else { 0.0 })
        })?;
        self.base[i].add(&self.combine(i, &b)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_chi_is_an_approximate_one() {
        ApproximateOne::rational().validate().unwrap();
        ApproximateOne::exponential().validate().unwrap();
    }

    #[test]
    fn beta_s_of_identity() {
        let id = linalg::identity(2);
        for s in [0.1, 1.0, 3.0] {
            let b = beta_s_matrix(&id, &id, &id, s, &ApproximateOne::rational()).unwrap();
            let expect = &id * c(1.0 / (1.0 + s * s));
            assert!(linalg::frobenius(&(b - expect)) < 1e-14);
        }
    }

    #[test]
    fn beta_is_a_left_inverse() {
        let a = CMat::from_row_slice(3, 2, &[c(1.0), c(0.2), c(-0.4), c(1.5), c(0.3), c(0.7)]);
        let he = linalg::identity(2) * c(1.3);
        let hf = linalg::identity(3);
        let b = beta_matrix(&a, &he, &hf).unwrap();
        assert!(linalg::frobenius(&(&b * &a - linalg::identity(2))) < 1e-10);
        let small = beta_s_matrix(&a, &he, &hf, 1e-4, &ApproximateOne::rational()).unwrap();
        assert!(linalg::frobenius(&(small - &b)) < 1e-6);
        let big = beta_s_matrix(&a, &he, &hf, S_MAX, &ApproximateOne::rational()).unwrap();
        assert!(linalg::frobenius(&big) < 1e-6);
    }
}
