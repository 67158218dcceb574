//! Transgression forms of connection families.
//!
//! `T = ∫₀^∞ φ(∂_s ω_s ; Ω_s) ds` is computed with Gauss–Legendre nodes in `u ∈ (0, 1)`
//! and `s = u/(1−u)`. With this orientation `dT = φ(Ω_∞) − φ(Ω_0)`, i.e.
//! `φ(D_F) − φ(D⃗)` for the pushforward family and `φ(D_E) − φ(D_F ⊕ D_K)` for
//! the surjective one.

use rayon::prelude::*;

use crate::bundle::curvature_of;
use crate::error::{Error, Result};
use crate::geom::{DifferentialForm, MatrixForm};
use crate::invariant::InvariantPolynomial;
use crate::linalg::c;
use crate::pushforward::{ConnectionFamily, FamilyKind};
use crate::quadrature::gauss_legendre;

pub const DEFAULT_QUAD_NODES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes: DEFAULT_QUAD_NODES,
        }
    }
}

impl QuadratureSpec {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidParameter("quadrature needs at least one node".into()));
        }
        Ok(QuadratureSpec { nodes })
    }

    /// `(s_k, w_k · ds/du)` pairs, all with `0 < s_k < ∞`.
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        Ok(gauss_legendre(self.nodes, 0.0, 1.0)?
            .into_iter()
            .map(|(u, w)| (u / (1.0 - u), w / ((1.0 - u) * (1.0 - u))))
            .collect())
    }
}

/// `T` in every chart of the family's cover.
#[derive(Debug, Clone)]
pub struct TransgressionField {
    pub phi: String,
    pub degree: usize,
    pub quadrature: QuadratureSpec,
    pub kind: FamilyKind,
    pub forms: Vec<DifferentialForm>,
}

impl TransgressionField {
    pub fn form(&self, i: usize) -> &DifferentialForm {
        &self.forms[i]
    }

    pub fn exterior_derivative(&self) -> Vec<DifferentialForm> {
        self.forms.iter().map(DifferentialForm::exterior_derivative).collect()
    }

    /// Largest pointwise difference to another field off the masks.
    pub fn max_difference(&self, other: &TransgressionField, masks: &[Vec<bool>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, (a, b)) in self.forms.iter().zip(&other.forms).enumerate() {
            let d = a.sub(b)?;
            worst = worst.max(d.max_norm_where(|n| !masks[i][n]));
        }
        Ok(worst)
    }
}

fn summed(terms: Vec<Result<DifferentialForm>>, chart: &MatrixForm, degree: usize) -> Result<DifferentialForm> {
    let mut acc = DifferentialForm::zero(chart.chart().clone(), degree)?;
    for t in terms {
        acc.add_assign(&t?)?;
    }
    Ok(acc)
}

fn t_degree(phi: &InvariantPolynomial) -> Result<usize> {
    match phi.degree() {
        0 => Err(Error::InvalidParameter(format!("{} has degree 0", phi.name))),
        k => Ok(2 * k - 1),
    }
}

/// `T = Σ_k w_k φ(∂_s ω_{s_k} ; Ω_{s_k})`.
pub fn transgress(fam: &ConnectionFamily, phi: &InvariantPolynomial, q: QuadratureSpec) -> Result<TransgressionField> {
    let dim = fam.cover().dim();
    let degree = t_degree(phi)?;
    let points = q.points()?;
    let mut forms = Vec::with_capacity(fam.charts());
    for i in 0..fam.charts() {
        let ch = fam.cover().chart(i).clone();
        if degree > dim {
            forms.push(DifferentialForm::vanishing(ch, degree));
            continue;
        }
        let terms: Vec<Result<DifferentialForm>> = points
            .par_iter()
            .map(|&(s, w)| {
                let omega = fam.omega_at(i, s)?;
                let dot = fam.omega_dot_at(i, s)?;
                let curv = curvature_of(&omega)?;
                Ok(phi.polarize(&dot, &curv)?.scale(c(w)))
            })
            .collect();
        forms.push(summed(terms, fam.far_end(i), degree)?);
    }
    Ok(TransgressionField {
        phi: phi.name.clone(),
        degree,
        quadrature: q,
        kind: fam.kind,
        forms,
    })
}

/// Off-mask size of `φ(Ω_far) − φ(Ω_near) − dT`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdentityResidual {
    pub max: f64,
    pub per_chart: Vec<f64>,
    /// Largest off-mask value of `φ(Ω_far) − φ(Ω_near)`, for scale.
    pub lhs_scale: f64,
}

/// Residual of `φ(Ω_far) − φ(Ω_near) = dT`, where `far`/`near` are curvatures of the
/// family's ends (`Ω_F` and `Ω_E ⊕ Ω_⊥` for pushforwards).
pub fn check_transgression_identity(
    t: &TransgressionField,
    phi: &InvariantPolynomial,
    far: &[MatrixForm],
    near: &[MatrixForm],
    masks: &[Vec<bool>],
) -> Result<IdentityResidual> {
    let mut per_chart = Vec::new();
    let mut lhs_scale: f64 = 0.0;
    for (i, tf) in t.forms.iter().enumerate() {
        let lhs = phi.evaluate(&far[i])?.sub(&phi.evaluate(&near[i])?)?;
        let keep = |n: usize| !masks[i][n];
        lhs_scale = lhs_scale.max(lhs.max_norm_where(keep));
        let r = lhs.sub(&tf.exterior_derivative())?;
        per_chart.push(r.max_norm_where(keep));
    }
    Ok(IdentityResidual {
        max: per_chart.iter().copied().fold(0.0, f64::max),
        per_chart,
        lhs_scale,
    })
}

/// Default number of Gauss–Legendre nodes in the homotopy parameter.
pub const DEFAULT_HOMOTOPY_NODES: usize = 12;
/// Step of the central difference in the homotopy parameter.
pub const HOMOTOPY_STEP: f64 = 1e-3;
/// Largest allowed change of either end connection along a homotopy.
pub const ENDPOINT_DRIFT_LIMIT: f64 = 1e-8;

fn drift(a: &MatrixForm, b: &MatrixForm, mask: &[bool]) -> Result<f64> {
    Ok(a.sub(b)?.max_norm_where(|n| !mask[n]))
}

/// `R = ∫₀¹∫₀^∞ φ(∂_s ω ; ∂_t ω ; Ω) ds dt` for a homotopy of families `t ↦ family(t)`,
/// whose ends at `s = 0` and `s = ∞` must not move. Then `T(1) − T(0) = dR`
/// off the singular set, with the polarization taken in odd parameters (see
/// [`InvariantPolynomial::double_polarize`]).
pub fn double_transgress(
    family: &(dyn Fn(f64) -> Result<ConnectionFamily> + Sync),
    phi: &InvariantPolynomial,
    q: QuadratureSpec,
    t_nodes: usize,
    masks: &[Vec<bool>],
) -> Result<Vec<DifferentialForm>> {
    t_degree(phi)?;
    let f0 = family(0.0)?;
    let f1 = family(1.0)?;
    let dim = f0.cover().dim();
    let mut worst: f64 = 0.0;
    for i in 0..f0.charts() {
        worst = worst.max(drift(f0.far_end(i), f1.far_end(i), &masks[i])?);
        worst = worst.max(drift(&f0.near_end(i)?, &f1.near_end(i)?, &masks[i])?);
    }
    if worst > ENDPOINT_DRIFT_LIMIT {
        return Err(Error::EndpointDrift {
            drift: worst,
            limit: ENDPOINT_DRIFT_LIMIT,
        });
    }
    let degree = 2 * phi.degree() - 2;
    let s_points = q.points()?;
    let t_points = gauss_legendre(t_nodes, 0.0, 1.0)?;
    let mut out: Vec<DifferentialForm> = (0..f0.charts())
        .map(|i| DifferentialForm::zero(f0.cover().chart(i).clone(), degree))
        .collect::<Result<_>>()?;
    if phi.degree() < 2 || degree > dim {
        return Ok(out
            .into_iter()
            .map(|f| DifferentialForm::vanishing(f.chart().clone(), degree))
            .collect());
    }
    let h = HOMOTOPY_STEP;
    for &(t, wt) in &t_points {
        let fams = [family(t - 2.0 * h)?, family(t - h)?, family(t)?, family(t + h)?, family(t + 2.0 * h)?];
        for (i, acc) in out.iter_mut().enumerate() {
            let terms: Vec<Result<DifferentialForm>> = s_points
                .par_iter()
                .map(|&(s, ws)| {
                    let om: Vec<MatrixForm> = fams.iter().map(|f| f.omega_at(i, s)).collect::<Result<_>>()?;
                    let mut dt = om[0].sub(&om[4])?;
                    dt.add_scaled(c(8.0), &om[3].sub(&om[1])?)?;
                    let dt = dt.scale(c(1.0 / (12.0 * h)));
                    let ds = fams[2].omega_dot_at(i, s)?;
                    let curv = curvature_of(&om[2])?;
                    Ok(phi.double_polarize(&ds, &dt, &curv)?.scale(c(ws * wt)))
                })
                .collect();
            acc.add_assign(&summed(terms, fams[2].far_end(i), degree)?)?;
        }
    }
    Ok(out)
}

/// Off-mask size of `T₁ − T₀ − dR`.
pub fn double_transgression_residual(
    t0: &TransgressionField,
    t1: &TransgressionField,
    r: &[DifferentialForm],
    masks: &[Vec<bool>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..t0.forms.len() {
        let diff = t1.forms[i].sub(&t0.forms[i])?;
        let res = diff.sub(&r[i].exterior_derivative())?;
        worst = worst.max(res.max_norm_where(|n| !masks[i][n]));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compactified_points_are_interior() {
        let q = QuadratureSpec::default();
        let pts = q.points().unwrap();
        assert_eq!(pts.len(), 48);
        assert!(pts.iter().all(|&(s, w)| s > 0.0 && s.is_finite() && w > 0.0));
        // ∫₀^∞ ds/(1+s)² = 1
        let v: f64 = pts.iter().map(|&(s, w)| w / ((1.0 + s) * (1.0 + s))).sum();
        assert!((v - 1.0).abs() < 1e-12);
    }
}
