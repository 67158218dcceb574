//! Normalization at isolated singular points, residues as sphere integrals of `T`, and
//! the global balance `∫_X φ(far) − φ(near) = Σ Res`.
//!
//! A residue is `−∫ T` over the outward oriented sphere: the sphere bounds the
//! complement of the ball with the opposite orientation.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bundle::{
    image_complement_connection, kernel_connection, BundleMapData, ConnectionData, FiberMetric,
    HermitianBundle, MatrixFn, OmegaFn, SingularPoint, DEFAULT_INJECTIVITY_FLOOR,
};
use crate::error::{Error, Result};
use crate::geom::{sphere_integrate, DifferentialForm, ManifoldCover, MatrixForm, SpherePatch};
use crate::invariant::InvariantPolynomial;
use crate::linalg::{self, CMat};
use crate::pushforward::{pullback_family, pushforward_family, ApproximateOne, ConnectionFamily, FamilyKind};
use crate::transgression::{check_transgression_identity, transgress, IdentityResidual, QuadratureSpec, TransgressionField};

/// Quintic smoothstep on `[0, 1]`.
pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (6.0 * u - 15.0))
}

fn smoothstep_slope(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

/// Radial cutoffs around a point: `λ` collapses the `ε/2` ball to its center and `l`
/// pushes it out to the `ε` sphere; both are the identity beyond `ε`.
///
/// `l(t) = (ε/t)(1 − σ(t)) + σ(t)` with `σ` the smoothstep from `ε/2` to `ε`, so
/// `ρ(v) = l(|v|) v` sends the punctured `ε/2` ball onto the `ε` sphere.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationProfile {
    pub eps: f64,
}

impl NormalizationProfile {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("normalization radius must be positive, got {eps}")));
        }
        Ok(NormalizationProfile { eps })
    }

    fn u(&self, t: f64) -> f64 {
        (t - 0.5 * self.eps) / (0.5 * self.eps)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        smoothstep(self.u(t))
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.sigma(t)
    }

    pub fn dlambda(&self, t: f64) -> f64 {
        smoothstep_slope(self.u(t)) * 2.0 / self.eps
    }

    pub fn l(&self, t: f64) -> f64 {
        let s = self.sigma(t);
        (self.eps / t) * (1.0 - s) + s
    }

    /// Largest violation of `λ' ≥ 0` and `l' ≤ 0` on a fine grid of `(0, 2ε]`.
    pub fn monotonicity_defect(&self) -> f64 {
        let n = 4000;
        let mut worst: f64 = 0.0;
        let ts: Vec<f64> = (1..=n).map(|k| 2.0 * self.eps * k as f64 / n as f64).collect();
        for w in ts.windows(2) {
            worst = worst.max(self.lambda(w[0]) - self.lambda(w[1]));
            worst = worst.max(self.l(w[1]) - self.l(w[0]));
        }
        worst
    }

    /// `π(x) = c + λ(|x − c|)(x − c)`.
    pub fn pi(&self, c: &[f64], x: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let lam = self.lambda(norm(&v));
        c.iter().zip(&v).map(|(a, b)| a + lam * b).collect()
    }

    /// `∂π_k/∂x_j = λ δ_kj + λ'(t) v_k v_j / t`.
    pub fn pi_jacobian(&self, c: &[f64], x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let v: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let t = norm(&v);
        let mut j = DMatrix::identity(n, n) * self.lambda(t);
        if t > 0.0 {
            let dl = self.dlambda(t) / t;
            for a in 0..n {
                for b in 0..n {
                    j[(a, b)] += dl * v[a] * v[b];
                }
            }
        }
        j
    }

    /// `ρ(x) = c + l(|x − c|)(x − c)`; the center itself goes to `c + ε e_0`.
    pub fn rho(&self, c: &[f64], x: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let t = norm(&v);
        if t == 0.0 {
            let mut y = c.to_vec();
            y[0] += self.eps;
            return y;
        }
        let l = self.l(t);
        c.iter().zip(&v).map(|(a, b)| a + l * b).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn check_ball(cover: &ManifoldCover, p: &SingularPoint, eps: f64) -> Result<()> {
    let ch = cover.chart(p.chart);
    if ch.distance_to_boundary(&p.coords) <= eps {
        return Err(Error::InvalidParameter(format!(
            "normalization ball of radius {eps} around {:?} leaves chart {}",
            p.coords,
            ch.name()
        )));
    }
    Ok(())
}

/// Rewrites chart `p.chart` inside the ball with `inner(x)`, and every other chart
/// through the transition so that overlaps stay consistent. `carry(j, y, x, new, old)`
/// returns the chart-`j` value at `y` given the new and old chart-`p` values at `x`.
fn localized<T: 'static>(
    cover: &Arc<ManifoldCover>,
    p: &SingularPoint,
    eps: f64,
    original: Vec<Arc<dyn Fn(&[f64]) -> T + Send + Sync>>,
    inner: Arc<dyn Fn(&[f64]) -> T + Send + Sync>,
    carry: Arc<dyn Fn(usize, &[f64], &[f64], &T, &T) -> T + Send + Sync>,
) -> Vec<Arc<dyn Fn(&[f64]) -> T + Send + Sync>> {
    let home = p.chart;
    (0..cover.len())
        .map(|j| {
            let orig = original[j].clone();
            let orig_home = original[home].clone();
            let (inner, carry, cover) = (inner.clone(), carry.clone(), cover.clone());
            let c = p.coords.clone();
            if j == home {
                Arc::new(move |x: &[f64]| {
                    if cover.chart(home).distance(x, &c) >= eps {
                        orig(x)
                    } else {
                        inner(x)
                    }
                }) as Arc<dyn Fn(&[f64]) -> T + Send + Sync>
            } else {
                Arc::new(move |y: &[f64]| match cover.transition(j, home, y) {
                    Some(x) if cover.chart(home).distance(&x, &c) < eps => {
                        carry(j, y, &x, &inner(&x), &orig_home(&x))
                    }
                    _ => orig(y),
                }) as Arc<dyn Fn(&[f64]) -> T + Send + Sync>
            }
        })
        .collect()
}

fn omega_fns(conn: &ConnectionData) -> Vec<OmegaFn> {
    match conn.sources() {
        Some(f) => f.to_vec(),
        None => (0..conn.cover().len())
            .map(|i| {
                let conn = conn.clone();
                let r = conn.rank();
                let dim = conn.cover().dim();
                Arc::new(move |x: &[f64]| conn.eval_omega(i, x).unwrap_or_else(|_| vec![CMat::zeros(r, r); dim]))
                    as OmegaFn
            })
            .collect(),
    }
}

/// Pull the bundle data back through the radial collapse `π` around `p`: the result is
/// flat and radially constant inside the `ε/2` ball and unchanged outside the `ε` ball.
pub fn normalize_bundle(b: &HermitianBundle, p: &SingularPoint, profile: &NormalizationProfile) -> Result<HermitianBundle> {
    let cover = b.bundle.cover().clone();
    check_ball(&cover, p, profile.eps)?;
    let home = p.chart;
    let prof = *profile;
    let c = p.coords.clone();
    let omegas = omega_fns(&b.connection);
    let w_home = omegas[home].clone();
    let inner: OmegaFn = Arc::new(move |x: &[f64]| {
        let y = prof.pi(&c, x);
        let jac = prof.pi_jacobian(&c, x);
        let w = w_home(&y);
        (0..x.len())
            .map(|j| w.iter().enumerate().fold(CMat::zeros(w[0].nrows(), w[0].ncols()), |acc, (k, m)| {
                acc + m * linalg::c(jac[(k, j)])
            }))
            .collect()
    });
    let (bundle, cov) = (b.bundle.clone(), cover.clone());
    let omegas2 = omegas.clone();
    let carry: Arc<dyn Fn(usize, &[f64], &[f64], &Vec<CMat>, &Vec<CMat>) -> Vec<CMat> + Send + Sync> =
        Arc::new(move |j, y, x, new, old| {
            let jac = cov.transition_jacobian(j, home, y).expect("transition is defined on the overlap");
            let g = bundle.transition(home, j, x);
            let gi = linalg::inverse(&g).expect("transition is invertible");
            let mut out = omegas2[j](y);
            for (k, o) in out.iter_mut().enumerate() {
                let mut d = CMat::zeros(g.nrows(), g.ncols());
                for r in 0..x.len() {
                    d += (&new[r] - &old[r]) * linalg::c(jac[(r, k)]);
                }
                *o += &gi * d * &g;
            }
            out
        });
    let fns = localized(&cover, p, profile.eps, omegas, inner, carry);
    let connection = ConnectionData::from_fns(b.bundle.clone(), fns)?;

    let hs = b.metric.fns().to_vec();
    let h_home = hs[home].clone();
    let c = p.coords.clone();
    let inner_h: MatrixFn = Arc::new(move |x: &[f64]| h_home(&prof.pi(&c, x)));
    let (bundle, hs2) = (b.bundle.clone(), hs.clone());
    let carry_h: Arc<dyn Fn(usize, &[f64], &[f64], &CMat, &CMat) -> CMat + Send + Sync> =
        Arc::new(move |j, y, x, new, old| {
            let g = bundle.transition(home, j, x);
            hs2[j](y) + g.adjoint() * (new - old) * &g
        });
    let metric = FiberMetric::from_fns(&b.bundle, localized(&cover, p, profile.eps, hs, inner_h, carry_h))?;
    Ok(HermitianBundle {
        bundle: b.bundle.clone(),
        connection,
        metric,
    })
}

/// `α∘ρ` around `p`: radially constant on the punctured `ε/2` ball, untouched beyond `ε`.
pub fn normalize_map(alpha: &BundleMapData, p: &SingularPoint, profile: &NormalizationProfile) -> Result<BundleMapData> {
    let cover = alpha.cover().clone();
    check_ball(&cover, p, profile.eps)?;
    let home = p.chart;
    let prof = *profile;
    let a_home = alpha.maps()[home].clone();
    let dim = cover.dim();
    for frac in [0.5, 0.625, 0.75, 0.875, 1.0] {
        let patch = SpherePatch::new(p.coords.clone(), frac * profile.eps, 16)?;
        for s in patch.samples()? {
            let sv = linalg::sigma_min(&a_home(&s.point));
            if sv < DEFAULT_INJECTIVITY_FLOOR {
                return Err(Error::InvalidParameter(format!(
                    "bundle map is singular at {:?}, inside the normalization ball but away from its center",
                    s.point
                )));
            }
        }
        if dim == 1 {
            break;
        }
    }
    let c = p.coords.clone();
    let a2 = a_home.clone();
    let inner: MatrixFn = Arc::new(move |x: &[f64]| a2(&prof.rho(&c, x)));
    let (src, tgt, maps) = (alpha.source().clone(), alpha.target().clone(), alpha.maps().to_vec());
    let carry: Arc<dyn Fn(usize, &[f64], &[f64], &CMat, &CMat) -> CMat + Send + Sync> =
        Arc::new(move |j, y, x, new, old| {
            let gf = tgt.transition(home, j, x);
            let ge = src.transition(home, j, x);
            maps[j](y) + linalg::inverse(&gf).expect("transition is invertible") * (new - old) * ge
        });
    alpha.with_maps(localized(&cover, p, profile.eps, alpha.maps().to_vec(), inner, carry))
}

/// Largest change of `α` along rays inside the punctured `ε/2` ball.
pub fn radial_variation(alpha: &BundleMapData, p: &SingularPoint, profile: &NormalizationProfile) -> Result<f64> {
    let a = alpha.maps()[p.chart].clone();
    let unit = SpherePatch::new(vec![0.0; p.coords.len()], 1.0, 16)?;
    let mut worst: f64 = 0.0;
    for s in unit.samples()? {
        let at = |r: f64| {
            let x: Vec<f64> = p.coords.iter().zip(&s.point).map(|(c, u)| c + r * profile.eps * u).collect();
            a(&x)
        };
        let base = at(0.45);
        for r in [0.05, 0.15, 0.3] {
            worst = worst.max(linalg::frobenius(&(at(r) - &base)));
        }
    }
    Ok(worst)
}

/// Bundles, map and the family that connects them.
#[derive(Clone)]
pub struct ResidueProblem {
    pub alpha: BundleMapData,
    pub e: HermitianBundle,
    pub f: HermitianBundle,
    pub kind: FamilyKind,
}

impl ResidueProblem {
    pub fn new(alpha: BundleMapData, e: HermitianBundle, f: HermitianBundle, kind: FamilyKind) -> Self {
        ResidueProblem { alpha, e, f, kind }
    }

    pub fn cover(&self) -> &Arc<ManifoldCover> {
        self.alpha.cover()
    }

    /// Rank of the bundle the family lives on.
    pub fn family_rank(&self) -> usize {
        match self.kind {
            FamilyKind::Pushforward => self.f.bundle.rank(),
            FamilyKind::Pullback => self.e.bundle.rank(),
        }
    }

    /// Normalize both bundles and the map at every declared singular point.
    pub fn normalized(&self, profile: &NormalizationProfile) -> Result<ResidueProblem> {
        let mut e = self.e.clone();
        let mut f = self.f.clone();
        let mut alpha = self.alpha.clone();
        for p in self.alpha.singular_points() {
            e = normalize_bundle(&e, p, profile)?;
            f = normalize_bundle(&f, p, profile)?;
            alpha = normalize_map(&alpha, p, profile)?;
        }
        Ok(ResidueProblem {
            alpha,
            e,
            f,
            kind: self.kind,
        })
    }

    pub fn family(&self, chi: ApproximateOne) -> Result<ConnectionFamily> {
        let build = match self.kind {
            FamilyKind::Pushforward => pushforward_family,
            FamilyKind::Pullback => pullback_family,
        };
        build(
            &self.alpha,
            &self.e.connection,
            &self.f.connection,
            chi,
            &self.e.metric,
            &self.f.metric,
        )
    }

    /// Curvatures of the two ends of the identity: `(Ω_F, Ω_E ⊕ Ω_⊥)` for pushforwards,
    /// `(Ω_E, Ω_F ⊕ Ω_K)` for the surjective family.
    pub fn end_curvatures(&self, seed: usize) -> Result<(Vec<MatrixForm>, Vec<MatrixForm>)> {
        let (re, rf) = (self.e.bundle.rank(), self.f.bundle.rank());
        match self.kind {
            FamilyKind::Pushforward => {
                let far = self.f.connection.curvature()?;
                let base = self.e.connection.curvature()?;
                let near = if rf > re {
                    let perp =
                        image_complement_connection(&self.alpha, &self.f.connection, &self.e.metric, &self.f.metric, seed)?
                            .curvature()?;
                    base.iter().zip(&perp).map(|(a, b)| a.block_diag(b)).collect::<Result<_>>()?
                } else {
                    base
                };
                Ok((far, near))
            }
            FamilyKind::Pullback => {
                let far = self.e.connection.curvature()?;
                let base = self.f.connection.curvature()?;
                let near = if re > rf {
                    let k = kernel_connection(&self.alpha, &self.e.connection, &self.e.metric, &self.f.metric, seed)?
                        .curvature()?;
                    base.iter().zip(&k).map(|(a, b)| a.block_diag(b)).collect::<Result<_>>()?
                } else {
                    base
                };
                Ok((far, near))
            }
        }
    }

    pub fn masks(&self) -> Vec<Vec<bool>> {
        (0..self.cover().len()).map(|i| self.alpha.mask(i)).collect()
    }

    /// Same bundles with another map.
    pub fn with_map(&self, alpha: BundleMapData) -> ResidueProblem {
        ResidueProblem {
            alpha,
            e: self.e.clone(),
            f: self.f.clone(),
            kind: self.kind,
        }
    }
}

/// Smallest number of grid cells an `ε` sphere must span.
pub const MIN_SPHERE_CELLS: f64 = 6.0;

/// Every `ε` sphere must span [`MIN_SPHERE_CELLS`] grid cells on every chart.
pub fn check_sphere_resolution(cover: &ManifoldCover, eps_list: &[f64]) -> Result<()> {
    let eps = eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config("epsilon list must be non-empty and positive".into()));
    }
    for ch in cover.charts() {
        let h = ch.max_spacing();
        if eps < MIN_SPHERE_CELLS * h {
            let need = (0..ch.dim())
                .map(|k| {
                    let ax = ch.axis(k);
                    (MIN_SPHERE_CELLS * (ax.hi - ax.lo) / eps).ceil() as usize + usize::from(!ax.periodic)
                })
                .max()
                .unwrap_or(0);
            return Err(Error::Config(format!(
                "radius {eps:.4} spans {:.2} cells on chart {}; at least {MIN_SPHERE_CELLS} needed (resolution >= {need})",
                eps / h,
                ch.name()
            )));
        }
    }
    Ok(())
}
pub const DEFAULT_SPHERE_RESOLUTION: usize = 256;
pub const DEFAULT_PLATEAU_TOL: f64 = 1e-2;
/// Below this size a residue is compared by absolute rather than relative spread.
pub const ABSOLUTE_FLOOR: f64 = 1e-3;

/// `{0.3, 0.2, 0.1}` times the chart half width.
pub fn default_eps_list(chart_scale: f64) -> Vec<f64> {
    vec![0.3 * chart_scale, 0.2 * chart_scale, 0.1 * chart_scale]
}

#[derive(Debug, Clone)]
pub struct ResidueConfig {
    pub profile: Option<NormalizationProfile>,
    pub eps_list: Vec<f64>,
    pub sphere_resolution: usize,
    pub quadrature: QuadratureSpec,
    pub chi: ApproximateOne,
    pub seed: usize,
    pub plateau_tol: f64,
}

impl Default for ResidueConfig {
    fn default() -> Self {
        ResidueConfig {
            profile: None,
            eps_list: default_eps_list(crate::scenarios::CHART_HALF_WIDTH),
            sphere_resolution: DEFAULT_SPHERE_RESOLUTION,
            quadrature: QuadratureSpec::default(),
            chi: ApproximateOne::default(),
            seed: 0,
            plateau_tol: DEFAULT_PLATEAU_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Extrapolation {
    /// Values agree across radii; their mean is reported.
    Plateau,
    /// Polynomial extrapolation of the values to `ε = 0`.
    Richardson,
    /// Residue of negative or positive form degree on a point: exactly zero.
    DegreeZero,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SingularityRecord {
    pub point: SingularPoint,
    pub eps: Vec<f64>,
    pub per_eps: Vec<f64>,
    pub per_eps_imag: Vec<f64>,
    pub extrapolated: f64,
    pub imag: f64,
    /// `(max − min)` over radii, relative to the mean unless the mean is tiny.
    pub spread: f64,
    pub method: Extrapolation,
    /// `2 deg φ − codim`.
    pub residue_degree: i64,
}

/// Value at `ε = 0` of the polynomial through `(eps_i, v_i)`.
fn richardson(eps: &[f64], v: &[f64]) -> f64 {
    let mut out = 0.0;
    for i in 0..eps.len() {
        let mut w = 1.0;
        for j in 0..eps.len() {
            if i != j {
                w *= -eps[j] / (eps[i] - eps[j]);
            }
        }
        out += w * v[i];
    }
    out
}

fn spread_of(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (max - min) / mean.abs().max(ABSOLUTE_FLOOR)
}

/// Residue of `T` at an isolated point: `−∫ T` over outward spheres of the given radii,
/// then a plateau or Richardson estimate of the limit.
pub fn compute_residue(
    t: &TransgressionField,
    point: &SingularPoint,
    eps_list: &[f64],
    sphere_resolution: usize,
    plateau_tol: f64,
) -> Result<SingularityRecord> {
    let form = t.form(point.chart);
    let dim = form.dim();
    let residue_degree = t.degree as i64 + 1 - dim as i64;
    let zero = |method| SingularityRecord {
        point: point.clone(),
        eps: eps_list.to_vec(),
        per_eps: vec![0.0; eps_list.len()],
        per_eps_imag: vec![0.0; eps_list.len()],
        extrapolated: 0.0,
        imag: 0.0,
        spread: 0.0,
        method,
        residue_degree,
    };
    if residue_degree != 0 {
        return Ok(zero(Extrapolation::DegreeZero));
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    let mut values: Vec<Complex64> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let patch = SpherePatch::new(point.coords.clone(), eps, sphere_resolution)?;
        patch.check_inside(form.chart())?;
        values.push(-sphere_integrate(form, &patch)?);
    }
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let spread = spread_of(&re);
    let (extrapolated, imag, method) = if spread <= plateau_tol {
        let n = re.len() as f64;
        (re.iter().sum::<f64>() / n, im.iter().sum::<f64>() / n, Extrapolation::Plateau)
    } else {
        let mut order: Vec<usize> = (0..eps_list.len()).collect();
        order.sort_by(|&a, &b| eps_list[b].total_cmp(&eps_list[a]));
        let seq: Vec<f64> = order.iter().map(|&k| re[k]).collect();
        let monotone = seq.windows(2).all(|w| w[1] >= w[0]) || seq.windows(2).all(|w| w[1] <= w[0]);
        if !monotone {
            return Err(Error::NotExtendable {
                spread,
                tolerance: plateau_tol,
            });
        }
        let take: Vec<usize> = order.iter().rev().take(3).copied().collect();
        let e: Vec<f64> = take.iter().map(|&k| eps_list[k]).collect();
        (
            richardson(&e, &take.iter().map(|&k| re[k]).collect::<Vec<_>>()),
            richardson(&e, &take.iter().map(|&k| im[k]).collect::<Vec<_>>()),
            Extrapolation::Richardson,
        )
    };
    Ok(SingularityRecord {
        point: point.clone(),
        eps: eps_list.to_vec(),
        per_eps: re,
        per_eps_imag: im,
        extrapolated,
        imag,
        spread,
        method,
        residue_degree,
    })
}

/// Sum of residues in a fixed order (by chart, then coordinates), so the total does
/// not depend on how the points were listed.
pub fn residue_sum(records: &[SingularityRecord]) -> f64 {
    let mut sorted: Vec<&SingularityRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.point.chart.cmp(&b.point.chart).then_with(|| {
            a.point
                .coords
                .iter()
                .zip(&b.point.coords)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    sorted.iter().map(|r| r.extrapolated).sum()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResidueReport {
    pub scenario: String,
    pub phi: String,
    pub kind: FamilyKind,
    pub normalized: bool,
    /// `∫_X φ(far) − φ(near)`.
    pub lhs: f64,
    pub lhs_imag: f64,
    pub residues: Vec<SingularityRecord>,
    pub residue_sum: f64,
    pub balance: f64,
    pub identity: IdentityResidual,
    pub orientation: String,
}

/// Everything the report is computed from, kept for diagnostics.
pub struct PipelineState {
    pub problem: ResidueProblem,
    pub phi: InvariantPolynomial,
    pub transgression: TransgressionField,
    pub far: Vec<MatrixForm>,
    pub near: Vec<MatrixForm>,
    pub masks: Vec<Vec<bool>>,
}

impl PipelineState {
    pub fn identity(&self) -> Result<IdentityResidual> {
        check_transgression_identity(&self.transgression, &self.phi, &self.far, &self.near, &self.masks)
    }

    /// The identity residual with every singular point masked out to a fixed radius.
    pub fn identity_with_radius(&self, radius: f64) -> Result<IdentityResidual> {
        let alpha = &self.problem.alpha;
        let masks: Vec<Vec<bool>> = (0..self.problem.cover().len()).map(|i| alpha.mask_with_radius(i, radius)).collect();
        check_transgression_identity(&self.transgression, &self.phi, &self.far, &self.near, &masks)
    }

    /// `∫_X φ(far) − φ(near)`, zero when the form is not of top degree.
    pub fn lhs(&self) -> Result<Complex64> {
        let cover = self.problem.cover();
        let forms: Vec<DifferentialForm> = self
            .far
            .iter()
            .zip(&self.near)
            .map(|(a, b)| self.phi.evaluate(a)?.sub(&self.phi.evaluate(b)?))
            .collect::<Result<_>>()?;
        if forms[0].degree() != cover.dim() || forms.iter().any(DifferentialForm::is_structural_zero) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        cover.integrate(&forms)
    }
}

/// Normalize (if configured), build the family and transgress.
pub fn run_pipeline(problem: &ResidueProblem, phi_name: &str, config: &ResidueConfig) -> Result<PipelineState> {
    let problem = match &config.profile {
        Some(p) => problem.normalized(p)?,
        None => problem.clone(),
    };
    let phi = InvariantPolynomial::by_name(phi_name, problem.family_rank())?;
    let fam = problem.family(config.chi)?;
    let transgression = transgress(&fam, &phi, config.quadrature)?;
    let (far, near) = problem.end_curvatures(config.seed)?;
    let masks = problem.masks();
    Ok(PipelineState {
        problem,
        phi,
        transgression,
        far,
        near,
        masks,
    })
}

/// Full pipeline: normalize, transgress, residues and the global balance.
pub fn assemble_report(
    scenario: &str,
    problem: &ResidueProblem,
    phi_name: &str,
    config: &ResidueConfig,
) -> Result<ResidueReport> {
    let state = run_pipeline(problem, phi_name, config)?;
    report_from_state(scenario, &state, config)
}

pub fn report_from_state(scenario: &str, state: &PipelineState, config: &ResidueConfig) -> Result<ResidueReport> {
    let lhs = state.lhs()?;
    let residues = state
        .problem
        .alpha
        .singular_points()
        .iter()
        .map(|p| {
            compute_residue(
                &state.transgression,
                p,
                &config.eps_list,
                config.sphere_resolution,
                config.plateau_tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = residue_sum(&residues);
    Ok(ResidueReport {
        scenario: scenario.to_string(),
        phi: state.phi.name.clone(),
        kind: state.problem.kind,
        normalized: config.profile.is_some(),
        lhs: lhs.re,
        lhs_imag: lhs.im,
        balance: lhs.re - sum,
        residue_sum: sum,
        residues,
        identity: state.identity()?,
        orientation: match state.problem.kind {
            FamilyKind::Pushforward => "dT = phi(D_F) - phi(D_E + D_perp); Res = -(outward sphere integral of T)",
            FamilyKind::Pullback => "dT = phi(D_E) - phi(D_F + D_K); Res = -(outward sphere integral of T)",
        }
        .into(),
    })
}

/// Residues of the two ends of a homotopy through normalized maps.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HomotopyComparison {
    pub residues0: Vec<f64>,
    pub residues1: Vec<f64>,
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
    /// Largest radial variation of `α_t` seen along the homotopy.
    pub radial_variation: f64,
}

/// Radial variation allowed for a map to count as normalized.
pub const RADIAL_TOL: f64 = 1e-6;

/// Compare residues at the ends of `t ↦ problem(t)`, whose maps must stay radially
/// constant near every singular point (checked at `t = 0, ¼, ½, ¾, 1`).
pub fn homotopy_residue_compare(
    homotopy: &dyn Fn(f64) -> Result<ResidueProblem>,
    profile: &NormalizationProfile,
    phi_name: &str,
    config: &ResidueConfig,
) -> Result<HomotopyComparison> {
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let prob = homotopy(t)?;
        for p in prob.alpha.singular_points() {
            let v = radial_variation(&prob.alpha, p, profile)?;
            if v > RADIAL_TOL {
                return Err(Error::NotNormalized { t, variation: v });
            }
            worst = worst.max(v);
        }
    }
    let config = ResidueConfig {
        profile: None,
        ..config.clone()
    };
    let r0 = assemble_report("homotopy_start", &homotopy(0.0)?, phi_name, &config)?;
    let r1 = assemble_report("homotopy_end", &homotopy(1.0)?, phi_name, &config)?;
    let residues0: Vec<f64> = r0.residues.iter().map(|r| r.extrapolated).collect();
    let residues1: Vec<f64> = r1.residues.iter().map(|r| r.extrapolated).collect();
    if residues0.len() != residues1.len() {
        return Err(Error::InvalidParameter("homotopy ends have different singular sets".into()));
    }
    let discrepancy: Vec<f64> = residues0.iter().zip(&residues1).map(|(a, b)| (a - b).abs()).collect();
    Ok(HomotopyComparison {
        max_discrepancy: discrepancy.iter().copied().fold(0.0, f64::max),
        residues0,
        residues1,
        discrepancy,
        radial_variation: worst,
    })
}
