//! Built-in case studies over spheres with oracle values computed independently of the
//! residue pipeline.

use std::collections::HashSet;
use std::sync::Arc;

use num_complex::Complex64;

use crate::bundle::{BundleData, BundleMapData, ConnectionData, FiberMetric, MatrixFn, OmegaFn, SingularPoint};
pub use crate::bundle::HermitianBundle;
use crate::error::{Error, Result};
use crate::geom::ManifoldCover;
use crate::linalg::{c, CMat};
use crate::pushforward::FamilyKind;
use crate::residue::{NormalizationProfile, ResidueProblem};

/// Half width of each stereographic chart box.
pub const CHART_HALF_WIDTH: f64 = 1.1;
/// Inner radius of the partition annulus `[a, 1/a]`.
pub const PARTITION_RADIUS: f64 = 0.92;
/// Normalization radius used by the built-in scenarios.
pub const DEFAULT_NORMALIZATION_RADIUS: f64 = 0.75;
pub const NORTH: usize = 0;
pub const SOUTH: usize = 1;

pub fn z_of(x: &[f64]) -> Complex64 {
    Complex64::new(x[0], x[1])
}

fn scalar(v: Complex64) -> CMat {
    CMat::from_element(1, 1, v)
}

/// Two-chart cover of the Riemann sphere with `nodes` points per axis.
pub fn riemann_sphere(nodes: usize) -> Result<Arc<ManifoldCover>> {
    Ok(Arc::new(ManifoldCover::stereographic_sphere(
        2,
        CHART_HALF_WIDTH,
        nodes,
        PARTITION_RADIUS,
    )?))
}

/// Line bundle over the Riemann sphere whose data look the same in both charts:
/// clutching `g(z)` (so `v_north = g(z) v_south`), connection `a(z) dz` and metric `h(z)`.
pub fn symmetric_line_bundle(
    cover: &Arc<ManifoldCover>,
    g: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    a: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    h: impl Fn(Complex64) -> f64 + Send + Sync + 'static,
) -> Result<HermitianBundle> {
    let g: MatrixFn = Arc::new(move |x: &[f64]| scalar(g(z_of(x))));
    let bundle = BundleData::new(1, false, cover.clone(), vec![vec![None, Some(g.clone())], vec![Some(g), None]])?;
    let omega: OmegaFn = Arc::new(move |x: &[f64]| {
        let f = a(z_of(x));
        vec![scalar(f), scalar(f * Complex64::i())]
    });
    let connection = ConnectionData::from_fns(bundle.clone(), vec![omega.clone(), omega])?;
    let h: MatrixFn = Arc::new(move |x: &[f64]| scalar(c(h(z_of(x)))));
    let metric = FiberMetric::from_fns(&bundle, vec![h.clone(), h])?;
    Ok(HermitianBundle {
        bundle,
        connection,
        metric,
    })
}

/// Clutching `sign * z^k`, Chern connection of the metric `scale / (1 + |z|²)^k`.
pub fn line_bundle(cover: &Arc<ManifoldCover>, k: i32, sign: f64, scale: f64) -> Result<HermitianBundle> {
    let kf = k as f64;
    symmetric_line_bundle(
        cover,
        move |z| z.powi(k) * sign,
        move |z| -kf * z.conj() / (1.0 + z.norm_sqr()),
        move |z| scale / (1.0 + z.norm_sqr()).powi(k),
    )
}

/// `O(k)`: clutching `z^k`.
pub fn o_k(cover: &Arc<ManifoldCover>, k: i32) -> Result<HermitianBundle> {
    line_bundle(cover, k, 1.0, 1.0)
}

/// Holomorphic tangent bundle with the round metric: frames `∂_z`, `∂_w`, so `g_01 = -z²`.
pub fn tangent_bundle(cover: &Arc<ManifoldCover>) -> Result<HermitianBundle> {
    line_bundle(cover, 2, -1.0, 4.0)
}

/// `f*T` for `f(z) = z^d`, with the pulled-back round metric and connection.
pub fn pulled_back_tangent_bundle(cover: &Arc<ManifoldCover>, d: i32) -> Result<HermitianBundle> {
    let df = d as f64;
    symmetric_line_bundle(
        cover,
        move |z| -z.powi(2 * d),
        move |z| -2.0 * df * z.conj().powi(d) * z.powi(d - 1) / (1.0 + z.norm_sqr().powi(d)),
        move |z| 4.0 / (1.0 + z.norm_sqr().powi(d)).powi(2),
    )
}

/// Trivial bundle of rank `r` with the flat connection and the identity metric.
pub fn trivial_bundle(cover: &Arc<ManifoldCover>, r: usize) -> Result<HermitianBundle> {
    let bundle = BundleData::trivial(r, cover.clone());
    let connection = ConnectionData::trivial(bundle.clone())?;
    let metric = FiberMetric::identity(&bundle);
    Ok(HermitianBundle {
        bundle,
        connection,
        metric,
    })
}

fn local_map(f: impl Fn(Complex64) -> CMat + Send + Sync + 'static) -> MatrixFn {
    Arc::new(move |x: &[f64]| f(z_of(x)))
}

fn pole(chart: usize) -> SingularPoint {
    SingularPoint {
        chart,
        coords: vec![0.0, 0.0],
    }
}

/// Expected values of a scenario with the reasoning that produces them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Oracle {
    /// `∫_X φ(far) − φ(near)`.
    pub lhs: f64,
    /// Residue at each declared singular point, in declaration order.
    pub residues: Vec<f64>,
    pub provenance: String,
}

/// A fully wired case study.
pub struct Scenario {
    pub id: String,
    pub problem: ResidueProblem,
    pub phi: String,
    pub oracle: Oracle,
    /// Whether the built-in profile normalizes the data at the singular points.
    pub profile: Option<NormalizationProfile>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("id", &self.id)
            .field("phi", &self.phi)
            .field("oracle", &self.oracle)
            .finish()
    }
}

fn default_profile() -> Option<NormalizationProfile> {
    Some(NormalizationProfile::new(DEFAULT_NORMALIZATION_RADIUS).expect("positive radius"))
}

/// Winding number of `f` around `center` along the circle of the given radius,
/// counted by walking the circle and tallying signed crossings of the positive real
/// axis.
pub fn winding_number(f: impl Fn(Complex64) -> Complex64, center: Complex64, radius: f64, samples: usize) -> i64 {
    let pt = |k: usize| {
        let t = 2.0 * std::f64::consts::PI * (k % samples) as f64 / samples as f64;
        f(center + Complex64::from_polar(radius, t))
    };
    let mut count = 0;
    let mut prev = pt(0);
    for k in 1..=samples {
        let cur = pt(k);
        let (a, b) = (prev.im, cur.im);
        if (a < 0.0) != (b < 0.0) {
            let lam = a / (a - b);
            let re = prev.re + lam * (cur.re - prev.re);
            if re > 0.0 {
                count += if a < 0.0 { 1 } else { -1 };
            }
        }
        prev = cur;
    }
    count
}

/// Chern number of a line bundle from its clutching function on the unit circle.
pub fn clutching_degree(g: impl Fn(Complex64) -> Complex64) -> i64 {
    winding_number(g, Complex64::new(0.0, 0.0), 1.0, 4096)
}

/// Euler characteristic `V − E + F` of the icosahedron subdivided `levels` times.
pub fn triangulated_euler_characteristic(levels: usize) -> i64 {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mids = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]);
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, cc] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, cc, &mut verts);
            let ca = mid(cc, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [cc, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let edges: HashSet<(usize, usize)> = faces
        .iter()
        .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
        .collect();
    verts.len() as i64 - edges.len() as i64 + faces.len() as i64
}

/// Where a zero of a section of `O(k)` sits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ZeroLocation {
    /// Finite point `z` of the north chart.
    Finite(f64, f64),
    /// The south pole `w = 0`.
    Infinity,
}

/// Trivial line bundle `E`, `F = O(k)`, and the section `α` of `Hom(E, F)` with simple
/// zeros at the given places (one entry per zero, `k` entries in total).
pub fn build_line_bundle_zeros(nodes: usize, k: i32, zeros: &[ZeroLocation]) -> Result<Scenario> {
    if k < 0 {
        return Err(Error::Config(format!("k must be non-negative, got {k}")));
    }
    if zeros.len() != k as usize {
        return Err(Error::Config(format!("O({k}) sections have {k} zeros, {} given", zeros.len())));
    }
    let profile = default_profile();
    let eps = profile.as_ref().map_or(0.0, |p| p.eps);
    let finite: Vec<Complex64> = zeros
        .iter()
        .filter_map(|z| match *z {
            ZeroLocation::Finite(x, y) => Some(Complex64::new(x, y)),
            ZeroLocation::Infinity => None,
        })
        .collect();
    let at_infinity = zeros.len() - finite.len();
    if at_infinity > 1 {
        return Err(Error::Config("at most one simple zero can sit at infinity".into()));
    }
    for (a, za) in finite.iter().enumerate() {
        for zb in &finite[a + 1..] {
            if (za - zb).norm() < 3.0 * eps {
                return Err(Error::Config(format!("zeros {za} and {zb} are closer than 3 eps = {}", 3.0 * eps)));
            }
        }
        if za.norm() + eps > CHART_HALF_WIDTH.min(1.0 / PARTITION_RADIUS) {
            return Err(Error::Config(format!("zero {za} is too close to the chart seam")));
        }
        if at_infinity == 1 && 1.0 / za.norm() < 3.0 * eps {
            return Err(Error::Config(format!("zero {za} is too close to the zero at infinity")));
        }
    }
    let cover = riemann_sphere(nodes)?;
    let e = trivial_bundle(&cover, 1)?;
    let f = o_k(&cover, k)?;
    let fin_n = finite.clone();
    let fin_s = finite.clone();
    let m = at_infinity as i32;
    let maps = vec![
        local_map(move |z| scalar(fin_n.iter().map(|r| z - r).product())),
        local_map(move |w| scalar(w.powi(m) * fin_s.iter().map(|r| Complex64::new(1.0, 0.0) - r * w).product::<Complex64>())),
    ];
    let mut points: Vec<SingularPoint> = finite
        .iter()
        .map(|z| SingularPoint {
            chart: NORTH,
            coords: vec![z.re, z.im],
        })
        .collect();
    if at_infinity == 1 {
        points.push(pole(SOUTH));
    }
    let alpha = BundleMapData::new(e.bundle.clone(), f.bundle.clone(), maps, points.clone())?;
    let residues = residue_oracle(&alpha, &points, 1.0);
    let lhs = (clutching_degree(|z| z.powi(k)) - clutching_degree(|_| c(1.0))) as f64;
    Ok(Scenario {
        id: "line_zeros".into(),
        problem: ResidueProblem::new(alpha, e, f, FamilyKind::Pushforward),
        phi: "c1".into(),
        oracle: Oracle {
            lhs,
            residues,
            provenance: "lhs: clutching degree of z^k; residues: winding of the section around each zero".into(),
        },
        profile,
    })
}

/// Winding of `α` around each singular point, times `sign`. The map is reduced to a
/// scalar by pairing with its own value at one point of the circle.
fn residue_oracle(alpha: &BundleMapData, points: &[SingularPoint], sign: f64) -> Vec<f64> {
    const RADIUS: f64 = 0.05;
    points
        .iter()
        .map(|p| {
            let map = alpha.maps()[p.chart].clone();
            let center = z_of(&p.coords);
            let probe = map(&[center.re + RADIUS, center.im]);
            let f = |z: Complex64| {
                let m = map(&[z.re, z.im]);
                m.iter().zip(probe.iter()).map(|(a, b)| a * b.conj()).sum::<Complex64>()
            };
            sign * winding_number(f, center, RADIUS, 512) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VectorFieldProfile {
    /// `i z ∂_z`, rotation about the polar axis.
    Rotational,
    /// `z ∂_z`, the gradient of the height function up to a positive factor.
    Gradient,
}

/// Trivial `E`, `F = T S²`, `α` the vector field `e^{iθ} V`.
pub fn build_hopf_vector_field(nodes: usize, profile: VectorFieldProfile, phase: f64) -> Result<Scenario> {
    let cover = riemann_sphere(nodes)?;
    let e = trivial_bundle(&cover, 1)?;
    let f = tangent_bundle(&cover)?;
    let rot = Complex64::from_polar(1.0, phase);
    let v = match profile {
        VectorFieldProfile::Rotational => Complex64::i(),
        VectorFieldProfile::Gradient => c(1.0),
    };
    let maps = vec![
        local_map(move |z| scalar(rot * v * z)),
        local_map(move |w| scalar(-rot * v * w)),
    ];
    let points = vec![pole(NORTH), pole(SOUTH)];
    let alpha = BundleMapData::new(e.bundle.clone(), f.bundle.clone(), maps, points.clone())?;
    let residues = residue_oracle(&alpha, &points, 1.0);
    let chi = triangulated_euler_characteristic(2) as f64;
    Ok(Scenario {
        id: "hopf".into(),
        problem: ResidueProblem::new(alpha, e, f, FamilyKind::Pushforward),
        phi: "c1".into(),
        oracle: Oracle {
            lhs: chi,
            residues,
            provenance: "lhs: Euler characteristic of a triangulated sphere; residues: winding of the field at each zero"
                .into(),
        },
        profile: default_profile(),
    })
}

/// `E = T P¹`, `F = f*T P¹`, `α = df` for `f(z) = z^d`.
pub fn build_riemann_hurwitz(nodes: usize, d: i32) -> Result<Scenario> {
    if d < 1 {
        return Err(Error::Config(format!("degree must be at least 1, got {d}")));
    }
    let cover = riemann_sphere(nodes)?;
    let e = tangent_bundle(&cover)?;
    let f = pulled_back_tangent_bundle(&cover, d)?;
    let df = d as f64;
    let maps = vec![
        local_map(move |z| scalar(df * z.powi(d - 1))),
        local_map(move |w| scalar(df * w.powi(d - 1))),
    ];
    let points = if d > 1 { vec![pole(NORTH), pole(SOUTH)] } else { Vec::new() };
    let alpha = BundleMapData::new(e.bundle.clone(), f.bundle.clone(), maps, points.clone())?;
    // Ramification index e_p = d at both poles; the defect e_p − 1 is the local degree of df.
    let residues = residue_oracle(&alpha, &points, 1.0);
    let euler = triangulated_euler_characteristic(1);
    Ok(Scenario {
        id: "riemann_hurwitz".into(),
        problem: ResidueProblem::new(alpha, e, f, FamilyKind::Pushforward),
        phi: "c1".into(),
        oracle: Oracle {
            lhs: (d as i64 * euler - euler) as f64,
            residues,
            provenance: "lhs: d·χ(Y) − χ(X) with χ by triangulation; residues: ramification defect e_p − 1".into(),
        },
        profile: default_profile(),
    })
}

/// `E` trivial of rank 2, `F = O(1)`, `α = (z, c z)` collapsing at the north pole,
/// or `(z, 1)` when `collapse` is false; `gauge` rotates `E` by a constant unitary.
pub fn build_surjective_demo(nodes: usize, collapse: bool, gauge: f64) -> Result<Scenario> {
    let cover = riemann_sphere(nodes)?;
    let e = trivial_bundle(&cover, 2)?;
    let f = o_k(&cover, 1)?;
    let u = CMat::from_row_slice(
        2,
        2,
        &[c(gauge.cos()), c(-gauge.sin()), c(gauge.sin()), c(gauge.cos())],
    );
    let (un, us) = (u.clone(), u);
    let cz = Complex64::new(0.6, 0.3);
    let maps = if collapse {
        vec![
            local_map(move |z| CMat::from_row_slice(1, 2, &[z, cz * z]) * &un),
            local_map(move |_| CMat::from_row_slice(1, 2, &[c(1.0), cz]) * &us),
        ]
    } else {
        vec![
            local_map(move |z| CMat::from_row_slice(1, 2, &[z, c(1.0)]) * &un),
            local_map(move |w| CMat::from_row_slice(1, 2, &[c(1.0), w]) * &us),
        ]
    };
    let points = if collapse { vec![pole(NORTH)] } else { Vec::new() };
    let alpha = BundleMapData::new(e.bundle.clone(), f.bundle.clone(), maps, points.clone())?;
    // The identity φ(D_E) − φ(D_F ⊕ D_K) = dT carries the opposite orientation, so each
    // collapse contributes minus its winding.
    let residues = residue_oracle(&alpha, &points, -1.0);
    // Without collapse E = F ⊕ K, so the classes cancel.
    let lhs = if collapse { -(clutching_degree(|z| z) as f64) } else { 0.0 };
    Ok(Scenario {
        id: "surjective_demo".into(),
        problem: ResidueProblem::new(alpha, e, f, FamilyKind::Pullback),
        phi: "c1".into(),
        oracle: Oracle {
            lhs,
            residues,
            provenance: "lhs: c1(E) − c1(F) − c1(K) with c1(F) from the clutching degree; residues: minus the winding of α at the collapse".into(),
        },
        profile: default_profile(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn winding_counts() {
        let o = Complex64::new(0.0, 0.0);
        assert_eq!(winding_number(|z| z, o, 1.0, 64), 1);
        assert_eq!(winding_number(|z| z * z * z, o, 0.5, 64), 3);
        assert_eq!(winding_number(|z| z.conj(), o, 0.5, 64), -1);
        assert_eq!(winding_number(|z| z + 2.0, o, 0.5, 64), 0);
    }

    #[test]
    fn icosphere_is_a_sphere() {
        for levels in 0..3 {
            assert_eq!(triangulated_euler_characteristic(levels), 2);
        }
    }
}
