use std::sync::Arc;

use chernweil::bundle::{BundleMapData, FiberMetric, MatrixFn, SingularPoint};
use chernweil::invariant::InvariantPolynomial;
use chernweil::linalg::CMat;
use chernweil::pushforward::{pushforward_family, ApproximateOne, ConnectionFamily, FamilyKind};
use chernweil::residue::{NormalizationProfile, ResidueProblem};
use chernweil::scenarios::{o_k, riemann_sphere, trivial_bundle, z_of, DEFAULT_NORMALIZATION_RADIUS, NORTH};
use chernweil::transgression::{double_transgress, double_transgression_residual, transgress, QuadratureSpec};
use num_complex::Complex64;

use super::*;

pub fn north() -> SingularPoint {
    SingularPoint {
        chart: NORTH,
        coords: vec![0.0, 0.0],
    }
}

pub fn profile() -> NormalizationProfile {
    NormalizationProfile::new(DEFAULT_NORMALIZATION_RADIUS).unwrap()
}

fn on_sphere(f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> MatrixFn {
    Arc::new(move |x: &[f64]| CMat::from_element(1, 1, f(z_of(x))))
}

/// Equirank pushforward on a 3-cube whose target metric slides between two choices;
/// both ends of every family stay fixed.
pub fn metric_homotopy(nodes: usize, frozen: bool) -> impl Fn(f64) -> chernweil::Result<ConnectionFamily> + Sync {
    let cover = box_cover(3, 0.5, nodes);
    let e = hermitian(&cover, 2, 0.3, false);
    let f = hermitian(&cover, 2, 1.1, false);
    let alpha = map_between(&e, &f, wavy_map(2, 2, 0.5));
    let (h0, h1) = (wavy_metric(2, 1.1), wavy_metric(2, 4.0));
    move |t: f64| {
        let t = if frozen { 0.0 } else { t };
        let (h0, h1) = (h0.clone(), h1.clone());
        let h: MatrixFn = Arc::new(move |x: &[f64]| h0(x) * cx(1.0 - t, 0.0) + h1(x) * cx(t, 0.0));
        let hf = FiberMetric::from_fns(&f.bundle, vec![h])?;
        pushforward_family(&alpha, &e.connection, &f.connection, ApproximateOne::rational(), &e.metric, &hf)
    }
}

pub fn double_residuals(nodes: usize) -> (f64, f64, f64) {
    let family = metric_homotopy(nodes, false);
    let phi = InvariantPolynomial::chern(2, 2);
    let q = QuadratureSpec::default();
    let f0 = family(0.0).unwrap();
    let masks = vec![vec![false; f0.cover().chart(0).node_count()]];
    let t0 = transgress(&f0, &phi, q).unwrap();
    let t1 = transgress(&family(1.0).unwrap(), &phi, q).unwrap();
    let r = double_transgress(&family, &phi, q, 8, &masks).unwrap();
    let plus = double_transgression_residual(&t0, &t1, &r, &masks).unwrap();
    let flipped: Vec<_> = r.iter().map(|f| f.scale(cx(-1.0, 0.0))).collect();
    let minus = double_transgression_residual(&t0, &t1, &flipped, &masks).unwrap();
    let change = t0.max_difference(&t1, &masks).unwrap();
    (plus, minus, change)
}

/// `O(0) → O(2)` with a double zero at the north pole and the angular phase
/// `e^{i t a Re z/(1+|z|²)}`, normalized at the pole.
pub fn winding_two(nodes: usize, a: f64, t: f64) -> chernweil::Result<ResidueProblem> {
    let cover = riemann_sphere(nodes)?;
    let e = trivial_bundle(&cover, 1)?;
    let f = o_k(&cover, 2)?;
    let phase = move |z: Complex64| Complex64::from_polar(1.0, t * a * z.re / (1.0 + z.norm_sqr()));
    let maps = vec![on_sphere(move |z| z * z * phase(z)), on_sphere(phase)];
    let alpha = BundleMapData::new(e.bundle.clone(), f.bundle.clone(), maps, vec![north()])?;
    ResidueProblem::new(alpha, e, f, FamilyKind::Pushforward).normalized(&profile())
}

