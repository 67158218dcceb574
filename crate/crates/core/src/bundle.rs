//! Vector bundles given by local frames over a chart cover, with connections,
//! fiber metrics and bundle maps.
//!
//! Frame convention: on an overlap the frames satisfy `e_j = e_i g_ij`, so local
//! components transform as `v_i = g_ij v_j` and connection matrices as
//! `ω_j = g⁻¹ ω_i g + g⁻¹ dg`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::chart::Chart;
use crate::geom::cover::{norm, ManifoldCover};
use crate::geom::interp::stencil;
use crate::geom::pullback::{pullback, FnSource, SampledMap};
use crate::geom::MatrixForm;
use crate::linalg::{self, c, CMat};

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
/// Components (one matrix per coordinate direction) of a matrix-valued 1-form.
pub type OmegaFn = Arc<dyn Fn(&[f64]) -> Vec<CMat> + Send + Sync>;
pub type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

pub const COCYCLE_TOL: f64 = 1e-8;
pub const INTERTWINE_TOL: f64 = 1e-8;
pub const DEFAULT_INJECTIVITY_FLOOR: f64 = 1e-6;
pub const DEFAULT_MASK_CELLS: f64 = 2.0;

/// Nodes of chart `i` whose image under the transition to chart `j` lies in chart `j`.
fn overlap_nodes(cover: &ManifoldCover, i: usize, j: usize) -> Vec<(usize, Vec<f64>, Vec<f64>)> {
    let chart = cover.chart(i);
    (0..chart.node_count())
        .filter_map(|n| {
            let x = chart.node_coords(n);
            let y = cover.transition(i, j, &x)?;
            cover.chart(j).contains(&y).then_some((n, x, y))
        })
        .collect()
}

/// Fourth-order central difference of a matrix function along each coordinate.
pub fn matrix_gradient(f: &dyn Fn(&[f64]) -> CMat, x: &[f64]) -> Vec<CMat> {
    let h = 1e-4 * (1.0 + norm(x));
    (0..x.len())
        .map(|k| {
            let at = |s: f64| {
                let mut y = x.to_vec();
                y[k] += s * h;
                f(&y)
            };
            (at(1.0) - at(-1.0)) * c(8.0 / (12.0 * h)) - (at(2.0) - at(-2.0)) * c(1.0 / (12.0 * h))
        })
        .collect()
}

pub struct BundleData {
    rank: usize,
    real: bool,
    cover: Arc<ManifoldCover>,
    transitions: Vec<Vec<Option<MatrixFn>>>,
}

impl fmt::Debug for BundleData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BundleData")
            .field("rank", &self.rank)
            .field("real", &self.real)
            .field("cover", &self.cover)
            .finish()
    }
}

impl BundleData {
    /// `transitions[i][j]` gives `g_ij` as a function of chart-`i` coordinates.
    pub fn new(
        rank: usize,
        real: bool,
        cover: Arc<ManifoldCover>,
        transitions: Vec<Vec<Option<MatrixFn>>>,
    ) -> Result<Arc<Self>> {
        let k = cover.len();
        if transitions.len() != k || transitions.iter().any(|t| t.len() != k) {
            return Err(Error::InvalidBundle(format!("need a {k}x{k} transition table")));
        }
        let b = BundleData {
            rank,
            real,
            cover,
            transitions,
        };
        b.check_cocycle()?;
        Ok(Arc::new(b))
    }

    pub fn trivial(rank: usize, cover: Arc<ManifoldCover>) -> Arc<Self> {
        let k = cover.len();
        Arc::new(BundleData {
            rank,
            real: false,
            cover,
            transitions: vec![vec![None; k]; k],
        })
    }

    fn check_cocycle(&self) -> Result<()> {
        let k = self.cover.len();
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                for (_, x, y) in overlap_nodes(&self.cover, i, j) {
                    let gij = self.transition(i, j, &x);
                    if gij.nrows() != self.rank || gij.ncols() != self.rank {
                        return Err(Error::InvalidBundle(format!(
                            "transition {i}->{j} is {}x{}, rank is {}",
                            gij.nrows(),
                            gij.ncols(),
                            self.rank
                        )));
                    }
                    let gji = self.transition(j, i, &y);
                    let defect = linalg::frobenius(&(&gij * &gji - linalg::identity(self.rank)));
                    if defect > COCYCLE_TOL {
                        return Err(Error::InvalidBundle(format!(
                            "cocycle g_{i}{j} g_{j}{i} = 1 fails by {defect:.3e} at {x:?}"
                        )));
                    }
                    for l in 0..k {
                        if l == i || l == j {
                            continue;
                        }
                        let Some(z) = self.cover.transition(j, l, &y) else { continue };
                        if !self.cover.chart(l).contains(&z) {
                            continue;
                        }
                        let lhs = &gij * self.transition(j, l, &y);
                        let defect = linalg::frobenius(&(lhs - self.transition(i, l, &x)));
                        if defect > COCYCLE_TOL {
                            return Err(Error::InvalidBundle(format!(
                                "cocycle g_{i}{j} g_{j}{l} = g_{i}{l} fails by {defect:.3e}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn cover(&self) -> &Arc<ManifoldCover> {
        &self.cover
    }

    /// `g_ij` at chart-`i` coordinates `x` (identity when no transition is stored).
    pub fn transition(&self, i: usize, j: usize, x: &[f64]) -> CMat {
        match &self.transitions[i][j] {
            Some(g) if i != j => g(x),
            _ => linalg::identity(self.rank),
        }
    }

    pub fn transition_fn(&self, i: usize, j: usize) -> Option<&MatrixFn> {
        self.transitions[i][j].as_ref()
    }

    /// Coordinate derivatives of `g_ij` at `x`.
    pub fn transition_gradient(&self, i: usize, j: usize, x: &[f64]) -> Vec<CMat> {
        match &self.transitions[i][j] {
            Some(g) if i != j => matrix_gradient(g.as_ref(), x),
            _ => vec![CMat::zeros(self.rank, self.rank); x.len()],
        }
    }

    /// `g_ij` sampled on the nodes of chart `i`; identity where the overlap is empty.
    pub fn sampled_transition(&self, i: usize, j: usize) -> Result<MatrixForm> {
        let chart = self.cover.chart(i).clone();
        let ch = chart.clone();
        MatrixForm::field(chart, self.rank, self.rank, |n| {
            let x = ch.node_coords(n);
            match self.cover.transition(i, j, &x) {
                Some(y) if self.cover.chart(j).contains(&y) => self.transition(i, j, &x),
                _ => linalg::identity(self.rank),
            }
        })
    }

    /// Same transitions over another sampling of the same atlas.
    pub fn with_cover(&self, cover: Arc<ManifoldCover>) -> Result<Arc<Self>> {
        BundleData::new(self.rank, self.real, cover, self.transitions.clone())
    }

    pub fn direct_sum(a: &Arc<BundleData>, b: &Arc<BundleData>) -> Result<Arc<BundleData>> {
        if !Arc::ptr_eq(&a.cover, &b.cover) {
            return Err(Error::InvalidBundle("direct sum of bundles over different covers".into()));
        }
        let k = a.cover.len();
        let mut transitions: Vec<Vec<Option<MatrixFn>>> = vec![vec![None; k]; k];
        for i in 0..k {
            for j in 0..k {
                if a.transitions[i][j].is_none() && b.transitions[i][j].is_none() {
                    continue;
                }
                let (a2, b2) = (a.clone(), b.clone());
                transitions[i][j] = Some(Arc::new(move |x: &[f64]| {
                    block_diag(&a2.transition(i, j, x), &b2.transition(i, j, x))
                }));
            }
        }
        BundleData::new(a.rank + b.rank, a.real && b.real, a.cover.clone(), transitions)
    }
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    m
}

/// Interpolate a matrix form's components at a point of its chart.
pub fn interpolate_matrix(m: &MatrixForm, x: &[f64]) -> Result<Vec<CMat>> {
    let st = stencil(m.chart(), x)?;
    Ok((0..m.component_count())
        .map(|comp| {
            let mut acc = CMat::zeros(m.rows(), m.cols());
            for (&node, &w) in st.nodes.iter().zip(&st.weights) {
                acc += m.at(node, comp) * c(w);
            }
            acc
        })
        .collect())
}

/// A connection given by its local matrices of 1-forms in every chart.
#[derive(Clone)]
pub struct ConnectionData {
    bundle: Arc<BundleData>,
    omega: Vec<MatrixForm>,
    sources: Option<Vec<OmegaFn>>,
}

impl fmt::Debug for ConnectionData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionData")
            .field("bundle", &self.bundle)
            .field("analytic", &self.sources.is_some())
            .finish()
    }
}

impl ConnectionData {
    /// Sampled connection matrices; compatibility on overlaps is checked.
    pub fn new(bundle: Arc<BundleData>, omega: Vec<MatrixForm>) -> Result<Self> {
        let conn = ConnectionData {
            bundle,
            omega,
            sources: None,
        };
        conn.validate_shapes()?;
        conn.check_compatibility()?;
        Ok(conn)
    }

    /// Connection from closures; the closures are kept for off-grid evaluation.
    pub fn from_fns(bundle: Arc<BundleData>, fns: Vec<OmegaFn>) -> Result<Self> {
        let cover = bundle.cover().clone();
        if fns.len() != cover.len() {
            return Err(Error::InvalidBundle(format!(
                "{} connection closures for {} charts",
                fns.len(),
                cover.len()
            )));
        }
        let r = bundle.rank();
        let omega = cover
            .charts()
            .iter()
            .zip(&fns)
            .map(|(ch, f)| MatrixForm::from_fn(ch.clone(), 1, r, r, |x| f(x)))
            .collect::<Result<Vec<_>>>()?;
        let conn = ConnectionData {
            bundle,
            omega,
            sources: Some(fns),
        };
        conn.validate_shapes()?;
        conn.check_compatibility()?;
        Ok(conn)
    }

    /// The zero connection matrix in every chart.
    pub fn trivial(bundle: Arc<BundleData>) -> Result<Self> {
        let r = bundle.rank();
        let dim = bundle.cover().dim();
        let f: OmegaFn = Arc::new(move |_: &[f64]| vec![CMat::zeros(r, r); dim]);
        let k = bundle.cover().len();
        ConnectionData::from_fns(bundle, vec![f; k])
    }

    fn validate_shapes(&self) -> Result<()> {
        let cover = self.bundle.cover();
        if self.omega.len() != cover.len() {
            return Err(Error::InvalidBundle(format!(
                "{} connection matrices for {} charts",
                self.omega.len(),
                cover.len()
            )));
        }
        for (m, ch) in self.omega.iter().zip(cover.charts()) {
            if m.degree() != 1 || m.rows() != self.bundle.rank() || m.cols() != self.bundle.rank() {
                return Err(Error::InvalidBundle(format!(
                    "connection on {} must be a rank-{} matrix of 1-forms",
                    ch.name(),
                    self.bundle.rank()
                )));
            }
            if **m.chart() != **ch {
                return Err(Error::ChartMismatch(ch.name().into(), m.chart().name().into()));
            }
        }
        Ok(())
    }

    /// Tolerance for the overlap check: a multiple of `h²` scaled by the connection size.
    pub fn compatibility_tolerance(&self) -> f64 {
        let cover = self.bundle.cover();
        let h = cover.charts().iter().map(|c| c.max_spacing()).fold(0.0, f64::max);
        let scale = self.omega.iter().map(|m| m.max_norm()).fold(1.0, f64::max);
        1e-8 + 10.0 * h * h * scale
    }

    /// Largest overlap discrepancy `|τ*ω_j − (g⁻¹ω_i g + g⁻¹dg)|`.
    pub fn compatibility_defect(&self) -> Result<f64> {
        let cover = self.bundle.cover();
        let k = cover.len();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let nodes = overlap_nodes(cover, i, j);
                let d = nodes
                    .par_iter()
                    .map(|(n, x, y)| -> Result<f64> {
                        let Some(jac) = cover.transition_jacobian(i, j, x) else { return Ok(0.0) };
                        let g = self.bundle.transition(i, j, x);
                        let Some(ginv) = linalg::inverse(&g) else {
                            return Err(Error::InvalidBundle(format!("singular transition at {x:?}")));
                        };
                        let dg = self.bundle.transition_gradient(i, j, x);
                        let wi = self.omega[i].at_node(*n);
                        let wj = self.eval_omega(j, y)?;
                        let mut err = 0.0f64;
                        for a in 0..x.len() {
                            let mut pulled = CMat::zeros(g.nrows(), g.ncols());
                            for (b, wb) in wj.iter().enumerate() {
                                pulled += wb * c(jac[(b, a)]);
                            }
                            let expect = &ginv * &wi[a] * &g + &ginv * &dg[a];
                            err = err.max(linalg::frobenius(&(pulled - expect)));
                        }
                        Ok(err)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                worst = d.into_iter().fold(worst, f64::max);
            }
        }
        Ok(worst)
    }

    fn check_compatibility(&self) -> Result<()> {
        let defect = self.compatibility_defect()?;
        let tol = self.compatibility_tolerance();
        if defect > tol {
            return Err(Error::IncompatibleConnection {
                discrepancy: defect,
                tolerance: tol,
            });
        }
        Ok(())
    }

    pub fn bundle(&self) -> &Arc<BundleData> {
        &self.bundle
    }

    pub fn cover(&self) -> &Arc<ManifoldCover> {
        self.bundle.cover()
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    pub fn omega(&self, i: usize) -> &MatrixForm {
        &self.omega[i]
    }

    pub fn omegas(&self) -> &[MatrixForm] {
        &self.omega
    }

    pub fn sources(&self) -> Option<&[OmegaFn]> {
        self.sources.as_deref()
    }

    /// Connection components at an arbitrary point of chart `i`.
    pub fn eval_omega(&self, i: usize, x: &[f64]) -> Result<Vec<CMat>> {
        match &self.sources {
            Some(f) => Ok(f[i](x)),
            None => interpolate_matrix(&self.omega[i], x),
        }
    }

    /// `Ω = dω + ω∧ω` in each chart.
    pub fn curvature(&self) -> Result<Vec<MatrixForm>> {
        self.omega.iter().map(curvature_of).collect()
    }

    pub fn direct_sum(a: &ConnectionData, b: &ConnectionData) -> Result<ConnectionData> {
        let bundle = BundleData::direct_sum(&a.bundle, &b.bundle)?;
        let omega = a
            .omega
            .iter()
            .zip(&b.omega)
            .map(|(x, y)| x.block_diag(y))
            .collect::<Result<Vec<_>>>()?;
        let sources = match (&a.sources, &b.sources) {
            (Some(fa), Some(fb)) => Some(
                fa.iter()
                    .zip(fb)
                    .map(|(f, g)| {
                        let (f, g) = (f.clone(), g.clone());
                        Arc::new(move |x: &[f64]| {
                            f(x).iter().zip(g(x)).map(|(p, q)| block_diag(p, &q)).collect()
                        }) as OmegaFn
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(ConnectionData {
            bundle,
            omega,
            sources,
        })
    }
}

pub fn curvature_of(omega: &MatrixForm) -> Result<MatrixForm> {
    let mut out = omega.exterior_derivative();
    out.add_scaled(c(1.0), &omega.matrix_wedge(omega)?)?;
    Ok(out)
}

/// Pull a bundle with connection back along `f`, given chart by chart: chart `a` of
/// `cover` maps into chart `maps[a].0` of the original base.
pub fn pullback_bundle(
    conn: &ConnectionData,
    cover: Arc<ManifoldCover>,
    maps: Vec<(usize, PointMap)>,
) -> Result<ConnectionData> {
    let src = conn.bundle();
    let k = cover.len();
    if maps.len() != k {
        return Err(Error::InvalidBundle(format!("{} chart maps for {k} charts", maps.len())));
    }
    let mut transitions: Vec<Vec<Option<MatrixFn>>> = vec![vec![None; k]; k];
    for a in 0..k {
        for b in 0..k {
            let (sa, sb) = (maps[a].0, maps[b].0);
            if a == b || (sa == sb && src.transition_fn(sa, sb).is_none()) {
                continue;
            }
            let (s, fa) = (src.clone(), maps[a].1.clone());
            transitions[a][b] = Some(Arc::new(move |x: &[f64]| s.transition(sa, sb, &fa(x))));
        }
    }
    let bundle = BundleData::new(src.rank(), src.is_real(), cover.clone(), transitions)?;
    let r = src.rank();
    let src_dim = src.cover().dim();
    let mut omega = Vec::with_capacity(k);
    for (a, (sa, fa)) in maps.iter().enumerate() {
        let chart: Arc<Chart> = cover.chart(a).clone();
        let fa2 = fa.clone();
        let sampled = SampledMap::new(chart.clone(), move |x| fa2(x));
        let mut entries = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                let source = FnSource {
                    dim: src_dim,
                    degree: 1,
                    f: |y: &[f64]| -> Result<Vec<Complex64>> {
                        Ok(conn.eval_omega(*sa, y)?.iter().map(|m| m[(i, j)]).collect())
                    },
                };
                entries.push(pullback(&source, &sampled)?);
            }
        }
        omega.push(MatrixForm::from_entries(r, r, &entries)?);
    }
    ConnectionData::new(bundle, omega)
}

/// Hermitian positive-definite fiber metric in every chart frame.
#[derive(Clone)]
pub struct FiberMetric {
    h: Vec<MatrixForm>,
    fns: Vec<MatrixFn>,
}

impl fmt::Debug for FiberMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiberMetric").field("charts", &self.h.len()).finish()
    }
}

pub const METRIC_FLOOR: f64 = 1e-10;

impl FiberMetric {
    pub fn from_fns(bundle: &BundleData, fns: Vec<MatrixFn>) -> Result<Self> {
        let cover = bundle.cover();
        if fns.len() != cover.len() {
            return Err(Error::InvalidBundle(format!("{} metrics for {} charts", fns.len(), cover.len())));
        }
        let r = bundle.rank();
        let fns: Vec<MatrixFn> = fns
            .into_iter()
            .map(|f| Arc::new(move |x: &[f64]| linalg::hermitize(&f(x))) as MatrixFn)
            .collect();
        let mut h = Vec::with_capacity(fns.len());
        for (ch, f) in cover.charts().iter().zip(&fns) {
            let ch2 = ch.clone();
            let m = MatrixForm::field(ch.clone(), r, r, |n| f(&ch2.node_coords(n)))?;
            for node in 0..ch.node_count() {
                let e = linalg::min_eigenvalue(&m.at(node, 0));
                if !(e > METRIC_FLOOR) {
                    return Err(Error::SingularMetric {
                        chart: ch.name().to_string(),
                        node,
                        min_eigenvalue: e,
                    });
                }
            }
            h.push(m);
        }
        Ok(FiberMetric { h, fns })
    }

    /// Identity in every chart frame.
    pub fn identity(bundle: &BundleData) -> Self {
        let r = bundle.rank();
        let f: MatrixFn = Arc::new(move |_: &[f64]| linalg::identity(r));
        FiberMetric::from_fns(bundle, vec![f; bundle.cover().len()]).expect("identity metric")
    }

    pub fn at(&self, i: usize, x: &[f64]) -> CMat {
        (self.fns[i])(x)
    }

    pub fn at_node(&self, i: usize, node: usize) -> CMat {
        self.h[i].at(node, 0)
    }

    pub fn sampled(&self, i: usize) -> &MatrixForm {
        &self.h[i]
    }

    pub fn fns(&self) -> &[MatrixFn] {
        &self.fns
    }

    /// Largest violation of `h_j = g_ijᴴ h_i g_ij` on overlap nodes.
    pub fn consistency_defect(&self, bundle: &BundleData) -> f64 {
        let cover = bundle.cover();
        let mut worst = 0.0f64;
        for i in 0..cover.len() {
            for j in 0..cover.len() {
                if i == j {
                    continue;
                }
                for (n, x, y) in overlap_nodes(cover, i, j) {
                    let g = bundle.transition(i, j, &x);
                    let d = g.adjoint() * self.at_node(i, n) * &g - self.at(j, &y);
                    worst = worst.max(linalg::frobenius(&d));
                }
            }
        }
        worst
    }
}

/// A bundle with a connection and a compatible Hermitian metric.
#[derive(Clone)]
pub struct HermitianBundle {
    pub bundle: Arc<BundleData>,
    pub connection: ConnectionData,
    pub metric: FiberMetric,
}

/// A point of the base given in one chart.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SingularPoint {
    pub chart: usize,
    pub coords: Vec<f64>,
}

/// A bundle map `E -> F` given by local matrices `A_i` (rows: rank F, cols: rank E).
#[derive(Clone)]
pub struct BundleMapData {
    source: Arc<BundleData>,
    target: Arc<BundleData>,
    maps: Vec<MatrixFn>,
    sampled: Vec<MatrixForm>,
    singular_points: Vec<SingularPoint>,
    mask_cells: f64,
}

impl fmt::Debug for BundleMapData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BundleMapData")
            .field("source_rank", &self.source.rank())
            .field("target_rank", &self.target.rank())
            .field("singular_points", &self.singular_points)
            .finish()
    }
}

impl BundleMapData {
    pub fn new(
        source: Arc<BundleData>,
        target: Arc<BundleData>,
        maps: Vec<MatrixFn>,
        singular_points: Vec<SingularPoint>,
    ) -> Result<Self> {
        BundleMapData::with_floor(source, target, maps, singular_points, DEFAULT_INJECTIVITY_FLOOR, DEFAULT_MASK_CELLS)
    }

    pub fn with_floor(
        source: Arc<BundleData>,
        target: Arc<BundleData>,
        maps: Vec<MatrixFn>,
        singular_points: Vec<SingularPoint>,
        floor: f64,
        mask_cells: f64,
    ) -> Result<Self> {
        let m = BundleMapData::unchecked(source, target, maps, singular_points, mask_cells)?;
        m.check_intertwining()?;
        m.check_floor(floor)?;
        Ok(m)
    }

    fn unchecked(
        source: Arc<BundleData>,
        target: Arc<BundleData>,
        maps: Vec<MatrixFn>,
        singular_points: Vec<SingularPoint>,
        mask_cells: f64,
    ) -> Result<Self> {
        if !Arc::ptr_eq(source.cover(), target.cover()) {
            return Err(Error::InvalidBundle("bundle map between bundles over different covers".into()));
        }
        let cover = source.cover().clone();
        if maps.len() != cover.len() {
            return Err(Error::InvalidBundle(format!("{} local maps for {} charts", maps.len(), cover.len())));
        }
        let (rf, re) = (target.rank(), source.rank());
        let sampled = cover
            .charts()
            .iter()
            .zip(&maps)
            .map(|(ch, f)| {
                let ch2 = ch.clone();
                MatrixForm::field(ch.clone(), rf, re, |n| f(&ch2.node_coords(n)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BundleMapData {
            source,
            target,
            maps,
            sampled,
            singular_points,
            mask_cells,
        })
    }

    fn check_intertwining(&self) -> Result<()> {
        let cover = self.source.cover();
        for i in 0..cover.len() {
            for j in 0..cover.len() {
                if i == j {
                    continue;
                }
                for (n, x, y) in overlap_nodes(cover, i, j) {
                    let gf = self.target.transition(i, j, &x);
                    let ge = self.source.transition(i, j, &x);
                    let Some(gf_inv) = linalg::inverse(&gf) else { continue };
                    let expect = gf_inv * self.sampled[i].at(n, 0) * ge;
                    let got = self.eval(j, &y);
                    let scale = 1.0 + linalg::frobenius(&got);
                    let d = linalg::frobenius(&(got - expect));
                    if d > INTERTWINE_TOL * scale {
                        return Err(Error::InvalidBundle(format!(
                            "bundle map does not intertwine transitions {i}->{j} at {x:?} (defect {d:.3e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_floor(&self, floor: f64) -> Result<()> {
        let cover = self.source.cover();
        for (i, ch) in cover.charts().iter().enumerate() {
            let mask = self.mask(i);
            for node in 0..ch.node_count() {
                if mask[node] {
                    continue;
                }
                let s = linalg::sigma_min(&self.sampled[i].at(node, 0));
                if s < floor {
                    let chart = ch.name().to_string();
                    return Err(if self.target.rank() >= self.source.rank() {
                        Error::InjectivityFloor {
                            chart,
                            node,
                            sigma_min: s,
                        }
                    } else {
                        Error::NotSurjective {
                            chart,
                            node,
                            sigma_min: s,
                        }
                    });
                }
            }
        }
        Ok(())
    }

    pub fn source(&self) -> &Arc<BundleData> {
        &self.source
    }

    pub fn target(&self) -> &Arc<BundleData> {
        &self.target
    }

    pub fn cover(&self) -> &Arc<ManifoldCover> {
        self.source.cover()
    }

    pub fn eval(&self, i: usize, x: &[f64]) -> CMat {
        (self.maps[i])(x)
    }

    pub fn maps(&self) -> &[MatrixFn] {
        &self.maps
    }

    pub fn sampled(&self, i: usize) -> &MatrixForm {
        &self.sampled[i]
    }

    pub fn singular_points(&self) -> &[SingularPoint] {
        &self.singular_points
    }

    pub fn mask_cells(&self) -> f64 {
        self.mask_cells
    }

    /// Representations of every declared singular point inside chart `i`.
    pub fn singular_points_in(&self, i: usize) -> Vec<Vec<f64>> {
        let cover = self.cover();
        self.singular_points
            .iter()
            .filter_map(|p| {
                let y = cover.transition(p.chart, i, &p.coords)?;
                cover.chart(i).contains(&y).then_some(y)
            })
            .collect()
    }

    /// Nodes of chart `i` within `radius` of a declared singular point.
    pub fn mask_with_radius(&self, i: usize, radius: f64) -> Vec<bool> {
        let ch = self.cover().chart(i);
        let pts = self.singular_points_in(i);
        (0..ch.node_count())
            .map(|n| {
                let x = ch.node_coords(n);
                pts.iter().any(|p| ch.distance(&x, p) <= radius)
            })
            .collect()
    }

    /// Mask of `mask_cells` grid cells around declared singular points.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        let h = self.cover().chart(i).max_spacing();
        self.mask_with_radius(i, self.mask_cells * h * (1.0 + 1e-9))
    }

    /// Metric adjoint `A* = hE⁻¹ Aᴴ hF`, a bundle map `F -> E`.
    pub fn adjoint(&self, h_e: &FiberMetric, h_f: &FiberMetric) -> Result<BundleMapData> {
        let maps = (0..self.maps.len())
            .map(|i| {
                let a = self.maps[i].clone();
                let he = h_e.fns[i].clone();
                let hf = h_f.fns[i].clone();
                Arc::new(move |x: &[f64]| {
                    linalg::metric_adjoint(&a(x), &he(x), &hf(x)).expect("metric is positive definite")
                }) as MatrixFn
            })
            .collect();
        BundleMapData::unchecked(
            self.target.clone(),
            self.source.clone(),
            maps,
            self.singular_points.clone(),
            self.mask_cells,
        )
    }

    /// Same map with new local matrices (used after normalization), unchecked floor.
    pub fn with_maps(&self, maps: Vec<MatrixFn>) -> Result<BundleMapData> {
        let m = BundleMapData::unchecked(
            self.source.clone(),
            self.target.clone(),
            maps,
            self.singular_points.clone(),
            self.mask_cells,
        )?;
        m.check_intertwining()?;
        Ok(m)
    }

    /// Rebind to other source/target bundles over the same cover.
    pub fn rebind(
        &self,
        source: Arc<BundleData>,
        target: Arc<BundleData>,
        maps: Vec<MatrixFn>,
    ) -> Result<BundleMapData> {
        let m = BundleMapData::unchecked(source, target, maps, self.singular_points.clone(), self.mask_cells)?;
        m.check_intertwining()?;
        Ok(m)
    }
}

/// Connection induced on a subbundle cut out by a projector: the orthogonal
/// complement of the image of an injective map, or the kernel of a surjective one.
///
/// Local frames are built by Gram–Schmidt from coordinate vectors and are only used
/// through the curvature, whose invariant polynomials do not depend on them.
#[derive(Debug, Clone)]
pub struct ComplementConnection {
    pub rank: usize,
    pub omega: Vec<MatrixForm>,
    /// Orthogonal projector onto the subbundle.
    pub projector: Vec<MatrixForm>,
    pub frames: Vec<MatrixForm>,
}

impl ComplementConnection {
    pub fn curvature(&self) -> Result<Vec<MatrixForm>> {
        self.omega.iter().map(curvature_of).collect()
    }
}

/// Orthogonal projector onto the image of `a` for the metric `h_f`.
pub fn image_projector(a: &CMat, h_e: &CMat, h_f: &CMat) -> Option<CMat> {
    let astar = linalg::metric_adjoint(a, h_e, h_f)?;
    let gram = &astar * a;
    Some(a * linalg::inverse(&gram)? * astar)
}

/// Gram–Schmidt (`h_f` inner product) on the columns of `q` taken in the cyclic order
/// starting at `offset`, keeping the first `m` independent ones. Returns the frame and
/// the smallest pivot norm among the kept columns.
pub fn complement_frame(q: &CMat, h_f: &CMat, m: usize, offset: usize) -> (CMat, f64) {
    let r = q.nrows();
    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(m);
    let mut pivot = f64::INFINITY;
    let ip = |u: &nalgebra::DVector<Complex64>, v: &nalgebra::DVector<Complex64>| (u.adjoint() * h_f * v)[(0, 0)];
    for t in 0..r {
        if cols.len() == m {
            break;
        }
        let mut v = q.column((offset + t) % r).into_owned();
        for u in &cols {
            let proj = ip(u, &v);
            v -= u * proj;
        }
        let nrm = ip(&v, &v).re.max(0.0).sqrt();
        if nrm > 1e-3 {
            pivot = pivot.min(nrm);
            cols.push(v / c(nrm));
        }
    }
    if cols.len() < m {
        pivot = 0.0;
    }
    let mut u = CMat::zeros(r, m);
    for (j, col) in cols.iter().enumerate() {
        u.set_column(j, col);
    }
    (u, pivot)
}

/// Column order for one chart: the offset (tried from `seed` on) whose worst pivot over
/// the unmasked nodes is largest. A fixed order keeps the frame smooth on the chart;
/// a column that vanishes somewhere would wind the frame around that point.
fn chart_frame_offset(q_field: &[CMat], h: &FiberMetric, chart: usize, mask: &[bool], m: usize, seed: usize) -> usize {
    let r = q_field.first().map_or(1, CMat::nrows).max(1);
    let mut best = (seed % r, f64::NEG_INFINITY);
    for t in 0..r {
        let offset = (seed + t) % r;
        let worst = q_field
            .iter()
            .enumerate()
            .filter(|(n, _)| !mask[*n])
            .map(|(n, q)| complement_frame(q, &h.at_node(chart, n), m, offset).1)
            .fold(f64::INFINITY, f64::min);
        if worst > best.1 {
            best = (offset, worst);
        }
    }
    best.0
}

pub fn image_complement_connection(
    alpha: &BundleMapData,
    d_f: &ConnectionData,
    h_e: &FiberMetric,
    h_f: &FiberMetric,
    seed: usize,
) -> Result<ComplementConnection> {
    let (re, rf) = (alpha.source().rank(), alpha.target().rank());
    if rf < re {
        return Err(Error::InvalidBundle("image complement needs rank F >= rank E".into()));
    }
    projected_connection(alpha, d_f, h_f, rf - re, seed, |i, node, a| {
        let p = image_projector(a, &h_e.at_node(i, node), &h_f.at_node(i, node));
        p.map(|p| linalg::identity(rf) - p)
    })
}

/// Orthogonal projector onto `ker a` for the source metric `h_e`.
pub fn kernel_projector(a: &CMat, h_e: &CMat, h_f: &CMat) -> Option<CMat> {
    let astar = linalg::metric_adjoint(a, h_e, h_f)?;
    let gram = a * &astar;
    Some(linalg::identity(a.ncols()) - &astar * linalg::inverse(&gram)? * a)
}

/// Connection induced by `D_E` on `K = ker α` for a surjective map.
pub fn kernel_connection(
    alpha: &BundleMapData,
    d_e: &ConnectionData,
    h_e: &FiberMetric,
    h_f: &FiberMetric,
    seed: usize,
) -> Result<ComplementConnection> {
    let (re, rf) = (alpha.source().rank(), alpha.target().rank());
    if rf > re {
        return Err(Error::InvalidBundle("kernel bundle needs rank E >= rank F".into()));
    }
    projected_connection(alpha, d_e, h_e, re - rf, seed, |i, node, a| {
        kernel_projector(a, &h_e.at_node(i, node), &h_f.at_node(i, node))
    })
}

/// `ω = Uᴴ h (dU + ω_D U)` for an `h`-orthonormal frame `U` of the range of the
/// projector `q(chart, node, A)`.
fn projected_connection(
    alpha: &BundleMapData,
    d: &ConnectionData,
    h: &FiberMetric,
    m: usize,
    seed: usize,
    q: impl Fn(usize, usize, &CMat) -> Option<CMat>,
) -> Result<ComplementConnection> {
    let r = d.rank();
    let cover = alpha.cover();
    let injective = alpha.target().rank() >= alpha.source().rank();
    let mut omega = Vec::new();
    let mut projector = Vec::new();
    let mut frames = Vec::new();
    for (i, ch) in cover.charts().iter().enumerate() {
        let mask = alpha.mask(i);
        let mut q_field = Vec::with_capacity(ch.node_count());
        for node in 0..ch.node_count() {
            let a = alpha.sampled(i).at(node, 0);
            let s = linalg::sigma_min(&a);
            if !mask[node] && s < DEFAULT_INJECTIVITY_FLOOR {
                let chart = ch.name().to_string();
                return Err(if injective {
                    Error::InjectivityFloor { chart, node, sigma_min: s }
                } else {
                    Error::NotSurjective { chart, node, sigma_min: s }
                });
            }
            q_field.push(q(i, node, &a).unwrap_or_else(|| CMat::zeros(r, r)));
        }
        let p = MatrixForm::field(ch.clone(), r, r, |n| q_field[n].clone())?;
        let offset = chart_frame_offset(&q_field, h, i, &mask, m, seed);
        let u = MatrixForm::field(ch.clone(), r, m, |n| complement_frame(&q_field[n], &h.at_node(i, n), m, offset).0)?;
        let uh_h = MatrixForm::field(ch.clone(), m, r, |n| u.at(n, 0).adjoint() * h.at_node(i, n))?;
        let du = u.exterior_derivative();
        let wu = d.omega(i).matrix_wedge(&u)?;
        omega.push(uh_h.matrix_wedge(&du.add(&wu)?)?);
        projector.push(p);
        frames.push(u);
    }
    Ok(ComplementConnection {
        rank: m,
        omega,
        projector,
        frames,
    })
}
