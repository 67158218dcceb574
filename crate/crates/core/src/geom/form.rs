use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::chart::{binomial, combination_rank, combinations, shuffle_sign, Chart};
use crate::error::{Error, Result};

/// A degree-`p` form on a chart grid: one complex field per increasing multi-index.
///
/// Degrees above the chart dimension exist only as the structural zero returned by
/// [`DifferentialForm::vanishing`]; such forms carry no coefficient fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialForm {
    chart: Arc<Chart>,
    degree: usize,
    coeffs: Vec<Vec<Complex64>>,
}

impl DifferentialForm {
    pub fn new(chart: Arc<Chart>, degree: usize, coeffs: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = chart.dim();
        if degree > dim {
            return Err(Error::DegreeOutOfRange { degree, dim });
        }
        let want = binomial(dim, degree);
        if coeffs.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "degree {degree} on a {dim}-chart needs {want} coefficient fields, got {}",
                coeffs.len()
            )));
        }
        let n = chart.node_count();
        if let Some(bad) = coeffs.iter().find(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "coefficient field has {} samples, chart has {n} nodes",
                bad.len()
            )));
        }
        Ok(DifferentialForm {
            chart,
            degree,
            coeffs,
        })
    }

    pub fn zero(chart: Arc<Chart>, degree: usize) -> Result<Self> {
        let dim = chart.dim();
        if degree > dim {
            return Err(Error::DegreeOutOfRange { degree, dim });
        }
        let n = chart.node_count();
        Ok(DifferentialForm {
            coeffs: vec![vec![Complex64::new(0.0, 0.0); n]; binomial(dim, degree)],
            chart,
            degree,
        })
    }

    /// Zero form of any degree; for degree above the dimension it has no components.
    pub fn vanishing(chart: Arc<Chart>, degree: usize) -> Self {
        let n = chart.node_count();
        DifferentialForm {
            coeffs: vec![vec![Complex64::new(0.0, 0.0); n]; binomial(chart.dim(), degree)],
            chart,
            degree,
        }
    }

    pub fn scalar(chart: Arc<Chart>, values: Vec<Complex64>) -> Result<Self> {
        DifferentialForm::new(chart, 0, vec![values])
    }

    /// Sample a form from a function returning the components in lexicographic order.
    pub fn from_fn<F>(chart: Arc<Chart>, degree: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<Complex64> + Sync,
    {
        let dim = chart.dim();
        if degree > dim {
            return Err(Error::DegreeOutOfRange { degree, dim });
        }
        let ncomp = binomial(dim, degree);
        let samples: Vec<Vec<Complex64>> = (0..chart.node_count())
            .into_par_iter()
            .map(|n| f(&chart.node_coords(n)))
            .collect();
        if let Some(bad) = samples.iter().find(|s| s.len() != ncomp) {
            return Err(Error::ShapeMismatch(format!(
                "sampler returned {} components, expected {ncomp}",
                bad.len()
            )));
        }
        let mut coeffs = vec![Vec::with_capacity(samples.len()); ncomp];
        for s in samples {
            for (c, v) in coeffs.iter_mut().zip(s) {
                c.push(v);
            }
        }
        DifferentialForm::new(chart, degree, coeffs)
    }

    pub fn scalar_fn<F>(chart: Arc<Chart>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let values = (0..chart.node_count())
            .into_par_iter()
            .map(|n| f(&chart.node_coords(n)))
            .collect();
        DifferentialForm {
            chart,
            degree: 0,
            coeffs: vec![values],
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// True for the structural zero of a degree above the chart dimension.
    pub fn is_structural_zero(&self) -> bool {
        self.degree > self.chart.dim()
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    pub fn component(&self, index: &[usize]) -> &[Complex64] {
        &self.coeffs[combination_rank(self.dim(), index)]
    }

    pub fn component_mut(&mut self, index: &[usize]) -> &mut Vec<Complex64> {
        let r = combination_rank(self.dim(), index);
        &mut self.coeffs[r]
    }

    pub fn into_components(self) -> Vec<Vec<Complex64>> {
        self.coeffs
    }

    /// Component values at one node.
    pub fn at(&self, node: usize) -> Vec<Complex64> {
        self.coeffs.iter().map(|c| c[node]).collect()
    }

    /// The single coefficient of a top-degree form (or of a 0-form).
    pub fn top(&self) -> &[Complex64] {
        &self.coeffs[0]
    }

    fn check_same(&self, other: &DifferentialForm) -> Result<()> {
        if !Arc::ptr_eq(&self.chart, &other.chart) && *self.chart != *other.chart {
            return Err(Error::ChartMismatch(
                self.chart.name().to_string(),
                other.chart.name().to_string(),
            ));
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &DifferentialForm,
        op: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<DifferentialForm> {
        self.check_same(other)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect())
            .collect();
        Ok(DifferentialForm {
            chart: self.chart.clone(),
            degree: self.degree,
            coeffs,
        })
    }

    pub fn add(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &DifferentialForm) -> Result<()> {
        self.add_scaled(Complex64::new(1.0, 0.0), other)
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: Complex64, other: &DifferentialForm) -> Result<()> {
        self.check_same(other)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        Ok(())
    }

    pub fn scale(&self, c: Complex64) -> DifferentialForm {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> DifferentialForm {
        DifferentialForm {
            chart: self.chart.clone(),
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    /// Multiply every component by a pointwise function of the node index.
    pub fn map_nodes(&self, f: impl Fn(usize, Complex64) -> Complex64) -> DifferentialForm {
        DifferentialForm {
            chart: self.chart.clone(),
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().enumerate().map(|(n, &v)| f(n, v)).collect())
                .collect(),
        }
    }

    /// Exterior derivative with second-order stencils.
    ///
    /// Differentiating a top-degree form yields the structural zero of degree `dim + 1`.
    pub fn exterior_derivative(&self) -> DifferentialForm {
        let dim = self.dim();
        let p = self.degree;
        if p >= dim {
            return DifferentialForm::vanishing(self.chart.clone(), p + 1);
        }
        let n = self.chart.node_count();
        let targets = combinations(dim, p + 1);
        let coeffs: Vec<Vec<Complex64>> = targets
            .par_iter()
            .map(|target| {
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                for (k, &axis) in target.iter().enumerate() {
                    let mut rest = target.clone();
                    rest.remove(k);
                    let src = &self.coeffs[combination_rank(dim, &rest)];
                    let deriv = partial(&self.chart, src, axis);
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    for (a, d) in acc.iter_mut().zip(deriv) {
                        *a += d * sign;
                    }
                }
                acc
            })
            .collect();
        DifferentialForm {
            chart: self.chart.clone(),
            degree: p + 1,
            coeffs,
        }
    }

    /// Pointwise wedge product with shuffle signs.
    ///
    /// Products whose degree exceeds the dimension return the structural zero.
    pub fn wedge(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        self.check_same(other)?;
        let dim = self.dim();
        let (p, q) = (self.degree, other.degree);
        if p + q > dim || self.is_structural_zero() || other.is_structural_zero() {
            return Ok(DifferentialForm::vanishing(self.chart.clone(), p + q));
        }
        let n = self.chart.node_count();
        let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); n]; binomial(dim, p + q)];
        let left = combinations(dim, p);
        let right = combinations(dim, q);
        for (i, a) in left.iter().enumerate() {
            for (j, b) in right.iter().enumerate() {
                let Some(sign) = shuffle_sign(a, b) else {
                    continue;
                };
                let mut merged: Vec<usize> = a.iter().chain(b).copied().collect();
                merged.sort_unstable();
                let out = &mut coeffs[combination_rank(dim, &merged)];
                let (fa, fb) = (&self.coeffs[i], &other.coeffs[j]);
                for node in 0..n {
                    out[node] += fa[node] * fb[node] * sign;
                }
            }
        }
        Ok(DifferentialForm {
            chart: self.chart.clone(),
            degree: p + q,
            coeffs,
        })
    }

    /// Largest pointwise Euclidean norm of the coefficient vector.
    pub fn max_norm(&self) -> f64 {
        self.max_norm_where(|_| true)
    }

    /// Largest pointwise coefficient norm over nodes accepted by `keep`.
    pub fn max_norm_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        let n = self.chart.node_count();
        let mut best = 0.0f64;
        for node in 0..n {
            if !keep(node) {
                continue;
            }
            let s: f64 = self.coeffs.iter().map(|c| c[node].norm_sqr()).sum();
            best = best.max(s.sqrt());
        }
        best
    }

    /// Integral of a top-degree form over the chart box with trapezoid end weights
    /// on non-periodic axes, optionally weighted by a partition function.
    pub fn integrate(&self, weight: Option<&[f64]>) -> Result<Complex64> {
        let dim = self.dim();
        if self.degree != dim {
            return Err(Error::DegreeMismatch {
                expected: dim,
                found: self.degree,
            });
        }
        let f = &self.coeffs[0];
        let vol = self.chart.cell_volume();
        let mut sum = Complex64::new(0.0, 0.0);
        for (node, &v) in f.iter().enumerate() {
            let mut w = vol;
            for k in 0..dim {
                let ax = self.chart.axis(k);
                if !ax.periodic {
                    let i = self.chart.axis_index(node, k);
                    if i == 0 || i == ax.nodes - 1 {
                        w *= 0.5;
                    }
                }
            }
            if let Some(pw) = weight {
                w *= pw[node];
            }
            sum += v * w;
        }
        Ok(sum)
    }
}

/// Second-order partial derivative of a nodal field along `axis`.
pub fn partial(chart: &Chart, f: &[Complex64], axis: usize) -> Vec<Complex64> {
    let ax = chart.axis(axis);
    let stride = chart.stride(axis);
    let m = ax.nodes;
    let h = ax.spacing();
    let inv2h = 1.0 / (2.0 * h);
    (0..f.len())
        .map(|node| {
            let i = chart.axis_index(node, axis);
            let base = node - i * stride;
            let at = |j: usize| f[base + j * stride];
            if ax.periodic {
                let ip = (i + 1) % m;
                let im = (i + m - 1) % m;
                (at(ip) - at(im)) * inv2h
            } else if i == 0 {
                (at(0) * -3.0 + at(1) * 4.0 - at(2)) * inv2h
            } else if i == m - 1 {
                (at(m - 1) * 3.0 - at(m - 2) * 4.0 + at(m - 3)) * inv2h
            } else {
                (at(i + 1) - at(i - 1)) * inv2h
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::chart::Axis;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn box2(n: usize) -> Arc<Chart> {
        Chart::cube("box", 2, 1.0, n).unwrap()
    }

    #[test]
    fn rejects_degree_above_dim() {
        assert!(DifferentialForm::zero(box2(8), 3).is_err());
        let v = DifferentialForm::vanishing(box2(8), 3);
        assert!(v.is_structural_zero());
        assert!(v.components().is_empty());
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = DifferentialForm::scalar_fn(box2(12), |_| c(3.5));
        assert!(f.exterior_derivative().max_norm() < 1e-12);
    }

    #[test]
    fn d_of_x_dy_is_area_form() {
        let ch = box2(16);
        let f = DifferentialForm::from_fn(ch, 1, |x| vec![c(0.0), c(x[0])]).unwrap();
        let df = f.exterior_derivative();
        for v in df.top() {
            assert!((v - c(1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn top_degree_derivative_is_structural_zero() {
        let ch = box2(10);
        let f = DifferentialForm::from_fn(ch, 2, |x| vec![c(x[0] * x[1])]).unwrap();
        let d = f.exterior_derivative();
        assert_eq!(d.degree(), 3);
        assert!(d.is_structural_zero());
    }

    #[test]
    fn wedge_of_hand_expansion() {
        let ch = box2(9);
        let a = DifferentialForm::from_fn(ch.clone(), 1, |x| vec![c(0.0), c(x[0])]).unwrap();
        let b = DifferentialForm::from_fn(ch.clone(), 1, |x| vec![c(x[1]), c(0.0)]).unwrap();
        let w = a.wedge(&b).unwrap();
        for (node, v) in w.top().iter().enumerate() {
            let x = ch.node_coords(node);
            assert!((v - c(-x[0] * x[1])).norm() < 1e-12);
        }
    }

    #[test]
    fn periodic_torus_area() {
        let tau = std::f64::consts::TAU;
        let ch = Chart::new(
            "torus",
            vec![Axis::periodic(0.0, tau, 32), Axis::periodic(0.0, tau, 24)],
        )
        .unwrap();
        let vol = DifferentialForm::from_fn(ch, 2, |_| vec![c(1.0)]).unwrap();
        let i = vol.integrate(None).unwrap();
        assert!((i.re - tau * tau).abs() < 1e-8);
    }
}
