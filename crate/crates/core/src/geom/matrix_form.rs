use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::chart::{binomial, combination_rank, combinations, shuffle_sign, Chart};
use super::form::{partial, DifferentialForm};
use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// A `rows x cols` matrix of forms of one common degree.
///
/// Storage is component-major: for each increasing multi-index a flat buffer of
/// `nodes * rows * cols` values, row-major within each node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixForm {
    chart: Arc<Chart>,
    degree: usize,
    rows: usize,
    cols: usize,
    data: Vec<Vec<Complex64>>,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl MatrixForm {
    pub fn zeros(chart: Arc<Chart>, degree: usize, rows: usize, cols: usize) -> Self {
        let len = chart.node_count() * rows * cols;
        MatrixForm {
            data: vec![vec![zero(); len]; binomial(chart.dim(), degree)],
            chart,
            degree,
            rows,
            cols,
        }
    }

    pub fn identity(chart: Arc<Chart>, r: usize) -> Self {
        let mut m = MatrixForm::zeros(chart, 0, r, r);
        let n = m.chart.node_count();
        for node in 0..n {
            for i in 0..r {
                m.data[0][node * r * r + i * r + i] = Complex64::new(1.0, 0.0);
            }
        }
        m
    }

    /// Build from per-node component matrices (one per increasing multi-index).
    pub fn from_nodes<F>(chart: Arc<Chart>, degree: usize, rows: usize, cols: usize, f: F) -> Result<Self>
    where
        F: Fn(usize) -> Vec<CMat> + Sync,
    {
        let dim = chart.dim();
        if degree > dim {
            return Err(Error::DegreeOutOfRange { degree, dim });
        }
        let ncomp = binomial(dim, degree);
        let per = rows * cols;
        let samples: Vec<Vec<CMat>> = (0..chart.node_count()).into_par_iter().map(&f).collect();
        let mut data = vec![Vec::with_capacity(samples.len() * per); ncomp];
        for s in &samples {
            if s.len() != ncomp {
                return Err(Error::ShapeMismatch(format!(
                    "sampler returned {} components, expected {ncomp}",
                    s.len()
                )));
            }
            for (buf, m) in data.iter_mut().zip(s) {
                if m.nrows() != rows || m.ncols() != cols {
                    return Err(Error::ShapeMismatch(format!(
                        "sampled {}x{} matrix, expected {rows}x{cols}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                for i in 0..rows {
                    for j in 0..cols {
                        buf.push(m[(i, j)]);
                    }
                }
            }
        }
        Ok(MatrixForm {
            chart,
            degree,
            rows,
            cols,
            data,
        })
    }

    /// Build by sampling a function of coordinates.
    pub fn from_fn<F>(chart: Arc<Chart>, degree: usize, rows: usize, cols: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<CMat> + Sync,
    {
        let ch = chart.clone();
        MatrixForm::from_nodes(chart, degree, rows, cols, move |n| f(&ch.node_coords(n)))
    }

    /// Degree-0 matrix field from a per-node matrix function.
    pub fn field<F>(chart: Arc<Chart>, rows: usize, cols: usize, f: F) -> Result<Self>
    where
        F: Fn(usize) -> CMat + Sync,
    {
        MatrixForm::from_nodes(chart, 0, rows, cols, |n| vec![f(n)])
    }

    /// Assemble from row-major scalar forms.
    pub fn from_entries(rows: usize, cols: usize, entries: &[DifferentialForm]) -> Result<Self> {
        if entries.len() != rows * cols || entries.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        let chart = entries[0].chart().clone();
        let degree = entries[0].degree();
        let mut m = MatrixForm::zeros(chart.clone(), degree, rows, cols);
        let n = chart.node_count();
        for (e, f) in entries.iter().enumerate() {
            if f.degree() != degree {
                return Err(Error::DegreeMismatch {
                    expected: degree,
                    found: f.degree(),
                });
            }
            if **f.chart() != *chart {
                return Err(Error::ChartMismatch(
                    chart.name().to_string(),
                    f.chart().name().to_string(),
                ));
            }
            for (buf, comp) in m.data.iter_mut().zip(f.components()) {
                for node in 0..n {
                    buf[node * rows * cols + e] = comp[node];
                }
            }
        }
        Ok(m)
    }

    /// Scalar form as a 1x1 matrix.
    pub fn from_scalar(f: &DifferentialForm) -> Self {
        MatrixForm::from_entries(1, 1, std::slice::from_ref(f)).expect("1x1 assembly")
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn component_count(&self) -> usize {
        self.data.len()
    }

    /// Matrix of one component at one node.
    pub fn at(&self, node: usize, comp: usize) -> CMat {
        let per = self.rows * self.cols;
        let s = &self.data[comp][node * per..(node + 1) * per];
        CMat::from_row_slice(self.rows, self.cols, s)
    }

    /// All component matrices at one node.
    pub fn at_node(&self, node: usize) -> Vec<CMat> {
        (0..self.data.len()).map(|c| self.at(node, c)).collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> DifferentialForm {
        let per = self.rows * self.cols;
        let n = self.chart.node_count();
        let coeffs = self
            .data
            .iter()
            .map(|buf| (0..n).map(|node| buf[node * per + i * self.cols + j]).collect())
            .collect();
        if self.degree > self.chart.dim() {
            return DifferentialForm::vanishing(self.chart.clone(), self.degree);
        }
        DifferentialForm::new(self.chart.clone(), self.degree, coeffs).expect("entry shape")
    }

    fn check_compatible(&self, other: &MatrixForm) -> Result<()> {
        if *self.chart != *other.chart {
            return Err(Error::ChartMismatch(
                self.chart.name().to_string(),
                other.chart.name().to_string(),
            ));
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &MatrixForm) -> Result<()> {
        self.check_compatible(other)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &MatrixForm) -> Result<MatrixForm> {
        let mut out = self.clone();
        out.add_scaled(Complex64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &MatrixForm) -> Result<MatrixForm> {
        let mut out = self.clone();
        out.add_scaled(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: Complex64, other: &MatrixForm) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        Ok(())
    }

    pub fn scale(&self, c: Complex64) -> MatrixForm {
        let mut out = self.clone();
        for buf in &mut out.data {
            for v in buf.iter_mut() {
                *v *= c;
            }
        }
        out
    }

    /// Graded matrix product: `(A∧B)_ij = Σ_k A_ik ∧ B_kj`.
    pub fn matrix_wedge(&self, other: &MatrixForm) -> Result<MatrixForm> {
        self.check_compatible(other)?;
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let dim = self.chart.dim();
        let (p, q) = (self.degree, other.degree);
        let (r, m, c) = (self.rows, self.cols, other.cols);
        let mut out = MatrixForm::zeros(self.chart.clone(), p + q, r, c);
        if p + q > dim {
            return Ok(out);
        }
        let left = combinations(dim, p);
        let right = combinations(dim, q);
        for (ia, a) in left.iter().enumerate() {
            for (ib, b) in right.iter().enumerate() {
                let Some(sign) = shuffle_sign(a, b) else {
                    continue;
                };
                let mut merged: Vec<usize> = a.iter().chain(b).copied().collect();
                merged.sort_unstable();
                let target = combination_rank(dim, &merged);
                let (fa, fb) = (&self.data[ia], &other.data[ib]);
                let buf = &mut out.data[target];
                buf.par_chunks_mut(r * c).enumerate().for_each(|(node, dst)| {
                    let ao = node * r * m;
                    let bo = node * m * c;
                    for i in 0..r {
                        for j in 0..c {
                            let mut s = zero();
                            for k in 0..m {
                                s += fa[ao + i * m + k] * fb[bo + k * c + j];
                            }
                            dst[i * c + j] += s * sign;
                        }
                    }
                });
            }
        }
        Ok(out)
    }

    /// Entrywise exterior derivative; top degree maps to the structural zero.
    pub fn exterior_derivative(&self) -> MatrixForm {
        let dim = self.chart.dim();
        let p = self.degree;
        let (r, c) = (self.rows, self.cols);
        let mut out = MatrixForm::zeros(self.chart.clone(), p + 1, r, c);
        if p >= dim {
            return out;
        }
        let n = self.chart.node_count();
        let per = r * c;
        for (t, target) in combinations(dim, p + 1).iter().enumerate() {
            for (k, &axis) in target.iter().enumerate() {
                let mut rest = target.clone();
                rest.remove(k);
                let src = &self.data[combination_rank(dim, &rest)];
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                for e in 0..per {
                    let field: Vec<Complex64> = (0..n).map(|node| src[node * per + e]).collect();
                    let d = partial(&self.chart, &field, axis);
                    let buf = &mut out.data[t];
                    for node in 0..n {
                        buf[node * per + e] += d[node] * sign;
                    }
                }
            }
        }
        out
    }

    /// Trace as a scalar form.
    pub fn trace(&self) -> Result<DifferentialForm> {
        if !self.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "trace of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        if self.degree > self.chart.dim() {
            return Ok(DifferentialForm::vanishing(self.chart.clone(), self.degree));
        }
        let n = self.chart.node_count();
        let r = self.rows;
        let coeffs = self
            .data
            .iter()
            .map(|buf| {
                (0..n)
                    .map(|node| (0..r).map(|i| buf[node * r * r + i * r + i]).sum())
                    .collect()
            })
            .collect();
        DifferentialForm::new(self.chart.clone(), self.degree, coeffs)
    }

    /// Block-diagonal sum `diag(self, other)`.
    pub fn block_diag(&self, other: &MatrixForm) -> Result<MatrixForm> {
        self.check_compatible(other)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        let (r1, c1, r2, c2) = (self.rows, self.cols, other.rows, other.cols);
        let (r, c) = (r1 + r2, c1 + c2);
        let mut out = MatrixForm::zeros(self.chart.clone(), self.degree, r, c);
        let n = self.chart.node_count();
        for comp in 0..self.data.len() {
            let (a, b) = (&self.data[comp], &other.data[comp]);
            let buf = &mut out.data[comp];
            for node in 0..n {
                for i in 0..r1 {
                    for j in 0..c1 {
                        buf[node * r * c + i * c + j] = a[node * r1 * c1 + i * c1 + j];
                    }
                }
                for i in 0..r2 {
                    for j in 0..c2 {
                        buf[node * r * c + (r1 + i) * c + c1 + j] = b[node * r2 * c2 + i * c2 + j];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pointwise transform of the per-node component matrices.
    pub fn map_nodes<F>(&self, degree: usize, rows: usize, cols: usize, f: F) -> Result<MatrixForm>
    where
        F: Fn(usize, Vec<CMat>) -> Vec<CMat> + Sync,
    {
        MatrixForm::from_nodes(self.chart.clone(), degree, rows, cols, |n| {
            f(n, self.at_node(n))
        })
    }

    /// Largest pointwise Frobenius norm over all components.
    pub fn max_norm(&self) -> f64 {
        self.max_norm_where(|_| true)
    }

    pub fn max_norm_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        let per = self.rows * self.cols;
        let n = self.chart.node_count();
        let mut best = 0.0f64;
        for node in 0..n {
            if !keep(node) {
                continue;
            }
            let s: f64 = self
                .data
                .iter()
                .map(|buf| buf[node * per..(node + 1) * per].iter().map(|v| v.norm_sqr()).sum::<f64>())
                .sum();
            best = best.max(s.sqrt());
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn abelian_one_form_squares_to_zero() {
        let ch = Chart::cube("b", 2, 1.0, 10).unwrap();
        let w = MatrixForm::from_fn(ch, 1, 1, 1, |x| {
            vec![CMat::from_element(1, 1, c(x[1].sin())), CMat::from_element(1, 1, c(x[0] * x[1]))]
        })
        .unwrap();
        assert!(w.matrix_wedge(&w).unwrap().max_norm() < 1e-14);
    }

    #[test]
    fn identity_is_unit() {
        let ch = Chart::cube("b", 2, 1.0, 8).unwrap();
        let b = MatrixForm::from_fn(ch.clone(), 1, 2, 2, |x| {
            vec![
                CMat::from_fn(2, 2, |i, j| c(x[0] + i as f64 - j as f64)),
                CMat::from_fn(2, 2, |i, j| c(x[1] * (i * 2 + j) as f64)),
            ]
        })
        .unwrap();
        let id = MatrixForm::identity(ch, 2);
        assert_eq!(id.matrix_wedge(&b).unwrap(), b);
    }

    #[test]
    fn entries_roundtrip() {
        let ch = Chart::cube("b", 2, 1.0, 8).unwrap();
        let m = MatrixForm::from_fn(ch, 1, 2, 3, |x| {
            vec![
                CMat::from_fn(2, 3, |i, j| c(x[0] * (i + 3 * j) as f64)),
                CMat::from_fn(2, 3, |i, j| c(x[1] - (i * j) as f64)),
            ]
        })
        .unwrap();
        let entries: Vec<_> = (0..2)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| m.entry(i, j))
            .collect();
        assert_eq!(MatrixForm::from_entries(2, 3, &entries).unwrap(), m);
    }

    #[test]
    fn block_diag_trace_adds() {
        let ch = Chart::cube("b", 2, 1.0, 8).unwrap();
        let a = MatrixForm::from_fn(ch.clone(), 2, 1, 1, |x| vec![CMat::from_element(1, 1, c(x[0]))]).unwrap();
        let b = MatrixForm::from_fn(ch, 2, 2, 2, |x| vec![CMat::from_fn(2, 2, |i, j| c(x[1] + (i + j) as f64))]).unwrap();
        let s = a.block_diag(&b).unwrap().trace().unwrap();
        let t = a.trace().unwrap().add(&b.trace().unwrap()).unwrap();
        assert!(s.sub(&t).unwrap().max_norm() < 1e-12);
    }
}
