use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::chart::{binomial, combinations, Chart};
use super::form::DifferentialForm;
use super::interp::stencil;
use super::matrix_form::MatrixForm;
use crate::error::{Error, Result};

/// Anything that can report the components of a form at a coordinate point.
pub trait FormSource: Sync {
    fn dim(&self) -> usize;
    fn degree(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<Complex64>>;
}

impl FormSource for DifferentialForm {
    fn dim(&self) -> usize {
        self.chart().dim()
    }

    fn degree(&self) -> usize {
        DifferentialForm::degree(self)
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let st = stencil(self.chart(), x)?;
        Ok(self.components().iter().map(|c| st.apply(c)).collect())
    }
}

/// A form given by a closure in the source coordinates.
pub struct FnSource<F> {
    pub dim: usize,
    pub degree: usize,
    pub f: F,
}

impl<F> FormSource for FnSource<F>
where
    F: Fn(&[f64]) -> Result<Vec<Complex64>> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn degree(&self) -> usize {
        self.degree
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        (self.f)(x)
    }
}

/// A smooth map sampled on the nodes of a target chart together with its
/// second-order finite-difference Jacobian.
#[derive(Debug, Clone)]
pub struct SampledMap {
    pub chart: Arc<Chart>,
    pub values: Vec<Vec<f64>>,
    pub jacobians: Vec<DMatrix<f64>>,
}

impl SampledMap {
    pub fn new<F>(chart: Arc<Chart>, map: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        let values: Vec<Vec<f64>> = (0..chart.node_count())
            .into_par_iter()
            .map(|n| map(&chart.node_coords(n)))
            .collect();
        let m = values.first().map_or(0, Vec::len);
        let dim = chart.dim();
        let mut jacobians = vec![DMatrix::<f64>::zeros(m, dim); values.len()];
        for k in 0..dim {
            let ax = chart.axis(k);
            let stride = chart.stride(k);
            let nk = ax.nodes;
            let inv2h = 1.0 / (2.0 * ax.spacing());
            for (node, jac) in jacobians.iter_mut().enumerate() {
                let i = chart.axis_index(node, k);
                let base = node - i * stride;
                let at = |j: usize, c: usize| values[base + j * stride][c];
                for c in 0..m {
                    jac[(c, k)] = if ax.periodic {
                        (at((i + 1) % nk, c) - at((i + nk - 1) % nk, c)) * inv2h
                    } else if i == 0 {
                        (-3.0 * at(0, c) + 4.0 * at(1, c) - at(2, c)) * inv2h
                    } else if i == nk - 1 {
                        (3.0 * at(nk - 1, c) - 4.0 * at(nk - 2, c) + at(nk - 3, c)) * inv2h
                    } else {
                        (at(i + 1, c) - at(i - 1, c)) * inv2h
                    };
                }
            }
        }
        SampledMap {
            chart,
            values,
            jacobians,
        }
    }

    pub fn target_dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Pointwise pullback coefficients: `(φ*f)_J = Σ_I f_I(φ(x)) det(∂φ^I/∂x^J)`.
pub fn pull_components(
    source_dim: usize,
    degree: usize,
    values: &[Complex64],
    jac: &DMatrix<f64>,
) -> Vec<Complex64> {
    let dim = jac.ncols();
    if degree == 0 {
        return values.to_vec();
    }
    let src = combinations(source_dim, degree);
    combinations(dim, degree)
        .iter()
        .map(|j| {
            src.iter()
                .zip(values)
                .map(|(i, v)| {
                    let minor = DMatrix::<f64>::from_fn(degree, degree, |a, b| jac[(i[a], j[b])]);
                    v * minor.determinant()
                })
                .sum()
        })
        .collect()
}

/// Pull a form back along a sampled map into the map's chart.
pub fn pullback<S: FormSource + ?Sized>(f: &S, map: &SampledMap) -> Result<DifferentialForm> {
    let chart = map.chart.clone();
    let degree = f.degree();
    if degree > chart.dim() {
        return Ok(DifferentialForm::vanishing(chart, degree));
    }
    if map.target_dim() != f.dim() {
        return Err(Error::ShapeMismatch(format!(
            "map lands in dimension {}, form lives in dimension {}",
            map.target_dim(),
            f.dim()
        )));
    }
    let rows: Vec<Vec<Complex64>> = (0..chart.node_count())
        .into_par_iter()
        .map(|n| {
            let v = f.eval(&map.values[n])?;
            Ok(pull_components(f.dim(), degree, &v, &map.jacobians[n]))
        })
        .collect::<Result<_>>()?;
    let ncomp = binomial(chart.dim(), degree);
    let coeffs = (0..ncomp)
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect();
    DifferentialForm::new(chart, degree, coeffs)
}

/// Entrywise pullback of a matrix of forms.
pub fn pullback_matrix(m: &MatrixForm, map: &SampledMap) -> Result<MatrixForm> {
    if m.rows() * m.cols() == 0 {
        return Ok(MatrixForm::zeros(map.chart.clone(), m.degree(), m.rows(), m.cols()));
    }
    let entries: Vec<DifferentialForm> = (0..m.rows())
        .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
        .map(|(i, j)| pullback(&m.entry(i, j), map))
        .collect::<Result<_>>()?;
    MatrixForm::from_entries(m.rows(), m.cols(), &entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn parabola_pullback_of_dy() {
        let src = FnSource {
            dim: 2,
            degree: 1,
            f: |_: &[f64]| Ok(vec![c(0.0), c(1.0)]),
        };
        let line = Chart::cube("line", 1, 1.0, 41).unwrap();
        let map = SampledMap::new(line.clone(), |x| vec![x[0], x[0] * x[0]]);
        let pulled = pullback(&src, &map).unwrap();
        for (n, v) in pulled.top().iter().enumerate() {
            let x = line.node_coords(n)[0];
            assert!((v.re - 2.0 * x).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_pullback() {
        let ch = Chart::cube("b", 2, 1.0, 17).unwrap();
        let f = DifferentialForm::from_fn(ch.clone(), 1, |x| vec![c(x[0].sin()), c(x[1] * x[0])]).unwrap();
        let map = SampledMap::new(ch, |x| x.to_vec());
        let g = pullback(&f, &map).unwrap();
        assert!(g.sub(&f).unwrap().max_norm() < 1e-8);
    }
}
