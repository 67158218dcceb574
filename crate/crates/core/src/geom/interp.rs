use num_complex::Complex64;

use super::chart::Chart;
use crate::error::{Error, Result};

/// Tensor-product cubic Lagrange weights for one point of a chart.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn apply(&self, field: &[Complex64]) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&n, &w)| field[n] * w)
            .sum()
    }
}

fn lagrange4(t: f64) -> [f64; 4] {
    // nodes at 0, 1, 2, 3
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Cubic interpolation stencil at `x`.
pub fn stencil(chart: &Chart, x: &[f64]) -> Result<Stencil> {
    if !chart.contains(x) {
        return Err(Error::OutsideChart {
            chart: chart.name().to_string(),
            point: x.to_vec(),
        });
    }
    let dim = chart.dim();
    let mut per_axis: Vec<([usize; 4], [f64; 4])> = Vec::with_capacity(dim);
    for k in 0..dim {
        let ax = chart.axis(k);
        let h = ax.spacing();
        let m = ax.nodes;
        let t = (x[k] - ax.lo) / h;
        if ax.periodic {
            let t = t.rem_euclid(m as f64);
            let base = t.floor() as i64 - 1;
            let w = lagrange4(t - base as f64);
            let idx = [0, 1, 2, 3].map(|j| (base + j as i64).rem_euclid(m as i64) as usize);
            per_axis.push((idx, w));
        } else {
            let base = (t.floor() as i64 - 1).clamp(0, m as i64 - 4) as usize;
            let w = lagrange4(t - base as f64);
            per_axis.push(([base, base + 1, base + 2, base + 3], w));
        }
    }
    let total = 4usize.pow(dim as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut node = 0;
        let mut w = 1.0;
        let mut rem = flat;
        for k in (0..dim).rev() {
            let j = rem % 4;
            rem /= 4;
            node += per_axis[k].0[j] * chart.stride(k);
            w *= per_axis[k].1[j];
        }
        nodes.push(node);
        weights.push(w);
    }
    Ok(Stencil { nodes, weights })
}

pub fn interpolate(chart: &Chart, field: &[Complex64], x: &[f64]) -> Result<Complex64> {
    Ok(stencil(chart, x)?.apply(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::chart::Axis;

    #[test]
    fn cubics_are_reproduced() {
        let ch = Chart::cube("b", 2, 1.0, 11).unwrap();
        let f = |x: &[f64]| x[0].powi(3) - 2.0 * x[0] * x[1] * x[1] + x[1];
        let field: Vec<Complex64> = ch.nodes().map(|x| Complex64::new(f(&x), 0.0)).collect();
        for p in [[0.13, -0.77], [0.99, 0.999], [-1.0, 0.5]] {
            let v = interpolate(&ch, &field, &p).unwrap();
            assert!((v.re - f(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_wraps() {
        let tau = std::f64::consts::TAU;
        let ch = Chart::new("s", vec![Axis::periodic(0.0, tau, 64)]).unwrap();
        let field: Vec<Complex64> = ch.nodes().map(|x| Complex64::new(x[0].sin(), 0.0)).collect();
        let v = interpolate(&ch, &field, &[tau - 0.01]).unwrap();
        assert!((v.re - (tau - 0.01f64).sin()).abs() < 1e-6);
    }

    #[test]
    fn outside_is_rejected() {
        let ch = Chart::cube("b", 2, 1.0, 9).unwrap();
        let field = vec![Complex64::new(0.0, 0.0); ch.node_count()];
        assert!(interpolate(&ch, &field, &[1.5, 0.0]).is_err());
    }
}
