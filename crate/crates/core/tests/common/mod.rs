#![allow(dead_code)]

pub mod homotopy;
pub mod polar;

use std::sync::Arc;

use chernweil::bundle::{BundleData, BundleMapData, ConnectionData, FiberMetric, HermitianBundle, MatrixFn, OmegaFn};
use chernweil::geom::{Chart, ManifoldCover};
use chernweil::linalg::CMat;
use num_complex::Complex64;

pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn box_cover(dim: usize, half: f64, nodes: usize) -> Arc<ManifoldCover> {
    Arc::new(ManifoldCover::single(Chart::cube("box", dim, half, nodes).unwrap()).unwrap())
}

/// Smooth, non-flat connection on a trivial bundle of rank `r` over a single chart.
pub fn wavy_connection(r: usize, dim: usize, seed: f64) -> OmegaFn {
    Arc::new(move |x: &[f64]| {
        (0..dim)
            .map(|k| {
                CMat::from_fn(r, r, |i, j| {
                    let a = seed + (i * 3 + j * 5 + k * 7) as f64 * 0.37;
                    let t: f64 = x.iter().enumerate().map(|(m, v)| v * (1.0 + 0.3 * m as f64)).sum();
                    cx(0.3 * (a + t).sin(), 0.2 * (a - 0.5 * t).cos()) * (1.0 + 0.1 * x[k])
                })
            })
            .collect()
    })
}

/// Smooth Hermitian positive definite matrices.
pub fn wavy_metric(r: usize, seed: f64) -> MatrixFn {
    Arc::new(move |x: &[f64]| {
        let b = CMat::from_fn(r, r, |i, j| {
            let t: f64 = x.iter().sum::<f64>() + seed + (i + 2 * j) as f64;
            cx(0.3 * t.sin(), 0.2 * (1.3 * t).cos())
        });
        &b * b.adjoint() + CMat::identity(r, r) * cx(1.0 + 0.2 * x[0].cos(), 0.0)
    })
}

pub fn hermitian(cover: &Arc<ManifoldCover>, r: usize, seed: f64, flat: bool) -> HermitianBundle {
    let bundle = BundleData::trivial(r, cover.clone());
    let connection = if flat {
        ConnectionData::trivial(bundle.clone()).unwrap()
    } else {
        ConnectionData::from_fns(bundle.clone(), vec![wavy_connection(r, cover.dim(), seed)]).unwrap()
    };
    let metric = FiberMetric::from_fns(&bundle, vec![wavy_metric(r, seed)]).unwrap();
    HermitianBundle {
        bundle,
        connection,
        metric,
    }
}

/// Smooth map with singular values bounded away from zero on `[-1, 1]^dim`.
pub fn wavy_map(rows: usize, cols: usize, seed: f64) -> MatrixFn {
    Arc::new(move |x: &[f64]| {
        CMat::from_fn(rows, cols, |i, j| {
            let t: f64 = x.iter().enumerate().map(|(m, v)| v * (0.7 + 0.2 * m as f64)).sum();
            let base = if i == j { cx(2.0, 0.0) } else { cx(0.0, 0.0) };
            base + cx(0.3 * (t + seed + i as f64).sin(), 0.3 * (t * 0.8 - j as f64).cos())
        })
    })
}

pub fn map_between(e: &HermitianBundle, f: &HermitianBundle, m: MatrixFn) -> BundleMapData {
    BundleMapData::new(e.bundle.clone(), f.bundle.clone(), vec![m], Vec::new()).unwrap()
}

/// Sixth-order central difference of a matrix function along axis `k`.
pub fn d6(f: &dyn Fn(&[f64]) -> CMat, x: &[f64], k: usize) -> CMat {
    let h = 2e-3;
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[k] += s * h;
        f(&y)
    };
    (at(1.0) - at(-1.0)) * cx(45.0 / (60.0 * h), 0.0) - (at(2.0) - at(-2.0)) * cx(9.0 / (60.0 * h), 0.0)
        + (at(3.0) - at(-3.0)) * cx(1.0 / (60.0 * h), 0.0)
}

pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
