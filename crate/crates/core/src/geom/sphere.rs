use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chart::{combinations, Chart};
use super::form::DifferentialForm;
use super::interp::stencil;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Round sphere of radius `radius` around `center` in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePatch {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Azimuthal sample count; polar angles use half as many Gauss nodes.
    pub resolution: usize,
}

impl SpherePatch {
    pub fn new(center: Vec<f64>, radius: f64, resolution: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("sphere radius {radius} must be positive")));
        }
        if resolution < 8 {
            return Err(Error::InvalidParameter(format!(
                "sphere resolution {resolution} below minimum 8"
            )));
        }
        Ok(SpherePatch {
            center,
            radius,
            resolution,
        })
    }

    pub fn check_inside(&self, chart: &Chart) -> Result<()> {
        if self.center.len() != chart.dim()
            || !chart.contains(&self.center)
            || chart.distance_to_boundary(&self.center) <= self.radius
        {
            return Err(Error::SphereOutsideChart {
                chart: chart.name().to_string(),
                center: self.center.clone(),
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// Quadrature points on the sphere: position, tangent Jacobian (dim x dim-1),
    /// weight in parameter space and orientation sign.
    pub fn samples(&self) -> Result<Vec<SphereSample>> {
        let n = self.center.len();
        if n < 2 {
            return Err(Error::InvalidParameter(
                "parametrized spheres need ambient dimension at least 2".into(),
            ));
        }
        let azimuth: Vec<(f64, f64)> = (0..self.resolution)
            .map(|j| (TAU * j as f64 / self.resolution as f64, TAU / self.resolution as f64))
            .collect();
        let polar = gauss_legendre((self.resolution / 2).max(8), 0.0, PI)?;
        let mut grids: Vec<&[(f64, f64)]> = vec![polar.as_slice(); n - 2];
        grids.push(azimuth.as_slice());

        let total: usize = grids.iter().map(|g| g.len()).product();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut angles = vec![0.0; n - 1];
            let mut weight = 1.0;
            let mut rem = flat;
            for k in (0..n - 1).rev() {
                let g = grids[k];
                let (a, w) = g[rem % g.len()];
                rem /= g.len();
                angles[k] = a;
                weight *= w;
            }
            let (u, du) = unit_sphere_map(&angles);
            let point: Vec<f64> = self.center.iter().zip(&u).map(|(c, v)| c + self.radius * v).collect();
            let tangent = du * self.radius;
            let mut frame = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                frame[(i, 0)] = u[i];
                for j in 0..n - 1 {
                    frame[(i, j + 1)] = tangent[(i, j)];
                }
            }
            let det = frame.determinant();
            let orientation = if det.abs() < 1e-300 { 0.0 } else { det.signum() };
            out.push(SphereSample {
                point,
                tangent,
                weight,
                orientation,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SphereSample {
    pub point: Vec<f64>,
    pub tangent: DMatrix<f64>,
    pub weight: f64,
    pub orientation: f64,
}

/// Hyperspherical coordinates: unit vector and its derivative in the angles.
fn unit_sphere_map(angles: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = angles.len();
    let n = m + 1;
    let (s, c): (Vec<f64>, Vec<f64>) = angles.iter().map(|a| (a.sin(), a.cos())).unzip();
    let mut u = vec![0.0; n];
    let mut du = DMatrix::<f64>::zeros(n, m);
    for j in 0..n {
        let sines = j.min(m);
        // u_j = prod_{l<sines} sin a_l * (cos a_j if j < m else 1)
        let trailing = if j < m { c[j] } else { 1.0 };
        let prod: f64 = s[..sines].iter().product();
        u[j] = prod * trailing;
        for k in 0..m {
            let d = if k < sines {
                let others: f64 = (0..sines).filter(|&l| l != k).map(|l| s[l]).product();
                others * c[k] * trailing
            } else if k == j {
                -prod * s[j]
            } else {
                0.0
            };
            du[(j, k)] = d;
        }
    }
    (u, du)
}

/// Integrate an `(n-1)`-form given pointwise by its components over a sphere, with the
/// sphere oriented as the boundary of the ball.
pub fn sphere_integrate_with<F>(dim: usize, patch: &SpherePatch, f: F) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Result<Vec<Complex64>> + Sync,
{
    if dim == 1 {
        let c = patch.center[0];
        let hi = f(&[c + patch.radius])?;
        let lo = f(&[c - patch.radius])?;
        return Ok(hi[0] - lo[0]);
    }
    let combos = combinations(dim, dim - 1);
    let samples = patch.samples()?;
    let contributions: Vec<Complex64> = samples
        .par_iter()
        .map(|s| -> Result<Complex64> {
            let comps = f(&s.point)?;
            let mut acc = Complex64::new(0.0, 0.0);
            for (combo, v) in combos.iter().zip(&comps) {
                let minor = DMatrix::<f64>::from_fn(dim - 1, dim - 1, |i, j| s.tangent[(combo[i], j)]);
                acc += v * minor.determinant();
            }
            Ok(acc * s.weight * s.orientation)
        })
        .collect::<Result<_>>()?;
    Ok(contributions.into_iter().sum())
}

/// Integrate a grid form of degree `dim - 1` over a sphere inside its chart.
pub fn sphere_integrate(f: &DifferentialForm, patch: &SpherePatch) -> Result<Complex64> {
    let chart = f.chart();
    let dim = chart.dim();
    if f.degree() + 1 != dim {
        return Err(Error::DegreeMismatch {
            expected: dim - 1,
            found: f.degree(),
        });
    }
    patch.check_inside(chart)?;
    sphere_integrate_with(dim, patch, |x| {
        let st = stencil(chart, x)?;
        Ok(f.components().iter().map(|c| st.apply(c)).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn winding_form_is_radius_independent() {
        let ch = Chart::cube("b", 2, 1.0, 201).unwrap();
        let w = DifferentialForm::from_fn(ch, 1, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + 1e-300;
            vec![Complex64::new(-x[1] / r2, 0.0), Complex64::new(x[0] / r2, 0.0)]
        })
        .unwrap();
        for eps in [0.3, 0.2] {
            let v = sphere_integrate(&w, &SpherePatch::new(vec![0.0, 0.0], eps, 128).unwrap()).unwrap();
            assert!((v.re - TAU).abs() < 1e-4, "{eps}: {v}");
        }
    }

    #[test]
    fn unit_sphere_area_in_three_dimensions() {
        // x dy^dz - y dx^dz + z dx^dy restricted to the unit sphere is the area form
        let patch = SpherePatch::new(vec![0.0; 3], 1.0, 32).unwrap();
        let v = sphere_integrate_with(3, &patch, |x| {
            Ok(vec![
                Complex64::new(x[2], 0.0),
                Complex64::new(-x[1], 0.0),
                Complex64::new(x[0], 0.0),
            ])
        })
        .unwrap();
        assert!((v.re - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn exits_chart() {
        let ch = Chart::cube("b", 2, 1.0, 9).unwrap();
        let w = DifferentialForm::zero(ch, 1).unwrap();
        let p = SpherePatch::new(vec![0.9, 0.0], 0.2, 16).unwrap();
        assert!(matches!(sphere_integrate(&w, &p), Err(Error::SphereOutsideChart { .. })));
    }
}
