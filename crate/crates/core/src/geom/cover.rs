use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::chart::Chart;
use super::form::DifferentialForm;
use crate::error::{Error, Result};

pub type WeightFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Coordinate change between two charts; `None` where undefined.
pub type TransitionFn = Arc<dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync>;

/// Tolerance on the partition-of-unity sum at every node.
pub const PARTITION_TOL: f64 = 1e-10;
/// Tolerance on round trips through transition maps.
pub const INVERSE_TOL: f64 = 1e-8;

/// A finite atlas with analytic transitions and a sampled partition of unity.
#[derive(Clone)]
pub struct ManifoldCover {
    charts: Vec<Arc<Chart>>,
    weight_fns: Vec<WeightFn>,
    partition: Vec<Vec<f64>>,
    transitions: Vec<Vec<Option<TransitionFn>>>,
}

impl fmt::Debug for ManifoldCover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldCover")
            .field("charts", &self.charts.iter().map(|c| c.name()).collect::<Vec<_>>())
            .finish()
    }
}

impl ManifoldCover {
    /// `transitions[i][j]` maps chart `i` coordinates to chart `j` coordinates.
    pub fn new(
        charts: Vec<Arc<Chart>>,
        weight_fns: Vec<WeightFn>,
        transitions: Vec<Vec<Option<TransitionFn>>>,
    ) -> Result<Self> {
        let k = charts.len();
        if k == 0 || weight_fns.len() != k || transitions.len() != k || transitions.iter().any(|t| t.len() != k) {
            return Err(Error::InvalidCover(format!(
                "{k} charts need {k} weights and a {k}x{k} transition table"
            )));
        }
        if charts.iter().any(|c| c.dim() != charts[0].dim()) {
            return Err(Error::InvalidCover("charts of different dimension".into()));
        }
        let partition = charts
            .iter()
            .zip(&weight_fns)
            .map(|(c, w)| c.nodes().map(|x| w(&x)).collect())
            .collect();
        let cover = ManifoldCover {
            charts,
            weight_fns,
            partition,
            transitions,
        };
        cover.validate()?;
        Ok(cover)
    }

    pub fn single(chart: Arc<Chart>) -> Result<Self> {
        ManifoldCover::new(vec![chart], vec![Arc::new(|_: &[f64]| 1.0)], vec![vec![None]])
    }

    /// Unit sphere `S^n` by two stereographic charts on `[-half, half]^n`.
    ///
    /// The transition is the inversion followed by a reflection so both charts carry the
    /// same orientation; in dimension 2 it is `w = 1/z`.
    pub fn stereographic_sphere(n: usize, half: f64, nodes: usize, overlap: f64) -> Result<Self> {
        if !(overlap > 0.0 && overlap < 1.0 && 1.0 / overlap < half) {
            return Err(Error::InvalidCover(format!(
                "partition annulus [{overlap}, {}] must fit inside the chart box of half width {half}",
                1.0 / overlap
            )));
        }
        let charts = vec![
            Chart::cube("north", n, half, nodes)?,
            Chart::cube("south", n, half, nodes)?,
        ];
        let inv: TransitionFn = Arc::new(move |x: &[f64]| sphere_transition(x));
        let w0: WeightFn = Arc::new(move |x: &[f64]| radial_partition(norm(x), overlap));
        ManifoldCover::new(
            charts,
            vec![w0.clone(), w0],
            vec![vec![None, Some(inv.clone())], vec![Some(inv), None]],
        )
    }

    fn validate(&self) -> Result<()> {
        for (i, chart) in self.charts.iter().enumerate() {
            for (node, x) in chart.nodes().enumerate() {
                let wi = self.partition[i][node];
                if wi < 0.0 || !wi.is_finite() {
                    return Err(Error::InvalidCover(format!(
                        "negative partition weight {wi} on {} at {x:?}",
                        chart.name()
                    )));
                }
                let mut total = wi;
                for j in 0..self.charts.len() {
                    if j == i {
                        continue;
                    }
                    let Some(y) = self.transition(i, j, &x) else { continue };
                    if !self.charts[j].contains(&y) {
                        continue;
                    }
                    total += (self.weight_fns[j])(&y);
                    if let Some(back) = self.transition(j, i, &y) {
                        let err = chart.distance(&back, &x);
                        if err > INVERSE_TOL * (1.0 + norm(&x)) {
                            return Err(Error::InvalidCover(format!(
                                "transitions {i}->{j}->{i} miss {x:?} by {err:.3e}"
                            )));
                        }
                    }
                }
                if (total - 1.0).abs() > PARTITION_TOL {
                    return Err(Error::InvalidCover(format!(
                        "partition sums to {total} on {} at {x:?}",
                        chart.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.charts[0].dim()
    }

    pub fn charts(&self) -> &[Arc<Chart>] {
        &self.charts
    }

    pub fn chart(&self, i: usize) -> &Arc<Chart> {
        &self.charts[i]
    }

    pub fn partition(&self, i: usize) -> &[f64] {
        &self.partition[i]
    }

    pub fn weight(&self, i: usize, x: &[f64]) -> f64 {
        (self.weight_fns[i])(x)
    }

    pub fn transition(&self, i: usize, j: usize, x: &[f64]) -> Option<Vec<f64>> {
        if i == j {
            return Some(x.to_vec());
        }
        self.transitions[i][j].as_ref().and_then(|t| t(x))
    }

    /// Jacobian of the transition `i -> j` by fourth-order central differences.
    pub fn transition_jacobian(&self, i: usize, j: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let h = 1e-4 * (1.0 + norm(x));
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let shifted = |s: f64| {
                let mut y = x.to_vec();
                y[k] += s * h;
                self.transition(i, j, &y)
            };
            let (p1, m1, p2, m2) = (shifted(1.0)?, shifted(-1.0)?, shifted(2.0)?, shifted(-2.0)?);
            for r in 0..n {
                jac[(r, k)] = (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * h);
            }
        }
        Some(jac)
    }

    /// Every chart whose box contains the image of `x` (chart `i` coordinates).
    pub fn locate(&self, i: usize, x: &[f64]) -> Vec<(usize, Vec<f64>)> {
        (0..self.charts.len())
            .filter_map(|j| {
                let y = self.transition(i, j, x)?;
                self.charts[j].contains(&y).then_some((j, y))
            })
            .collect()
    }

    /// Same atlas resampled with `nodes` points per axis.
    pub fn with_resolution(&self, nodes: usize) -> Result<Self> {
        let charts = self
            .charts
            .iter()
            .map(|c| c.with_resolution(nodes))
            .collect::<Result<Vec<_>>>()?;
        ManifoldCover::new(charts, self.weight_fns.clone(), self.transitions.clone())
    }

    /// Partition-weighted sum of per-chart top-degree forms, charts in order.
    pub fn integrate(&self, forms: &[DifferentialForm]) -> Result<Complex64> {
        if forms.len() != self.charts.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} forms for {} charts",
                forms.len(),
                self.charts.len()
            )));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (i, f) in forms.iter().enumerate() {
            if **f.chart() != *self.charts[i] {
                return Err(Error::ChartMismatch(
                    self.charts[i].name().to_string(),
                    f.chart().name().to_string(),
                ));
            }
            total += f.integrate(Some(&self.partition[i]))?;
        }
        Ok(total)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Orientation-preserving stereographic chart change on `S^n`.
pub fn sphere_transition(x: &[f64]) -> Option<Vec<f64>> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 < 1e-300 {
        return None;
    }
    let n = x.len();
    Some(
        x.iter()
            .enumerate()
            .map(|(k, v)| {
                let flip = if n % 2 == 0 { k >= 1 } else { k == 1 };
                if flip {
                    -v / r2
                } else {
                    v / r2
                }
            })
            .collect(),
    )
}

fn smooth_step_exp(u: f64) -> f64 {
    let f = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    let (a, b) = (f(u), f(1.0 - u));
    a / (a + b)
}

/// Radial partition function: 1 on `t <= a`, 0 on `t >= 1/a`, with `Λ(t) + Λ(1/t) = 1`.
pub fn radial_partition(t: f64, a: f64) -> f64 {
    if t <= a {
        return 1.0;
    }
    if t >= 1.0 / a {
        return 0.0;
    }
    let u = (t.ln() - a.ln()) / (2.0 * (1.0 / a).ln());
    // 1 - bump(u) written as bump(1 - u) to keep the complement exact
    smooth_step_exp(1.0 - u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn radial_partition_is_complementary() {
        for t in [0.5, 0.91, 0.95, 1.0, 1.03, 1.08, 2.0] {
            let s = radial_partition(t, 0.92) + radial_partition(1.0 / t, 0.92);
            assert!((s - 1.0).abs() < 1e-14, "{t}: {s}");
        }
    }

    #[test]
    fn sphere_area() {
        let cover = ManifoldCover::stereographic_sphere(2, 1.1, 64, 0.92).unwrap();
        let forms: Vec<DifferentialForm> = cover
            .charts()
            .iter()
            .map(|c| {
                DifferentialForm::from_fn(c.clone(), 2, |x| {
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    vec![Complex64::new(4.0 / (1.0 + r2).powi(2), 0.0)]
                })
                .unwrap()
            })
            .collect();
        let a = cover.integrate(&forms).unwrap();
        assert!((a.re - 4.0 * PI).abs() < 1e-3, "{a}");
    }

    #[test]
    fn transitions_preserve_orientation() {
        let cover = ManifoldCover::stereographic_sphere(2, 1.1, 16, 0.92).unwrap();
        let j = cover.transition_jacobian(0, 1, &[0.7, 0.4]).unwrap();
        assert!(j.determinant() > 0.0);
        let s4 = sphere_transition(&[0.3, 0.2, -0.4, 0.5]).unwrap();
        let back = sphere_transition(&s4).unwrap();
        assert!((back[3] - 0.5).abs() < 1e-14);
    }
}
