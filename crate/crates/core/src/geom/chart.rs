use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum node count per axis.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    /// Angle-like axis whose coordinate wraps at `hi`.
    pub periodic: bool,
}

impl Axis {
    pub fn closed(lo: f64, hi: f64, nodes: usize) -> Self {
        Axis {
            lo,
            hi,
            nodes,
            periodic: false,
        }
    }

    pub fn periodic(lo: f64, hi: f64, nodes: usize) -> Self {
        Axis {
            lo,
            hi,
            nodes,
            periodic: true,
        }
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.nodes as f64
        } else {
            (self.hi - self.lo) / (self.nodes - 1) as f64
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }
}

/// A coordinate box with a tensor-product uniform grid.
///
/// Nodes are numbered lexicographically with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    name: String,
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl Chart {
    pub fn new(name: impl Into<String>, axes: Vec<Axis>) -> Result<Arc<Chart>> {
        let name = name.into();
        if axes.is_empty() {
            return Err(Error::InvalidChart(format!("{name}: no axes")));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.nodes < MIN_NODES {
                return Err(Error::InvalidChart(format!(
                    "{name}: axis {k} has {} nodes, minimum is {MIN_NODES}",
                    a.nodes
                )));
            }
            if !(a.hi > a.lo) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::InvalidChart(format!(
                    "{name}: axis {k} has empty interval [{}, {}]",
                    a.lo, a.hi
                )));
            }
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        Ok(Arc::new(Chart {
            name,
            axes,
            strides,
        }))
    }

    /// Square box `[-half, half]^dim` with `nodes` points per axis.
    pub fn cube(name: impl Into<String>, dim: usize, half: f64, nodes: usize) -> Result<Arc<Chart>> {
        Chart::new(name, vec![Axis::closed(-half, half, nodes); dim])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes
            .iter()
            .map(Axis::spacing)
            .fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in 0..self.dim() {
            idx[k] = node / self.strides[k];
            node %= self.strides[k];
        }
        idx
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Index of one axis component of `node` without building the whole multi-index.
    pub fn axis_index(&self, node: usize, k: usize) -> usize {
        (node / self.strides[k]) % self.axes[k].nodes
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            x.push(self.axes[k].coord(self.axis_index(node, k)));
        }
        x
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.node_count()).map(move |n| self.node_coords(n))
    }

    /// Whether `x` lies in the closed box (periodic axes always contain their coordinate).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self
                .axes
                .iter()
                .zip(x)
                .all(|(a, &v)| a.periodic || (v >= a.lo - 1e-12 && v <= a.hi + 1e-12))
    }

    /// Distance from `x` to the nearest non-periodic face of the box.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(x)
            .filter(|(a, _)| !a.periodic)
            .map(|(a, &v)| (v - a.lo).min(a.hi - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinate difference `x - y` with periodic axes wrapped to the short way round.
    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .zip(x.iter().zip(y))
            .map(|(a, (&u, &v))| {
                let mut d = u - v;
                if a.periodic {
                    let period = a.hi - a.lo;
                    d -= period * (d / period).round();
                }
                d
            })
            .collect()
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.displacement(x, y)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    /// Copy of this chart with every axis resampled at `nodes` points.
    pub fn with_resolution(&self, nodes: usize) -> Result<Arc<Chart>> {
        let axes = self
            .axes
            .iter()
            .map(|a| Axis { nodes, ..a.clone() })
            .collect();
        Chart::new(self.name.clone(), axes)
    }
}

/// Strictly increasing index tuples of length `p` drawn from `0..dim`, lexicographic.
pub fn combinations(dim: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if p > dim {
        return out;
    }
    let mut cur: Vec<usize> = (0..p).collect();
    loop {
        out.push(cur.clone());
        // advance
        let mut k = p;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] < dim - p + k {
                cur[k] += 1;
                for j in k + 1..p {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Position of a strictly increasing multi-index in the lexicographic list.
pub fn combination_rank(dim: usize, combo: &[usize]) -> usize {
    let p = combo.len();
    let mut rank = 0;
    let mut prev = 0;
    for (k, &c) in combo.iter().enumerate() {
        for v in prev..c {
            rank += binomial(dim - v - 1, p - k - 1);
        }
        prev = c + 1;
    }
    rank
}

/// Sign of the permutation sorting the concatenation `a ++ b` (both increasing, disjoint),
/// or `None` if they share an index.
pub fn shuffle_sign(a: &[usize], b: &[usize]) -> Option<f64> {
    let mut inversions = 0usize;
    for &x in a {
        for &y in b {
            if x == y {
                return None;
            }
            if x > y {
                inversions += 1;
            }
        }
    }
    Some(if inversions % 2 == 0 { 1.0 } else { -1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic_and_ranked() {
        let c = combinations(4, 2);
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![0, 1]);
        assert_eq!(c[5], vec![2, 3]);
        for (r, combo) in c.iter().enumerate() {
            assert_eq!(combination_rank(4, combo), r);
        }
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn spacing_conventions() {
        let a = Axis::closed(0.0, 1.0, 11);
        assert!((a.spacing() - 0.1).abs() < 1e-15);
        let p = Axis::periodic(0.0, 1.0, 10);
        assert!((p.spacing() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_coarse_axes() {
        assert!(Chart::cube("c", 2, 1.0, 7).is_err());
        assert!(Chart::new("c", vec![Axis::closed(1.0, 1.0, 9)]).is_err());
    }

    #[test]
    fn node_indexing_roundtrip() {
        let c = Chart::new(
            "c",
            vec![Axis::closed(0.0, 1.0, 9), Axis::periodic(0.0, 6.0, 12)],
        )
        .unwrap();
        for n in 0..c.node_count() {
            assert_eq!(c.node_index(&c.multi_index(n)), n);
            let x = c.node_coords(n);
            assert!(c.contains(&x));
        }
    }

    #[test]
    fn shuffle_signs() {
        assert_eq!(shuffle_sign(&[0], &[1]), Some(1.0));
        assert_eq!(shuffle_sign(&[1], &[0]), Some(-1.0));
        assert_eq!(shuffle_sign(&[0, 2], &[1]), Some(-1.0));
        assert_eq!(shuffle_sign(&[0], &[0]), None);
    }
}
