use std::sync::Arc;

use chernweil::geom::{chart::combinations, Chart, MatrixForm};
use chernweil::invariant::InvariantPolynomial;
use chernweil::linalg::CMat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cx;

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize) -> CMat {
    CMat::from_fn(r, r, |_, _| cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_form(rng: &mut ChaCha8Rng, chart: &Arc<Chart>, degree: usize, r: usize) -> MatrixForm {
    let ncomp = combinations(chart.dim(), degree).len();
    let samples: Vec<Vec<CMat>> =
        (0..chart.node_count()).map(|_| (0..ncomp).map(|_| random_matrix(rng, r)).collect()).collect();
    MatrixForm::from_nodes(chart.clone(), degree, r, r, |n| samples[n].clone()).unwrap()
}

/// Symmetric multilinear form of a homogeneous `φ`, from the mixed forward difference
/// `Σ_S (−1)^{k−|S|} φ(Σ_{i∈S} Y_i) / k!`, exact for degree-`k` polynomials.
pub fn multilinear(phi: &InvariantPolynomial, ys: &[CMat]) -> Complex64 {
    let k = ys.len();
    let r = ys[0].nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for mask in 0u32..(1 << k) {
        let mut z = CMat::zeros(r, r);
        for (i, y) in ys.iter().enumerate() {
            if mask & (1 << i) != 0 {
                z += y;
            }
        }
        let sign = if (k - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        acc += phi.evaluate_matrix(&z) * sign;
    }
    acc / (1..=k).product::<usize>() as f64
}

/// Sign of the permutation sorting `idx`, or `None` on a repeat.
pub fn sort_sign(idx: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return None;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    Some((v, sign))
}

/// Node value of `factor · Σ dx^{a}∧dx^{b}∧σ_{p…} P(odd components, C_{p…})`, summed
/// over all components of the odd forms and ordered tuples of 2-form components.
pub fn oracle(phi: &InvariantPolynomial, odd: &[&MatrixForm], c: &MatrixForm, node: usize, factor: f64) -> Vec<Complex64> {
    let dim = c.chart().dim();
    let k = phi.degree();
    let out_deg = odd.len() + 2 * (k - odd.len());
    let out_basis = combinations(dim, out_deg);
    let mut out = vec![Complex64::new(0.0, 0.0); out_basis.len()];
    let two = combinations(dim, 2);
    let ncomp1 = dim;
    let slots = k - odd.len();
    let odd_choices = ncomp1.pow(odd.len() as u32);
    let c_choices = two.len().pow(slots as u32);
    for oc in 0..odd_choices {
        let mut rest = oc;
        let mut idx = Vec::new();
        let mut mats = Vec::new();
        for f in odd {
            let a = rest % ncomp1;
            rest /= ncomp1;
            idx.push(a);
            mats.push(f.at(node, a));
        }
        for cc in 0..c_choices {
            let mut rest = cc;
            let mut full = idx.clone();
            let mut ys = mats.clone();
            for _ in 0..slots {
                let p = rest % two.len();
                rest /= two.len();
                full.extend_from_slice(&two[p]);
                ys.push(c.at(node, p));
            }
            let Some((sorted, sign)) = sort_sign(&full) else { continue };
            let pos = out_basis.iter().position(|b| *b == sorted).unwrap();
            out[pos] += multilinear(phi, &ys) * (sign * factor);
        }
    }
    out
}

pub fn square_of_trace() -> InvariantPolynomial {
    InvariantPolynomial::custom(
        "s1^2",
        cx(0.0, 0.5 / std::f64::consts::PI),
        vec![chernweil::invariant::Term {
            coeff: 1.0,
            powers: vec![1, 1],
        }],
    )
}

pub fn falling(k: usize, n: usize) -> f64 {
    (0..n).map(|i| (k - i) as f64).product()
}

/// Largest relative mismatch between `polarize`/`double_polarize` and the multilinear
/// oracle over `trials` random samples (c1, c2, s1² single; c2, c3 double), plus the
/// number of samples drawn.
pub fn polarization_mismatch(trials: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let charts: Vec<Arc<Chart>> = (2..=4).map(|d| Chart::cube("t", d, 1.0, 8).unwrap()).collect();
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    let nodes_checked = 6;
    for trial in 0..trials {
        let r = 2 + trial % 2;
        let (phi, dim, double) = match trial % 5 {
            0 => (InvariantPolynomial::chern(1, r), 2, false),
            1 => (InvariantPolynomial::chern(2, r), 3, false),
            2 => (square_of_trace(), 3, false),
            3 => (InvariantPolynomial::chern(2, r), 2, true),
            _ => (InvariantPolynomial::chern(3, 3), 4, true),
        };
        let r = if trial % 5 == 4 { 3 } else { r };
        let chart = &charts[dim - 2];
        let a = random_form(&mut rng, chart, 1, r);
        let b = random_form(&mut rng, chart, 1, r);
        let c = random_form(&mut rng, chart, 2, r);
        let k = phi.degree();
        let (got, odd, factor) = if double {
            (phi.double_polarize(&a, &b, &c).unwrap(), vec![&a, &b], -falling(k, 2))
        } else {
            (phi.polarize(&a, &c).unwrap(), vec![&a], falling(k, 1))
        };
        for _ in 0..nodes_checked {
            let node = rng.gen_range(0..chart.node_count());
            let expect = oracle(&phi, &odd, &c, node, factor);
            let value = got.at(node);
            let scale = expect.iter().map(|v| v.norm()).fold(1.0, f64::max);
            for (g, e) in value.iter().zip(&expect) {
                worst = worst.max((g - e).norm() / scale);
            }
        }
        samples += 1;
    }
    (worst, samples)
}
