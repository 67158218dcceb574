//! Ad-invariant polynomials written over power sums `s_j(X) = tr(X^j)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::chart::Chart;
use crate::geom::{DifferentialForm, MatrixForm};
use crate::linalg::CMat;

/// One monomial `coeff * Π s_{powers[k]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<usize>,
}

impl Term {
    pub fn weight(&self) -> usize {
        self.powers.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantPolynomial {
    pub name: String,
    /// Factor applied once per curvature slot, `i/2π` for Chern-type classes.
    pub slot: Complex64,
    pub terms: Vec<Term>,
    /// Set when the class vanishes for rank reasons (e.g. `c_k` with `k > r`).
    pub vanishes_by_rank: bool,
}

fn chern_slot() -> Complex64 {
    Complex64::new(0.0, 1.0 / (2.0 * PI))
}

/// Elementary symmetric polynomial `e_k` in power sums by Newton's identities.
pub fn elementary_in_power_sums(k: usize) -> Vec<Term> {
    let mut e: Vec<BTreeMap<Vec<usize>, f64>> = vec![BTreeMap::from([(Vec::new(), 1.0)])];
    for m in 1..=k {
        let mut next: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for i in 1..=m {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            for (powers, coeff) in &e[m - i] {
                let mut p = powers.clone();
                p.push(i);
                p.sort_unstable();
                *next.entry(p).or_insert(0.0) += sign * coeff / m as f64;
            }
        }
        next.retain(|_, v| *v != 0.0);
        e.push(next);
    }
    e[k]
        .iter()
        .map(|(powers, &coeff)| Term {
            coeff,
            powers: powers.clone(),
        })
        .collect()
}

impl InvariantPolynomial {
    pub fn custom(name: impl Into<String>, slot: Complex64, terms: Vec<Term>) -> Self {
        InvariantPolynomial {
            name: name.into(),
            slot,
            terms,
            vanishes_by_rank: false,
        }
    }

    pub fn chern(k: usize, r: usize) -> Self {
        let vanishes = k > r;
        InvariantPolynomial {
            name: format!("c{k}"),
            slot: chern_slot(),
            terms: if vanishes { Vec::new() } else { elementary_in_power_sums(k) },
            vanishes_by_rank: vanishes,
        }
    }

    /// `p_k = (-1)^k c_{2k}` of the complexified curvature.
    pub fn pontryagin(k: usize, r: usize) -> Self {
        let c = InvariantPolynomial::chern(2 * k, r);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        InvariantPolynomial {
            name: format!("p{k}"),
            slot: c.slot,
            terms: c
                .terms
                .into_iter()
                .map(|t| Term {
                    coeff: sign * t.coeff,
                    powers: t.powers,
                })
                .collect(),
            vanishes_by_rank: c.vanishes_by_rank,
        }
    }

    /// Truncated Chern character `Σ_{j ≤ max} s_j / j!`, with `s_0 = r`.
    pub fn chern_character(max_degree: usize, r: usize) -> Self {
        let mut terms = vec![Term {
            coeff: r as f64,
            powers: Vec::new(),
        }];
        let mut fact = 1.0;
        for j in 1..=max_degree {
            fact *= j as f64;
            terms.push(Term {
                coeff: 1.0 / fact,
                powers: vec![j],
            });
        }
        InvariantPolynomial {
            name: format!("ch{max_degree}"),
            slot: chern_slot(),
            terms,
            vanishes_by_rank: false,
        }
    }

    /// Signature integrand in dimension four, `p_1 / 3`.
    pub fn l1(r: usize) -> Self {
        let mut p = InvariantPolynomial::pontryagin(1, r);
        p.name = "L1".into();
        for t in &mut p.terms {
            t.coeff /= 3.0;
        }
        p
    }

    /// Parse a selector such as `c1`, `c2`, `p1`, `ch2` or `L1` for rank `r`.
    pub fn by_name(name: &str, r: usize) -> Result<Self> {
        let bad = || Error::Config(format!("unknown invariant polynomial {name:?}"));
        if name == "L1" {
            return Ok(InvariantPolynomial::l1(r));
        }
        if let Some(k) = name.strip_prefix("ch") {
            return Ok(InvariantPolynomial::chern_character(k.parse().map_err(|_| bad())?, r));
        }
        if let Some(k) = name.strip_prefix('c') {
            return Ok(InvariantPolynomial::chern(k.parse().map_err(|_| bad())?, r));
        }
        if let Some(k) = name.strip_prefix('p') {
            return Ok(InvariantPolynomial::pontryagin(k.parse().map_err(|_| bad())?, r));
        }
        Err(bad())
    }

    /// Largest monomial weight; the form degree of `φ(Ω)` is twice this.
    pub fn degree(&self) -> usize {
        self.terms.iter().map(Term::weight).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.terms.iter().all(|t| t.weight() == self.degree())
    }

    fn require_homogeneous(&self) -> Result<()> {
        if !self.is_homogeneous() {
            return Err(Error::InvalidParameter(format!(
                "{} is not homogeneous; use evaluate_graded",
                self.name
            )));
        }
        Ok(())
    }

    /// Value on a numeric matrix (all entries commuting scalars).
    pub fn evaluate_matrix(&self, x: &CMat) -> Complex64 {
        let mut powers = vec![CMat::identity(x.nrows(), x.ncols())];
        let mut traces = vec![Complex64::new(x.nrows() as f64, 0.0)];
        for _ in 1..=self.degree() {
            let next = powers.last().unwrap() * x;
            traces.push(next.trace());
            powers.push(next);
        }
        self.terms
            .iter()
            .map(|t| {
                let prod: Complex64 = t.powers.iter().map(|&j| traces[j]).product();
                prod * t.coeff * self.slot.powu(t.weight() as u32)
            })
            .sum()
    }

    /// `φ(Ω)` for a homogeneous polynomial.
    pub fn evaluate(&self, omega: &MatrixForm) -> Result<DifferentialForm> {
        self.require_homogeneous()?;
        check_curvature(omega)?;
        let x = Trunc::constant(omega.clone());
        let out = expand(self, &x, omega.chart(), 2 * self.degree())?;
        Ok(out.take(0, 0))
    }

    /// Every homogeneous part `φ_w(Ω)` for `w = 0..=degree`.
    pub fn evaluate_graded(&self, omega: &MatrixForm) -> Result<Vec<DifferentialForm>> {
        check_curvature(omega)?;
        (0..=self.degree())
            .map(|w| {
                let part = InvariantPolynomial {
                    name: format!("{}[{w}]", self.name),
                    slot: self.slot,
                    terms: self.terms.iter().filter(|t| t.weight() == w).cloned().collect(),
                    vanishes_by_rank: self.vanishes_by_rank,
                };
                if part.terms.is_empty() {
                    return Ok(DifferentialForm::vanishing(omega.chart().clone(), 2 * w));
                }
                let x = Trunc::constant(omega.clone());
                Ok(expand(&part, &x, omega.chart(), 2 * w)?.take(0, 0))
            })
            .collect()
    }

    /// Coefficient of `s` in `φ(C + sA)`, by literal expansion.
    pub fn polarize(&self, a: &MatrixForm, c: &MatrixForm) -> Result<DifferentialForm> {
        self.require_homogeneous()?;
        check_pair(a, c)?;
        let mut x = Trunc::constant(c.clone());
        x.slots[1] = Some(a.clone());
        let deg = 2 * self.degree();
        Ok(expand(self, &x, c.chart(), deg)?.take(1, 0))
    }

    /// Coefficient of `s t` in `φ(C + sA + tB)` with `s, t` odd, by literal expansion.
    pub fn double_polarize(&self, a: &MatrixForm, b: &MatrixForm, c: &MatrixForm) -> Result<DifferentialForm> {
        self.require_homogeneous()?;
        check_pair(a, c)?;
        check_pair(b, c)?;
        let mut x = Trunc::constant(c.clone());
        x.slots[1] = Some(a.clone());
        x.slots[2] = Some(b.clone());
        let deg = 2 * self.degree();
        Ok(expand(self, &x, c.chart(), deg)?.take(1, 1))
    }
}

fn check_curvature(omega: &MatrixForm) -> Result<()> {
    if omega.degree() != 2 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            found: omega.degree(),
        });
    }
    if !omega.is_square() {
        return Err(Error::ShapeMismatch("curvature must be square".into()));
    }
    Ok(())
}

fn check_pair(a: &MatrixForm, c: &MatrixForm) -> Result<()> {
    check_curvature(c)?;
    if a.degree() != 1 {
        return Err(Error::DegreeMismatch {
            expected: 1,
            found: a.degree(),
        });
    }
    if a.rows() != c.rows() || a.cols() != c.cols() {
        return Err(Error::ShapeMismatch(format!(
            "rank mismatch: {}x{} against {}x{}",
            a.rows(),
            a.cols(),
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

/// Polynomial in two formal odd parameters `s, t`, written to the left as `s^a t^b X`
/// with `a, b ≤ 1`. Odd parameters make `sA`, `tB` even for 1-forms `A`, `B`, so the
/// `st` coefficient of a product keeps the mixed terms that commuting parameters
/// would cancel. Slot index is `a + 2b`; `None` is zero.
#[derive(Clone)]
struct Trunc<T> {
    slots: [Option<T>; 4],
}

impl<T: Clone> Trunc<T> {
    fn constant(x: T) -> Self {
        Trunc {
            slots: [Some(x), None, None, None],
        }
    }

    fn empty() -> Self {
        Trunc {
            slots: [None, None, None, None],
        }
    }
}

impl Trunc<DifferentialForm> {
    fn take(mut self, a: usize, b: usize) -> DifferentialForm {
        self.slots[a + 2 * b].take().expect("slot filled by expand")
    }
}

fn mul_trunc<T>(
    x: &Trunc<T>,
    y: &Trunc<T>,
    degree: impl Fn(&T) -> usize,
    neg: impl Fn(T) -> T,
    mul: impl Fn(&T, &T) -> Result<T>,
    add: impl Fn(&mut T, &T) -> Result<()>,
) -> Result<Trunc<T>>
where
    T: Clone,
{
    let mut out = Trunc::empty();
    for i in 0..4 {
        for j in 0..4 {
            if i & j != 0 {
                // s² or t² vanishes after truncation
                continue;
            }
            let (Some(p), Some(q)) = (&x.slots[i], &y.slots[j]) else { continue };
            // s^a t^b X · s^c t^e Y = ± s^(a+c) t^(b+e) X Y
            let (b, c, moved) = (i >> 1, j & 1, (j & 1) + (j >> 1));
            let odd = (moved * degree(p) + b * c) % 2 == 1;
            let prod = mul(p, q)?;
            let prod = if odd { neg(prod) } else { prod };
            match &mut out.slots[i | j] {
                Some(acc) => add(acc, &prod)?,
                slot => *slot = Some(prod),
            }
        }
    }
    Ok(out)
}

fn trunc_matrix_wedge(x: &Trunc<MatrixForm>, y: &Trunc<MatrixForm>) -> Result<Trunc<MatrixForm>> {
    mul_trunc(
        x,
        y,
        MatrixForm::degree,
        |p| p.scale(Complex64::new(-1.0, 0.0)),
        |p, q| p.matrix_wedge(q),
        |a, b| a.add_scaled(Complex64::new(1.0, 0.0), b),
    )
}

fn trunc_wedge(x: &Trunc<DifferentialForm>, y: &Trunc<DifferentialForm>) -> Result<Trunc<DifferentialForm>> {
    mul_trunc(
        x,
        y,
        DifferentialForm::degree,
        |p| p.scale(Complex64::new(-1.0, 0.0)),
        |p, q| p.wedge(q),
        |a, b| a.add_assign(b),
    )
}

/// Expand `φ(X)` for a truncated matrix polynomial `X`, filling every slot so that
/// `take` always succeeds; `top` is the form degree of the constant slot.
fn expand(
    phi: &InvariantPolynomial,
    x: &Trunc<MatrixForm>,
    chart: &Arc<Chart>,
    top: usize,
) -> Result<Trunc<DifferentialForm>> {
    let max_j = phi.degree();
    let mut traces: Vec<Trunc<DifferentialForm>> = Vec::with_capacity(max_j + 1);
    traces.push(Trunc::empty());
    let mut power = x.clone();
    for j in 1..=max_j {
        if j > 1 {
            power = trunc_matrix_wedge(&power, x)?;
        }
        let mut t = Trunc::empty();
        for (slot, m) in power.slots.iter().enumerate() {
            if let Some(m) = m {
                t.slots[slot] = Some(m.trace()?);
            }
        }
        traces.push(t);
    }
    let mut out: Trunc<DifferentialForm> = Trunc::empty();
    for term in &phi.terms {
        let factor = phi.slot.powu(term.weight() as u32) * term.coeff;
        let mut prod: Trunc<DifferentialForm> = if term.powers.is_empty() {
            let n = chart.node_count();
            Trunc::constant(
                DifferentialForm::scalar(chart.clone(), vec![Complex64::new(1.0, 0.0); n])?,
            )
        } else {
            traces[term.powers[0]].clone()
        };
        for &j in term.powers.iter().skip(1) {
            prod = trunc_wedge(&prod, &traces[j])?;
        }
        for slot in 0..4 {
            let Some(p) = prod.slots[slot].take() else { continue };
            let p = p.scale(factor);
            match &mut out.slots[slot] {
                Some(acc) => acc.add_assign(&p)?,
                s => *s = Some(p),
            }
        }
    }
    for (slot, s) in out.slots.iter_mut().enumerate() {
        if s.is_none() {
            let lowered = (slot & 1) + (slot >> 1);
            let degree = top.saturating_sub(lowered);
            *s = Some(DifferentialForm::vanishing(chart.clone(), degree));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_identities() {
        let e2 = elementary_in_power_sums(2);
        assert_eq!(e2.len(), 2);
        let e1 = elementary_in_power_sums(1);
        assert_eq!(e1, vec![Term { coeff: 1.0, powers: vec![1] }]);
    }

    #[test]
    fn chern_above_rank_vanishes() {
        let c = InvariantPolynomial::chern(3, 2);
        assert!(c.vanishes_by_rank);
        assert!(c.terms.is_empty());
    }

    #[test]
    fn by_name_parses() {
        assert_eq!(InvariantPolynomial::by_name("c2", 2).unwrap().degree(), 2);
        assert_eq!(InvariantPolynomial::by_name("p1", 4).unwrap().degree(), 2);
        assert_eq!(InvariantPolynomial::by_name("ch2", 1).unwrap().degree(), 2);
        assert!(InvariantPolynomial::by_name("x9", 1).is_err());
    }
}
