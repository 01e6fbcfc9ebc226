//! Polynomial-exponential models `σ(y) = Σ ω_i(y) e^{ξ_i·y}`, their moment
//! sequences and multiplicity invariants.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_complex::Complex64;

use crate::algebra::{check_downward_closed, MomentSequence, MultiIndex, Poly, DEFAULT_DROP_TOL, ZERO};
use crate::error::{Error, Result};
use crate::numlin::{self, CMatrix};

/// Default merge distance (∞-norm) under which two frequencies are identified.
pub const DEFAULT_MERGE_TOL: f64 = 1e-7;

/// Default relative singular-value cutoff used by [`mu_dimension`].
pub const DEFAULT_MU_RANK_TOL: f64 = 1e-10;

/// One term `ω(y) e^{ξ·y}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolExpTerm {
    pub xi: Vec<Complex64>,
    pub weight: Poly,
}

impl PolExpTerm {
    pub fn new(xi: Vec<Complex64>, weight: Poly) -> Self {
        PolExpTerm { xi, weight }
    }

    /// Term with a constant weight.
    pub fn constant(xi: Vec<Complex64>, w: Complex64) -> Self {
        let n = xi.len();
        PolExpTerm {
            xi,
            weight: Poly::constant(n, w),
        }
    }
}

/// A finite sum of polynomial-exponential terms in `nvars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct PolExpModel {
    pub nvars: usize,
    pub terms: Vec<PolExpTerm>,
}

impl PolExpModel {
    pub fn new(nvars: usize, terms: Vec<PolExpTerm>) -> Result<Self> {
        for t in &terms {
            if t.xi.len() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    found: t.xi.len(),
                });
            }
            if t.weight.nvars() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    found: t.weight.nvars(),
                });
            }
        }
        Ok(PolExpModel { nvars, terms })
    }

    pub fn empty(nvars: usize) -> Self {
        PolExpModel {
            nvars,
            terms: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value of the moment `σ_α` generated by the model.
    pub fn moment(&self, alpha: &MultiIndex) -> Complex64 {
        let mut acc = ZERO;
        for term in &self.terms {
            for (beta, w) in term.weight.terms() {
                if let Some(rest) = alpha.checked_sub(beta) {
                    acc += w * falling_factorial(alpha, beta) * rest.power_of(&term.xi);
                }
            }
        }
        acc
    }
}

/// `α! / (α − β)!` for `β ≪ α`.
pub(crate) fn falling_factorial(alpha: &MultiIndex, beta: &MultiIndex) -> f64 {
    alpha
        .entries()
        .iter()
        .zip(beta.entries())
        .map(|(&a, &b)| ((a - b + 1)..=a).map(f64::from).product::<f64>())
        .product()
}

/// Moments `σ_α = Σ_i Σ_{β ≪ α} ω_{i,β} α!/(α−β)! ξ_i^{α−β}` on `support`.
pub fn synth_moments(model: &PolExpModel, support: &[MultiIndex]) -> Result<MomentSequence> {
    let set: BTreeSet<&MultiIndex> = support.iter().collect();
    check_downward_closed(support.iter(), |a| set.contains(a))?;
    MomentSequence::from_fn(model.nvars, support, |alpha| model.moment(alpha))
}

/// Moments of `model` on every exponent of total degree at most `degree`.
pub fn synth_moments_to_degree(model: &PolExpModel, degree: u32) -> MomentSequence {
    let support = MultiIndex::all_up_to_degree(model.nvars, degree);
    MomentSequence::from_fn(model.nvars, &support, |alpha| model.moment(alpha))
        .expect("degree ball is downward-closed")
}

/// Dimension of the span of `ω` and all its derivatives.
pub fn mu_dimension(omega: &Poly) -> Result<usize> {
    mu_dimension_with(omega, DEFAULT_MU_RANK_TOL)
}

pub fn mu_dimension_with(omega: &Poly, tol_rel: f64) -> Result<usize> {
    if omega.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let mut monomials = BTreeSet::new();
    for alpha in omega.support() {
        monomials.extend(alpha.divisors());
    }
    let rows: Vec<MultiIndex> = monomials.into_iter().collect();
    let mut theta = CMatrix::zeros(rows.len(), rows.len());
    for (j, beta) in rows.iter().enumerate() {
        let d = omega.derivative(beta).scale(Complex64::new(1.0 / beta.factorial(), 0.0));
        for (i, alpha) in rows.iter().enumerate() {
            theta[(i, j)] = d.coeff(alpha);
        }
    }
    let s = numlin::svd_values(&theta)?;
    Ok(numlin::rank_of_values(&s, tol_rel))
}

/// `Σ_i μ(ω_i)`, the rank of the Hankel operator of the model.
pub fn model_rank(model: &PolExpModel) -> Result<usize> {
    model
        .terms
        .iter()
        .map(|t| mu_dimension(&t.weight))
        .sum()
}

fn quantize(x: f64, q: f64) -> i64 {
    (x / q).round() as i64
}

fn canonical_key(xi: &[Complex64], q: f64) -> Vec<i64> {
    let norm = xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut key = vec![quantize(norm, q)];
    for z in xi {
        key.push(quantize(z.re, q));
        key.push(quantize(z.im, q));
    }
    key
}

fn exact_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Merges terms closer than `merge_tol`, drops vanishing weights and sorts the
/// terms by `|ξ|`, then by the real and imaginary parts of the components.
pub fn canonicalize(model: &PolExpModel, merge_tol: f64) -> PolExpModel {
    canonicalize_with(model, merge_tol, DEFAULT_DROP_TOL)
}

pub fn canonicalize_with(model: &PolExpModel, merge_tol: f64, drop_tol: f64) -> PolExpModel {
    let mut merged: Vec<PolExpTerm> = Vec::new();
    for term in &model.terms {
        let close = merged.iter_mut().find(|m| {
            m.xi
                .iter()
                .zip(&term.xi)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
                < merge_tol
        });
        match close {
            Some(m) => m.weight = &m.weight + &term.weight,
            None => merged.push(term.clone()),
        }
    }
    let mut terms: Vec<PolExpTerm> = merged
        .into_iter()
        .map(|t| PolExpTerm {
            weight: t.weight.pruned(drop_tol),
            xi: t.xi,
        })
        .filter(|t| !t.weight.is_zero())
        .collect();
    let q = merge_tol.max(f64::MIN_POSITIVE);
    terms.sort_by(|a, b| {
        canonical_key(&a.xi, q)
            .cmp(&canonical_key(&b.xi, q))
            .then_with(|| exact_cmp(&a.xi, &b.xi))
    });
    PolExpModel {
        nvars: model.nvars,
        terms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    pub(crate) fn example_model() -> PolExpModel {
        PolExpModel::new(
            2,
            vec![
                PolExpTerm::constant(vec![c(1.0), c(1.0)], c(2.0)),
                PolExpTerm::constant(vec![c(2.0), c(2.0)], c(3.0)),
                PolExpTerm::constant(vec![c(3.0), c(1.0)], c(-1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn synth_reproduces_example_table() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let expect = [
            ([0, 0], 4.0),
            ([1, 0], 5.0),
            ([0, 1], 7.0),
            ([2, 0], 5.0),
            ([1, 1], 11.0),
            ([0, 2], 13.0),
            ([3, 0], -1.0),
            ([2, 1], 17.0),
            ([1, 2], 23.0),
            ([0, 3], 25.0),
            ([4, 0], -31.0),
            ([3, 1], 23.0),
            ([2, 2], 41.0),
            ([1, 3], 47.0),
            ([0, 4], 49.0),
        ];
        assert_eq!(s.len(), 15);
        for (alpha, v) in expect {
            assert_eq!(s.get(&MultiIndex::from(alpha)), Some(c(v)), "{alpha:?}");
        }
    }

    #[test]
    fn synth_single_derivative() {
        let m = PolExpModel::new(
            2,
            vec![PolExpTerm::new(vec![c(0.0), c(0.0)], Poly::var(2, 0))],
        )
        .unwrap();
        let s = synth_moments_to_degree(&m, 3);
        for (alpha, v) in s.iter() {
            let expected = if *alpha == MultiIndex::from([1, 0]) { 1.0 } else { 0.0 };
            assert_eq!(*v, c(expected));
        }
    }

    #[test]
    fn synth_univariate_constant_weight() {
        let xi = Complex64::new(0.3, 0.8);
        let w = Complex64::new(-1.5, 0.25);
        let m = PolExpModel::new(1, vec![PolExpTerm::constant(vec![xi], w)]).unwrap();
        let s = synth_moments_to_degree(&m, 6);
        for k in 0..=6u32 {
            let got = s.get(&MultiIndex::from([k])).unwrap();
            assert!((got - w * xi.powu(k)).norm() < 1e-14);
        }
    }

    #[test]
    fn synth_rejects_non_closed_support() {
        let support = vec![MultiIndex::from([0]), MultiIndex::from([2])];
        assert!(matches!(
            synth_moments(&example_model_1d(), &support),
            Err(Error::NotDownwardClosed { .. })
        ));
    }

    fn example_model_1d() -> PolExpModel {
        PolExpModel::new(1, vec![PolExpTerm::constant(vec![c(2.0)], c(1.0))]).unwrap()
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu_dimension(&Poly::constant(2, c(3.0))).unwrap(), 1);
        for d in 0..6u32 {
            assert_eq!(mu_dimension(&Poly::monomial(MultiIndex::from([d]))).unwrap(), d as usize + 1);
        }
        let y1y2 = Poly::monomial(MultiIndex::from([1, 1]));
        assert_eq!(mu_dimension(&y1y2).unwrap(), 4);
        // y1 + y2 has derivatives spanning {y1 + y2, 1}
        let sum = &Poly::var(2, 0) + &Poly::var(2, 1);
        assert_eq!(mu_dimension(&sum).unwrap(), 2);
        assert_eq!(mu_dimension(&Poly::zero(2)), Err(Error::ZeroPolynomial));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(model_rank(&example_model()).unwrap(), 3);
        let m = PolExpModel::new(
            1,
            vec![PolExpTerm::new(
                vec![c(2.0)],
                &Poly::one(1) + &Poly::var(1, 0),
            )],
        )
        .unwrap();
        assert_eq!(model_rank(&m).unwrap(), 2);
        assert_eq!(model_rank(&PolExpModel::empty(3)).unwrap(), 0);
    }

    #[test]
    fn canonicalize_merges_and_sorts() {
        let xi = vec![c(1.0), c(2.0)];
        let m = PolExpModel::new(
            2,
            vec![
                PolExpTerm::constant(xi.clone(), c(2.0)),
                PolExpTerm::constant(xi, c(-2.0)),
            ],
        )
        .unwrap();
        assert!(canonicalize(&m, DEFAULT_MERGE_TOL).is_empty());

        let base = example_model();
        let mut rev = base.clone();
        rev.terms.reverse();
        let a = canonicalize(&base, DEFAULT_MERGE_TOL);
        let b = canonicalize(&rev, DEFAULT_MERGE_TOL);
        assert_eq!(a, b);
        assert_eq!(a.terms[0].xi, vec![c(1.0), c(1.0)]);

        let tol = DEFAULT_MERGE_TOL;
        let near = PolExpModel::new(
            1,
            vec![
                PolExpTerm::constant(vec![c(1.0)], c(1.0)),
                PolExpTerm::constant(vec![c(1.0 + 2.0 * tol)], c(1.0)),
            ],
        )
        .unwrap();
        assert_eq!(canonicalize(&near, tol).len(), 2);
    }

    #[test]
    fn synth_invariant_under_canonicalize() {
        let mut m = example_model();
        m.terms.push(PolExpTerm::constant(vec![c(1.0), c(1.0)], c(0.5)));
        let canon = canonicalize(&m, DEFAULT_MERGE_TOL);
        let a = synth_moments_to_degree(&m, 4);
        let b = synth_moments_to_degree(&canon, 4);
        for (alpha, v) in a.iter() {
            assert!((v - b.get(alpha).unwrap()).norm() < 1e-12);
        }
    }
}
