//! Multi-indices, complex polynomials, monomial orders and moment sequences.
//!
//! A moment sequence `σ` is stored by its values `σ_α` on a finite,
//! downward-closed support `a ⊂ ℕⁿ`. Polynomials act on it through the dual
//! pairing `⟨σ | p⟩ = Σ_β p_β σ_β` and through the cross-correlation shift
//! `(p ⋆ σ)_α = Σ_β p_β σ_{α+β}`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance under which polynomial coefficients are dropped
/// by [`Poly::pruned`].
pub const DEFAULT_DROP_TOL: f64 = 1e-12;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Exponent vector `α ∈ ℕⁿ`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    /// The exponent of the variable `x_i`.
    pub fn unit(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// `self ≪ other`, i.e. `x^self` divides `x^other`.
    pub fn divides(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.divides(self) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn with_increment(&self, i: usize) -> MultiIndex {
        let mut e = self.0.clone();
        e[i] += 1;
        MultiIndex(e)
    }

    /// `α! = Π α_i!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e)).product()
    }

    /// `point^α`.
    pub fn power_of(&self, point: &[Complex64]) -> Complex64 {
        self.0
            .iter()
            .zip(point)
            .fold(ONE, |acc, (&e, &z)| acc * z.powu(e))
    }

    /// All divisors `β ≪ α`, in increasing lexicographic order of exponents.
    pub fn divisors(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex(Vec::with_capacity(self.0.len()))];
        for &e in &self.0 {
            let mut next = Vec::with_capacity(out.len() * (e as usize + 1));
            for prefix in &out {
                for k in 0..=e {
                    let mut v = prefix.0.clone();
                    v.push(k);
                    next.push(MultiIndex(v));
                }
            }
            out = next;
        }
        out
    }

    /// All exponents of total degree at most `degree`, graded then listed
    /// with `x_1` first (`1, x_1, x_2, x_1², x_1x_2, x_2², …`).
    pub fn all_up_to_degree(nvars: usize, degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for d in 0..=degree {
            out.extend(Self::all_of_degree(nvars, d));
        }
        out
    }

    /// Exponents of total degree exactly `degree`, `x_1`-heavy first.
    pub fn all_of_degree(nvars: usize, degree: u32) -> Vec<MultiIndex> {
        fn rec(nvars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == nvars {
                prefix.push(left);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in (0..=left).rev() {
                prefix.push(e);
                rec(nvars, left - e, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if nvars == 0 {
            if degree == 0 {
                out.push(MultiIndex(Vec::new()));
            }
            return out;
        }
        rec(nvars, degree, &mut Vec::with_capacity(nvars), &mut out);
        out
    }
}

impl Add for &MultiIndex {
    type Output = MultiIndex;
    fn add(self, rhs: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.0.len(), rhs.0.len());
        MultiIndex(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

impl<const N: usize> From<[u32; N]> for MultiIndex {
    fn from(v: [u32; N]) -> Self {
        MultiIndex(v.to_vec())
    }
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Sparse polynomial with complex coefficients in `nvars` variables.
///
/// Used both for polynomials in `x` (acting on sequences) and for weights
/// `ω(y)` of polynomial-exponential terms.
#[derive(Clone, PartialEq, Debug)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<MultiIndex, Complex64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, ONE)
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        Self::monomial_scaled(MultiIndex::zero(nvars), c)
    }

    pub fn monomial(alpha: MultiIndex) -> Self {
        Self::monomial_scaled(alpha, ONE)
    }

    pub fn monomial_scaled(alpha: MultiIndex, c: Complex64) -> Self {
        let nvars = alpha.nvars();
        let mut terms = BTreeMap::new();
        if c != ZERO {
            terms.insert(alpha, c);
        }
        Poly { nvars, terms }
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(nvars, i))
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs, summing repeats.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, Complex64)>,
    {
        let mut p = Poly::zero(nvars);
        for (alpha, c) in terms {
            if alpha.nvars() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    found: alpha.nvars(),
                });
            }
            p.add_term(alpha, c);
        }
        Ok(p)
    }

    /// Convenience constructor from real coefficients.
    pub fn from_real_terms(nvars: usize, terms: &[(&[u32], f64)]) -> Self {
        let mut p = Poly::zero(nvars);
        for (alpha, c) in terms {
            assert_eq!(alpha.len(), nvars, "exponent length mismatch");
            p.add_term(MultiIndex::new(alpha.to_vec()), Complex64::new(*c, 0.0));
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: Complex64) {
        if c == ZERO {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(alpha) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == ZERO {
                    o.remove();
                }
            }
        }
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Complex64 {
        self.terms.get(alpha).copied().unwrap_or(ZERO)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.terms.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &MultiIndex> {
        self.terms.keys()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).max()
    }

    /// Largest coefficient modulus.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: Complex64) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (alpha, v) in &self.terms {
            out.add_term(alpha.clone(), v * c);
        }
        out
    }

    /// `x^alpha · self`.
    pub fn shift_by(&self, alpha: &MultiIndex) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(beta, c)| (beta + alpha, *c))
                .collect(),
        }
    }

    /// Drops coefficients of modulus `<= tol`.
    pub fn pruned(&self, tol: f64) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .map(|(a, c)| (a.clone(), *c))
                .collect(),
        }
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(alpha, c)| c * alpha.power_of(point))
            .sum()
    }

    /// `∂^beta self`.
    pub fn derivative(&self, beta: &MultiIndex) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (alpha, c) in &self.terms {
            if let Some(rest) = alpha.checked_sub(beta) {
                let falling: f64 = alpha
                    .entries()
                    .iter()
                    .zip(beta.entries())
                    .map(|(&a, &b)| factorial(a) / factorial(a - b))
                    .product();
                out.add_term(rest, c * falling);
            }
        }
        out
    }

    /// Taylor expansion around `center`: returns `q` with `q(t) = self(center + t)`.
    pub fn translate(&self, center: &[Complex64]) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (alpha, c) in &self.terms {
            for beta in alpha.divisors() {
                let rest = alpha.checked_sub(&beta).expect("divisor");
                let binom: f64 = alpha
                    .entries()
                    .iter()
                    .zip(beta.entries())
                    .map(|(&a, &b)| binomial(a, b))
                    .product();
                out.add_term(beta, c * binom * rest.power_of(center));
            }
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (alpha, c) in &rhs.terms {
            out.add_term(alpha.clone(), *c);
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (alpha, c) in &rhs.terms {
            out.add_term(alpha.clone(), -*c);
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-ONE)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term(a + b, ca * cb);
            }
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (alpha, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i)*x^{}", c.re, c.im, alpha)?;
        }
        Ok(())
    }
}

/// Kind of monomial order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    #[default]
    #[serde(rename = "grlex")]
    GradedLex,
    #[serde(rename = "grevlex")]
    GradedRevLex,
    Lex,
}

impl std::str::FromStr for OrderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grlex" => Ok(OrderKind::GradedLex),
            "grevlex" => Ok(OrderKind::GradedRevLex),
            "lex" => Ok(OrderKind::Lex),
            other => Err(Error::InvalidInput(format!("unknown monomial order {other:?}"))),
        }
    }
}

/// A monomial order together with a variable priority (most significant first).
///
/// [`MonomialOrder::cmp`] is the term order itself (1 is the smallest
/// monomial). [`MonomialOrder::scan_cmp`] is the enumeration order used when
/// scanning candidate monomials: for graded kinds, degrees ascend and, within a
/// degree, monomials are visited from the largest down, so the default order
/// lists `1, x_1, x_2, x_1², x_1x_2, x_2², …`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialOrder {
    pub kind: OrderKind,
    priority: Vec<usize>,
}

impl MonomialOrder {
    pub fn new(kind: OrderKind, nvars: usize) -> Self {
        MonomialOrder {
            kind,
            priority: (0..nvars).collect(),
        }
    }

    pub fn with_priority(kind: OrderKind, priority: Vec<usize>) -> Result<Self> {
        let mut sorted = priority.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::InvalidInput(format!(
                "variable priority {priority:?} is not a permutation"
            )));
        }
        Ok(MonomialOrder { kind, priority })
    }

    pub fn graded_lex(nvars: usize) -> Self {
        Self::new(OrderKind::GradedLex, nvars)
    }

    pub fn priority(&self) -> &[usize] {
        &self.priority
    }

    fn lex(&self, a: &MultiIndex, b: &MultiIndex) -> Ordering {
        for &i in &self.priority {
            match a.entries()[i].cmp(&b.entries()[i]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    fn revlex(&self, a: &MultiIndex, b: &MultiIndex) -> Ordering {
        for &i in self.priority.iter().rev() {
            match a.entries()[i].cmp(&b.entries()[i]) {
                Ordering::Equal => continue,
                o => return o.reverse(),
            }
        }
        Ordering::Equal
    }

    /// Term-order comparison.
    pub fn cmp(&self, a: &MultiIndex, b: &MultiIndex) -> Ordering {
        match self.kind {
            OrderKind::Lex => self.lex(a, b),
            OrderKind::GradedLex => a.degree().cmp(&b.degree()).then_with(|| self.lex(a, b)),
            OrderKind::GradedRevLex => a
                .degree()
                .cmp(&b.degree())
                .then_with(|| self.revlex(a, b)),
        }
    }

    /// Enumeration order used by the basis construction.
    pub fn scan_cmp(&self, a: &MultiIndex, b: &MultiIndex) -> Ordering {
        match self.kind {
            OrderKind::Lex => self.cmp(a, b),
            _ => a
                .degree()
                .cmp(&b.degree())
                .then_with(|| self.cmp(a, b).reverse()),
        }
    }

    pub fn sort_scan(&self, v: &mut [MultiIndex]) {
        v.sort_by(|a, b| self.scan_cmp(a, b));
    }
}

/// Truncated moment sequence `(σ_α)_{α ∈ a}` on a downward-closed support.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSequence {
    nvars: usize,
    values: BTreeMap<MultiIndex, Complex64>,
}

impl MomentSequence {
    /// Builds a sequence; the support is the key set of `values` and must be
    /// downward-closed.
    pub fn new(nvars: usize, values: BTreeMap<MultiIndex, Complex64>) -> Result<Self> {
        for alpha in values.keys() {
            if alpha.nvars() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    found: alpha.nvars(),
                });
            }
        }
        check_downward_closed(values.keys(), |a| values.contains_key(a))?;
        Ok(MomentSequence { nvars, values })
    }

    /// Builds a sequence from `(α, σ_α)` pairs, rejecting duplicates.
    pub fn from_pairs<I>(nvars: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, Complex64)>,
    {
        let mut values = BTreeMap::new();
        for (alpha, v) in pairs {
            if values.insert(alpha.clone(), v).is_some() {
                return Err(Error::DuplicateIndex(alpha));
            }
        }
        Self::new(nvars, values)
    }

    /// Samples `f` on every exponent of `support`.
    pub fn from_fn<F>(nvars: usize, support: &[MultiIndex], mut f: F) -> Result<Self>
    where
        F: FnMut(&MultiIndex) -> Complex64,
    {
        Self::from_pairs(nvars, support.iter().map(|a| (a.clone(), f(a))))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<Complex64> {
        self.values.get(alpha).copied()
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.values.contains_key(alpha)
    }

    pub fn support(&self) -> impl Iterator<Item = &MultiIndex> {
        self.values.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.values.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// `max_α |σ_α|`.
    pub fn max_abs(&self) -> f64 {
        self.values.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: Complex64) -> MomentSequence {
        MomentSequence {
            nvars: self.nvars,
            values: self.values.iter().map(|(a, v)| (a.clone(), v * c)).collect(),
        }
    }

    /// Restriction to the exponents satisfying `keep`; the result must stay
    /// downward-closed.
    pub fn restrict<F: Fn(&MultiIndex) -> bool>(&self, keep: F) -> Result<MomentSequence> {
        let values: BTreeMap<_, _> = self
            .values
            .iter()
            .filter(|(a, _)| keep(a))
            .map(|(a, v)| (a.clone(), *v))
            .collect();
        MomentSequence::new(self.nvars, values)
    }
}

/// Verifies that every `α` has all its predecessors `α − e_i` present.
pub(crate) fn check_downward_closed<'a, I, F>(alphas: I, contains: F) -> Result<()>
where
    I: IntoIterator<Item = &'a MultiIndex>,
    F: Fn(&MultiIndex) -> bool,
{
    for alpha in alphas {
        for i in 0..alpha.nvars() {
            if alpha.entries()[i] > 0 {
                let mut e = alpha.entries().to_vec();
                e[i] -= 1;
                let pred = MultiIndex::new(e);
                if !contains(&pred) {
                    return Err(Error::NotDownwardClosed {
                        missing: pred,
                        present: alpha.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Dual pairing `⟨σ | p⟩ = Σ_β p_β σ_β`.
pub fn pairing(sigma: &MomentSequence, p: &Poly) -> Result<Complex64> {
    let mut acc = ZERO;
    for (beta, c) in p.terms() {
        let v = sigma.get(beta).ok_or_else(|| Error::OutOfSupport(beta.clone()))?;
        acc += c * v;
    }
    Ok(acc)
}

/// Cross-correlation shift `(p ⋆ σ)_α = Σ_β p_β σ_{α+β}` on the exponents `α`
/// for which every `α + β` is observed.
pub fn star_shift(sigma: &MomentSequence, p: &Poly) -> Result<MomentSequence> {
    let mut values = BTreeMap::new();
    'outer: for alpha in sigma.support() {
        let mut acc = ZERO;
        for (beta, c) in p.terms() {
            match sigma.get(&(alpha + beta)) {
                Some(v) => acc += c * v,
                None => continue 'outer,
            }
        }
        values.insert(alpha.clone(), acc);
    }
    if values.is_empty() {
        return Err(Error::EmptyResult);
    }
    MomentSequence::new(sigma.nvars(), values)
}

/// Bilinear form `⟨p, q⟩_σ = ⟨σ | p q⟩`.
pub fn inner_product(sigma: &MomentSequence, p: &Poly, q: &Poly) -> Result<Complex64> {
    pairing(sigma, &(p * q))
}

/// `b⁺ = b ∪ x_1 b ∪ … ∪ x_n b`.
pub(crate) fn closure_plus(b: &[MultiIndex], nvars: usize) -> Vec<MultiIndex> {
    let mut out: BTreeSet<MultiIndex> = b.iter().cloned().collect();
    for beta in b {
        for i in 0..nvars {
            out.insert(beta.with_increment(i));
        }
    }
    out.into_iter().collect()
}
