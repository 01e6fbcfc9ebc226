//! Incremental construction of monomial bases `b`, `b'` of the quotient
//! algebra of a moment sequence, together with biorthogonal polynomial
//! families `p`, `q` (`⟨p_i, q_j⟩_σ = δ_ij`) and the border relations that
//! span the kernel of its Hankel operator.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use crate::algebra::{MomentSequence, MonomialOrder, MultiIndex, Poly};
use crate::error::{Error, Result};

/// Default relative pivot threshold.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-8;

/// Output of [`compute_orthobasis`].
#[derive(Clone, Debug)]
pub struct OrthoBasisResult {
    pub nvars: usize,
    /// Row-side monomials `β_1, …, β_r`, in insertion order.
    pub b: Vec<MultiIndex>,
    /// Column-side monomials `β'_1, …, β'_r` paired with `b`.
    pub b_prime: Vec<MultiIndex>,
    pub p_polys: Vec<Poly>,
    pub q_polys: Vec<Poly>,
    /// Exponents whose projection vanished against every available shift.
    pub d_exponents: Vec<MultiIndex>,
    /// Border relation `p_α` for each `α` in `d_exponents`.
    pub border: BTreeMap<MultiIndex, Poly>,
    /// Candidates dropped because `α + b'` left the support mid-round.
    pub unresolved: Vec<MultiIndex>,
    /// Largest total degree of the moments that were read.
    pub consumed_degree: u32,
    /// Modulus of each accepted pivot, aligned with `b`.
    pub pivots: Vec<f64>,
}

impl OrthoBasisResult {
    pub fn rank(&self) -> usize {
        self.b.len()
    }
}

struct Reader<'a> {
    sigma: &'a MomentSequence,
    consumed: Cell<u32>,
}

impl Reader<'_> {
    fn pair(&self, p: &Poly) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut deg = self.consumed.get();
        for (beta, c) in p.terms() {
            let v = self
                .sigma
                .get(beta)
                .ok_or_else(|| Error::OutOfSupport(beta.clone()))?;
            deg = deg.max(beta.degree());
            acc += c * v;
        }
        self.consumed.set(deg);
        Ok(acc)
    }

    fn inner(&self, p: &Poly, q: &Poly) -> Result<Complex64> {
        self.pair(&(p * q))
    }
}

fn fits<'a, I>(alpha: &MultiIndex, others: I, support: &BTreeSet<MultiIndex>) -> bool
where
    I: IntoIterator<Item = &'a MultiIndex>,
{
    others.into_iter().all(|b| support.contains(&(alpha + b)))
}

fn poly_fits(p: &Poly, q: &Poly, support: &BTreeSet<MultiIndex>) -> bool {
    p.support()
        .all(|a| q.support().all(|b| support.contains(&(a + b))))
}

/// Border monomials of `b` that are in the support, not yet in `b` or `d`,
/// and whose products with `b'` stay in the support; sorted in scan order.
pub fn next_candidates(
    b: &[MultiIndex],
    d: &[MultiIndex],
    b_prime: &[MultiIndex],
    support: &BTreeSet<MultiIndex>,
    order: &MonomialOrder,
) -> Vec<MultiIndex> {
    let in_b: BTreeSet<&MultiIndex> = b.iter().collect();
    let in_d: BTreeSet<&MultiIndex> = d.iter().collect();
    let mut out = BTreeSet::new();
    for beta in b {
        for i in 0..beta.nvars() {
            let alpha = beta.with_increment(i);
            if !in_b.contains(&alpha)
                && !in_d.contains(&alpha)
                && support.contains(&alpha)
                && fits(&alpha, b_prime, support)
            {
                out.insert(alpha);
            }
        }
    }
    let mut out: Vec<MultiIndex> = out.into_iter().collect();
    order.sort_scan(&mut out);
    out
}

/// Biorthogonal bases of the quotient algebra read off the moments.
///
/// Each candidate `x^α` is projected against the current basis; the first
/// monomial `x^{α'}` (in scan order) with a pivot `|⟨x^{α'}, p_α⟩_σ|` above
/// `pivot_tol · max|σ|` makes `α` a basis element, otherwise `p_α` is
/// recorded as a border relation. A second projection pass is applied to both
/// `p_α` and `q_α`.
pub fn compute_orthobasis(
    sigma: &MomentSequence,
    order: &MonomialOrder,
    pivot_tol: f64,
) -> Result<OrthoBasisResult> {
    if sigma.is_empty() {
        return Err(Error::InvalidInput("empty moment sequence".into()));
    }
    let nvars = sigma.nvars();
    if order.priority().len() != nvars {
        return Err(Error::DimensionMismatch {
            expected: nvars,
            found: order.priority().len(),
        });
    }
    let support: BTreeSet<MultiIndex> = sigma.support().cloned().collect();
    let reader = Reader {
        sigma,
        consumed: Cell::new(0),
    };
    let threshold = pivot_tol * sigma.max_abs();

    let mut scan: Vec<MultiIndex> = support.iter().cloned().collect();
    order.sort_scan(&mut scan);
    let mut s_prime = scan;

    let mut b: Vec<MultiIndex> = Vec::new();
    let mut b_prime: Vec<MultiIndex> = Vec::new();
    let mut p_polys: Vec<Poly> = Vec::new();
    let mut q_polys: Vec<Poly> = Vec::new();
    let mut d: Vec<MultiIndex> = Vec::new();
    let mut border: BTreeMap<MultiIndex, (Poly, usize)> = BTreeMap::new();
    let mut unresolved = Vec::new();
    let mut pivots = Vec::new();

    let mut candidates = vec![MultiIndex::zero(nvars)];
    while !candidates.is_empty() {
        for alpha in candidates {
            if !fits(&alpha, &b_prime, &support) {
                unresolved.push(alpha);
                continue;
            }
            let x_alpha = Poly::monomial(alpha.clone());
            let mut p = x_alpha.clone();
            for (pb, qb) in p_polys.iter().zip(&q_polys) {
                let c = reader.inner(&x_alpha, qb)?;
                p = &p - &pb.scale(c);
            }
            for (pb, qb) in p_polys.iter().zip(&q_polys) {
                let c = reader.inner(&p, qb)?;
                p = &p - &pb.scale(c);
            }

            let mut found = None;
            for (pos, ap) in s_prime.iter().enumerate() {
                if !fits(ap, std::iter::once(&alpha).chain(&b), &support) {
                    continue;
                }
                let pivot = reader.inner(&Poly::monomial(ap.clone()), &p)?;
                if pivot.norm() > threshold {
                    found = Some((pos, pivot));
                    break;
                }
            }

            match found {
                Some((pos, pivot)) => {
                    let ap = s_prime.remove(pos);
                    let x_ap = Poly::monomial(ap.clone());
                    let mut q = x_ap.clone();
                    for (pb, qb) in p_polys.iter().zip(&q_polys) {
                        let c = reader.inner(&x_ap, pb)?;
                        q = &q - &qb.scale(c);
                    }
                    for (pb, qb) in p_polys.iter().zip(&q_polys) {
                        let c = reader.inner(pb, &q)?;
                        q = &q - &qb.scale(c);
                    }
                    let norm = reader.inner(&p, &q)?;
                    q = q.scale(norm.inv());
                    pivots.push(pivot.norm());
                    b.push(alpha);
                    b_prime.push(ap);
                    p_polys.push(p);
                    q_polys.push(q);
                }
                None => {
                    border.insert(alpha.clone(), (p, p_polys.len()));
                    d.push(alpha);
                }
            }
        }
        candidates = next_candidates(&b, &d, &b_prime, &support, order);
    }

    // Relations found early are projected against pairs accepted afterwards
    // whenever the products remain observable.
    let mut relations = BTreeMap::new();
    for (alpha, (mut p, known)) in border {
        for (pb, qb) in p_polys.iter().zip(&q_polys).skip(known) {
            if poly_fits(&p, qb, &support) {
                let c = reader.inner(&p, qb)?;
                p = &p - &pb.scale(c);
            }
        }
        relations.insert(alpha, p);
    }

    Ok(OrthoBasisResult {
        nvars,
        b,
        b_prime,
        p_polys,
        q_polys,
        d_exponents: d,
        border: relations,
        unresolved,
        consumed_degree: reader.consumed.get(),
        pivots,
    })
}

/// The border relations in the order their exponents were rejected.
pub fn border_basis(result: &OrthoBasisResult) -> Vec<Poly> {
    result
        .d_exponents
        .iter()
        .filter_map(|a| result.border.get(a).cloned())
        .collect()
}
