//! Truncated Hankel matrices `(⟨σ | b_j b'_i⟩)` on polynomial bases, rank and
//! flat-extension tests, and the Vandermonde/Wronskian factorizations of
//! moment matrices of polynomial-exponential models.

use std::collections::BTreeSet;

use num_complex::Complex64;

use crate::algebra::{pairing, MomentSequence, MultiIndex, Poly};
use crate::error::{Error, Result};
use crate::numlin::{self, CMatrix};
use crate::polexp::PolExpModel;

/// Default relative cutoff for numerical ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// `H^{B,B'}` with rows indexed by `B'` and columns by `B`.
#[derive(Clone, Debug)]
pub struct TruncatedHankel {
    pub rows: Vec<Poly>,
    pub cols: Vec<Poly>,
    pub matrix: CMatrix,
}

/// Monomials `x^β` for each listed exponent.
pub fn monomial_basis(exponents: &[MultiIndex]) -> Vec<Poly> {
    exponents.iter().cloned().map(Poly::monomial).collect()
}

/// Entry `(i, j) = ⟨σ | b_j b'_i⟩`.
pub fn build_hankel(sigma: &MomentSequence, cols: &[Poly], rows: &[Poly]) -> Result<TruncatedHankel> {
    build_shifted(sigma, &Poly::one(sigma.nvars()), cols, rows)
}

/// Entry `(i, j) = ⟨σ | g b_j b'_i⟩`, the matrix of `H_{g⋆σ}`.
pub fn build_shifted(
    sigma: &MomentSequence,
    g: &Poly,
    cols: &[Poly],
    rows: &[Poly],
) -> Result<TruncatedHankel> {
    let mut matrix = CMatrix::zeros(rows.len(), cols.len());
    let shifted: Vec<Poly> = cols.iter().map(|b| g * b).collect();
    for (i, r) in rows.iter().enumerate() {
        for (j, gb) in shifted.iter().enumerate() {
            matrix[(i, j)] = pairing(sigma, &(gb * r))?;
        }
    }
    Ok(TruncatedHankel {
        rows: rows.to_vec(),
        cols: cols.to_vec(),
        matrix,
    })
}

/// Monomial-basis Hankel matrix `(σ_{β+β'})`.
pub fn build_monomial_hankel(
    sigma: &MomentSequence,
    cols: &[MultiIndex],
    rows: &[MultiIndex],
) -> Result<CMatrix> {
    let mut matrix = CMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let e = c + r;
            matrix[(i, j)] = sigma.get(&e).ok_or(Error::OutOfSupport(e))?;
        }
    }
    Ok(matrix)
}

/// Moment matrix on all monomials of degree `≤ degree` (rows and columns in
/// graded order); needs the moments up to `2·degree`.
pub fn graded_hankel(sigma: &MomentSequence, degree: u32) -> Result<CMatrix> {
    let basis = MultiIndex::all_up_to_degree(sigma.nvars(), degree);
    build_monomial_hankel(sigma, &basis, &basis).map_err(|e| match e {
        Error::OutOfSupport(alpha) => Error::InsufficientMoments(format!(
            "basis degree {degree} needs the moment at {alpha}"
        )),
        other => other,
    })
}

/// Number of singular values above `tol_rel · σ_max`; zero for the zero matrix.
pub fn numeric_rank(matrix: &CMatrix, tol_rel: f64) -> Result<usize> {
    let s = numlin::svd_values(matrix)?;
    Ok(numlin::rank_of_values(&s, tol_rel))
}

/// Outcome of a flat-extension test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlatExtension {
    pub flat: bool,
    pub rank_inner: usize,
    pub rank_outer: usize,
}

fn coefficient_matrix(polys: &[Poly]) -> (CMatrix, Vec<MultiIndex>) {
    let monos: BTreeSet<MultiIndex> = polys.iter().flat_map(|p| p.support().cloned()).collect();
    let monos: Vec<MultiIndex> = monos.into_iter().collect();
    let mut m = CMatrix::zeros(monos.len(), polys.len());
    for (j, p) in polys.iter().enumerate() {
        for (i, a) in monos.iter().enumerate() {
            m[(i, j)] = p.coeff(a);
        }
    }
    (m, monos)
}

fn span_rank(polys: &[Poly]) -> Result<usize> {
    if polys.is_empty() {
        return Ok(0);
    }
    let (m, _) = coefficient_matrix(polys);
    numeric_rank(&m, DEFAULT_RANK_TOL)
}

/// Whether every polynomial of `candidates` lies in the span of `basis`.
pub fn span_contains(basis: &[Poly], candidates: &[Poly]) -> Result<bool> {
    let base = span_rank(basis)?;
    let mut all = basis.to_vec();
    all.extend_from_slice(candidates);
    Ok(span_rank(&all)? == base)
}

fn plus(polys: &[Poly], nvars: usize) -> Vec<Poly> {
    let mut out = polys.to_vec();
    for p in polys {
        for i in 0..nvars {
            out.push(&Poly::var(nvars, i) * p);
        }
    }
    out
}

/// Compares the ranks of `H^{U,U'}` and `H^{V,V'}` after checking the nesting
/// hypotheses `U ⊆ V`, `U' ⊆ V'`, `1 ∈ U`, `U⁺ ⊆ V`, `U'⁺ ⊆ V'`.
pub fn flat_extension_check(
    sigma: &MomentSequence,
    u: &[Poly],
    v: &[Poly],
    u_prime: &[Poly],
    v_prime: &[Poly],
    tol_rel: f64,
) -> Result<FlatExtension> {
    let n = sigma.nvars();
    let checks: [(&str, &[Poly], Vec<Poly>); 5] = [
        ("U ⊆ V", v, u.to_vec()),
        ("U' ⊆ V'", v_prime, u_prime.to_vec()),
        ("1 ∈ U", u, vec![Poly::one(n)]),
        ("U⁺ ⊆ V", v, plus(u, n)),
        ("U'⁺ ⊆ V'", v_prime, plus(u_prime, n)),
    ];
    for (name, basis, cands) in checks {
        if !span_contains(basis, &cands)? {
            return Err(Error::PreconditionViolation(format!("inclusion {name} fails")));
        }
    }
    let inner = build_hankel(sigma, u, u_prime)?;
    let outer = build_hankel(sigma, v, v_prime)?;
    let rank_inner = numeric_rank(&inner.matrix, tol_rel)?;
    let rank_outer = numeric_rank(&outer.matrix, tol_rel)?;
    Ok(FlatExtension {
        flat: rank_inner == rank_outer,
        rank_inner,
        rank_outer,
    })
}

/// `(b_i(ξ_j))`.
#[derive(Clone, Debug)]
pub struct VandermondeMatrix {
    pub basis: Vec<Poly>,
    pub points: Vec<Vec<Complex64>>,
    pub matrix: CMatrix,
}

impl VandermondeMatrix {
    pub fn new(basis: &[Poly], points: &[Vec<Complex64>]) -> Self {
        let matrix = CMatrix::from_fn(basis.len(), points.len(), |i, j| basis[i].eval(&points[j]));
        VandermondeMatrix {
            basis: basis.to_vec(),
            points: points.to_vec(),
            matrix,
        }
    }
}

/// Divisor closure of the support of `omega`, sorted.
pub fn divisor_closure(omega: &Poly) -> Vec<MultiIndex> {
    let mut set = BTreeSet::new();
    for a in omega.support() {
        set.extend(a.divisors());
    }
    set.into_iter().collect()
}

/// Columns `(k, γ)` for `γ ∈ Γ_k` with entries `∂^γ b_i(ξ_k) / γ!`.
#[derive(Clone, Debug)]
pub struct WronskianMatrix {
    pub basis: Vec<Poly>,
    pub exponent_sets: Vec<Vec<MultiIndex>>,
    pub points: Vec<Vec<Complex64>>,
    pub matrix: CMatrix,
}

impl WronskianMatrix {
    pub fn new(
        basis: &[Poly],
        exponent_sets: &[Vec<MultiIndex>],
        points: &[Vec<Complex64>],
    ) -> Result<Self> {
        if exponent_sets.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: exponent_sets.len(),
            });
        }
        for gamma in exponent_sets {
            let set: BTreeSet<&MultiIndex> = gamma.iter().collect();
            for g in gamma {
                if g.divisors().iter().any(|d| !set.contains(d)) {
                    return Err(Error::InvalidInput(format!(
                        "exponent set is not closed under division at {g}"
                    )));
                }
            }
        }
        let ncols: usize = exponent_sets.iter().map(Vec::len).sum();
        let mut matrix = CMatrix::zeros(basis.len(), ncols);
        for (i, b) in basis.iter().enumerate() {
            let mut col = 0;
            for (gamma, xi) in exponent_sets.iter().zip(points) {
                for g in gamma {
                    matrix[(i, col)] = b.derivative(g).eval(xi) / g.factorial();
                    col += 1;
                }
            }
        }
        Ok(WronskianMatrix {
            basis: basis.to_vec(),
            exponent_sets: exponent_sets.to_vec(),
            points: points.to_vec(),
            matrix,
        })
    }
}

/// Block diagonal matrix with blocks `((γ_i+γ_j)! ω_{k,γ_i+γ_j})`.
#[derive(Clone, Debug)]
pub struct WeightBlockDiagonal {
    pub block_sizes: Vec<usize>,
    pub matrix: CMatrix,
}

impl WeightBlockDiagonal {
    pub fn new(weights: &[Poly], exponent_sets: &[Vec<MultiIndex>]) -> Self {
        let block_sizes: Vec<usize> = exponent_sets.iter().map(Vec::len).collect();
        let total = block_sizes.iter().sum();
        let mut matrix = CMatrix::zeros(total, total);
        let mut offset = 0;
        for (omega, gamma) in weights.iter().zip(exponent_sets) {
            for (i, gi) in gamma.iter().enumerate() {
                for (j, gj) in gamma.iter().enumerate() {
                    let s = gi + gj;
                    matrix[(offset + i, offset + j)] = omega.coeff(&s) * s.factorial();
                }
            }
            offset += gamma.len();
        }
        WeightBlockDiagonal {
            block_sizes,
            matrix,
        }
    }
}

/// Model-implied factorization `W_{B'} Δ W_Bᵗ` of `H^{B,B'}` (it reduces to
/// `V_{B'} D_ω V_Bᵗ` for constant weights).
pub fn factored_hankel(model: &PolExpModel, cols: &[Poly], rows: &[Poly]) -> Result<CMatrix> {
    let points: Vec<Vec<Complex64>> = model.terms.iter().map(|t| t.xi.clone()).collect();
    let weights: Vec<Poly> = model.terms.iter().map(|t| t.weight.clone()).collect();
    let constant = weights
        .iter()
        .all(|w| w.support().all(MultiIndex::is_zero));
    if constant {
        let vc = VandermondeMatrix::new(cols, &points);
        let vr = VandermondeMatrix::new(rows, &points);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            weights.len(),
            weights
                .iter()
                .map(|w| w.coeff(&MultiIndex::zero(model.nvars))),
        ));
        return Ok(&vr.matrix * d * vc.matrix.transpose());
    }
    let gammas: Vec<Vec<MultiIndex>> = weights.iter().map(divisor_closure).collect();
    let wc = WronskianMatrix::new(cols, &gammas, &points)?;
    let wr = WronskianMatrix::new(rows, &gammas, &points)?;
    let delta = WeightBlockDiagonal::new(&weights, &gammas);
    Ok(&wr.matrix * delta.matrix * wc.matrix.transpose())
}

/// `‖H^{B,B'} − W_{B'} Δ W_Bᵗ‖_F` (absolute Frobenius norm).
pub fn vandermonde_residual(
    model: &PolExpModel,
    sigma: &MomentSequence,
    cols: &[Poly],
    rows: &[Poly],
) -> Result<f64> {
    let h = build_hankel(sigma, cols, rows)?;
    if model.is_empty() {
        return Ok(numlin::frobenius(&h.matrix));
    }
    let f = factored_hankel(model, cols, rows)?;
    Ok(numlin::frobenius(&(h.matrix - f)))
}

/// Smallest real part among the eigenvalues of the symmetric part of `h`.
pub fn min_symmetric_eigenvalue(h: &CMatrix) -> Result<f64> {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let e = numlin::eig(&sym)?;
    Ok(e.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polexp::{synth_moments_to_degree, PolExpTerm};
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn example_model() -> PolExpModel {
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

    fn deg1() -> Vec<Poly> {
        monomial_basis(&MultiIndex::all_up_to_degree(2, 1))
    }

    fn real_matrix(rows: usize, vals: &[f64]) -> CMatrix {
        CMatrix::from_row_iterator(rows, vals.len() / rows, vals.iter().map(|&v| c(v)))
    }

    #[test]
    fn example_blocks() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let h = build_hankel(&s, &deg1(), &deg1()).unwrap();
        assert_eq!(h.matrix, real_matrix(3, &[4., 5., 7., 5., 5., 11., 7., 11., 13.]));
        let h1 = build_shifted(&s, &Poly::var(2, 0), &deg1(), &deg1()).unwrap();
        assert_eq!(h1.matrix, real_matrix(3, &[5., 5., 11., 5., -1., 17., 11., 17., 23.]));
        let one = vec![Poly::one(2)];
        assert_eq!(build_hankel(&s, &one, &one).unwrap().matrix[(0, 0)], c(4.0));
        let id = build_shifted(&s, &Poly::one(2), &deg1(), &deg1()).unwrap();
        assert_eq!(id.matrix, h.matrix);
        let h2 = build_shifted(&s, &Poly::var(2, 1), &deg1(), &deg1()).unwrap();
        let g = &Poly::var(2, 0) + &Poly::var(2, 1);
        let h12 = build_shifted(&s, &g, &deg1(), &deg1()).unwrap();
        assert_eq!(h12.matrix, h1.matrix + h2.matrix);
    }

    #[test]
    fn out_of_support_reported() {
        let s = synth_moments_to_degree(&example_model(), 2);
        let b = monomial_basis(&MultiIndex::all_up_to_degree(2, 2));
        assert!(matches!(
            build_hankel(&s, &b, &deg1()),
            Err(Error::OutOfSupport(_))
        ));
    }

    #[test]
    fn ranks() {
        assert_eq!(numeric_rank(&CMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap(), 3);
        let s = synth_moments_to_degree(&example_model(), 4);
        let b2 = monomial_basis(&MultiIndex::all_up_to_degree(2, 2));
        let h = build_hankel(&s, &b2, &b2).unwrap();
        assert_eq!(numeric_rank(&h.matrix, DEFAULT_RANK_TOL).unwrap(), 3);
        let u = real_matrix(3, &[1., 2., 3.]);
        let v = real_matrix(1, &[4., 5.]);
        assert_eq!(numeric_rank(&(u * v), DEFAULT_RANK_TOL).unwrap(), 1);
        assert_eq!(numeric_rank(&CMatrix::zeros(2, 2), DEFAULT_RANK_TOL).unwrap(), 0);
    }

    #[test]
    fn flat_extension_examples() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let b2 = monomial_basis(&MultiIndex::all_up_to_degree(2, 2));
        let f = flat_extension_check(&s, &deg1(), &b2, &deg1(), &b2, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(f, FlatExtension { flat: true, rank_inner: 3, rank_outer: 3 });

        let e0 = PolExpModel::new(2, vec![PolExpTerm::constant(vec![c(0.0), c(0.0)], c(1.0))]).unwrap();
        let s0 = synth_moments_to_degree(&e0, 2);
        let one = vec![Poly::one(2)];
        let f0 = flat_extension_check(&s0, &one, &deg1(), &one, &deg1(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(f0, FlatExtension { flat: true, rank_inner: 1, rank_outer: 1 });

        // σ_k = k! for k ≤ 2: H^{{1}} = [1], H^{{1,x}} = [[1,1],[1,2]]
        let fact = MomentSequence::from_fn(1, &MultiIndex::all_up_to_degree(1, 2), |a| c(a.factorial())).unwrap();
        let one1 = vec![Poly::one(1)];
        let v1 = monomial_basis(&MultiIndex::all_up_to_degree(1, 1));
        let ff = flat_extension_check(&fact, &one1, &v1, &one1, &v1, DEFAULT_RANK_TOL).unwrap();
        let inner = numlin::svd_values(&real_matrix(1, &[1.0])).unwrap();
        let outer = numlin::svd_values(&real_matrix(2, &[1., 1., 1., 2.])).unwrap();
        assert_eq!(ff.rank_inner, numlin::rank_of_values(&inner, DEFAULT_RANK_TOL));
        assert_eq!(ff.rank_outer, numlin::rank_of_values(&outer, DEFAULT_RANK_TOL));
        assert!(!ff.flat);

        let err = flat_extension_check(&s, &deg1(), &deg1(), &deg1(), &b2, DEFAULT_RANK_TOL);
        assert!(matches!(err, Err(Error::PreconditionViolation(_))));
    }

    #[test]
    fn factorization_residuals() {
        let m = example_model();
        let s = synth_moments_to_degree(&m, 4);
        assert!(vandermonde_residual(&m, &s, &deg1(), &deg1()).unwrap() < 1e-10);

        let zero = synth_moments_to_degree(&PolExpModel::empty(2), 2);
        assert_eq!(vandermonde_residual(&PolExpModel::empty(2), &zero, &deg1(), &deg1()).unwrap(), 0.0);

        let xi = vec![c(0.7), c(-1.2)];
        let w = &Poly::one(2) + &Poly::var(2, 0);
        let pm = PolExpModel::new(2, vec![PolExpTerm::new(xi.clone(), w)]).unwrap();
        let ps = synth_moments_to_degree(&pm, 2);
        let basis = monomial_basis(&[MultiIndex::from([0, 0]), MultiIndex::from([1, 0])]);
        // By hand: Γ = {1, y1}, W = [[1, 0], [ξ1, 1]], Δ = [[1, 1], [1, 0]].
        let wm = real_matrix(2, &[1.0, 0.0, xi[0].re, 1.0]);
        let delta = real_matrix(2, &[1.0, 1.0, 1.0, 0.0]);
        let by_hand = &wm * delta * wm.transpose();
        let h = build_hankel(&ps, &basis, &basis).unwrap();
        assert!(numlin::frobenius(&(h.matrix - by_hand)) < 1e-12);
        assert!(vandermonde_residual(&pm, &ps, &basis, &basis).unwrap() < 1e-10);
    }

    #[test]
    fn wronskian_rejects_open_sets() {
        let b = deg1();
        let bad = vec![vec![MultiIndex::from([1, 0])]];
        assert!(WronskianMatrix::new(&b, &bad, &[vec![c(0.0), c(0.0)]]).is_err());
    }

    proptest! {
        #[test]
        fn transpose_identity(vals in proptest::collection::vec(-5.0f64..5.0, 15), k in 1usize..3) {
            let support = MultiIndex::all_up_to_degree(2, 4);
            let s = MomentSequence::from_fn(2, &support, |a| {
                let idx = support.iter().position(|b| b == a).unwrap();
                c(vals[idx])
            }).unwrap();
            let rows = monomial_basis(&MultiIndex::all_up_to_degree(2, 2)[..k + 2]);
            let cols = monomial_basis(&MultiIndex::all_up_to_degree(2, 1));
            let a = build_hankel(&s, &cols, &rows).unwrap().matrix;
            let b = build_hankel(&s, &rows, &cols).unwrap().matrix;
            prop_assert_eq!(a.transpose(), b);
            let mono = build_monomial_hankel(&s, &MultiIndex::all_up_to_degree(2, 1), &MultiIndex::all_up_to_degree(2, 2)[..k + 2]).unwrap();
            prop_assert_eq!(mono, a);
        }
    }
}
