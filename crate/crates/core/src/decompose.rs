//! Recovery of frequencies and weights from the multiplication matrices of
//! the quotient algebra.
//!
//! The multiplication matrices `M_k[i][j] = ⟨σ | x_k p_j q_i⟩` are expressed
//! in the `p` basis produced by [`compute_orthobasis`]. A random separating
//! form `l` splits the joint spectrum into one cluster per frequency; simple
//! clusters are handled through eigenvectors, multiple ones through the local
//! idempotents.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{pairing, MomentSequence, MonomialOrder, MultiIndex, OrderKind, Poly, DEFAULT_DROP_TOL};
use crate::error::{Error, Result};
use crate::hankel::DEFAULT_RANK_TOL;
use crate::numlin::{self, CMatrix};
use crate::orthobasis::{compute_orthobasis, OrthoBasisResult, DEFAULT_PIVOT_TOL};
use crate::polexp::{canonicalize_with, falling_factorial, mu_dimension_with, PolExpModel, PolExpTerm, DEFAULT_MERGE_TOL};

/// Default relative radius for eigenvalue clustering.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;
/// Default relative cutoff for weight coefficients.
pub const DEFAULT_WEIGHT_TOL: f64 = 1e-10;
/// Default number of random separating forms tried.
pub const DEFAULT_MAX_TRIES: usize = 32;
/// Default number of Gauss–Newton steps applied to the recovered model.
pub const DEFAULT_POLISH_STEPS: usize = 3;

/// Multiple of `eps · entry_scale²` tolerated in `tr(N²)` before a merged
/// group is rejected as non-local.
const NOISE_FLOOR: f64 = 1e4;

/// Tolerances, ordering and seed for [`decompose`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposeConfig {
    pub pivot_tol: f64,
    pub rank_tol: f64,
    pub cluster_tol: f64,
    pub merge_tol: f64,
    pub drop_tol: f64,
    pub weight_tol: f64,
    pub seed: u64,
    pub order: OrderKind,
    pub max_tries: usize,
    /// Gauss–Newton steps run by [`polish`]; `0` disables polishing.
    pub polish_steps: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            pivot_tol: DEFAULT_PIVOT_TOL,
            rank_tol: DEFAULT_RANK_TOL,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            merge_tol: DEFAULT_MERGE_TOL,
            drop_tol: DEFAULT_DROP_TOL,
            weight_tol: DEFAULT_WEIGHT_TOL,
            seed: 0,
            order: OrderKind::GradedLex,
            max_tries: DEFAULT_MAX_TRIES,
            polish_steps: DEFAULT_POLISH_STEPS,
        }
    }
}

/// Everything [`decompose`] learned about the input.
#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub model: PolExpModel,
    pub rank: usize,
    pub separating_form: Vec<f64>,
    pub mult_matrices: Vec<CMatrix>,
    /// Condition number of the concatenated cluster bases.
    pub eigen_condition: f64,
    /// `max_α |σ_α − σ̂_α|` over the input support.
    pub moment_residual: f64,
    /// `μ(ω_i)` for each term of `model`.
    pub multiplicity_profile: Vec<usize>,
    pub diagnostics: BTreeMap<String, f64>,
    pub seed: u64,
    pub basis: OrthoBasisResult,
}

fn insufficient(missing: &MultiIndex, what: &str) -> Error {
    Error::InsufficientMoments(format!("moment {missing} is required for {what}"))
}

/// `M_k[i][j] = ⟨σ | x_k p_j q_i⟩` for `k = 1..n`.
pub fn mult_matrices(sigma: &MomentSequence, basis: &OrthoBasisResult) -> Result<Vec<CMatrix>> {
    let n = basis.nvars;
    let r = basis.rank();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let xk = Poly::var(n, k);
        let mut m = CMatrix::zeros(r, r);
        for (j, pj) in basis.p_polys.iter().enumerate() {
            let xp = &xk * pj;
            for (i, qi) in basis.q_polys.iter().enumerate() {
                m[(i, j)] = pairing(sigma, &(&xp * qi)).map_err(|e| match e {
                    Error::OutOfSupport(a) => insufficient(&a, "the multiplication matrices"),
                    other => other,
                })?;
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// `Σ_k l_k M_k`.
pub fn combine(mats: &[CMatrix], l: &[f64]) -> CMatrix {
    let r = mats.first().map_or(0, |m| m.nrows());
    let mut out = CMatrix::zeros(r, r);
    for (m, &lk) in mats.iter().zip(l) {
        out += m * Complex64::new(lk, 0.0);
    }
    out
}

/// Spectral radius, floored relative to the matrix size so that nilpotent
/// spectra still get a positive scale.
fn spectral_radius(m: &CMatrix, values: &[Complex64]) -> f64 {
    let by_values = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    by_values
        .max(f64::EPSILON * numlin::frobenius(m))
        .max(f64::MIN_POSITIVE)
}

/// `‖M‖_F / √r`, an upper scale that includes non-normal growth.
fn entry_scale(m: &CMatrix) -> f64 {
    numlin::frobenius(m) / (m.nrows().max(1) as f64).sqrt()
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = i;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// One eigenvalue cluster of `M_l` with an orthonormal basis of its invariant
/// subspace.
#[derive(Clone, Debug)]
struct Cluster {
    basis: CMatrix,
}

struct Clustering {
    clusters: Vec<Cluster>,
    eig: numlin::EigResult,
    /// Every cluster carries a single joint eigenvalue.
    local: bool,
}

fn invariant_subspace(m: &CMatrix, center: Complex64, dim: usize) -> Result<CMatrix> {
    let r = m.nrows();
    let shifted = m - CMatrix::identity(r, r) * center;
    let mut power = shifted.clone();
    for _ in 1..dim {
        power = &power * &shifted;
    }
    numlin::smallest_right_singular_vectors(&power, dim)
}

fn restricted(m: &CMatrix, basis: &CMatrix) -> CMatrix {
    basis.adjoint() * m * basis
}

fn group_basis(ml: &CMatrix, eig: &numlin::EigResult, members: &[usize]) -> Result<CMatrix> {
    if members.len() == 1 {
        return Ok(eig.vectors.columns(members[0], 1).into_owned());
    }
    let center = members.iter().map(|&i| eig.values[i]).sum::<Complex64>() / members.len() as f64;
    invariant_subspace(ml, center, members.len())
}

/// Whether every coordinate matrix restricted to `basis` is a scalar plus a
/// nilpotent part, tested through `tr(N_k²) ≈ 0`. Unlike the eigenvalue
/// spread, this quantity is linear in rounding perturbations. `bounds[k]` is
/// the admissible `|tr(N_k²)|` per basis vector.
fn is_local(mats: &[CMatrix], bounds: &[f64], basis: &CMatrix) -> bool {
    let dim = basis.ncols();
    if dim <= 1 {
        return true;
    }
    mats.iter().zip(bounds).all(|(m, &bound)| {
        let rm = restricted(m, basis);
        let mean = rm.trace() / dim as f64;
        let dev = rm - CMatrix::identity(dim, dim) * mean;
        (&dev * &dev).trace().norm() <= bound * dim as f64
    })
}

/// Clusters the spectrum of `M_l`. Eigenvalues within `cluster_tol` times the
/// spectral radius are always linked; pairs within `cluster_tol^{1/3}` times
/// the entry scale are linked closest first when the merged group passes
/// [`is_local`], which is how a rounding-split Jordan block is recognised.
fn clusters_of(mats: &[CMatrix], l: &[f64], cluster_tol: f64) -> Result<Clustering> {
    let ml = combine(mats, l);
    let eig = numlin::eig(&ml)?;
    let rho = spectral_radius(&ml, &eig.values);
    let bounds = mats
        .iter()
        .map(|m| {
            let rho_k = spectral_radius(m, &numlin::eig(m)?.values);
            Ok(cluster_tol * rho_k * rho_k + NOISE_FLOOR * f64::EPSILON * entry_scale(m).powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    let r = eig.values.len();
    let radius = cluster_tol * rho;
    let loose = cluster_tol.cbrt() * rho.max(entry_scale(&ml));
    let mut parent: Vec<usize> = (0..r).collect();
    let mut pairs = Vec::new();
    for i in 0..r {
        for j in 0..i {
            let dist = (eig.values[i] - eig.values[j]).norm();
            if dist <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            } else if dist <= loose {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (_, i, j) in pairs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a == b {
            continue;
        }
        let members: Vec<usize> = (0..r)
            .filter(|&k| {
                let root = find(&mut parent, k);
                root == a || root == b
            })
            .collect();
        let basis = group_basis(&ml, &eig, &members)?;
        if is_local(mats, &bounds, &basis) {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..r {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters = Vec::with_capacity(groups.len());
    let mut local = true;
    for members in groups.into_values() {
        let basis = group_basis(&ml, &eig, &members)?;
        local &= is_local(mats, &bounds, &basis);
        clusters.push(Cluster { basis });
    }
    Ok(Clustering { clusters, eig, local })
}

/// Whether `l` separates the joint spectrum: every eigenvalue cluster of
/// `M_l` carries a single joint eigenvalue of all `M_k`.
pub fn is_separating(mats: &[CMatrix], l: &[f64], cluster_tol: f64) -> Result<bool> {
    Ok(clusters_of(mats, l, cluster_tol)?.local)
}

fn separating_clustering(
    mats: &[CMatrix],
    seed: u64,
    cluster_tol: f64,
    max_tries: usize,
) -> Result<(Vec<f64>, Clustering)> {
    let n = mats.len();
    if n == 1 {
        let l = vec![1.0];
        let clustering = clusters_of(mats, &l, cluster_tol)?;
        return Ok((l, clustering));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_tries {
        let mut l: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = l.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        l.iter_mut().for_each(|x| *x /= norm);
        let clustering = clusters_of(mats, &l, cluster_tol)?;
        if clustering.local {
            return Ok((l, clustering));
        }
    }
    Err(Error::NoSeparatingForm { tries: max_tries })
}

/// Draws unit-norm random real forms until one separates the spectrum.
pub fn choose_separating_form(
    mats: &[CMatrix],
    seed: u64,
    cluster_tol: f64,
    max_tries: usize,
) -> Result<Vec<f64>> {
    if mats.len() == 1 {
        return Ok(vec![1.0]);
    }
    separating_clustering(mats, seed, cluster_tol, max_tries).map(|(l, _)| l)
}

/// `ℓ_c = ⟨σ | p_c⟩`.
fn pairing_vector(sigma: &MomentSequence, basis: &OrthoBasisResult) -> Result<DVector<Complex64>> {
    let vals: Result<Vec<Complex64>> = basis.p_polys.iter().map(|p| pairing(sigma, p)).collect();
    Ok(DVector::from_vec(vals?))
}

fn row_times(l: &DVector<Complex64>, m: &CMatrix, v: &DVector<Complex64>) -> Complex64 {
    (l.transpose() * m * v)[(0, 0)]
}

struct Recovery {
    terms: Vec<PolExpTerm>,
    eigen_condition: f64,
    evalcoef_discrepancy: f64,
    multiple: bool,
}

fn simple_terms(
    sigma: &MomentSequence,
    basis: &OrthoBasisResult,
    mats: &[CMatrix],
    clusters: &[Cluster],
) -> Result<Recovery> {
    let n = basis.nvars;
    let r = basis.rank();
    let ell = pairing_vector(sigma, basis)?;
    let id = CMatrix::identity(r, r);
    let ell_norm = ell.norm();
    let mut terms = Vec::with_capacity(clusters.len());
    let mut vmat = CMatrix::zeros(r, clusters.len());
    let mut discrepancy: f64 = 0.0;
    for (idx, c) in clusters.iter().enumerate() {
        let v: DVector<Complex64> = c.basis.column(0).into_owned();
        vmat.set_column(idx, &v);
        let s0 = row_times(&ell, &id, &v);
        if s0.norm() <= 1e-10 * ell_norm * v.norm() {
            return Err(Error::DegenerateEigenvector(idx));
        }
        let xi: Vec<Complex64> = mats.iter().map(|m| row_times(&ell, m, &v) / s0).collect();
        for (k, m) in mats.iter().enumerate() {
            let rq = (v.adjoint() * m * &v)[(0, 0)] / v.norm_squared();
            discrepancy = discrepancy.max((rq - xi[k]).norm());
        }
        let v_at: Complex64 = basis
            .p_polys
            .iter()
            .zip(v.iter())
            .map(|(p, vc)| p.eval(&xi) * vc)
            .sum();
        if v_at.norm() <= 1e-14 * v.norm() {
            return Err(Error::DegenerateEigenvector(idx));
        }
        terms.push(PolExpTerm::constant(xi, s0 / v_at));
        debug_assert_eq!(terms.last().map(|t| t.xi.len()), Some(n));
    }
    Ok(Recovery {
        terms,
        eigen_condition: numlin::condition_number(&vmat)?,
        evalcoef_discrepancy: discrepancy,
        multiple: false,
    })
}

/// `p(M_1, …, M_n)` for commuting matrices.
fn poly_of_matrices(p: &Poly, mats: &[CMatrix]) -> CMatrix {
    let r = mats.first().map_or(0, |m| m.nrows());
    let mut out = CMatrix::zeros(r, r);
    let mut cache: BTreeMap<MultiIndex, CMatrix> = BTreeMap::new();
    for (alpha, c) in p.terms() {
        let power = cache
            .entry(alpha.clone())
            .or_insert_with(|| monomial_of_matrices(alpha, mats));
        out += &*power * *c;
    }
    out
}

fn monomial_of_matrices(alpha: &MultiIndex, mats: &[CMatrix]) -> CMatrix {
    let r = mats.first().map_or(0, |m| m.nrows());
    let mut out = CMatrix::identity(r, r);
    for (k, &e) in alpha.entries().iter().enumerate() {
        for _ in 0..e {
            out = &mats[k] * out;
        }
    }
    out
}

fn multiple_terms(
    sigma: &MomentSequence,
    basis: &OrthoBasisResult,
    mats: &[CMatrix],
    clusters: &[Cluster],
    weight_tol: f64,
) -> Result<Recovery> {
    let n = basis.nvars;
    let r = basis.rank();
    let ell = pairing_vector(sigma, basis)?;
    // Gram matrix ⟨σ | p_a p_b⟩ evaluated in the quotient algebra.
    let mut gram = CMatrix::zeros(r, r);
    for (b, pb) in basis.p_polys.iter().enumerate() {
        let row = ell.transpose() * poly_of_matrices(pb, mats);
        for a in 0..r {
            gram[(a, b)] = row[(0, a)];
        }
    }
    let mut terms = Vec::with_capacity(clusters.len());
    let mut all_bases = CMatrix::zeros(r, 0);
    let mut discrepancy: f64 = 0.0;
    for (idx, c) in clusters.iter().enumerate() {
        let bi = &c.basis;
        let mu = bi.ncols();
        all_bases = {
            let mut grown = CMatrix::zeros(r, all_bases.ncols() + mu);
            grown.columns_mut(0, all_bases.ncols()).copy_from(&all_bases);
            grown.columns_mut(all_bases.ncols(), mu).copy_from(bi);
            grown
        };
        let xi: Vec<Complex64> = mats
            .iter()
            .map(|m| restricted(m, bi).trace() / mu as f64)
            .collect();
        for m in mats {
            let rm = restricted(m, bi);
            let e = numlin::eig(&rm)?;
            let xk = rm.trace() / mu as f64;
            for v in &e.values {
                discrepancy = discrepancy.max((v - xk).norm());
            }
        }
        let h = bi.transpose() * &gram * bi;
        let u_rhs = bi.transpose() * &ell;
        let ui = numlin::solve(&h, &CMatrix::from_column_slice(mu, 1, u_rhs.as_slice()))
            .map_err(|_| Error::SingularClusterGram(idx))?;
        let u: DVector<Complex64> = (bi * ui).column(0).into_owned();

        let shifted: Vec<CMatrix> = mats
            .iter()
            .zip(&xi)
            .map(|(m, x)| m - CMatrix::identity(r, r) * *x)
            .collect();
        let mut coeffs: Vec<(MultiIndex, Complex64)> = Vec::new();
        for level in 0..mu as u32 {
            for alpha in MultiIndex::all_of_degree(n, level) {
                let v = monomial_of_matrices(&alpha, &shifted) * &u;
                let value = (ell.transpose() * v)[(0, 0)] / alpha.factorial();
                coeffs.push((alpha, value));
            }
        }
        let wscale = coeffs.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        let kept = coeffs
            .into_iter()
            .filter(|(_, v)| v.norm() > weight_tol * wscale);
        let weight = Poly::from_terms(n, kept)?;
        terms.push(PolExpTerm::new(xi, weight));
    }
    Ok(Recovery {
        terms,
        eigen_condition: numlin::condition_number(&all_bases)?,
        evalcoef_discrepancy: discrepancy,
        multiple: true,
    })
}

/// Constant-weight recovery from the eigenvectors of `M_l`.
pub fn decompose_simple(
    sigma: &MomentSequence,
    basis: &OrthoBasisResult,
    config: &DecomposeConfig,
) -> Result<PolExpModel> {
    let n = basis.nvars;
    if basis.rank() == 0 {
        return Ok(PolExpModel::empty(n));
    }
    let mats = mult_matrices(sigma, basis)?;
    let (_, Clustering { clusters, .. }) =
        separating_clustering(&mats, config.seed, config.cluster_tol, config.max_tries)?;
    if clusters.iter().any(|c| c.basis.ncols() > 1) {
        return Err(Error::PreconditionViolation(
            "the spectrum has multiple eigenvalues".into(),
        ));
    }
    let rec = simple_terms(sigma, basis, &mats, &clusters)?;
    PolExpModel::new(n, rec.terms).map(|m| canonicalize_with(&m, config.merge_tol, config.drop_tol))
}

/// Polynomial-weight recovery through the local idempotents of each cluster.
pub fn decompose_multiple(
    sigma: &MomentSequence,
    basis: &OrthoBasisResult,
    config: &DecomposeConfig,
) -> Result<PolExpModel> {
    let n = basis.nvars;
    if basis.rank() == 0 {
        return Ok(PolExpModel::empty(n));
    }
    let mats = mult_matrices(sigma, basis)?;
    let (_, Clustering { clusters, .. }) =
        separating_clustering(&mats, config.seed, config.cluster_tol, config.max_tries)?;
    let rec = multiple_terms(sigma, basis, &mats, &clusters, config.weight_tol)?;
    PolExpModel::new(n, rec.terms).map(|m| canonicalize_with(&m, config.merge_tol, config.drop_tol))
}

/// Checks that the support covers `b⁺ · b'⁺` (or `b⁺ · b'` in one variable),
/// which certifies that the bases describe a flat extension of the data.
fn check_coverage(sigma: &MomentSequence, basis: &OrthoBasisResult) -> Result<()> {
    let n = basis.nvars;
    let b_plus = crate::algebra::closure_plus(&basis.b, n);
    let bp = if n == 1 {
        basis.b_prime.clone()
    } else {
        crate::algebra::closure_plus(&basis.b_prime, n)
    };
    for a in &b_plus {
        for c in &bp {
            let e = a + c;
            if !sigma.contains(&e) {
                return Err(insufficient(&e, "a flat extension of the computed basis"));
            }
        }
    }
    Ok(())
}

fn commutation_error(mats: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..mats.len() {
        for j in 0..i {
            let c = &mats[i] * &mats[j] - &mats[j] * &mats[i];
            let denom = numlin::frobenius(&mats[i]) * numlin::frobenius(&mats[j]);
            if denom > 0.0 {
                worst = worst.max(numlin::frobenius(&c) / denom);
            }
        }
    }
    worst
}

fn weighted_residual(sigma: &MomentSequence, model: &PolExpModel, rows: &[f64]) -> f64 {
    sigma
        .iter()
        .zip(rows)
        .map(|((a, v), w)| ((v - model.moment(a)) / *w).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Jacobian of the moments on `rows` with respect to the frequencies and the
/// weight coefficients on `supports`, term by term.
fn moment_jacobian(rows: &[&MultiIndex], model: &PolExpModel, supports: &[Vec<MultiIndex>]) -> CMatrix {
    let n = model.nvars;
    let ncols: usize = supports.iter().map(|s| n + s.len()).sum();
    let mut jac = CMatrix::zeros(rows.len(), ncols);
    for (ri, alpha) in rows.iter().enumerate() {
        let mut col = 0;
        for (term, supp) in model.terms.iter().zip(supports) {
            for k in 0..n {
                let mut d = Complex64::new(0.0, 0.0);
                for beta in supp {
                    let Some(rest) = alpha.checked_sub(beta) else { continue };
                    let e = rest.entries()[k];
                    if e == 0 {
                        continue;
                    }
                    let mut lower = rest.entries().to_vec();
                    lower[k] -= 1;
                    let factor = falling_factorial(alpha, beta) * f64::from(e);
                    d += term.weight.coeff(beta) * factor * MultiIndex::new(lower).power_of(&term.xi);
                }
                jac[(ri, col)] = d;
                col += 1;
            }
            for beta in supp {
                if let Some(rest) = alpha.checked_sub(beta) {
                    jac[(ri, col)] = falling_factorial(alpha, beta) * rest.power_of(&term.xi);
                }
                col += 1;
            }
        }
    }
    jac
}

/// Gauss–Newton refinement of the frequencies and weight coefficients of
/// `model` against the moments of `sigma`. Each moment is weighted by the
/// size of its Jacobian row, so small moments count as much as large ones.
/// The weight supports are kept fixed, and a step is accepted only if it
/// lowers the weighted residual.
pub fn polish(sigma: &MomentSequence, model: &PolExpModel, steps: usize) -> Result<PolExpModel> {
    let n = model.nvars;
    if n != sigma.nvars() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nvars(),
            found: n,
        });
    }
    let rows: Vec<&MultiIndex> = sigma.support().collect();
    let mut current = model.clone();
    for _ in 0..steps {
        if current.is_empty() {
            break;
        }
        let supports: Vec<Vec<MultiIndex>> = current
            .terms
            .iter()
            .map(|t| t.weight.support().cloned().collect())
            .collect();
        let mut jac = moment_jacobian(&rows, &current, &supports);
        let mut res = CMatrix::from_iterator(
            rows.len(),
            1,
            sigma.iter().map(|(a, v)| v - current.moment(a)),
        );
        let scaling = numlin::equilibrate(&mut jac, &mut res);
        let before = res.norm();
        if before == 0.0 {
            break;
        }
        let step = numlin::lstsq(&jac, &res, 1e-13)?;
        let mut col = 0;
        let mut next = Vec::with_capacity(current.len());
        for (term, supp) in current.terms.iter().zip(&supports) {
            let delta = |col: &mut usize| {
                let d = step[(*col, 0)] / scaling.cols[*col];
                *col += 1;
                d
            };
            let xi: Vec<Complex64> = term.xi.iter().map(|x| x + delta(&mut col)).collect();
            let coeffs: Vec<(MultiIndex, Complex64)> = supp
                .iter()
                .map(|beta| (beta.clone(), term.weight.coeff(beta) + delta(&mut col)))
                .collect();
            next.push(PolExpTerm::new(xi, Poly::from_terms(n, coeffs)?));
        }
        let candidate = PolExpModel::new(n, next)?;
        if !(weighted_residual(sigma, &candidate, &scaling.rows) < before) {
            break;
        }
        current = candidate;
    }
    Ok(current)
}

/// Largest `|σ_α − σ̂_α|` over the support of `sigma`.
pub fn moment_residual(sigma: &MomentSequence, model: &PolExpModel) -> f64 {
    sigma
        .iter()
        .map(|(a, v)| (v - model.moment(a)).norm())
        .fold(0.0, f64::max)
}

/// Full pipeline: bases, coverage check, multiplication matrices, separating
/// form, then simple or multiple recovery depending on the cluster sizes.
pub fn decompose(sigma: &MomentSequence, config: &DecomposeConfig) -> Result<DecompositionReport> {
    let n = sigma.nvars();
    let order = MonomialOrder::new(config.order, n);
    let basis = compute_orthobasis(sigma, &order, config.pivot_tol)?;
    let r = basis.rank();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("consumed_degree".to_string(), f64::from(basis.consumed_degree));
    diagnostics.insert(
        "min_pivot".to_string(),
        basis.pivots.iter().copied().fold(f64::INFINITY, f64::min).min(f64::MAX),
    );
    if r == 0 {
        return Ok(DecompositionReport {
            model: PolExpModel::empty(n),
            rank: 0,
            separating_form: first_axis(n),
            mult_matrices: vec![CMatrix::zeros(0, 0); n],
            eigen_condition: 1.0,
            moment_residual: moment_residual(sigma, &PolExpModel::empty(n)),
            multiplicity_profile: Vec::new(),
            diagnostics,
            seed: config.seed,
            basis,
        });
    }
    check_coverage(sigma, &basis)?;
    let mats = mult_matrices(sigma, &basis)?;
    diagnostics.insert("commutation_error".to_string(), commutation_error(&mats));

    let (l, Clustering { clusters, eig, .. }) =
        separating_clustering(&mats, config.seed, config.cluster_tol, config.max_tries)?;
    diagnostics.insert("eig_backward_error".to_string(), eig.backward_error);
    diagnostics.insert("clusters".to_string(), clusters.len() as f64);

    let all_simple = clusters.iter().all(|c| c.basis.ncols() == 1);
    let rec = if all_simple {
        match simple_terms(sigma, &basis, &mats, &clusters) {
            Ok(rec) => rec,
            Err(Error::DegenerateEigenvector(_)) => {
                multiple_terms(sigma, &basis, &mats, &clusters, config.weight_tol)?
            }
            Err(e) => return Err(e),
        }
    } else {
        multiple_terms(sigma, &basis, &mats, &clusters, config.weight_tol)?
    };
    diagnostics.insert("evalcoef_discrepancy".to_string(), rec.evalcoef_discrepancy);
    diagnostics.insert("multiple_root_path".to_string(), if rec.multiple { 1.0 } else { 0.0 });

    let mut model = canonicalize_with(&PolExpModel::new(n, rec.terms)?, config.merge_tol, config.drop_tol);
    if config.polish_steps > 0 {
        diagnostics.insert("residual_before_polish".to_string(), moment_residual(sigma, &model));
        let polished = polish(sigma, &model, config.polish_steps)?;
        model = canonicalize_with(&polished, config.merge_tol, config.drop_tol);
    }
    let multiplicity_profile = model
        .terms
        .iter()
        .map(|t| mu_dimension_with(&t.weight, config.rank_tol))
        .collect::<Result<Vec<_>>>()?;
    let residual = moment_residual(sigma, &model);
    let scale = sigma.max_abs();
    diagnostics.insert(
        "moment_residual_rel".to_string(),
        if scale > 0.0 { residual / scale } else { residual },
    );
    let weight_sum: Complex64 = model
        .terms
        .iter()
        .map(|t| t.weight.coeff(&MultiIndex::zero(n)))
        .sum();
    if let Some(s0) = sigma.get(&MultiIndex::zero(n)) {
        diagnostics.insert("weight_sum_error".to_string(), (weight_sum - s0).norm());
    }
    Ok(DecompositionReport {
        model,
        rank: r,
        separating_form: l,
        mult_matrices: mats,
        eigen_condition: rec.eigen_condition,
        moment_residual: residual,
        multiplicity_profile,
        diagnostics,
        seed: config.seed,
        basis,
    })
}

fn first_axis(n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n];
    if let Some(x) = l.first_mut() {
        *x = 1.0;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polexp::{model_rank, synth_moments_to_degree, PolExpTerm};

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

    fn basis_of(s: &MomentSequence) -> OrthoBasisResult {
        compute_orthobasis(s, &MonomialOrder::graded_lex(s.nvars()), DEFAULT_PIVOT_TOL).unwrap()
    }

    fn assert_models_close(a: &PolExpModel, b: &PolExpModel, tol: f64) {
        assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
        for (ta, tb) in a.terms.iter().zip(&b.terms) {
            for (x, y) in ta.xi.iter().zip(&tb.xi) {
                assert!((x - y).norm() < tol, "{a:?} vs {b:?}");
            }
            assert!((&ta.weight - &tb.weight).max_abs_coeff() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn example_multiplication_matrix() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let basis = basis_of(&s);
        let mats = mult_matrices(&s, &basis).unwrap();
        let expect = [
            [1.25, -0.3125, 0.0],
            [1.0, 4.55, 3.84],
            [0.0, -1.0, 0.2],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((mats[0][(i, j)] - c(expect[i][j])).norm() < 1e-10);
            }
        }
        assert!(commutation_error(&mats) < 1e-12);
        assert!(is_separating(&mats, &[1.0, 0.0], DEFAULT_CLUSTER_TOL).unwrap());
        // x2 alone does not separate (1,1) from (3,1)
        assert!(!is_separating(&mats, &[0.0, 1.0], DEFAULT_CLUSTER_TOL).unwrap());
    }

    #[test]
    fn rank_one_matrices() {
        let xi = vec![Complex64::new(0.5, 0.1), c(-2.0)];
        let m = PolExpModel::new(2, vec![PolExpTerm::constant(xi.clone(), c(3.0))]).unwrap();
        let s = synth_moments_to_degree(&m, 3);
        let mats = mult_matrices(&s, &basis_of(&s)).unwrap();
        for (k, mk) in mats.iter().enumerate() {
            assert_eq!(mk.shape(), (1, 1));
            assert!((mk[(0, 0)] - xi[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn separating_form_uses_second_coordinate() {
        let m = PolExpModel::new(
            2,
            vec![
                PolExpTerm::constant(vec![c(1.0), c(0.5)], c(1.0)),
                PolExpTerm::constant(vec![c(1.0), c(-0.5)], c(2.0)),
            ],
        )
        .unwrap();
        let s = synth_moments_to_degree(&m, 4);
        let mats = mult_matrices(&s, &basis_of(&s)).unwrap();
        let l = choose_separating_form(&mats, 0, DEFAULT_CLUSTER_TOL, DEFAULT_MAX_TRIES).unwrap();
        assert!(l[1].abs() > 1e-6);
        assert!(((l[0] * l[0] + l[1] * l[1]).sqrt() - 1.0).abs() < 1e-12);
        assert!(is_separating(&mats, &l, DEFAULT_CLUSTER_TOL).unwrap());
        let one = vec![CMatrix::identity(2, 2)];
        assert_eq!(choose_separating_form(&one, 5, DEFAULT_CLUSTER_TOL, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn example_simple_decomposition() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let basis = basis_of(&s);
        let cfg = DecomposeConfig::default();
        let got = decompose_simple(&s, &basis, &cfg).unwrap();
        let want = canonicalize_with(&example_model(), DEFAULT_MERGE_TOL, DEFAULT_DROP_TOL);
        assert_models_close(&got, &want, 1e-9);
        let multi = decompose_multiple(&s, &basis, &cfg).unwrap();
        assert_models_close(&multi, &got, 1e-8);
    }

    #[test]
    fn univariate_rank_one() {
        let m = PolExpModel::new(1, vec![PolExpTerm::constant(vec![c(2.0)], c(5.0))]).unwrap();
        let s = synth_moments_to_degree(&m, 2);
        let r = decompose(&s, &DecomposeConfig::default()).unwrap();
        assert_models_close(&r.model, &m, 1e-12);
    }

    #[test]
    fn polynomial_weight_at_origin() {
        let w = &Poly::one(2) + &Poly::var(2, 0);
        let m = PolExpModel::new(2, vec![PolExpTerm::new(vec![c(0.0), c(0.0)], w)]).unwrap();
        let s = synth_moments_to_degree(&m, 4);
        let r = decompose(&s, &DecomposeConfig::default()).unwrap();
        assert_eq!(r.rank, 2);
        assert_eq!(r.multiplicity_profile, vec![2]);
        assert_models_close(&r.model, &m, 1e-9);
        let multi = decompose_multiple(&s, &r.basis, &DecomposeConfig::default()).unwrap();
        assert_models_close(&multi, &m, 1e-9);
    }

    #[test]
    fn zero_sequence() {
        let s = synth_moments_to_degree(&PolExpModel::empty(2), 3);
        let r = decompose(&s, &DecomposeConfig::default()).unwrap();
        assert_eq!(r.rank, 0);
        assert!(r.model.is_empty());
        let multi = decompose_multiple(&s, &r.basis, &DecomposeConfig::default()).unwrap();
        assert!(multi.is_empty());
    }

    #[test]
    fn example_full_report() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let r = decompose(&s, &DecomposeConfig::default()).unwrap();
        assert_eq!(r.rank, 3);
        assert!(r.moment_residual < 1e-9);
        assert_eq!(model_rank(&r.model).unwrap(), 3);
        assert_eq!(r.multiplicity_profile, vec![1, 1, 1]);
        assert!(r.diagnostics["weight_sum_error"] < 1e-8 * s.max_abs());
    }

    #[test]
    fn univariate_matches_companion_solve() {
        // h(a) = Σ w ξ^a, a = 0..5 with three roots
        let xs = [c(0.5), c(-1.2), Complex64::new(0.3, 0.9)];
        let ws = [c(1.0), c(2.0), c(-0.5)];
        let terms = xs.iter().zip(&ws).map(|(x, w)| PolExpTerm::constant(vec![*x], *w)).collect();
        let m = PolExpModel::new(1, terms).unwrap();
        let s = synth_moments_to_degree(&m, 5);
        let r = decompose(&s, &DecomposeConfig::default()).unwrap();
        // companion oracle: solve Σ_{j<3} c_j σ_{i+j} = −σ_{i+3}, roots of x³ + c2 x² + c1 x + c0
        let h = CMatrix::from_fn(3, 3, |i, j| s.get(&MultiIndex::from([(i + j) as u32])).unwrap());
        let rhs = CMatrix::from_fn(3, 1, |i, _| -s.get(&MultiIndex::from([(i + 3) as u32])).unwrap());
        let coef = numlin::solve(&h, &rhs).unwrap();
        let mut comp = CMatrix::zeros(3, 3);
        comp[(1, 0)] = c(1.0);
        comp[(2, 1)] = c(1.0);
        for i in 0..3 {
            comp[(i, 2)] = -coef[(i, 0)];
        }
        let roots = numlin::eig(&comp).unwrap().values;
        for t in &r.model.terms {
            assert!(roots.iter().any(|z| (z - t.xi[0]).norm() < 1e-10));
        }
        assert_eq!(r.model.len(), 3);
    }

    #[test]
    fn insufficient_moments_detected() {
        let s = synth_moments_to_degree(&example_model(), 1);
        assert!(matches!(
            decompose(&s, &DecomposeConfig::default()),
            Err(Error::InsufficientMoments(_))
        ));
    }

    #[test]
    fn scaling_equivariance() {
        let s = synth_moments_to_degree(&example_model(), 4);
        let k = Complex64::new(-2.5, 1.0);
        let a = decompose(&s, &DecomposeConfig::default()).unwrap().model;
        let b = decompose(&s.scaled(k), &DecomposeConfig::default()).unwrap().model;
        assert_eq!(a.len(), b.len());
        for (ta, tb) in a.terms.iter().zip(&b.terms) {
            for (x, y) in ta.xi.iter().zip(&tb.xi) {
                assert!((x - y).norm() < 1e-9);
            }
            assert!((&ta.weight.scale(k) - &tb.weight).max_abs_coeff() < 1e-8);
        }
    }
}
