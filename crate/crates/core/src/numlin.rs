//! Dense complex linear algebra used by the decomposition: eigenpairs,
//! singular values, linear solves and least squares.
//!
//! Everything goes through `nalgebra`; this module only adds the contracts the
//! rest of the crate relies on (sorted singular values, unit eigenvectors,
//! condition checks).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{ONE, ZERO};
use crate::error::{Error, Result};

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

const MAX_ITER: usize = 10_000;

/// Convergence thresholds tried in turn by the iterative kernels.
const EPS_LADDER: [f64; 3] = [f64::EPSILON, 16.0 * f64::EPSILON, 256.0 * f64::EPSILON];

/// Default bound on the condition number accepted by [`solve`].
pub const DEFAULT_MAX_COND: f64 = 1e13;

/// Eigenvalues and unit eigenvectors of a square matrix.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<Complex64>,
    /// Eigenvectors stored as columns, in the order of `values`.
    pub vectors: CMatrix,
    /// `max_i ‖A v_i − λ_i v_i‖ / ‖A‖`.
    pub backward_error: f64,
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Number of random unitary similarities tried when the QR iteration stalls.
const SIMILARITY_RETRIES: u64 = 4;

/// Complex Schur form `A = Q T Qᴴ`. When the QR iteration stalls, the
/// iteration is rerun on `Uᴴ A U` for a few seeded random unitary `U`.
fn schur_form(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let attempt = |m: &CMatrix| {
        EPS_LADDER
            .iter()
            .find_map(|&eps| m.clone().try_schur(eps, MAX_ITER))
            .map(|s| s.unpack())
    };
    if let Some(qt) = attempt(a) {
        return Ok(qt);
    }
    let n = a.nrows();
    for seed in 0..SIMILARITY_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let u = g.qr().q();
        if let Some((z, t)) = attempt(&(u.adjoint() * a * &u)) {
            return Ok((u * z, t));
        }
    }
    Err(Error::NoConvergence)
}

/// Full eigendecomposition via a complex Schur form followed by triangular
/// back-substitution.
pub fn eig(a: &CMatrix) -> Result<EigResult> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(EigResult {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
            backward_error: 0.0,
        });
    }
    let norm = frobenius(a);
    let (q, t) = schur_form(a)?;
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let small = f64::EPSILON * norm.max(f64::MIN_POSITIVE);

    let mut vectors = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = vec![ZERO; n];
        y[k] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            y[i] = -s / denom;
        }
        let yv = nalgebra::DVector::from_vec(y);
        let v = &q * yv;
        let vn = v.norm();
        for i in 0..n {
            vectors[(i, k)] = v[i] / vn;
        }
    }

    let mut backward_error: f64 = 0.0;
    for (k, &value) in values.iter().enumerate() {
        let v = vectors.column(k);
        let r = a * v - v * value;
        let rel = if norm > 0.0 { r.norm() / norm } else { r.norm() };
        backward_error = backward_error.max(rel);
    }
    Ok(EigResult {
        values,
        vectors,
        backward_error,
    })
}

/// Singular values in descending order.
pub fn svd_values(a: &CMatrix) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let svd = EPS_LADDER
        .iter()
        .find_map(|&eps| a.clone().try_svd(false, false, eps, MAX_ITER))
        .ok_or(Error::NoConvergence)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Full singular value decomposition `A = U diag(s) Vᴴ` with `s` descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(a: &CMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Svd {
            u: CMatrix::identity(m, m.min(n)),
            singular_values: Vec::new(),
            v: CMatrix::identity(n, m.min(n)),
        });
    }
    // nalgebra returns thin factors; pad the short side so the right factor is
    // always square and exposes a full null space.
    let padded = if m < n {
        let mut p = CMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let dec = EPS_LADDER
        .iter()
        .find_map(|&eps| padded.clone().try_svd(true, true, eps, MAX_ITER))
        .ok_or(Error::NoConvergence)?;
    let u = dec.u.ok_or(Error::NoConvergence)?;
    let v_t = dec.v_t.ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let k = order.len();
    let mut us = CMatrix::zeros(u.nrows(), k);
    let mut vs = CMatrix::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        let row = v_t.row(src);
        for i in 0..n {
            vs[(i, dst)] = row[i].conj();
        }
        s.push(dec.singular_values[src]);
    }
    if m < n {
        us = us.rows(0, m).into_owned();
    }
    Ok(Svd {
        u: us,
        singular_values: s,
        v: vs,
    })
}

/// Number of singular values above `tol_rel · σ_max`.
pub fn rank_of_values(values: &[f64], tol_rel: f64) -> usize {
    let max = values.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    values.iter().filter(|&&s| s > tol_rel * max).count()
}

/// Right singular vectors for the `dim` smallest singular values, as columns.
pub fn smallest_right_singular_vectors(a: &CMatrix, dim: usize) -> Result<CMatrix> {
    let dec = svd(a)?;
    let n = a.ncols();
    let start = n - dim;
    Ok(dec.v.columns(start, dim).into_owned())
}

/// Solves `A X = B`, refusing matrices whose condition number exceeds `max_cond`.
pub fn solve_with(a: &CMatrix, b: &CMatrix, max_cond: f64) -> Result<CMatrix> {
    let n = a.nrows();
    if n != a.ncols() || b.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if n != a.ncols() { a.ncols() } else { b.nrows() },
        });
    }
    if n == 0 {
        return Ok(CMatrix::zeros(0, b.ncols()));
    }
    let s = svd_values(a)?;
    let smin = *s.last().expect("nonempty");
    let cond = if smin == 0.0 { f64::INFINITY } else { s[0] / smin };
    if !(cond <= max_cond) {
        return Err(Error::SingularMatrix { cond });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SingularMatrix { cond })
}

/// Solves `A X = B` with the default condition bound.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    solve_with(a, b, DEFAULT_MAX_COND)
}

/// Minimum-norm least-squares solution of `A X ≈ B`.
pub fn lstsq(a: &CMatrix, b: &CMatrix, tol_rel: f64) -> Result<CMatrix> {
    let dec = svd(a)?;
    let rank = rank_of_values(&dec.singular_values, tol_rel);
    let mut x = CMatrix::zeros(a.ncols(), b.ncols());
    for k in 0..rank {
        let u = dec.u.column(k);
        let v = dec.v.column(k);
        let coef = u.adjoint() * b / Complex64::new(dec.singular_values[k], 0.0);
        x += v * coef;
    }
    Ok(x)
}

/// Row and column factors applied by [`equilibrate`].
#[derive(Clone, Debug)]
pub struct Equilibration {
    /// Rows of `[A | b]` were divided by these.
    pub rows: Vec<f64>,
    /// Columns of `A` were divided by these; divide the solution by them too.
    pub cols: Vec<f64>,
}

/// Scales the rows of `[A | b]` by the largest entry of each row of `A`, then
/// the columns of `A` to unit norm. Zero rows and columns are left alone.
pub fn equilibrate(a: &mut CMatrix, b: &mut CMatrix) -> Equilibration {
    let mut rows = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let m = a.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let m = if m > 0.0 { m } else { 1.0 };
        a.row_mut(i).scale_mut(1.0 / m);
        b.row_mut(i).scale_mut(1.0 / m);
        rows.push(m);
    }
    let mut cols = Vec::with_capacity(a.ncols());
    for j in 0..a.ncols() {
        let cn = a.column(j).norm();
        let cn = if cn > 0.0 { cn } else { 1.0 };
        a.column_mut(j).scale_mut(1.0 / cn);
        cols.push(cn);
    }
    Equilibration { rows, cols }
}

/// `σ_max / σ_min`, infinite for singular or empty-rank matrices.
pub fn condition_number(a: &CMatrix) -> Result<f64> {
    let s = svd_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMatrix {
        CMatrix::from_fn(m, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<f64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re));
        v.into_iter().map(|z| z.re).collect()
    }

    #[test]
    fn eig_diagonal() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(2.0), c(3.0)]));
        let e = eig(&a).unwrap();
        assert_eq!(sorted_re(e.values), vec![1.0, 2.0, 3.0]);
        assert!(e.backward_error < 1e-15);
    }

    #[test]
    fn eig_multiplication_matrix_example() {
        let a = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(5.0 / 4.0),
                c(-5.0 / 16.0),
                c(0.0),
                c(1.0),
                c(91.0 / 20.0),
                c(96.0 / 25.0),
                c(0.0),
                c(-1.0),
                c(1.0 / 5.0),
            ],
        );
        let e = eig(&a).unwrap();
        let vals = sorted_re(e.values.clone());
        for (got, want) in vals.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        for z in &e.values {
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn eig_random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..8 {
            let a = random_matrix(&mut rng, n, n);
            let e = eig(&a).unwrap();
            assert!(e.backward_error <= 1e3 * f64::EPSILON * n as f64);
            for k in 0..n {
                assert!((e.vectors.column(k).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_values_cases() {
        assert_eq!(svd_values(&CMatrix::zeros(2, 3)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(svd_values(&CMatrix::identity(3, 3)).unwrap(), vec![1.0; 3]);
        let u = nalgebra::DVector::from_vec(vec![c(1.0), c(2.0), c(2.0)]);
        let v = nalgebra::DVector::from_vec(vec![c(3.0), c(4.0)]);
        let s = svd_values(&(&u * v.transpose())).unwrap();
        assert!((s[0] - 15.0).abs() < 1e-12);
        assert!(s[1] < 1e-12);
    }

    #[test]
    fn full_svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(3, 3), (2, 5), (5, 2)] {
            let a = random_matrix(&mut rng, m, n);
            let d = svd(&a).unwrap();
            let k = d.singular_values.len();
            let s = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                k,
                d.singular_values.iter().map(|&x| c(x)),
            ));
            let rec = d.u.columns(0, k) * s * d.v.columns(0, k).adjoint();
            assert!(frobenius(&(rec - &a)) < 1e-12);
            assert_eq!(d.v.shape(), (n, n));
        }
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = CMatrix::from_row_slice(1, 3, &[c(1.0), c(1.0), c(0.0)]);
        let ns = smallest_right_singular_vectors(&a, 2).unwrap();
        assert!(frobenius(&(&a * &ns)) < 1e-14);
    }

    #[test]
    fn solve_cases() {
        let b = CMatrix::from_row_slice(2, 1, &[c(1.0), c(2.0)]);
        assert_eq!(solve(&CMatrix::identity(2, 2), &b).unwrap(), b);
        let x = solve(
            &CMatrix::from_row_slice(1, 1, &[c(2.0)]),
            &CMatrix::from_row_slice(1, 1, &[c(4.0)]),
        )
        .unwrap();
        assert_eq!(x[(0, 0)], c(2.0));
        let singular = CMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(1.0), c(1.0)]);
        assert!(matches!(solve(&singular, &b), Err(Error::SingularMatrix { .. })));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 6, 6) + CMatrix::identity(6, 6) * c(4.0);
        let rhs = random_matrix(&mut rng, 6, 2);
        let x = solve(&a, &rhs).unwrap();
        assert!(frobenius(&(&a * &x - &rhs)) <= 1e-12 * frobenius(&a) * frobenius(&x));
    }

    #[test]
    fn lstsq_overdetermined() {
        let a = CMatrix::from_row_slice(3, 1, &[c(1.0), c(1.0), c(1.0)]);
        let b = CMatrix::from_row_slice(3, 1, &[c(1.0), c(2.0), c(3.0)]);
        let x = lstsq(&a, &b, 1e-12).unwrap();
        assert!((x[(0, 0)] - c(2.0)).norm() < 1e-12);
    }
}
