//! Front-ends that turn sampled signals into moment sequences, run the
//! decomposition and translate the result back: univariate Prony, grid
//! samples of exponential polynomials, Fourier coefficients of spike trains
//! and sparse polynomial/polylog interpolation.
//!
//! All of them rely on the same identity: a term `ω(y) e^{ξ·y}` produces the
//! samples `σ_γ = g̃(γ) ξ^γ` where `g̃` is [`sampled_weight`] of the term.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::algebra::{MomentSequence, MultiIndex, Poly, ONE, ZERO};
use crate::decompose::{decompose, DecomposeConfig, DecompositionReport};
use crate::error::{Error, Result};
use crate::hankel::DEFAULT_RANK_TOL;
use crate::numlin::{self, CMatrix};
use crate::polexp::{canonicalize_with, PolExpModel, PolExpTerm, DEFAULT_MERGE_TOL};

/// Largest admissible distance between an exponent estimate and its rounding.
pub const EXPONENT_GAP_TOL: f64 = 0.05;
/// Relative tolerance for `|λ^α − ξ| ≤ tol·|ξ|` after rounding.
pub const EXPONENT_CHECK_TOL: f64 = 1e-6;
/// Default bound on `| |ξ| − 1 |` accepted by [`spikes_from_fourier`].
pub const DEFAULT_CIRCLE_TOL: f64 = 1e-6;
/// Frequencies below this modulus (relative to the largest) count as zero.
const ZERO_FREQUENCY_TOL: f64 = 1e-12;

/// Caveat attached to grid reconstructions.
pub const GRID_REMAINDER_NOTE: &str =
    "recovered modulo functions that vanish on every grid point";

fn falling_poly(nvars: usize, var: usize, k: u32) -> Poly {
    let y = Poly::var(nvars, var);
    let mut out = Poly::one(nvars);
    for j in 0..k {
        out = &out * &(&y - &Poly::constant(nvars, Complex64::new(f64::from(j), 0.0)));
    }
    out
}

/// `b_α(y) = Π_i y_i (y_i − 1) ⋯ (y_i − α_i + 1) / α_i!`.
pub fn macaulay_binomial(alpha: &MultiIndex) -> Poly {
    let n = alpha.nvars();
    let mut out = Poly::one(n);
    for (i, &a) in alpha.entries().iter().enumerate() {
        out = &out * &falling_poly(n, i, a);
    }
    out.scale(Complex64::new(1.0 / alpha.factorial(), 0.0))
}

/// The polynomial `g̃` with `Σ_β ω_β α!/(α−β)! ξ^{α−β} = g̃(α) ξ^α`, i.e. the
/// weight of `term` rewritten in the sample index. `index` labels the term in
/// errors.
pub fn sampled_weight(term: &PolExpTerm, index: usize) -> Result<Poly> {
    let n = term.xi.len();
    let scale = term.xi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = Poly::zero(n);
    for (beta, w) in term.weight.terms() {
        for (k, &e) in beta.entries().iter().enumerate() {
            if e > 0 && term.xi[k].norm() <= ZERO_FREQUENCY_TOL * scale.max(1.0) {
                return Err(Error::ZeroFrequency {
                    term: index,
                    component: k,
                });
            }
        }
        let c = w / beta.power_of(&term.xi);
        let mut falling = Poly::one(n);
        for (k, &e) in beta.entries().iter().enumerate() {
            falling = &falling * &falling_poly(n, k, e);
        }
        out = &out + &falling.scale(c);
    }
    Ok(out)
}

/// Univariate Prony with the default rank tolerance.
pub fn prony_univariate(samples: &[Complex64], r: usize) -> Result<PolExpModel> {
    prony_univariate_with(samples, r, DEFAULT_RANK_TOL)
}

/// Recovers `h(a) = Σ_{i<r} w_i ξ_i^a` from `h(0), …, h(2r−1)` through the
/// pencil `(H₁, H₀)` with `H₀ = [h_{i+j}]` and `H₁ = [h_{i+j+1}]`. Weights
/// come from the eigenvectors: `w = (H₀ v)_0 / Σ_j v_j ξ^j`.
pub fn prony_univariate_with(samples: &[Complex64], r: usize, rank_tol: f64) -> Result<PolExpModel> {
    if r == 0 {
        return Ok(PolExpModel::empty(1));
    }
    if samples.len() < 2 * r {
        return Err(Error::InsufficientMoments(format!(
            "{} samples given, {} needed for order {r}",
            samples.len(),
            2 * r
        )));
    }
    let h0 = CMatrix::from_fn(r, r, |i, j| samples[i + j]);
    let h1 = CMatrix::from_fn(r, r, |i, j| samples[i + j + 1]);
    let actual = numlin::rank_of_values(&numlin::svd_values(&h0)?, rank_tol);
    if actual < r {
        return Err(Error::RankDeficient { actual });
    }
    let pencil = numlin::solve(&h0, &h1)?;
    let eig = numlin::eig(&pencil)?;
    let mut terms = Vec::with_capacity(r);
    for (k, &xi) in eig.values.iter().enumerate() {
        let v = eig.vectors.column(k);
        let lead = (h0.row(0) * v)[(0, 0)];
        let mut power = ONE;
        let mut at_root = ZERO;
        for j in 0..r {
            at_root += v[j] * power;
            power *= xi;
        }
        if at_root.norm() <= 1e-14 * v.norm() {
            return Err(Error::DegenerateEigenvector(k));
        }
        terms.push(PolExpTerm::constant(vec![xi], lead / at_root));
    }
    Ok(canonicalize_with(&PolExpModel::new(1, terms)?, DEFAULT_MERGE_TOL, 0.0))
}

/// Sampling steps and degree cap for [`decompose_from_grid`]: values are
/// `h(γ_1/T_1, …, γ_n/T_n)` for `|γ| ≤ max_degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub steps: Vec<f64>,
    pub max_degree: u32,
}

impl GridSpec {
    pub fn new(steps: Vec<f64>, max_degree: u32) -> Result<Self> {
        if let Some(t) = steps.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidInput(format!("grid step {t} is not positive")));
        }
        if max_degree == 0 {
            return Err(Error::InvalidInput("grid degree must be at least 1".into()));
        }
        Ok(GridSpec { steps, max_degree })
    }

    pub fn nvars(&self) -> usize {
        self.steps.len()
    }
}

/// One term `g(x) e^{f·x}` of a grid reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpPolyTerm {
    pub f: Vec<Complex64>,
    pub g: Poly,
}

/// Result of [`decompose_from_grid`].
#[derive(Clone, Debug)]
pub struct GridDecomposition {
    pub terms: Vec<ExpPolyTerm>,
    pub report: DecompositionReport,
    /// Always [`GRID_REMAINDER_NOTE`].
    pub note: &'static str,
}

impl GridDecomposition {
    /// `Σ g_i(x) e^{f_i·x}`.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.terms
            .iter()
            .map(|t| {
                let phase: Complex64 = t.f.iter().zip(&xc).map(|(f, x)| f * x).sum();
                t.g.eval(&xc) * phase.exp()
            })
            .sum()
    }
}

/// Reconstructs `h(x) = Σ g_i(x) e^{f_i·x}` from its values on the grid
/// `γ/T`. Frequencies use the principal logarithm, `f_{i,j} = T_j log ξ_{i,j}`.
pub fn decompose_from_grid(
    values: &MomentSequence,
    grid: &GridSpec,
    config: &DecomposeConfig,
) -> Result<GridDecomposition> {
    let n = values.nvars();
    if grid.nvars() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grid.nvars(),
        });
    }
    let sigma = values.restrict(|a| a.degree() <= grid.max_degree)?;
    let report = decompose(&sigma, config)?;
    let mut terms = Vec::with_capacity(report.model.len());
    for (idx, term) in report.model.terms.iter().enumerate() {
        let scale = term.xi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if let Some(k) = term.xi.iter().position(|z| z.norm() <= ZERO_FREQUENCY_TOL * scale.max(1.0)) {
            return Err(Error::ZeroFrequency {
                term: idx,
                component: k,
            });
        }
        let f: Vec<Complex64> = term.xi.iter().zip(&grid.steps).map(|(z, t)| z.ln() * *t).collect();
        let sampled = sampled_weight(term, idx)?;
        let g = Poly::from_terms(
            n,
            sampled.terms().map(|(gamma, c)| {
                let factor: f64 = gamma
                    .entries()
                    .iter()
                    .zip(&grid.steps)
                    .map(|(&e, t)| t.powi(e as i32))
                    .product();
                (gamma.clone(), c * factor)
            }),
        )?;
        terms.push(ExpPolyTerm { f, g });
    }
    Ok(GridDecomposition {
        terms,
        report,
        note: GRID_REMAINDER_NOTE,
    })
}

/// One term `coeff · x^α log^β(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyLogTerm {
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub coeff: Complex64,
}

/// `Σ h_{α,β} x^α log^β(x)` with unique `(α, β)` pairs, sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyLogModel {
    pub nvars: usize,
    pub terms: Vec<PolyLogTerm>,
}

impl PolyLogModel {
    pub fn new(nvars: usize, mut terms: Vec<PolyLogTerm>) -> Result<Self> {
        for t in &terms {
            for idx in [&t.alpha, &t.beta] {
                if idx.nvars() != nvars {
                    return Err(Error::DimensionMismatch {
                        expected: nvars,
                        found: idx.nvars(),
                    });
                }
            }
        }
        terms.sort_by(|a, b| (&a.alpha, &a.beta).cmp(&(&b.alpha, &b.beta)));
        for w in terms.windows(2) {
            if w[0].alpha == w[1].alpha && w[0].beta == w[1].beta {
                return Err(Error::InvalidInput(format!(
                    "duplicate term x^{} log^{}",
                    w[0].alpha, w[0].beta
                )));
            }
        }
        Ok(PolyLogModel { nvars, terms })
    }

    /// Value at `x = λ^γ`, using `log(λ^γ) = γ log λ` so that no branch
    /// choice enters.
    pub fn eval_at_power(&self, lambda: &[Complex64], gamma: &MultiIndex) -> Complex64 {
        let logs: Vec<Complex64> = lambda.iter().map(|l| l.ln()).collect();
        self.terms.iter().map(|t| t.eval_at_power(lambda, &logs, gamma)).sum()
    }
}

impl PolyLogTerm {
    fn eval_at_power(&self, lambda: &[Complex64], logs: &[Complex64], gamma: &MultiIndex) -> Complex64 {
        let mut v = self.coeff;
        for (j, (&a, &b)) in self.alpha.entries().iter().zip(self.beta.entries()).enumerate() {
            let g = gamma.entries()[j];
            v *= lambda[j].powu(a * g) * (logs[j] * f64::from(g)).powu(b);
        }
        v
    }
}

fn round_exponent(xi: Complex64, lambda: Complex64, component: usize) -> Result<u32> {
    let ratio = xi.ln() / lambda.ln();
    let rounded = ratio.re.round();
    let gap = (ratio - Complex64::new(rounded, 0.0)).norm();
    let reject = || Error::NonIntegerExponent {
        component,
        value: ratio.re,
        rounded: rounded as i64,
        gap,
    };
    if !(gap <= EXPONENT_GAP_TOL) || rounded < 0.0 || rounded > f64::from(u32::MAX) {
        return Err(reject());
    }
    let e = rounded as u32;
    if (lambda.powu(e) - xi).norm() > EXPONENT_CHECK_TOL * xi.norm() {
        return Err(reject());
    }
    Ok(e)
}

/// Refits the polylog coefficients by least squares over all samples with
/// the exact frequencies `λ^α`.
fn refit_polylog(
    values: &MomentSequence,
    lambda: &[Complex64],
    supports: &[(MultiIndex, Vec<MultiIndex>)],
) -> Result<Vec<Complex64>> {
    let logs: Vec<Complex64> = lambda.iter().map(|l| l.ln()).collect();
    let rows: Vec<(&MultiIndex, &Complex64)> = values.iter().collect();
    let ncols: usize = supports.iter().map(|(_, s)| s.len()).sum();
    let mut a = CMatrix::zeros(rows.len(), ncols);
    let mut col = 0;
    for (alpha, betas) in supports {
        let xi: Vec<Complex64> = lambda.iter().zip(alpha.entries()).map(|(l, &e)| l.powu(e)).collect();
        for beta in betas {
            for (ri, (gamma, _)) in rows.iter().enumerate() {
                let mut v = gamma.power_of(&xi);
                for (j, &b) in beta.entries().iter().enumerate() {
                    v *= (logs[j] * f64::from(gamma.entries()[j])).powu(b);
                }
                a[(ri, col)] = v;
            }
            col += 1;
        }
    }
    let mut b = CMatrix::from_iterator(rows.len(), 1, rows.iter().map(|(_, v)| **v));
    let scaling = numlin::equilibrate(&mut a, &mut b);
    let x = numlin::lstsq(&a, &b, 1e-14)?;
    Ok((0..ncols).map(|j| x[(j, 0)] / scaling.cols[j]).collect())
}

fn polylog_residual(model: &PolyLogModel, values: &MomentSequence, lambda: &[Complex64]) -> f64 {
    values
        .iter()
        .map(|(g, v)| (v - model.eval_at_power(lambda, g)).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Per-variable factors `s_j = ρ_j^{1/2}` where `ρ_j` is the growth rate of a
/// log-linear least-squares fit `log|σ_γ| ≈ c + Σ_j γ_j log ρ_j`. Dividing
/// `σ_γ` by `s^γ` centres the frequency range `[1, ρ_j]` geometrically on 1.
fn balancing_factors(values: &MomentSequence) -> Result<Vec<f64>> {
    let n = values.nvars();
    let max = values.max_abs();
    let rows: Vec<(&MultiIndex, f64)> = values
        .iter()
        .filter(|(_, v)| v.norm() > f64::EPSILON * max)
        .map(|(a, v)| (a, v.norm().ln()))
        .collect();
    if rows.len() <= n || max == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let a = CMatrix::from_fn(rows.len(), n + 1, |i, j| {
        if j == 0 {
            ONE
        } else {
            Complex64::new(f64::from(rows[i].0.entries()[j - 1]), 0.0)
        }
    });
    let b = CMatrix::from_fn(rows.len(), 1, |i, _| Complex64::new(rows[i].1, 0.0));
    let fit = numlin::lstsq(&a, &b, 1e-12)?;
    Ok((0..n).map(|j| (0.5 * fit[(j + 1, 0)].re).exp()).collect())
}

/// Recovers a sparse polylog function from its values `h(λ^γ)`.
///
/// Exponents are `round(log ξ / log λ)`, checked against [`EXPONENT_GAP_TOL`]
/// and [`EXPONENT_CHECK_TOL`]; log powers come from the sampled weight
/// `g̃(γ) = Σ_β h_β log^β(λ) γ^β`. With the exponents fixed, the coefficients
/// are refitted by least squares over every sample; the refit replaces the
/// converted coefficients when it reproduces the samples better.
/// `max_degree_hint` caps the total degree of the recovered exponents.
pub fn sparse_interpolate(
    values: &MomentSequence,
    lambda: &[Complex64],
    max_degree_hint: Option<u32>,
    config: &DecomposeConfig,
) -> Result<PolyLogModel> {
    let n = values.nvars();
    if lambda.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lambda.len(),
        });
    }
    if let Some(l) = lambda.iter().find(|l| l.norm() == 0.0 || (*l - ONE).norm() == 0.0) {
        return Err(Error::InvalidInput(format!("interpolation base {l} must differ from 0 and 1")));
    }
    let factors = balancing_factors(values)?;
    let balanced = MomentSequence::from_pairs(
        n,
        values.iter().map(|(g, v)| {
            let s: f64 = g.entries().iter().zip(&factors).map(|(&e, f)| f.powi(e as i32)).product();
            (g.clone(), v / s)
        }),
    )?;
    let mut model = decompose(&balanced, config)?.model;
    for term in &mut model.terms {
        for (x, f) in term.xi.iter_mut().zip(&factors) {
            *x *= *f;
        }
    }
    let logs: Vec<Complex64> = lambda.iter().map(|l| l.ln()).collect();
    let mut seen: BTreeMap<MultiIndex, usize> = BTreeMap::new();
    let mut supports = Vec::with_capacity(model.len());
    let mut terms = Vec::new();
    for (idx, term) in model.terms.iter().enumerate() {
        let alpha = MultiIndex::new(
            term.xi
                .iter()
                .zip(lambda)
                .enumerate()
                .map(|(k, (x, l))| round_exponent(*x, *l, k))
                .collect::<Result<Vec<u32>>>()?,
        );
        if let Some(cap) = max_degree_hint {
            if alpha.degree() > cap {
                return Err(Error::InvalidInput(format!(
                    "recovered exponent {alpha} exceeds the degree cap {cap}"
                )));
            }
        }
        if let Some(&other) = seen.get(&alpha) {
            return Err(Error::CollidingFrequencies(other, idx));
        }
        seen.insert(alpha.clone(), idx);
        let sampled = sampled_weight(term, idx)?;
        let scale = sampled.max_abs_coeff();
        let mut betas = Vec::new();
        for (beta, c) in sampled.terms() {
            if c.norm() <= config.weight_tol * scale {
                continue;
            }
            let denom = beta.power_of(&logs);
            terms.push(PolyLogTerm {
                alpha: alpha.clone(),
                beta: beta.clone(),
                coeff: c / denom,
            });
            betas.push(beta.clone());
        }
        supports.push((alpha, betas));
    }
    let converted = PolyLogModel::new(n, terms)?;
    let coeffs = refit_polylog(values, lambda, &supports)?;
    let mut refit_terms = Vec::with_capacity(coeffs.len());
    let mut it = coeffs.into_iter();
    for (alpha, betas) in &supports {
        for beta in betas {
            let coeff = it.next().unwrap_or(ZERO);
            refit_terms.push(PolyLogTerm {
                alpha: alpha.clone(),
                beta: beta.clone(),
                coeff,
            });
        }
    }
    let refit = PolyLogModel::new(n, refit_terms)?;
    if polylog_residual(&refit, values, lambda) <= polylog_residual(&converted, values, lambda) {
        Ok(refit)
    } else {
        Ok(converted)
    }
}

/// A point mass and its derivatives: `Σ_α c_α ∂^α δ_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spike {
    pub position: Vec<f64>,
    pub coefficients: BTreeMap<MultiIndex, Complex64>,
}

impl Spike {
    /// Coefficient of the undifferentiated Dirac mass.
    pub fn weight(&self) -> Complex64 {
        self.coefficients
            .get(&MultiIndex::zero(self.position.len()))
            .copied()
            .unwrap_or(ZERO)
    }

    /// Derivative orders carried by the spike.
    pub fn orders(&self) -> BTreeSet<MultiIndex> {
        self.coefficients.keys().cloned().collect()
    }
}

/// Recovers `f = Σ_k Σ_α c_{k,α} ∂^α δ_{x_k}` from its Fourier coefficients
/// `σ_γ = (1/ΠT) ∫ f(x) e^{−2πi γ·x/T} dx` on a downward-closed index set.
/// Positions are `x_j = −T_j arg(ξ_j) / 2π` in `[−T_j/2, T_j/2)`.
pub fn spikes_from_fourier(
    coeffs: &MomentSequence,
    periods: &[f64],
    circle_tol: f64,
    config: &DecomposeConfig,
) -> Result<Vec<Spike>> {
    let n = coeffs.nvars();
    if periods.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: periods.len(),
        });
    }
    if let Some(t) = periods.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidInput(format!("period {t} is not positive")));
    }
    let report = decompose(coeffs, config)?;
    let volume: f64 = periods.iter().product();
    let mut spikes = Vec::with_capacity(report.model.len());
    for (idx, term) in report.model.terms.iter().enumerate() {
        let gap = term.xi.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
        if gap > circle_tol {
            return Err(Error::OffCircle { term: idx, gap });
        }
        let position: Vec<f64> = term
            .xi
            .iter()
            .zip(periods)
            .map(|(z, t)| {
                let x = -t * z.arg() / (2.0 * PI);
                if x >= t / 2.0 {
                    x - t
                } else {
                    x
                }
            })
            .collect();
        let sampled = sampled_weight(term, idx)?;
        let coefficients = sampled
            .terms()
            .map(|(alpha, c)| {
                let mut factor = Complex64::new(volume, 0.0);
                for (&e, t) in alpha.entries().iter().zip(periods) {
                    factor /= Complex64::new(0.0, 2.0 * PI / t).powu(e);
                }
                (alpha.clone(), c * factor)
            })
            .collect();
        spikes.push(Spike { position, coefficients });
    }
    Ok(spikes)
}
