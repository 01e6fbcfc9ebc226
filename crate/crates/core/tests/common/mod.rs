//! Random model generators and comparison helpers shared by the integration
//! tests.

#![allow(dead_code)]

use num_complex::Complex64;
use polyexp::polexp::{mu_dimension, synth_moments_to_degree};
use polyexp::{MomentSequence, MultiIndex, PolExpModel, PolExpTerm, Poly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn random_unit_complex(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Complex64 {
    let r = rng.random_range(lo..hi);
    let t = rng.random_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(r, t)
}

fn inf_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `count` points in ℂⁿ with component moduli in `[0.5, 1.5]` and pairwise
/// ∞-distance at least `min_sep`.
pub fn separated_points(rng: &mut ChaCha8Rng, n: usize, count: usize, min_sep: f64) -> Vec<Vec<Complex64>> {
    loop {
        let pts: Vec<Vec<Complex64>> = (0..count)
            .map(|_| (0..n).map(|_| random_unit_complex(rng, 0.5, 1.5)).collect())
            .collect();
        let ok = (0..count).all(|i| (0..i).all(|j| inf_dist(&pts[i], &pts[j]) >= min_sep));
        if ok {
            return pts;
        }
    }
}

/// Real points with components in `[-1.5, 1.5]`, pairwise separated.
pub fn separated_real_points(rng: &mut ChaCha8Rng, n: usize, count: usize, min_sep: f64) -> Vec<Vec<Complex64>> {
    loop {
        let pts: Vec<Vec<Complex64>> = (0..count)
            .map(|_| (0..n).map(|_| c(rng.random_range(-1.5..1.5))).collect())
            .collect();
        let ok = (0..count).all(|i| (0..i).all(|j| inf_dist(&pts[i], &pts[j]) >= min_sep));
        if ok {
            return pts;
        }
    }
}

pub fn random_weight_value(rng: &mut ChaCha8Rng) -> Complex64 {
    random_unit_complex(rng, 0.5, 2.0)
}

/// Constant-weight model with `r` terms in `n` variables.
pub fn constant_weight_model(rng: &mut ChaCha8Rng, n: usize, r: usize) -> PolExpModel {
    let pts = separated_points(rng, n, r, 0.3);
    let terms = pts
        .into_iter()
        .map(|xi| PolExpTerm::constant(xi, random_weight_value(rng)))
        .collect();
    PolExpModel::new(n, terms).unwrap()
}

/// Random polynomial of degree at most `max_deg` with `μ ≤ max_mu`.
pub fn random_weight(rng: &mut ChaCha8Rng, n: usize, max_deg: u32, max_mu: usize) -> Poly {
    loop {
        let deg = rng.random_range(0..=max_deg);
        let mut p = Poly::constant(n, random_weight_value(rng));
        for alpha in MultiIndex::all_up_to_degree(n, deg).into_iter().skip(1) {
            if rng.random_bool(0.5) {
                p.add_term(alpha, random_weight_value(rng));
            }
        }
        if mu_dimension(&p).unwrap() <= max_mu {
            return p;
        }
    }
}

/// Polynomial-weight model with up to `max_points` terms.
pub fn polynomial_weight_model(
    rng: &mut ChaCha8Rng,
    n: usize,
    points: usize,
    max_deg: u32,
    max_mu: usize,
) -> PolExpModel {
    let pts = separated_points(rng, n, points, 0.3);
    let terms = pts
        .into_iter()
        .map(|xi| PolExpTerm::new(xi, random_weight(rng, n, max_deg, max_mu)))
        .collect();
    PolExpModel::new(n, terms).unwrap()
}

/// Smallest `t` with at least `r` monomials of degree `≤ t` in `n` variables.
pub fn basis_degree(n: usize, r: usize) -> u32 {
    let mut t = 0;
    while MultiIndex::all_up_to_degree(n, t).len() < r {
        t += 1;
    }
    t
}

/// Synthesis degree used by the round-trip suites.
pub fn synthesis_degree(model: &PolExpModel, rank: usize) -> u32 {
    let n = model.nvars;
    let t = basis_degree(n, rank);
    let constant = model
        .terms
        .iter()
        .all(|t| t.weight.support().all(MultiIndex::is_zero));
    if n == 1 {
        2 * rank as u32
    } else if constant {
        2 * t + 2
    } else {
        2 * t + 4
    }
}

pub fn synth(model: &PolExpModel, degree: u32) -> MomentSequence {
    synth_moments_to_degree(model, degree)
}

/// Pairs every term of `truth` with its nearest recovered term; returns the
/// largest frequency error and the largest relative weight error, or `None`
/// if the term counts differ.
pub fn match_models(truth: &PolExpModel, got: &PolExpModel) -> Option<(f64, f64)> {
    if truth.len() != got.len() {
        return None;
    }
    let mut used = vec![false; got.len()];
    let mut freq_err: f64 = 0.0;
    let mut weight_err: f64 = 0.0;
    for t in &truth.terms {
        let (best, dist) = got
            .terms
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, g)| (i, inf_dist(&t.xi, &g.xi)))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        used[best] = true;
        freq_err = freq_err.max(dist);
        let diff = (&t.weight - &got.terms[best].weight).max_abs_coeff();
        weight_err = weight_err.max(diff / t.weight.max_abs_coeff());
    }
    Some((freq_err, weight_err))
}
