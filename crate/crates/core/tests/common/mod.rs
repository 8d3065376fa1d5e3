//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabset::model::{Architecture, SetChoice};
use stabset::nets::Icnn;
use stabset::{ModelKind, StableModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central finite-difference gradient of a scalar function.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + step;
            let fp = f(&xp);
            xp[i] = orig - step;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Central finite-difference Jacobian of a vector function, row-major
/// `out × in`.
pub fn central_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let m = f(x).len();
    (0..m).map(|k| central_diff(|y| f(y)[k], x, step)).collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = norm(a);
    let nb = norm(b);
    diff / na.max(nb).max(floor)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn uniform_point<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Small proposed model with an identity transform.
pub fn small_model(set: SetChoice, seed: u64) -> StableModel {
    Architecture { h_hidden: vec![16, 16], q_hidden: vec![8], xi_hidden: vec![8], set, ..Architecture::default() }
        .build(seed)
        .unwrap()
}

pub fn small_model_of_kind(kind: ModelKind, set: SetChoice, seed: u64) -> StableModel {
    Architecture { kind, h_hidden: vec![16, 16], q_hidden: vec![8], xi_hidden: vec![8], set, ..Architecture::default() }
        .build(seed)
        .unwrap()
}

pub fn circle(r: f64) -> SetChoice {
    SetChoice::Circle { r, axes: [0, 1], learnable: false }
}

pub fn ball(r: f64) -> SetChoice {
    SetChoice::Ball { r, learnable: false }
}

pub fn hyperplane(c: &[f64], b: f64) -> SetChoice {
    SetChoice::Hyperplane { c: c.to_vec(), b, learnable: false, learnable_b: false }
}

/// Number of midpoint-convexity violations over `n` random triples.
pub fn convexity_violations(q: &Icnn, n: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    (0..n)
        .filter(|_| {
            let a = uniform_point(&mut r, q.dim(), -3.0, 3.0);
            let b = uniform_point(&mut r, q.dim(), -3.0, 3.0);
            let l: f64 = r.gen_range(0.0..=1.0);
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| l * x + (1.0 - l) * y).collect();
            q.eval(&m).unwrap() > l * q.eval(&a).unwrap() + (1.0 - l) * q.eval(&b).unwrap() + 1e-9
        })
        .count()
}
