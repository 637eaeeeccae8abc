//! Reference values computed independently of the library: Monte-Carlo and
//! quadrature oracles for the Gaussian problems, and an exhaustive
//! spanning-tree enumerator.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// D̃ for two unit-variance Gaussians `Δ` apart with priors `(q1, 1 − q1)`,
/// as `1 − 4 q1 q2 E_{f2}[t / (q1 t + q2)]` with `t = f1/f2` along the mean
/// axis, from `n` draws of `f2`.
pub fn dtilde_monte_carlo(delta: f64, q1: f64, n: usize, seed: u64) -> f64 {
    let q2 = 1.0 - q1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let t = (delta * x - 0.5 * delta * delta).exp();
        acc += t / (q1 * t + q2);
    }
    1.0 - 4.0 * q1 * q2 * acc / n as f64
}

/// The same quantity by composite Simpson quadrature on `[−15, 15 + Δ]`.
pub fn dtilde_quadrature(delta: f64, q1: f64) -> f64 {
    let q2 = 1.0 - q1;
    let integrand = |x: f64| {
        let f2 = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let f1 = (-0.5 * (x - delta) * (x - delta)).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mix = q1 * f1 + q2 * f2;
        if mix == 0.0 {
            0.0
        } else {
            f1 * f2 / mix
        }
    };
    let (a, b, n) = (-15.0, 15.0 + delta, 20_000);
    let h = (b - a) / n as f64;
    let mut s = integrand(a) + integrand(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(a + i as f64 * h);
    }
    1.0 - 4.0 * q1 * q2 * s * h / 3.0
}

/// Lower sandwich bound `½ − ½√D̃`.
pub fn dtilde_lower(dtilde: f64) -> f64 {
    0.5 - 0.5 * dtilde.clamp(0.0, 1.0).sqrt()
}

/// Closed-form Chernoff coefficient of two unit-variance Gaussians.
pub fn chernoff_coefficient(alpha: f64, delta: f64) -> f64 {
    (-alpha * (1.0 - alpha) * delta * delta / 2.0).exp()
}

/// Monte-Carlo Bayes error of the one-dimensional problem: draw a class by
/// its prior, a point from that class, and count mistakes of the
/// maximum-posterior rule. Returns `(estimate, standard error)`.
pub fn ber_monte_carlo(delta: f64, q1: f64, n: usize, seed: u64) -> (f64, f64) {
    let q2 = 1.0 - q1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = 0usize;
    for _ in 0..n {
        let class_one = rng.random::<f64>() < q1;
        let z: f64 = rng.sample(StandardNormal);
        let x = if class_one { delta + z } else { z };
        let p1 = q1 * (-0.5 * (x - delta) * (x - delta)).exp();
        let p2 = q2 * (-0.5 * x * x).exp();
        let decide_one = p1 > p2;
        if decide_one != class_one {
            errors += 1;
        }
    }
    let p = errors as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Weight of the lightest spanning tree of the complete graph on `n ≤ 8`
/// nodes, by enumerating every Prüfer sequence.
pub fn brute_force_mst_weight(n: usize, w: impl Fn(usize, usize) -> f64) -> f64 {
    assert!((2..=8).contains(&n));
    if n == 2 {
        return w(0, 1);
    }
    let mut best = f64::INFINITY;
    let total = n.pow(n as u32 - 2);
    for code in 0..total {
        let mut seq = Vec::with_capacity(n - 2);
        let mut c = code;
        for _ in 0..n - 2 {
            seq.push(c % n);
            c /= n;
        }
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut weight = 0.0;
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            weight += w(leaf, s);
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        weight += w(rest[0], rest[1]);
        best = best.min(weight);
    }
    best
}

/// Bayes error `∫ min(q1 f1, q2 f2)` of the one-dimensional problem by
/// composite Simpson quadrature on `[−15, 15 + Δ]`.
pub fn ber_quadrature(delta: f64, q1: f64) -> f64 {
    let q2 = 1.0 - q1;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let integrand = |x: f64| {
        let f1 = norm * (-0.5 * (x - delta) * (x - delta)).exp();
        let f2 = norm * (-0.5 * x * x).exp();
        (q1 * f1).min(q2 * f2)
    };
    // Split at the posterior crossing, where the integrand has a kink.
    let cross = delta / 2.0 + (q2 / q1).ln() / delta.max(f64::MIN_POSITIVE);
    simpson(integrand, -15.0, cross, 20_000) + simpson(integrand, cross, 15.0 + delta, 20_000)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Symmetric `n × n` matrix with zero diagonal whose upper-triangle entries
/// come from `upper`, row by row.
pub fn symmetric_matrix(n: usize, mut upper: impl FnMut() -> f64) -> Vec<Vec<f64>> {
    let values: Vec<f64> = (0..n * n.saturating_sub(1) / 2).map(|_| upper()).collect();
    let at = |i: usize, j: usize| i * n - i * (i + 1) / 2 + (j - i - 1);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match i.cmp(&j) {
                    std::cmp::Ordering::Less => values[at(i, j)],
                    std::cmp::Ordering::Greater => values[at(j, i)],
                    std::cmp::Ordering::Equal => 0.0,
                })
                .collect()
        })
        .collect()
}
