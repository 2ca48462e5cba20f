//! Brute-force oracles and seeded instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use lipschitz_approx::{MetricSpace, Norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Max pairwise quotient by direct enumeration.
pub fn pair_lip(space: &MetricSpace<f64>, f: &[f64], s: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (a, &i) in s.iter().enumerate() {
        for &j in &s[a + 1..] {
            let d = space.dist(i, j);
            if d > 0.0 {
                best = best.max((f[i] - f[j]).abs() / d);
            }
        }
    }
    best
}

pub fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// `x ↦ min_y r(y) + λ d(x,y)` over the anchors `ys`.
pub fn cone_min(space: &MetricSpace<f64>, ys: &[usize], r: &[f64], lambda: f64) -> Vec<f64> {
    (0..space.len())
        .map(|x| ys.iter().zip(r).fold(f64::INFINITY, |m, (&y, &v)| m.min(v + lambda * space.dist(x, y))))
        .collect()
}

/// `x ↦ max_y r(y) − λ d(x,y)` over the anchors `ys`.
pub fn cone_max(space: &MetricSpace<f64>, ys: &[usize], r: &[f64], lambda: f64) -> Vec<f64> {
    (0..space.len())
        .map(|x| ys.iter().zip(r).fold(f64::NEG_INFINITY, |m, (&y, &v)| m.max(v - lambda * space.dist(x, y))))
        .collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// A random 1-Lipschitz field: a cone minimum over random data.
pub fn random_lipschitz(rng: &mut ChaCha8Rng, space: &MetricSpace<f64>, lambda: f64) -> Vec<f64> {
    let n = space.len();
    let k = (n / 4).max(1);
    let ys: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
    let r: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
    cone_min(space, &ys, &r, lambda)
}

/// Shortest-path metric of a complete graph with random edge weights.
pub fn random_matrix_metric(rng: &mut ChaCha8Rng, n: usize) -> MetricSpace<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let w = rng.random_range(0.05..1.0);
            d[i * n + j] = w;
            d[j * n + i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    MetricSpace::from_matrix(n, d, 1e-12).unwrap()
}

/// A random space: coordinates under one of the three norms, or a graph metric.
pub fn random_space(rng: &mut ChaCha8Rng, n: usize) -> MetricSpace<f64> {
    match rng.random_range(0..4) {
        0 => MetricSpace::from_points2(&random_points(rng, n), Norm::L1).unwrap(),
        1 => MetricSpace::from_points2(&random_points(rng, n), Norm::L2).unwrap(),
        2 => MetricSpace::from_points2(&random_points(rng, n), Norm::LInf).unwrap(),
        _ => random_matrix_metric(rng, n),
    }
}

/// A random nonempty proper subset when possible.
pub fn random_subset(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<usize> {
    let mut s: Vec<usize> = (0..n).filter(|_| rng.random_bool(p)).collect();
    if s.is_empty() {
        s.push(rng.random_range(0..n));
    }
    s
}
