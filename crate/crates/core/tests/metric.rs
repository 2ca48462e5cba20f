mod common;

use common::*;
use lipschitz_approx::{Error, MetricSpace, Norm, NormContext, DEFAULT_TOL};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn constant_field_has_zero_constant() {
    let mut r = rng(1);
    let s = MetricSpace::from_points2(&random_points(&mut r, 40), Norm::L2).unwrap();
    let lip = s.lip_all(&vec![2.5; 40], DEFAULT_TOL).unwrap();
    assert_eq!(lip.value, 0.0);
}

#[test]
fn corner_function_on_circle_is_one_lipschitz_in_l1() {
    let pts: Vec<[f64; 2]> = (0..512)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 512.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let u0: Vec<f64> = pts.iter().map(|p| p[0].abs() - p[1].abs()).collect();
    let s = MetricSpace::from_points2(&pts, Norm::L1).unwrap();
    let lip = s.lip_all(&u0, DEFAULT_TOL).unwrap();
    assert!((lip.value - 1.0).abs() <= 1e-9, "{}", lip.value);
}

#[test]
fn linear_on_three_points() {
    let s = MetricSpace::from_points1(&[0.0, 0.5, 1.0], Norm::L2).unwrap();
    let f = [0.0, 1.5, 3.0];
    let lip = s.lip_all(&f, DEFAULT_TOL).unwrap();
    assert!((lip.value - 3.0).abs() < 1e-15);
    let (i, j) = lip.witness.unwrap();
    assert!(((f[i] - f[j]).abs() / s.dist(i, j) - 3.0).abs() < 1e-15);
}

#[test]
fn witness_attains_the_value() {
    let mut r = rng(2);
    let s = MetricSpace::from_points2(&random_points(&mut r, 60), Norm::LInf).unwrap();
    let f: Vec<f64> = (0..60).map(|_| r.random::<f64>()).collect();
    let lip = s.lip_all(&f, DEFAULT_TOL).unwrap();
    let (i, j) = lip.witness.unwrap();
    assert_eq!((f[i] - f[j]).abs() / s.dist(i, j), lip.value);
    assert_eq!(lip.value, pair_lip(&s, &f, &all(60)));
}

#[test]
fn duplicate_points_with_different_values_are_rejected() {
    let s = MetricSpace::from_points2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], Norm::L2).unwrap();
    assert!(matches!(s.lip_all(&[0.0, 1.0, 0.5], DEFAULT_TOL), Err(Error::InfiniteLipschitz(0, 2))));
    assert_eq!(s.lip_all(&[0.0, 1.0, 0.0], DEFAULT_TOL).unwrap().value, 1.0);
}

#[test]
fn singleton_has_zero_constant() {
    let s = MetricSpace::from_points1(&[0.0, 1.0], Norm::L2).unwrap();
    assert_eq!(s.lip_constant(&[0.0, 7.0], &[1], DEFAULT_TOL).unwrap().value, 0.0);
    assert!(matches!(s.lip_constant(&[0.0, 7.0], &[], DEFAULT_TOL), Err(Error::Domain(_))));
}

#[test]
fn distance_to_sets() {
    let s = MetricSpace::from_points2(&[[2.0, 0.0], [0.0, 0.0], [0.0, 1.0]], Norm::L1).unwrap();
    assert_eq!(s.dist_to_set(0, &[1, 2]).unwrap(), 2.0);
    assert_eq!(s.dist_to_set(1, &[1, 2]).unwrap(), 0.0);
    assert_eq!(s.dist_to_set(0, &[2]).unwrap(), s.dist(0, 2));
    assert!(matches!(s.dist_to_set(0, &[]), Err(Error::Domain(_))));
}

#[test]
fn diameter_and_set_distance() {
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let s = MetricSpace::from_points2(&corners, Norm::LInf).unwrap();
    assert_eq!(s.diameter(&[0, 1, 2, 3]).unwrap(), 1.0);
    assert_eq!(s.diameter(&[2]).unwrap(), 0.0);
    assert_eq!(s.set_metrics(&[0, 1], &[1, 3]).unwrap(), (0.0, 1.0));
    assert!(s.diameter(&[]).is_err());
    assert!(s.set_distance(&[0], &[]).is_err());
}

#[test]
fn matrix_metric_validation() {
    let ok = MetricSpace::from_matrix(3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0], 1e-12).unwrap();
    ok.validate_triangle(1e-12, 0, 0).unwrap();
    let bad = MetricSpace::from_matrix(3, vec![0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0], 1e-12).unwrap();
    assert!(bad.validate_triangle(1e-12, 0, 0).is_err());
    assert!(MetricSpace::from_matrix(2, vec![0.0, 1.0, 2.0, 0.0], 1e-12).is_err());
    assert!(MetricSpace::from_matrix(2, vec![0.1, 1.0, 1.0, 0.0], 1e-12).is_err());
    assert!(MetricSpace::from_matrix(2, vec![0.0, -1.0, -1.0, 0.0], 1e-12).is_err());
}

#[test]
fn non_finite_coordinates_are_rejected() {
    assert!(matches!(MetricSpace::from_points2(&[[0.0, f64::NAN]], Norm::L2), Err(Error::NonFinite(0))));
}

#[test]
fn norm_tags_parse() {
    assert_eq!("l1".parse::<Norm>().unwrap(), Norm::L1);
    assert_eq!("LINF".parse::<Norm>().unwrap(), Norm::LInf);
    assert!("l3".parse::<Norm>().is_err());
    for n in [Norm::L1, Norm::L2, Norm::LInf] {
        assert_eq!(n.to_string().parse::<Norm>().unwrap(), n);
        assert_eq!(n.dual().dual(), n);
    }
}

/// Extreme points of each unit ball plus a ring of directions.
fn unit_directions(p: Norm) -> Vec<[f64; 2]> {
    let mut dirs = vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    dirs.extend((0..720).map(|k| {
        let t = std::f64::consts::TAU * k as f64 / 720.0;
        [t.cos(), t.sin()]
    }));
    dirs.into_iter().map(|d| {
        let n = p.eval2(d[0], d[1]);
        [d[0] / n, d[1] / n]
    }).collect()
}

#[test]
fn dual_norm_is_the_support_function_of_the_unit_ball() {
    let mut r = rng(3);
    for p in [Norm::L1, Norm::L2, Norm::LInf] {
        let ctx = NormContext::new(p);
        let dirs = unit_directions(p);
        for _ in 0..50 {
            let g = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
            let dual = ctx.dual_norm(&g);
            let mut best = dirs.iter().fold(f64::NEG_INFINITY, |m, d| m.max(g[0] * d[0] + g[1] * d[1]));
            if p == Norm::L2 {
                best = best.max((g[0] * g[0] + g[1] * g[1]) / dual);
            }
            assert!(best <= dual + 1e-9, "{p}: {best} > {dual}");
            assert!(best >= dual - 1e-9, "{p}: {best} < {dual}");
        }
    }
}

#[test]
fn large_planar_spaces_match_enumeration() {
    let mut r = rng(4);
    let n = 2100;
    let pts = random_points(&mut r, n);
    for norm in [Norm::L1, Norm::L2, Norm::LInf] {
        let s = MetricSpace::from_points2(&pts, norm).unwrap();
        let f = random_lipschitz(&mut r, &s, 0.7);
        let f: Vec<f64> = f.iter().enumerate().map(|(i, v)| v + 1e-3 * (i % 7) as f64).collect();
        let sub: Vec<usize> = (0..n).step_by(3).collect();
        let got = s.lip_constant(&f, &sub, DEFAULT_TOL).unwrap().value;
        assert!((got - pair_lip(&s, &f, &sub)).abs() <= 1e-12 * got.max(1.0), "{norm}");
        let a: Vec<usize> = (0..n).filter(|i| i % 5 == 0).collect();
        let b: Vec<usize> = (0..n).filter(|i| i % 5 == 1).collect();
        let diam = a.iter().flat_map(|&i| a.iter().map(move |&j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(s.dist(i, j)));
        let dist = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).fold(f64::INFINITY, |m, (i, j)| m.min(s.dist(i, j)));
        assert!((s.diameter(&a).unwrap() - diam).abs() < 1e-12);
        assert!((s.set_distance(&a, &b).unwrap() - dist).abs() < 1e-12);
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let mut r = rng(5);
    let pts = random_points(&mut r, 30);
    let pts32: Vec<[f32; 2]> = pts.iter().map(|p| [p[0] as f32, p[1] as f32]).collect();
    let f: Vec<f64> = pts.iter().map(|p| 0.3 * p[0] - 0.6 * p[1]).collect();
    let f32v: Vec<f32> = f.iter().map(|&v| v as f32).collect();
    let s64 = lipschitz_approx::MetricSpace64::from_points2(&pts, Norm::L1).unwrap();
    let s32 = lipschitz_approx::MetricSpace32::from_points2(&pts32, Norm::L1).unwrap();
    let a = s64.lip_all(&f, DEFAULT_TOL).unwrap().value;
    let b = s32.lip_all(&f32v, 1e-6).unwrap().value;
    assert!((a - b as f64).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms_hold(seed in any::<u64>(), n in 2usize..40) {
        let mut r = rng(seed);
        let s = random_space(&mut r, n);
        for i in 0..n {
            prop_assert_eq!(s.dist(i, i), 0.0);
            for j in 0..n {
                prop_assert_eq!(s.dist(i, j), s.dist(j, i));
                prop_assert!(s.dist(i, j) >= 0.0);
            }
        }
        prop_assert!(s.validate_triangle(1e-12, 0, 0).is_ok());
    }

    #[test]
    fn lip_is_monotone_in_the_set(seed in any::<u64>(), n in 2usize..60) {
        let mut r = rng(seed);
        let s = random_space(&mut r, n);
        let f: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let big = random_subset(&mut r, n, 0.7);
        let small: Vec<usize> = big.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        prop_assume!(!small.is_empty());
        let a = s.lip_constant(&f, &small, DEFAULT_TOL).unwrap().value;
        let b = s.lip_constant(&f, &big, DEFAULT_TOL).unwrap().value;
        prop_assert!(a <= b);
        prop_assert_eq!(b, pair_lip(&s, &f, &big));
    }

    #[test]
    fn lip_is_absolutely_homogeneous(seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut r = rng(seed);
        let s = random_space(&mut r, 30);
        let f: Vec<f64> = (0..30).map(|_| r.random_range(-1.0..1.0)).collect();
        let cf: Vec<f64> = f.iter().map(|v| c * v).collect();
        let a = s.lip_all(&f, DEFAULT_TOL).unwrap().value;
        let b = s.lip_all(&cf, DEFAULT_TOL).unwrap().value;
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn cone_minima_are_lambda_lipschitz(seed in any::<u64>(), lambda in 0.01f64..3.0) {
        let mut r = rng(seed);
        let s = random_space(&mut r, 50);
        let ys = random_subset(&mut r, 50, 0.3);
        let data: Vec<f64> = ys.iter().map(|_| r.random_range(-2.0..2.0)).collect();
        let w = cone_min(&s, &ys, &data, lambda);
        prop_assert!(s.lip_all(&w, DEFAULT_TOL).unwrap().value <= lambda + 1e-9);
    }
}
