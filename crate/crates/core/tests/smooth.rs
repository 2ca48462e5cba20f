mod common;

use common::*;
use lipschitz_approx::smooth::{
    check_local_lip, clamped_radii, dual_grad_field, flatten_value, max_mesh_constant, sample_balls, tolerance_shape,
};
use lipschitz_approx::{
    flatten, lasry_lions, moreau_inf, moreau_sup, mollify, variable_mollify, EnvelopeParams, Error, GridDomain, Kernel,
    Norm, NormContext, DEFAULT_TOL,
};
use proptest::prelude::*;
use rand::Rng;

fn square(n: usize, norm: Norm) -> GridDomain<f64> {
    GridDomain::rectangle(2, [0.0, 0.0], [1.0, 1.0], [n, n], NormContext::new(norm)).unwrap()
}

fn segment(lo: f64, hi: f64, n: usize) -> GridDomain<f64> {
    GridDomain::rectangle(1, [lo, 0.0], [hi, 0.0], [n, 1], NormContext::new(Norm::L2)).unwrap()
}

fn sample(grid: &GridDomain<f64>, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..grid.len()).map(|k| f(grid.point(k))).collect()
}

/// A random 1-Lipschitz lattice field built from cones.
fn cone_field(grid: &GridDomain<f64>, seed: u64, k: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let tips: Vec<([f64; 2], f64)> = (0..12).map(|_| ([r.random(), r.random()], r.random_range(-0.3..0.3))).collect();
    sample(grid, |p| tips.iter().fold(f64::INFINITY, |m, (c, v)| m.min(v + k * grid.vector_norm(p[0] - c[0], p[1] - c[1]))))
}

/// Nodes at lattice distance more than `band` from the edge of the box.
fn away_from_edges(grid: &GridDomain<f64>, band: usize) -> Vec<usize> {
    let [nx, ny] = grid.shape();
    (0..grid.len())
        .filter(|&k| {
            let (i, j) = grid.ij(k);
            i > band && i + band + 1 < nx && (grid.dim() == 1 || (j > band && j + band + 1 < ny))
        })
        .collect()
}

#[test]
fn kernel_has_unit_mass_and_small_support() {
    let g = square(65, Norm::L2);
    for r in [g.mesh(), 0.05, 0.2] {
        let k = Kernel::bump(&g, r).unwrap();
        assert!((k.mass() - 1.0).abs() <= 1e-12);
        assert!(k.weights().iter().all(|&w| w >= 0.0));
        for &(di, dj) in k.offsets() {
            assert!(g.offset_norm(di, dj) < r);
            let mirror = k.offsets().iter().position(|&o| o == (-di, -dj)).unwrap();
            let here = k.offsets().iter().position(|&o| o == (di, dj)).unwrap();
            assert_eq!(k.weights()[mirror], k.weights()[here]);
        }
    }
    assert!(matches!(Kernel::bump(&g, g.mesh() / 2.0), Err(Error::UnderResolved(_))));
}

#[test]
fn mollifying_preserves_affine_fields_away_from_the_box_edge() {
    let g = square(65, Norm::L2);
    let f = sample(&g, |p| 0.3 * p[0] - 0.7 * p[1] + 0.1);
    let k = Kernel::bump(&g, 0.1).unwrap();
    let v = mollify(&g, &f, &k).unwrap();
    for i in away_from_edges(&g, 7) {
        assert!((v.values()[i] - f[i]).abs() <= 1e-12);
    }
}

#[test]
fn mollified_absolute_value() {
    let g = segment(-1.0, 1.0, 401);
    let f = sample(&g, |p| p[0].abs());
    let delta = 0.1;
    let v = mollify(&g, &f, &Kernel::bump(&g, delta).unwrap()).unwrap();
    let h = g.mesh();
    let reach = (delta / h).ceil() as isize;
    for k in 0..g.len() {
        let (mut sum, mut mass) = (0.0, 0.0);
        for o in -reach..=reach {
            let s = (o as f64 * h).abs() / delta;
            if s < 1.0 {
                let w = (1.0 - s * s).powi(3);
                let idx = (k as isize + o).clamp(0, g.len() as isize - 1) as usize;
                sum += w * f[idx];
                mass += w;
            }
        }
        assert!((v.values()[k] - sum / mass).abs() <= 1e-12);
    }
    assert!(g.lip(v.values(), &g.all_nodes(), DEFAULT_TOL).unwrap() <= 1.0 + 1e-9);
    for k in 0..g.len() {
        if g.point(k)[0].abs() > delta {
            assert!((v.values()[k] - f[k]).abs() <= 0.05);
        }
    }
}

#[test]
fn mollifier_moves_values_by_at_most_k_delta() {
    let g = square(65, Norm::L2);
    let f = cone_field(&g, 30, 1.0);
    for delta in [0.03, 0.1, 0.25] {
        let v = mollify(&g, &f, &Kernel::bump(&g, delta).unwrap()).unwrap();
        for k in 0..g.len() {
            assert!((v.values()[k] - f[k]).abs() <= delta + 1e-12);
        }
    }
}

/// Window-free oracle: the quadratic envelope scanned over every node.
fn envelope_oracle(g: &GridDomain<f64>, f: &[f64], t: f64, upper: bool) -> Vec<f64> {
    (0..g.len())
        .map(|x| {
            let (px, init) = (g.point(x), if upper { f64::NEG_INFINITY } else { f64::INFINITY });
            (0..g.len()).fold(init, |m, y| {
                let py = g.point(y);
                let d = g.vector_norm(px[0] - py[0], px[1] - py[1]);
                if upper { m.max(f[y] - d * d / (2.0 * t)) } else { m.min(f[y] + d * d / (2.0 * t)) }
            })
        })
        .collect()
}

#[test]
fn envelopes_of_a_constant() {
    let g = square(33, Norm::L1);
    let f = vec![1.25; g.len()];
    assert!(moreau_inf(&g, &f, 0.1, 0.0).unwrap().field.values().iter().all(|&v| v == 1.25));
    assert!(moreau_sup(&g, &f, 0.1, 0.0).unwrap().field.values().iter().all(|&v| v == 1.25));
}

#[test]
fn moreau_envelope_of_absolute_value_is_huber() {
    let g = segment(-2.0, 2.0, 401);
    let f = sample(&g, |p| p[0].abs());
    let lambda = 0.5;
    let env = moreau_inf(&g, &f, lambda, 1.0).unwrap();
    let oracle = envelope_oracle(&g, &f, lambda, false);
    let zero = (0..g.len()).find(|&k| g.point(k)[0].abs() < 1e-12).unwrap();
    assert_eq!(env.field.values()[zero], 0.0);
    for k in 0..g.len() {
        let x: f64 = g.point(k)[0];
        let huber = if x.abs() <= lambda { x * x / (2.0 * lambda) } else { x.abs() - lambda / 2.0 };
        assert!((env.field.values()[k] - oracle[k]).abs() <= 1e-12);
        assert!((env.field.values()[k] - huber).abs() <= 1e-12);
        assert!(env.field.values()[k] <= f[k]);
    }
}

#[test]
fn envelopes_match_full_scans_and_keep_the_constant() {
    for norm in [Norm::L1, Norm::L2, Norm::LInf] {
        let g = square(33, norm);
        let f = cone_field(&g, 31, 1.0);
        let (lambda, mu) = (0.05, 0.02);
        let inf = moreau_inf(&g, &f, lambda, 1.0).unwrap();
        let sup = moreau_sup(&g, &f, mu, 1.0).unwrap();
        let ll = lasry_lions(&g, &f, &EnvelopeParams::new(lambda, mu, 1.0).unwrap()).unwrap();
        let oi = envelope_oracle(&g, &f, lambda, false);
        let os = envelope_oracle(&g, &f, mu, true);
        let oll = envelope_oracle(&g, &oi, mu, true);
        let all = g.all_nodes();
        for k in 0..g.len() {
            assert!((inf.field.values()[k] - oi[k]).abs() <= 1e-12, "{norm}");
            assert!((sup.field.values()[k] - os[k]).abs() <= 1e-12, "{norm}");
            assert!((ll.field.values()[k] - oll[k]).abs() <= 1e-12, "{norm}");
            assert!(inf.field.values()[k] <= ll.field.values()[k] && ll.field.values()[k] <= sup.field.values()[k]);
        }
        for out in [&inf.field, &sup.field, &ll.field] {
            assert!(g.lip(out.values(), &all, DEFAULT_TOL).unwrap() <= 1.0 + 1e-9, "{norm}");
        }
        assert!(ll.sup_distance <= (lambda + mu) / 2.0 + 2.0 * g.mesh());
    }
}

#[test]
fn envelopes_shift_affine_fields_away_from_the_edge() {
    let g = square(65, Norm::L2);
    let (p, q) = (0.5, 0.25);
    let f = sample(&g, |x| p * x[0] + q * x[1]);
    let (lambda, mu) = (0.125, 0.0625);
    let k: f64 = (p * p + q * q).sqrt();
    let ll = lasry_lions(&g, &f, &EnvelopeParams::new(lambda, mu, k).unwrap()).unwrap();
    let shift = (lambda - mu) * k * k / 2.0;
    for i in away_from_edges(&g, 16) {
        assert!((ll.field.values()[i] - (f[i] - shift)).abs() <= 1e-12);
    }
}

#[test]
fn local_lipschitz_inequalities_on_sampled_balls() {
    let g = square(65, Norm::L2);
    let f = sample(&g, |p| (p[0] - 0.5).abs() * 0.3 + (p[1] - 0.3).abs() * 0.9 - 0.5 * (p[0] * p[1]));
    let k = g.lip(&f, &g.all_nodes(), DEFAULT_TOL).unwrap();
    let (lambda, mu) = (0.05, 0.02);
    let inf = moreau_inf(&g, &f, lambda, k).unwrap().field;
    let sup = moreau_sup(&g, &f, mu, k).unwrap().field;
    let ll = lasry_lions(&g, &f, &EnvelopeParams::new(lambda, mu, k).unwrap()).unwrap().field;
    let h = g.mesh();
    let balls = sample_balls(&g, 50, 7, 2.0 * h, 0.25);
    for (out, expand) in [(&inf, 2.0 * lambda * k), (&sup, 2.0 * mu * k), (&ll, 2.0 * (lambda + mu) * k)] {
        let checks = check_local_lip(&g, &f, out.values(), expand, &balls).unwrap();
        assert_eq!(checks.len(), 50);
        assert!(max_mesh_constant(&checks, h) <= 5.0);
    }
}

#[test]
fn envelope_parameters_are_validated() {
    assert!(EnvelopeParams::new(0.02, 0.05, 1.0).is_err());
    assert!(EnvelopeParams::new(0.05, 0.0, 1.0).is_err());
    assert!(EnvelopeParams::new(0.05, 0.02, f64::INFINITY).is_err());
}

#[test]
fn lasry_lions_converges_as_the_parameters_shrink() {
    let g = segment(0.0, 1.0, 257);
    let f = sample(&g, |p| (p[0] - 0.3).abs() - 0.5 * (p[0] - 0.7).abs());
    let dists: Vec<f64> = (1..=9)
        .map(|k| {
            let lambda = 0.5f64.powi(k);
            lasry_lions(&g, &f, &EnvelopeParams::new(lambda, lambda / 2.0, 1.5).unwrap()).unwrap().sup_distance
        })
        .collect();
    assert!(dists.windows(2).all(|w| w[1] <= w[0]), "{dists:?}");
    assert!(*dists.last().unwrap() < 3.0 * g.mesh());
}

#[test]
fn flatten_values() {
    let eps: f64 = 0.2;
    assert_eq!(flatten_value(eps / 2.0, eps), 0.0);
    assert_eq!(flatten_value(-eps / 2.0, eps), 0.0);
    assert!((flatten_value(1.0 + eps / 2.0, eps) - 1.0).abs() < 1e-15);
    assert!((flatten_value(-1.0 - eps / 2.0, eps) + 1.0).abs() < 1e-15);
    assert!(flatten(&[1.0], 0.0).is_err());
}

#[test]
fn dual_gradients_of_linear_fields() {
    let g = square(33, Norm::L1);
    let v = sample(&g, |p| p[0]);
    assert!(dual_grad_field(&g, &v).unwrap().into_iter().flatten().all(|d| (d - 1.0).abs() < 1e-12));
    let g = square(33, Norm::L2);
    let v = sample(&g, |p| (p[0] + p[1]) / 2.0);
    let grads = dual_grad_field(&g, &v).unwrap();
    assert!(grads.iter().flatten().all(|d| (d - 0.5f64.sqrt()).abs() < 1e-12));
    assert_eq!(grads.iter().flatten().count(), g.interior_nodes().len());
    let c = vec![3.0; g.len()];
    assert!(dual_grad_field(&g, &c).unwrap().into_iter().flatten().all(|d| d == 0.0));
}

#[test]
fn gradient_bound_controls_the_lipschitz_constant() {
    let g = square(65, Norm::L2);
    let f = cone_field(&g, 32, 1.0);
    let v = mollify(&g, &f, &Kernel::bump(&g, 0.08).unwrap()).unwrap();
    let max_grad = dual_grad_field(&g, v.values()).unwrap().into_iter().flatten().fold(0.0f64, f64::max);
    let lip = g.lip(v.values(), &g.all_nodes(), DEFAULT_TOL).unwrap();
    assert!(lip <= max_grad + 5.0 * g.mesh());
}

#[test]
fn constant_radius_matches_mollify() {
    let g = square(49, Norm::L2);
    let f = cone_field(&g, 33, 1.0);
    let r = 0.1;
    let var = variable_mollify(&g, &f, &vec![r; g.len()]).unwrap();
    let fixed = mollify(&g, &f, &Kernel::bump(&g, r).unwrap()).unwrap();
    for k in 0..g.len() {
        assert!((var.field.values()[k] - fixed.values()[k]).abs() <= 1e-12);
    }
}

#[test]
fn clamped_radii_keep_boundary_values() {
    let disc = GridDomain::from_predicate(2, [0.0, 0.0], [1.0, 1.0], [81, 81], NormContext::new(Norm::L2), |p: [f64; 2]| {
        (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) <= 0.2
    })
    .unwrap();
    let u = cone_field(&disc, 34, 1.0);
    let radii = clamped_radii(&disc, 0.1, 0.5);
    let v = variable_mollify(&disc, &u, &radii).unwrap();
    let dist = disc.boundary_distance();
    for k in disc.inside_nodes() {
        assert!(radii[k] <= 0.1 && radii[k] <= dist[k] / 2.0);
        assert!((v.field.values()[k] - u[k]).abs() <= dist[k] + 1e-12);
        assert!((v.field.values()[k] - u[k]).abs() <= radii[k] * v.local_slope[k] + 1e-12);
    }
    for k in disc.boundary_nodes() {
        assert_eq!(v.field.values()[k], u[k]);
    }
}

#[test]
fn variable_mollify_fixes_affine_fields_and_rejects_tiny_radii() {
    let g = square(49, Norm::LInf);
    let f = sample(&g, |p| 0.2 * p[0] - 0.6 * p[1]);
    let radii: Vec<f64> = (0..g.len()).map(|k| 0.05 + 0.05 * g.point(k)[0]).collect();
    let v = variable_mollify(&g, &f, &radii).unwrap();
    for k in away_from_edges(&g, 5) {
        assert!((v.field.values()[k] - f[k]).abs() <= 1e-12);
    }
    let mut bad = radii.clone();
    bad[100] = g.mesh();
    assert!(matches!(variable_mollify(&g, &f, &bad), Err(Error::UnderResolved(_))));
}

#[test]
fn shaped_tolerance_of_a_constant_profile() {
    let out = tolerance_shape(&vec![0.6f64; 50], 0.1, 1.0).unwrap();
    assert!(out.iter().all(|d: &f64| (d - 0.2).abs() <= 1e-12));
}

#[test]
fn shaped_tolerance_of_a_step_is_a_ramp() {
    let dr = 0.01;
    let r0 = 2.0;
    let l: Vec<f64> = (0..400).map(|i| if (i as f64) * dr < r0 - 1e-12 { 0.2 } else { 0.8 }).collect();
    let out = tolerance_shape(&l, dr, 1.0).unwrap();
    for (i, d) in out.iter().enumerate() {
        let t = i as f64 * dr;
        let below = (r0 - t).clamp(0.0, 1.0);
        let exact = 0.4 * below + 0.1 * (1.0 - below);
        assert!((d - exact).abs() <= 0.3 * dr + 1e-12, "t = {t}: {d} vs {exact}");
        assert!(*d <= (1.0 - l[i]) / 2.0 + 1e-12);
    }
}

#[test]
fn shaped_tolerance_rejects_profiles_above_k() {
    assert!(matches!(tolerance_shape(&[0.5, 1.2], 0.5, 1.0), Err(Error::Precondition(_))));
    assert!(matches!(tolerance_shape(&[0.5, 0.4], 0.5, 1.0), Err(Error::Precondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flatten_properties(seed in any::<u64>(), eps in 0.001f64..1.0) {
        let g = square(17, Norm::L2);
        let f: Vec<f64> = cone_field(&g, seed, 2.0);
        let flat = flatten(&f, eps).unwrap();
        let all = g.all_nodes();
        for (a, b) in flat.values().iter().zip(&f) {
            prop_assert!((a - b).abs() <= eps / 2.0);
            if b.abs() <= eps / 2.0 {
                prop_assert_eq!(*a, 0.0);
            }
        }
        let before = g.lip(&f, &all, DEFAULT_TOL).unwrap();
        let after = g.lip(flat.values(), &all, DEFAULT_TOL).unwrap();
        prop_assert!(after <= before + 1e-12);
        let smaller = eps * 0.5;
        let twice = flatten(flat.values(), smaller).unwrap();
        for k in 0..g.len() {
            if f[k].abs() <= eps / 2.0 {
                prop_assert_eq!(twice.values()[k], flat.values()[k]);
            }
        }
    }

    #[test]
    fn moreau_envelopes_sandwich_the_field(seed in any::<u64>(), lambda in 0.01f64..0.2) {
        let g = square(25, Norm::L2);
        let f = cone_field(&g, seed, 1.0);
        let inf = moreau_inf(&g, &f, lambda, 1.0).unwrap();
        let sup = moreau_sup(&g, &f, lambda, 1.0).unwrap();
        for k in 0..g.len() {
            prop_assert!(inf.field.values()[k] <= f[k] && f[k] <= sup.field.values()[k]);
        }
    }
}

#[test]
fn single_precision_envelope() {
    let g: GridDomain<f32> = GridDomain::rectangle(2, [0.0, 0.0], [1.0, 1.0], [33, 33], NormContext::new(Norm::L2)).unwrap();
    let f: Vec<f32> = (0..g.len()).map(|k| (g.point(k)[0] - 0.5).abs()).collect();
    let ll = lasry_lions(&g, &f, &EnvelopeParams::new(0.05f32, 0.02, 1.0).unwrap()).unwrap();
    assert!(g.lip(ll.field.values(), &g.all_nodes(), 1e-5).unwrap() <= 1.0 + 1e-5);
}
