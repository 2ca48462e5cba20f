//! End-to-end acceptance run: one line per criterion with its measured
//! quantities and wall time. Exits nonzero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use lipschitz_approx::io::write_grid;
use lipschitz_approx::smooth::{check_local_lip, max_mesh_constant, sample_balls};
use lipschitz_approx::{
    almost_classical, flatten, global_approx, inf_convolution, l1_disc_case, lasry_lions, linf_image_case, local_step,
    moreau_inf, moreau_sup, sup_convolution, EikonalParams, EnvelopeParams, ExtensionProblem, GlobalParams, GridDomain,
    GridField, LocalStepInput, MetricSpace, Norm, NormContext, DEFAULT_TOL,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! require {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn local_step_suite() -> Outcome {
    let mut r = rng(1001);
    let (mut worst_lip, mut worst_dev, mut worst_rep) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let count = 500;
    for case in 0..count {
        let n = r.random_range(3..=200);
        let space = random_space(&mut r, n);
        let p = r.random_range(0.05..0.6);
        let f = random_subset(&mut r, n, p);
        let u0 = random_lipschitz(&mut r, &space, 1.0);
        let mu = r.random_range(0.0..0.9);
        let lambda = r.random_range(mu + 1e-3..1.0 - 1e-6);
        let g = random_lipschitz(&mut r, &space, mu);
        let u_mu: Vec<f64> = f.iter().map(|&y| g[y]).collect();
        let delta = f.iter().zip(&u_mu).fold(0.0f64, |m, (&y, v)| m.max((v - u0[y]).abs())) + r.random_range(0.0..0.05);
        let input = LocalStepInput { space: &space, constraint: &f, u0: &u0, u_mu: &u_mu, mu, delta, lambda, tol: DEFAULT_TOL };
        let res = local_step(&input).map_err(|e| format!("instance {case}: {e}"))?;
        let u = res.u_lambda.values();
        let lip = pair_lip(&space, u, &all(n));
        require!(lip <= lambda + 1e-9, "instance {case}: lip {lip} > lambda {lambda}");
        worst_lip = worst_lip.max(lip - lambda);
        for (k, &y) in f.iter().enumerate() {
            require!(u[y] == u_mu[k], "instance {case}: u differs from u_mu on F");
        }
        let dev = (0..n).fold(0.0f64, |m, x| m.max((u0[x] - u[x]).abs()));
        require!(dev <= delta + res.eps_lambda + 1e-9, "instance {case}: deviation {dev}");
        worst_dev = worst_dev.max(dev - delta - res.eps_lambda);
        let s: Vec<usize> = (0..n).filter(|&x| u[x] >= u0[x] + delta + res.eps_lambda / 2.0).collect();
        let mut anchors: Vec<usize> = f.iter().chain(&s).copied().collect();
        anchors.sort_unstable();
        anchors.dedup();
        let vals: Vec<f64> = anchors.iter().map(|&y| u[y]).collect();
        let v = cone_min(&space, &anchors, &vals, lambda);
        let g_count = (0..n).filter(|x| !anchors.contains(x) && v[*x] >= u0[*x] + delta + res.eps_lambda).count();
        require!(g_count == 0 && res.g_lambda.is_empty(), "instance {case}: G nonempty");
        let rep = (0..n).fold(0.0f64, |m, x| m.max((u[x] - v[x]).abs()));
        require!(rep <= 1e-9, "instance {case}: representation gap {rep}");
        worst_rep = worst_rep.max(rep);
    }
    Ok(format!(
        "{count} instances; max lip - lambda {worst_lip:.2e}, max excess deviation {worst_dev:.2e}, max representation gap {worst_rep:.2e}"
    ))
}

fn global_suite() -> Outcome {
    let mut r = rng(1002);
    let count = 100;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut stages = 0;
    for case in 0..count {
        let n = r.random_range(4..=150);
        let space = random_space(&mut r, n);
        let p = r.random_range(0.1..0.5);
        let f = random_subset(&mut r, n, p);
        let slope = r.random_range(0.3..0.95);
        let u0 = random_lipschitz(&mut r, &space, slope);
        let eps = r.random_range(0.02..0.5);
        let mut params = GlobalParams::new(eps);
        params.k = Some(1.0);
        let g = global_approx(&space, &f, &u0, &params).map_err(|e| format!("instance {case}: {e}"))?;
        let u = g.u.values();
        for &y in &f {
            require!(u[y] == u0[y], "instance {case}: u differs from u0 on F");
        }
        let dev = (0..n).fold(0.0f64, |m, x| m.max((u[x] - u0[x]).abs()));
        require!(dev <= eps + 1e-9, "instance {case}: deviation {dev} > {eps}");
        for st in &g.schedule.stages {
            let lip = pair_lip(&space, u, &st.set);
            require!(lip <= st.lambda + 1e-9 && st.lambda < g.schedule.k, "instance {case}: stage lip {lip} vs {}", st.lambda);
            require!(st.inequality_lhs <= st.budget + 1e-10, "instance {case}: stage inequality");
            worst_slack = worst_slack.max(st.inequality_lhs - st.budget);
        }
        stages += g.schedule.stages.len();
    }
    Ok(format!("{count} instances, {stages} stages; max stage inequality excess {worst_slack:.2e}"))
}

fn extremal_suite() -> Outcome {
    let mut r = rng(1003);
    let (instances, per) = (20, 100);
    let mut worst = f64::NEG_INFINITY;
    for case in 0..instances {
        let n = r.random_range(10..=120);
        let space = random_space(&mut r, n);
        let anchors = random_subset(&mut r, n, 0.3);
        let lambda = r.random_range(0.2..2.0);
        let full = random_lipschitz(&mut r, &space, lambda);
        let h: Vec<f64> = anchors.iter().map(|&y| full[y]).collect();
        let problem = ExtensionProblem::new(&space, &anchors, &h, lambda).map_err(|e| e.to_string())?;
        let low = sup_convolution(&problem).map_err(|e| e.to_string())?.into_vec();
        let high = inf_convolution(&problem).map_err(|e| e.to_string())?.into_vec();
        let order = (0..n).fold(f64::NEG_INFINITY, |m, x| m.max(low[x] - high[x]));
        require!(order <= 1e-12, "instance {case}: sup_convolution above inf_convolution by {order}");
        for ext in [&low, &high] {
            let lip = pair_lip(&space, ext, &all(n));
            require!(lip <= lambda + 1e-9, "instance {case}: extension lip {lip} > {lambda}");
        }
        let mut found = 0;
        while found < per {
            let mut ys = anchors.clone();
            let mut vals = h.clone();
            for _ in 0..r.random_range(1..4) {
                let x = r.random_range(0..n);
                let t: f64 = r.random();
                ys.push(x);
                vals.push(low[x] + t * (high[x] - low[x]));
            }
            let consistent = (0..ys.len())
                .all(|i| (i + 1..ys.len()).all(|j| (vals[i] - vals[j]).abs() <= lambda * space.dist(ys[i], ys[j]) + 1e-12));
            if !consistent {
                continue;
            }
            found += 1;
            let ext = cone_min(&space, &ys, &vals, lambda);
            for x in 0..n {
                worst = worst.max((low[x] - ext[x]).max(ext[x] - high[x]));
            }
        }
        require!(worst <= 1e-12, "instance {case}: feasible extension outside the sandwich by {worst}");
    }
    Ok(format!("{instances} instances x {per} feasible extensions; max sandwich excess {worst:.2e}"))
}

fn square(n: usize, norm: Norm) -> GridDomain<f64> {
    GridDomain::rectangle(2, [0.0, 0.0], [1.0, 1.0], [n, n], NormContext::new(norm)).unwrap()
}

fn envelope_suite() -> Outcome {
    let segment: GridDomain<f64> = GridDomain::rectangle(1, [0.0, 0.0], [1.0, 0.0], [1025, 1], NormContext::new(Norm::L2)).unwrap();
    let kinked: Vec<f64> = (0..segment.len()).map(|k| (segment.point(k)[0] - 0.3).abs() - 0.5 * (segment.point(k)[0] - 0.7).abs()).collect();
    let mut r = rng(1004);
    let mut runs: Vec<(GridDomain<f64>, Vec<f64>)> = vec![(segment, kinked)];
    for (n, norm) in [(129, Norm::L1), (256, Norm::L2), (129, Norm::LInf)] {
        let g = square(n, norm);
        let tips: Vec<([f64; 2], f64)> = (0..10).map(|_| ([r.random(), r.random()], r.random_range(-0.3..0.3))).collect();
        let f = (0..g.len())
            .map(|k| {
                let p = g.point(k);
                tips.iter().fold(f64::INFINITY, |m, (c, v)| m.min(v + 0.8 * g.vector_norm(p[0] - c[0], p[1] - c[1])))
                    + 0.2 * (p[0] - 0.5).abs()
            })
            .collect();
        runs.push((g, f));
    }
    let mut worst_c = 0.0f64;
    let mut worst_lip = f64::NEG_INFINITY;
    let mut finals = Vec::new();
    for (run, (g, f)) in runs.iter().enumerate() {
        let all_nodes = g.all_nodes();
        let k = g.lip(f, &all_nodes, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let (lambda, mu) = (0.05, 0.02);
        let inf = moreau_inf(g, f, lambda, k).map_err(|e| e.to_string())?.field;
        let sup = moreau_sup(g, f, mu, k).map_err(|e| e.to_string())?.field;
        let ll = lasry_lions(g, f, &EnvelopeParams::new(lambda, mu, k).unwrap()).map_err(|e| e.to_string())?.field;
        let h = g.mesh();
        let balls = sample_balls(g, 50, 40 + run as u64, 2.0 * h, 0.25);
        for (out, expand) in [(&inf, 2.0 * lambda * k), (&sup, 2.0 * mu * k), (&ll, 2.0 * (lambda + mu) * k)] {
            let lip = g.lip(out.values(), &all_nodes, DEFAULT_TOL).map_err(|e| e.to_string())?;
            require!(lip <= k + 1e-9, "run {run}: envelope lip {lip} > K = {k}");
            worst_lip = worst_lip.max(lip - k);
            let checks = check_local_lip(g, f, out.values(), expand, &balls).map_err(|e| e.to_string())?;
            require!(checks.len() >= 50, "run {run}: only {} balls", checks.len());
            worst_c = worst_c.max(max_mesh_constant(&checks, h));
        }
        let mut prev = f64::INFINITY;
        let mut last = f64::INFINITY;
        for step in 1.. {
            let lambda = 0.5f64.powi(step);
            if lambda < h {
                break;
            }
            let ll = lasry_lions(g, f, &EnvelopeParams::new(lambda, lambda / 2.0, k).unwrap()).map_err(|e| e.to_string())?;
            require!(ll.sup_distance <= prev, "run {run}: distance increased at lambda = {lambda}");
            prev = ll.sup_distance;
            last = ll.sup_distance;
        }
        require!(last < 3.0 * h, "run {run}: final distance {last} not below 3h = {}", 3.0 * h);
        finals.push(last / h);
    }
    require!(worst_c <= 5.0, "mesh constant {worst_c} > 5");
    Ok(format!(
        "{} grids up to 256^2; max lip - K {worst_lip:.2e}, mesh constant C = {worst_c:.3}, final distance / h = {:.2?}",
        runs.len(),
        finals
    ))
}

fn flatten_suite() -> Outcome {
    let mut r = rng(1005);
    let mut zeros = 0;
    for case in 0..200 {
        let n = r.random_range(2..=150);
        let space = random_space(&mut r, n);
        let slope = r.random_range(0.1..3.0);
        let f = random_lipschitz(&mut r, &space, slope);
        let eps = r.random_range(1e-4..1.0);
        let phi = flatten(&f, eps).map_err(|e| e.to_string())?;
        let phi = phi.values();
        for x in 0..n {
            require!((phi[x] - f[x]).abs() <= eps / 2.0, "instance {case}: |phi - f| > eps/2 at {x}");
            if f[x].abs() <= eps / 2.0 {
                require!(phi[x] == 0.0, "instance {case}: flat zone value {}", phi[x]);
                zeros += 1;
            }
        }
        let (before, after) = (pair_lip(&space, &f, &all(n)), pair_lip(&space, phi, &all(n)));
        require!(after <= before + 1e-12, "instance {case}: lip grew from {before} to {after}");
    }
    Ok(format!("200 instances; {zeros} flat-zone nodes exactly zero"))
}

fn eikonal_suite() -> Outcome {
    let n = 257;
    let h = 1.0 / 256.0;
    let disc = |norm| {
        GridDomain::from_predicate(2, [0.0, 0.0], [1.0, 1.0], [n, n], NormContext::new(norm), |p: [f64; 2]| {
            (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) <= 0.25
        })
        .unwrap()
    };
    let cases: Vec<(&str, GridDomain<f64>, fn([f64; 2]) -> f64)> = vec![
        ("l2 square, u0 = 0", square(n, Norm::L2), |_| 0.0),
        ("l2 square, u0 = 0.3x - 0.2y", square(n, Norm::L2), |p| 0.3 * p[0] - 0.2 * p[1]),
        ("l2 disc, u0 = 0.3x - 0.2y", disc(Norm::L2), |p| 0.3 * p[0] - 0.2 * p[1]),
        ("l1 square, u0 = 0.5x", square(n, Norm::L1), |p| 0.5 * p[0]),
        ("l1 disc, u0 = 0", disc(Norm::L1), |_| 0.0),
    ];
    let mut lines = Vec::new();
    for (name, g, u0f) in cases {
        let u0: Vec<f64> = (0..g.len()).map(|k| u0f(g.point(k))).collect();
        let lb = g.lip(&u0, &g.boundary_nodes(), DEFAULT_TOL).unwrap();
        require!(lb <= 0.5 + 1e-12, "{name}: boundary lip {lb}");
        let sol = almost_classical(&g, &u0, &EikonalParams::new(0.1)).map_err(|e| format!("{name}: {e}"))?;
        let rep = &sol.report;
        require!(rep.boundary_error == 0.0, "{name}: boundary error {}", rep.boundary_error);
        require!(rep.sup_error <= 0.1 + 1e-9, "{name}: sup error {}", rep.sup_error);
        require!(rep.lip_w <= 1.0 + 5.0 * h, "{name}: lip(w) {}", rep.lip_w);
        require!(rep.residual_fraction <= 0.05, "{name}: residual fraction {}", rep.residual_fraction);
        lines.push(format!("{name}: residual {:.2}%, lip(w) {:.4}", 100.0 * rep.residual_fraction, rep.lip_w));
    }
    Ok(lines.join("; "))
}

fn casebook_suite() -> Outcome {
    let l1 = l1_disc_case::<f64>(1024, 127).map_err(|e| e.to_string())?;
    let image = linf_image_case::<f64>(1024, 127).map_err(|e| e.to_string())?;
    let two_mesh = 2.0 * l1.mesh;
    for res in [&l1, &image] {
        for (x, up, lo) in res.profile() {
            require!((up - x.abs()).abs() <= two_mesh && (lo - x.abs()).abs() <= two_mesh, "{}: axis value at {x}", res.norm);
        }
        require!(res.slope_gap >= 1.9, "{}: slope gap {}", res.norm, res.slope_gap);
    }
    require!(l1.verdict && image.verdict, "verdicts {} / {}", l1.verdict, image.verdict);
    let iso = image.isometry_error.unwrap_or(f64::INFINITY);
    require!(iso <= 1e-12, "isometry error {iso}");
    Ok(format!("slope gap {:.4}, image slope gap {:.4}, isometry error {iso:.1e}", l1.slope_gap, image.slope_gap))
}

/// Serialized outputs of a fixed set of runs, to be compared across pool widths.
fn determinism_payload() -> Vec<u8> {
    let mut out = Vec::new();
    let mut r: ChaCha8Rng = rng(1008);
    let space = MetricSpace::from_points2(&random_points(&mut r, 400), Norm::L2).unwrap();
    let f = random_subset(&mut r, 400, 0.2);
    let u0 = random_lipschitz(&mut r, &space, 0.7);
    let mut params = GlobalParams::new(0.1);
    params.k = Some(1.0);
    let g = global_approx(&space, &f, &u0, &params).unwrap();
    for v in g.u.values() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    let grid = GridDomain::from_predicate(2, [0.0, 0.0], [1.0, 1.0], [129, 129], NormContext::new(Norm::L2), |p: [f64; 2]| {
        (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) <= 0.2
    })
    .unwrap();
    let u0: Vec<f64> = (0..grid.len()).map(|k| 0.3 * grid.point(k)[0]).collect();
    let ll = lasry_lions(&grid, &u0, &EnvelopeParams::new(0.05, 0.02, 0.3).unwrap()).unwrap();
    let sol = almost_classical(&grid, &u0, &EikonalParams::new(0.2)).unwrap();
    let fields = [GridField::full("ll", ll.field.values()), GridField::full("w", &sol.w), GridField::partial("res", sol.residual.clone())];
    write_grid(&mut out, &grid, &fields).unwrap();
    out.extend(format!("{:?}", sol.report.checks).bytes());
    out
}

fn determinism_suite() -> Outcome {
    let run = |width: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(width).build().unwrap().install(determinism_payload)
    };
    let (one, four) = (run(1), run(4));
    require!(one == four, "outputs differ between 1 and 4 threads");
    Ok(format!("{} bytes identical with 1 and 4 threads", one.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 local step", local_step_suite),
        ("2 global approximation", global_suite),
        ("3 extremal extensions", extremal_suite),
        ("4 envelopes", envelope_suite),
        ("5 flattening", flatten_suite),
        ("6 eikonal pipeline", eikonal_suite),
        ("7 casebook", casebook_suite),
        ("8 determinism", determinism_suite),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
