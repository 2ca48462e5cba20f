//! One driver per command: `compute` runs the pipeline and collects artifacts,
//! `audit` re-derives the recorded inequalities from the artifacts alone.

use std::fs::File;
use std::io::BufReader;

use lipschitz_approx::boundary::{epsilon_lambda, global_approx, local_step, GlobalParams, LocalStepInput};
use lipschitz_approx::casebook::{l1_disc_case, linf_image_case};
use lipschitz_approx::eikonal::{almost_classical, EikonalParams, RESIDUAL_TOL};
use lipschitz_approx::extend::{inf_convolution, sup_convolution, ExtensionProblem};
use lipschitz_approx::io::{read_grid, read_point_cloud};
use lipschitz_approx::smooth::{
    check_local_lip, clamped_radii, dual_grad_field, flatten, lasry_lions, max_mesh_constant, moreau_sup,
    sample_balls, variable_mollify, EnvelopeParams,
};
use lipschitz_approx::{Check, GridDomain, GridField, MetricSpace, Norm, NormContext, PointCloud, PointTag, Report};

use crate::artifact::{field, Artifact, Table};
use crate::config::{Case, Command, RunConfig};
use crate::CliError;

pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_ENVELOPE_LAMBDA: f64 = 0.05;
pub const DEFAULT_ENVELOPE_MU: f64 = 0.02;
pub const AXIS_SAMPLES: usize = 129;
pub const SMOOTHING_REACH: f64 = 0.5;
pub const BALL_COUNT: usize = 50;
pub const MAX_MESH_CONSTANT: f64 = 5.0;
/// Allowed excess of a schedule stage over its budget.
pub const STAGE_SLACK: f64 = 1e-10;

/// Result of a computation before anything is written.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

pub fn compute(cfg: &RunConfig) -> Result<Run, CliError> {
    let mut report = Report::new();
    cfg.record(&mut report);
    if matches!(cfg.command, Command::Lip | Command::Extend | Command::LocalStep | Command::GlobalApprox) {
        report.set("norm", cloud_norm(cfg));
    }
    let artifacts = match cfg.command {
        Command::Lip => lip(cfg, &mut report)?,
        Command::Extend => extend(cfg, &mut report)?,
        Command::LocalStep => local(cfg, &mut report)?,
        Command::GlobalApprox => global(cfg, &mut report)?,
        Command::Smooth => smooth(cfg, &mut report)?,
        Command::Envelope => envelope(cfg, &mut report)?,
        Command::Eikonal => eikonal(cfg, &mut report)?,
        Command::Casebook => casebook(cfg, &mut report)?,
        Command::Verify => return Err(CliError::Input("verify has no computation of its own".into())),
    };
    let names: Vec<&str> = artifacts.iter().map(|a| a.file.as_str()).collect();
    report.set("artifacts", names.join(" "));
    Ok(Run { report, artifacts })
}

/// Checks recomputed from the artifacts, the inputs and the recorded parameters.
pub fn audit(cfg: &RunConfig, report: &Report, artifacts: &[Artifact]) -> Result<Vec<Check>, CliError> {
    let get = |file: &str| {
        artifacts
            .iter()
            .find(|a| a.file == file)
            .ok_or_else(|| CliError::Input(format!("missing artifact {file}")))
    };
    match cfg.command {
        Command::Lip => audit_lip(cfg, report),
        Command::Extend => audit_extend(cfg, report, get("lower.csv")?, get("upper.csv")?),
        Command::LocalStep => audit_local(cfg, report, get("u_lambda.csv")?),
        Command::GlobalApprox => audit_global(cfg, report, get("u.csv")?, get("stages.dat")?),
        Command::Smooth => audit_smooth(get("smooth.grid")?),
        Command::Envelope => audit_envelope(cfg, report, get("envelope.grid")?),
        Command::Eikonal => audit_eikonal(cfg, report, get("eikonal.grid")?),
        Command::Casebook => audit_casebook(cfg, get("profile.dat")?),
        Command::Verify => Ok(Vec::new()),
    }
}

fn input_path(cfg: &RunConfig) -> Result<&std::path::Path, CliError> {
    cfg.input.as_deref().ok_or_else(|| CliError::Input(format!("{} needs --input", cfg.command.name())))
}

fn open(cfg: &RunConfig) -> Result<File, CliError> {
    let path = input_path(cfg)?;
    File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

fn in_input(cfg: &RunConfig, e: lipschitz_approx::Error) -> CliError {
    let path = cfg.input.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
    CliError::Input(format!("{path}: {e}"))
}

fn load_cloud(cfg: &RunConfig) -> Result<(PointCloud<f64>, MetricSpace<f64>), CliError> {
    let cloud: PointCloud<f64> = read_point_cloud(open(cfg)?).map_err(|e| in_input(cfg, e))?;
    let space = cloud.space(cloud_norm(cfg))?;
    Ok((cloud, space))
}

fn cloud_norm(cfg: &RunConfig) -> Norm {
    cfg.norm.unwrap_or(Norm::L2)
}

fn load_grid(cfg: &RunConfig) -> Result<(GridDomain<f64>, GridField<f64>), CliError> {
    let (grid, fields): (GridDomain<f64>, Vec<GridField<f64>>) =
        read_grid(BufReader::new(open(cfg)?)).map_err(|e| in_input(cfg, e))?;
    let chosen = match &cfg.field {
        Some(name) => field(&fields, name)?.clone(),
        None => fields.into_iter().next().ok_or_else(|| CliError::Input("grid file has no fields".into()))?,
    };
    let grid = match cfg.norm {
        Some(n) if n != grid.norm().p => {
            GridDomain::from_kinds(grid.dim(), grid.lo(), grid.spacing(), grid.shape(), NormContext::new(n), grid.kinds().to_vec())?
        }
        _ => grid,
    };
    Ok((grid, chosen))
}

/// Values on every node, zero on exterior nodes left undefined.
fn inside_values(grid: &GridDomain<f64>, f: &GridField<f64>) -> Result<Vec<f64>, CliError> {
    f.values
        .iter()
        .enumerate()
        .map(|(k, v)| match (v, grid.kind(k).is_inside()) {
            (Some(x), _) => Ok(*x),
            (None, false) => Ok(0.0),
            (None, true) => Err(CliError::Input(format!("field `{}` undefined at inside node {k}", f.name))),
        })
        .collect()
}

/// `max |f(i) − f(j)| / d(i,j)` over all pairs of `idx`, by plain enumeration.
fn pair_lip(space: &MetricSpace<f64>, f: &[f64], idx: &[usize]) -> f64 {
    let mut best: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let df = (f[i] - f[j]).abs();
            let d = space.dist(i, j);
            if d > 0.0 {
                best = best.max(df / d);
            } else if df > 0.0 {
                return f64::INFINITY;
            }
        }
    }
    best
}

fn max_abs_diff(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    idx.iter().fold(0.0, |m: f64, &i| m.max((a[i] - b[i]).abs()))
}

fn with_values(cloud: &PointCloud<f64>, values: &[f64]) -> PointCloud<f64> {
    PointCloud { values: values.iter().map(|&v| Some(v)).collect(), ..cloud.clone() }
}

fn cloud_values(a: &Artifact) -> Result<Vec<f64>, CliError> {
    let c = a.as_cloud()?;
    let all: Vec<usize> = (0..c.len()).collect();
    Ok(c.required_values(&all)?)
}

fn valued(cloud: &PointCloud<f64>) -> Vec<usize> {
    (0..cloud.len()).filter(|&i| cloud.values[i].is_some()).collect()
}

fn lip(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let (cloud, space) = load_cloud(cfg)?;
    let idx = valued(&cloud);
    let vals = cloud.required_values(&idx)?;
    let sub = space.subspace(&idx)?;
    let lip = sub.lip_all(&vals, cfg.tol)?;
    report.set("points", idx.len());
    report.set("lip", lip.value);
    if let Some((a, b)) = lip.witness {
        report.set("witness", format!("{} {}", cloud.ids[idx[a]], cloud.ids[idx[b]]));
    }
    let bnd: Vec<usize> = cloud.tagged(PointTag::Boundary).into_iter().filter(|&i| cloud.values[i].is_some()).collect();
    if !bnd.is_empty() {
        let bv = cloud.required_values(&bnd)?;
        report.set("lip_boundary", space.subspace(&bnd)?.lip_all(&bv, cfg.tol)?.value);
    }
    Ok(Vec::new())
}

fn audit_lip(cfg: &RunConfig, report: &Report) -> Result<Vec<Check>, CliError> {
    let (cloud, space) = load_cloud(cfg)?;
    let idx = valued(&cloud);
    let f: Vec<f64> = cloud.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let recomputed = pair_lip(&space, &f, &idx);
    let recorded: f64 = report.parse("lip")?;
    let mut checks = vec![Check::new("lip matches pair enumeration", (recorded - recomputed).abs(), cfg.tol)];
    if let Some(k) = cfg.k {
        checks.push(Check::new("lip <= K", recomputed, k));
    }
    Ok(checks)
}

fn extension_data(cfg: &RunConfig) -> Result<(PointCloud<f64>, MetricSpace<f64>, Vec<usize>, Vec<f64>), CliError> {
    let (cloud, space) = load_cloud(cfg)?;
    let anchors = valued(&cloud);
    if anchors.is_empty() {
        return Err(CliError::Input("no point carries a value".into()));
    }
    let h = cloud.required_values(&anchors)?;
    Ok((cloud, space, anchors, h))
}

fn extend(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let (cloud, space, anchors, h) = extension_data(cfg)?;
    let anchor_lip = space.subspace(&anchors)?.lip_all(&h, cfg.tol)?.value;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None if anchor_lip > 0.0 => anchor_lip,
        None => return Err(CliError::Input("anchor values are constant; pass --lambda".into())),
    };
    if anchor_lip > lambda + cfg.tol {
        return Err(CliError::Input(format!(
            "domain error: lip(h, F) = {anchor_lip} exceeds lambda = {lambda}, so no extension interpolates"
        )));
    }
    let problem = ExtensionProblem::new(&space, &anchors, &h, lambda)?;
    let lower = sup_convolution(&problem)?;
    let upper = inf_convolution(&problem)?;
    let gap = (0..space.len()).fold(0.0, |m: f64, i| m.max(upper[i] - lower[i]));
    report.set("lambda", lambda);
    report.set("anchors", anchors.len());
    report.set("points", space.len());
    report.set("anchor_lip", anchor_lip);
    report.set("max_gap", gap);
    Ok(vec![
        Artifact::cloud("lower.csv", with_values(&cloud, &lower)),
        Artifact::cloud("upper.csv", with_values(&cloud, &upper)),
    ])
}

fn audit_extend(cfg: &RunConfig, report: &Report, lower: &Artifact, upper: &Artifact) -> Result<Vec<Check>, CliError> {
    let (_, space, anchors, h) = extension_data(cfg)?;
    let lambda: f64 = report.parse("lambda")?;
    let (lo, up) = (cloud_values(lower)?, cloud_values(upper)?);
    let all: Vec<usize> = (0..space.len()).collect();
    let anchor_dev = |f: &[f64]| anchors.iter().zip(&h).fold(0.0, |m: f64, (&i, &v)| m.max((f[i] - v).abs()));
    Ok(vec![
        Check::new("lip(lower) <= lambda", pair_lip(&space, &lo, &all), lambda + cfg.tol),
        Check::new("lip(upper) <= lambda", pair_lip(&space, &up, &all), lambda + cfg.tol),
        Check::new("lower <= upper", all.iter().fold(f64::NEG_INFINITY, |m, &i| m.max(lo[i] - up[i])), cfg.tol),
        Check::new("lower = h on anchors", anchor_dev(&lo), cfg.tol),
        Check::new("upper = h on anchors", anchor_dev(&up), cfg.tol),
    ])
}

/// Boundary set, `u0`, and `u_μ` on the boundary set: `u0` scaled down to be `μ`-Lipschitz there.
struct LocalData {
    cloud: PointCloud<f64>,
    space: MetricSpace<f64>,
    f: Vec<usize>,
    u0: Vec<f64>,
    u_mu: Vec<f64>,
    delta: f64,
}

fn local_data(cfg: &RunConfig) -> Result<LocalData, CliError> {
    let (cloud, space) = load_cloud(cfg)?;
    let f = cloud.tagged(PointTag::Boundary);
    if f.is_empty() {
        return Err(CliError::Input("no boundary-tagged points".into()));
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    let u0 = cloud.required_values(&all)?;
    let mu = cfg.mu.unwrap_or(0.0);
    let lip_f = pair_lip(&space, &u0, &f);
    let scale = if lip_f > mu { mu / lip_f } else { 1.0 };
    let u_mu: Vec<f64> = f.iter().map(|&i| scale * u0[i]).collect();
    let needed = f.iter().zip(&u_mu).fold(0.0, |m: f64, (&i, &v)| m.max((v - u0[i]).abs()));
    let delta = match cfg.delta {
        Some(d) if d + cfg.tol < needed => {
            return Err(CliError::Input(format!("domain error: delta = {d} is below max |u_mu - u0| = {needed} on F")))
        }
        Some(d) => d,
        None => needed,
    };
    Ok(LocalData { cloud, space, f, u0, u_mu, delta })
}

fn local(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let d = local_data(cfg)?;
    let (lambda, mu) = (cfg.lambda.unwrap_or(f64::NAN), cfg.mu.unwrap_or(f64::NAN));
    let r = local_step(&LocalStepInput {
        space: &d.space,
        constraint: &d.f,
        u0: &d.u0,
        u_mu: &d.u_mu,
        mu,
        delta: d.delta,
        lambda,
        tol: cfg.tol,
    })?;
    report.set("points", d.space.len());
    report.set("boundary_points", d.f.len());
    report.set("delta", d.delta);
    report.set("mu_used", r.mu_used);
    report.set("eps_lambda", r.eps_lambda);
    report.set("certified_bound", r.certified_bound);
    report.set("s_lambda", r.s_lambda.len());
    report.set("g_lambda", r.g_lambda.len());
    report.set("measured_lip", r.measured_lip);
    report.set("max_deviation", r.max_deviation);
    report.set("representation_gap", r.representation_gap);
    Ok(vec![Artifact::cloud("u_lambda.csv", with_values(&d.cloud, &r.u_lambda))])
}

fn audit_local(cfg: &RunConfig, report: &Report, out: &Artifact) -> Result<Vec<Check>, CliError> {
    let d = local_data(cfg)?;
    let u = cloud_values(out)?;
    let lambda = cfg.lambda.unwrap_or(f64::NAN);
    let mu: f64 = report.parse("mu_used")?;
    let n = d.space.len();
    let all: Vec<usize> = (0..n).collect();
    let mut in_f = vec![false; n];
    for &i in &d.f {
        in_f[i] = true;
    }
    let rest: Vec<usize> = all.iter().copied().filter(|&i| !in_f[i]).collect();
    let (mut diam, mut dist) = (0.0f64, f64::INFINITY);
    for &x in &rest {
        for &y in &rest {
            diam = diam.max(d.space.dist(x, y));
        }
        for &y in &d.f {
            dist = dist.min(d.space.dist(x, y));
        }
    }
    let eps_l = epsilon_lambda(lambda, mu, diam, if rest.is_empty() { 0.0 } else { dist }, rest.is_empty())?;
    let bound = d.delta + eps_l;

    let s: Vec<usize> = all.iter().copied().filter(|&i| u[i] >= d.u0[i] + bound - eps_l / 2.0).collect();
    let anchors: Vec<usize> = all.iter().copied().filter(|&i| in_f[i] || s.contains(&i)).collect();
    let v: Vec<f64> = all
        .iter()
        .map(|&x| anchors.iter().fold(f64::INFINITY, |m, &y| m.min(u[y] + lambda * d.space.dist(x, y))))
        .collect();
    let g = all.iter().filter(|&&x| !anchors.contains(&x) && v[x] >= d.u0[x] + bound).count();
    let f_dev = d.f.iter().zip(&d.u_mu).fold(0.0, |m: f64, (&i, &w)| m.max((u[i] - w).abs()));
    Ok(vec![
        Check::new("lip(u_lambda) <= lambda", pair_lip(&d.space, &u, &all), lambda + cfg.tol),
        Check::new("u_lambda = u_mu on F", f_dev, 0.0),
        Check::new("|u0 - u_lambda| <= delta + eps_lambda", max_abs_diff(&u, &d.u0, &all), bound + cfg.tol),
        Check::new("G_lambda is empty", g as f64, 0.0),
        Check::new("u_lambda equals its re-anchored inf-convolution", max_abs_diff(&u, &v, &all), cfg.tol),
    ])
}

fn global_data(cfg: &RunConfig) -> Result<(PointCloud<f64>, MetricSpace<f64>, Vec<usize>, Vec<f64>), CliError> {
    let (cloud, space) = load_cloud(cfg)?;
    let f = cloud.tagged(PointTag::Boundary);
    if f.is_empty() {
        return Err(CliError::Input("no boundary-tagged points".into()));
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    let u0 = cloud.required_values(&all)?;
    Ok((cloud, space, f, u0))
}

fn global(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let (cloud, space, f, u0) = global_data(cfg)?;
    let eps = cfg.eps.unwrap_or(DEFAULT_EPS);
    let mut params = GlobalParams::new(eps);
    params.k = cfg.k;
    params.tol = cfg.tol;
    let g = global_approx(&space, &f, &u0, &params)?;
    let sch = &g.schedule;
    report.set("eps", eps);
    report.set("points", space.len());
    report.set("boundary_points", f.len());
    report.set("K_used", sch.k);
    report.set("lambda_0", sch.lambda0);
    report.set("base_point", sch.base_point);
    report.set("base_id", &cloud.ids[sch.base_point]);
    report.set("ball_step", sch.ball_step);
    report.set("stages", sch.stages.len());
    report.set("sup_error", g.sup_error);
    let mut stages = Table::new(&["n", "size", "radius", "lambda", "eps_lambda", "budget", "inequality", "measured_lip", "sup_error"]);
    for (plan, st) in sch.stages.iter().zip(&g.stages) {
        stages.push(vec![
            st.n as f64,
            st.size as f64,
            plan.radius,
            st.lambda,
            st.eps_lambda,
            st.budget,
            plan.inequality_lhs,
            st.measured_lip,
            st.sup_error,
        ]);
        report.push_check(Check::new(format!("stage {} inequality <= eps/2^{}", st.n, st.n), plan.inequality_lhs, st.budget + STAGE_SLACK));
    }
    Ok(vec![Artifact::cloud("u.csv", with_values(&cloud, &g.u)), Artifact::table("stages.dat", stages)])
}

fn audit_global(cfg: &RunConfig, report: &Report, out: &Artifact, stages: &Artifact) -> Result<Vec<Check>, CliError> {
    let (_, space, f, u0) = global_data(cfg)?;
    let u = cloud_values(out)?;
    let eps: f64 = report.parse("eps")?;
    let k: f64 = report.parse("K_used")?;
    let base: usize = report.parse("base_point")?;
    if base >= space.len() {
        return Err(CliError::Input(format!("base point {base} out of range")));
    }
    let all: Vec<usize> = (0..space.len()).collect();
    let mut checks = vec![
        Check::new("u = u0 on F", max_abs_diff(&u, &u0, &f), 0.0),
        Check::new("|u - u0| <= eps", max_abs_diff(&u, &u0, &all), eps + cfg.tol),
    ];
    let t = stages.as_table()?;
    for (n, (radius, lambda)) in t.column("radius")?.into_iter().zip(t.column("lambda")?).enumerate() {
        let set: Vec<usize> = all.iter().copied().filter(|&x| f.contains(&x) || space.dist(base, x) <= radius).collect();
        checks.push(Check::new(format!("lip(u, E_{}) <= lambda_{}", n + 1, n + 1), pair_lip(&space, &u, &set), lambda + cfg.tol));
        checks.push(Check::new(format!("lambda_{} < K", n + 1), lambda, k));
    }
    Ok(checks)
}

fn smooth(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let (grid, f) = load_grid(cfg)?;
    let u = inside_values(&grid, &f)?;
    let eps = cfg.eps.unwrap_or(DEFAULT_EPS);
    let radii = clamped_radii(&grid, eps, SMOOTHING_REACH);
    let v = variable_mollify(&grid, &u, &radii)?.field.into_vec();
    report.set("eps", eps);
    report.set("norm", grid.norm().p);
    report.set("nodes", grid.len());
    report.set("h", grid.mesh());
    report.set("smoothed_nodes", radii.iter().filter(|&&r| r > 0.0).count());
    let inside = grid.inside_nodes();
    report.set("max_change", max_abs_diff(&u, &v, &inside));
    Ok(vec![Artifact::grid(
        "smooth.grid",
        grid,
        vec![GridField::full("u", &u), GridField::full("v", &v), GridField::full("radius", &radii)],
    )])
}

fn audit_smooth(out: &Artifact) -> Result<Vec<Check>, CliError> {
    let (grid, fields) = out.as_grid()?;
    let u = field(fields, "u")?.dense()?;
    let v = field(fields, "v")?.dense()?;
    let r = field(fields, "radius")?.dense()?;
    let inside = grid.inside_nodes();
    let tol = lipschitz_approx::DEFAULT_TOL;
    let lip_u = grid.lip(&u, &inside, tol)?;
    let h = grid.mesh();
    let fixed = inside.iter().filter(|&&k| r[k] == 0.0).fold(0.0, |m: f64, &k| m.max((v[k] - u[k]).abs()));
    let excess = inside.iter().fold(f64::NEG_INFINITY, |m, &k| m.max((v[k] - u[k]).abs() - r[k] * lip_u));
    let grads = dual_grad_field(grid, &v)?;
    let mut c: f64 = 0.0;
    for &k in &inside {
        let (Some(g), true) = (grads[k], r[k] > 0.0) else { continue };
        let local = grid.lip(&u, &grid.ball(k, r[k] + h), tol)?;
        c = c.max((g - local - r[k]) / h);
    }
    Ok(vec![
        Check::new("v = u where the radius is 0", fixed, 0.0),
        Check::new("|v - u| <= radius lip(u)", excess, 1e-12 * (1.0 + lip_u)),
        Check::new("|Dv|_* <= lip(u, ball) + radius + C h: C", c, MAX_MESH_CONSTANT),
    ])
}

fn envelope(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let (grid, f) = load_grid(cfg)?;
    let f = inside_values(&grid, &f)?;
    let lambda = cfg.lambda.unwrap_or(DEFAULT_ENVELOPE_LAMBDA);
    let mu = cfg.mu.unwrap_or(DEFAULT_ENVELOPE_MU);
    let inside = grid.inside_nodes();
    let k = match cfg.k {
        Some(k) => k,
        None => grid.lip(&f, &inside, cfg.tol)?,
    };
    let params = EnvelopeParams::new(lambda, mu, k)?;
    let ll = lasry_lions(&grid, &f, &params)?;
    let sup = moreau_sup(&grid, &f, mu, k)?;
    report.set("lambda", lambda);
    report.set("mu", mu);
    report.set("K", k);
    report.set("norm", grid.norm().p);
    report.set("nodes", grid.len());
    report.set("h", grid.mesh());
    report.set("K_used", ll.k_used);
    report.set("sup_distance", ll.sup_distance);
    let mut fields = vec![
        GridField::full("f", &f),
        GridField::full("inf", &ll.inner),
        GridField::full("sup", &sup.field),
        GridField::full("ll", &ll.field),
    ];
    let mut columns = vec!["x", "f", "inf", "sup", "ll"];
    if let Some(eps) = cfg.eps {
        fields.push(GridField::full("flat", &flatten(&ll.field, eps)?));
        columns.push("flat");
    }
    let profile = middle_row(&grid, &fields, &columns);
    Ok(vec![Artifact::grid("envelope.grid", grid, fields), Artifact::table("profile.dat", profile)])
}

fn audit_envelope(cfg: &RunConfig, report: &Report, out: &Artifact) -> Result<Vec<Check>, CliError> {
    let (grid, fields) = out.as_grid()?;
    let get = |name: &str| field(fields, name).and_then(|f| Ok(f.dense()?));
    let (f, inf, sup, ll) = (get("f")?, get("inf")?, get("sup")?, get("ll")?);
    let lambda: f64 = report.parse("lambda")?;
    let mu: f64 = report.parse("mu")?;
    let k: f64 = report.parse("K_used")?;
    let h = grid.mesh();
    let nodes = grid.inside_nodes();
    let tol = cfg.tol;
    let above = |a: &[f64], b: &[f64]| nodes.iter().fold(f64::NEG_INFINITY, |m, &i| m.max(a[i] - b[i]));
    let mut checks = vec![
        Check::new("lip(inf envelope) <= K", grid.lip(&inf, &nodes, tol)?, k + tol),
        Check::new("lip(sup envelope) <= K", grid.lip(&sup, &nodes, tol)?, k + tol),
        Check::new("lip(lasry-lions) <= K", grid.lip(&ll, &nodes, tol)?, k + tol),
        Check::new("inf envelope <= f", above(&inf, &f), tol),
        Check::new("f <= sup envelope", above(&f, &sup), tol),
        Check::new("inf envelope <= lasry-lions", above(&inf, &ll), tol),
        Check::new("lasry-lions <= sup envelope", above(&ll, &sup), tol),
        Check::new("|lasry-lions - f| <= (lambda + mu) K^2 / 2 + 2h", max_abs_diff(&ll, &f, &nodes), (lambda + mu) * k * k / 2.0 + 2.0 * h),
    ];
    let extent = grid.hi()[0] - grid.lo()[0];
    let balls = sample_balls(grid, BALL_COUNT, cfg.seed, 2.0 * h, extent / 4.0);
    for (name, out, expand) in [
        ("local lip of inf envelope: C", &inf, 2.0 * lambda * k),
        ("local lip of sup envelope: C", &sup, 2.0 * mu * k),
        ("local lip of lasry-lions: C", &ll, 2.0 * (lambda + mu) * k),
    ] {
        let bc = check_local_lip(grid, &f, out, expand, &balls)?;
        checks.push(Check::new(name, max_mesh_constant(&bc, h), MAX_MESH_CONSTANT));
    }
    if let Some(eps) = cfg.eps {
        let flat = get("flat")?;
        let zeros = nodes.iter().filter(|&&i| ll[i].abs() <= eps / 2.0 && flat[i] != 0.0).count();
        checks.push(Check::new("|flat - ll| <= eps/2", max_abs_diff(&flat, &ll, &nodes), eps / 2.0));
        checks.push(Check::new("lip(flat) <= lip(ll)", grid.lip(&flat, &nodes, tol)?, grid.lip(&ll, &nodes, tol)? + 1e-12));
        checks.push(Check::new("flat set maps to 0", zeros as f64, 0.0));
    }
    Ok(checks)
}

/// Inside nodes of the middle lattice row with the first coordinate and the named fields.
fn middle_row(grid: &GridDomain<f64>, fields: &[GridField<f64>], columns: &[&str]) -> Table {
    let mut t = Table::new(columns);
    let [nx, ny] = grid.shape();
    let j = if grid.dim() == 2 { ny / 2 } else { 0 };
    for i in 0..nx {
        let k = grid.index(i, j);
        if !grid.kind(k).is_inside() {
            continue;
        }
        let mut row = vec![grid.point(k)[0]];
        row.extend(fields.iter().filter(|f| columns.contains(&f.name.as_str())).map(|f| f.values[k].unwrap_or(f64::NAN)));
        t.push(row);
    }
    t
}

fn eikonal(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let (grid, f) = load_grid(cfg)?;
    let u0 = inside_values(&grid, &f)?;
    let eps = cfg.eps.unwrap_or(DEFAULT_EPS);
    let mut params = EikonalParams::new(eps);
    params.method = cfg.method;
    params.tol = cfg.tol;
    let sol = almost_classical(&grid, &u0, &params)?;
    let r = &sol.report;
    report.set("eps", eps);
    report.set("norm", grid.norm().p);
    report.set("nodes", grid.len());
    report.set("h", grid.mesh());
    report.set("lip_boundary", r.lip_boundary);
    report.set("base_lambda", r.base_lambda);
    report.set("max_dual_grad_v", r.hypotheses.max_dual_grad);
    report.set("coercivity_margin", r.hypotheses.coercivity_margin);
    report.set("residual_fraction", r.residual_fraction);
    report.set("sup_norm_u", r.sup_norm_u);
    report.set("sup_error", r.sup_error);
    report.set("boundary_error", r.boundary_error);
    report.set("lip_w", r.lip_w);
    report.set("layers", r.layers);
    report.set("cells", r.cells);
    report.set("collar", r.collar);
    report.push_check(Check::new("|Dv|_* <= 1", r.hypotheses.max_dual_grad, 1.0));
    let fields = vec![
        GridField::full("u0", &u0),
        GridField::full("v", &sol.v),
        GridField::full("w", &sol.w),
        GridField::partial("residual", sol.residual.clone()),
    ];
    let profile = middle_row(&grid, &fields, &["x", "u0", "v", "w"]);
    Ok(vec![Artifact::grid("eikonal.grid", grid, fields), Artifact::table("profile.dat", profile)])
}

fn audit_eikonal(cfg: &RunConfig, report: &Report, out: &Artifact) -> Result<Vec<Check>, CliError> {
    let (grid, fields) = out.as_grid()?;
    let u0 = field(fields, "u0")?.dense()?;
    let w = field(fields, "w")?.dense()?;
    let recorded = &field(fields, "residual")?.values;
    let eps: f64 = report.parse("eps")?;
    let h = grid.mesh();
    let inside = grid.inside_nodes();
    let residual: Vec<Option<f64>> = dual_grad_field(grid, &w)?.into_iter().map(|g| g.map(|n| (n - 1.0).abs())).collect();
    let interior = residual.iter().flatten().count().max(1);
    let bad = residual.iter().flatten().filter(|&&r| r > RESIDUAL_TOL).count();
    let mismatch = residual.iter().zip(recorded).fold(0.0, |m: f64, (a, b)| match (a, b) {
        (Some(a), Some(b)) => m.max((a - b).abs()),
        (None, None) => m,
        _ => f64::INFINITY,
    });
    Ok(vec![
        Check::new("boundary error", max_abs_diff(&w, &u0, &grid.boundary_nodes()), 0.0),
        Check::new("|w - u0| <= eps", max_abs_diff(&w, &u0, &inside), eps + cfg.tol),
        Check::new("lip(w) <= 1 + 5h", grid.lip(&w, &inside, cfg.tol)?, 1.0 + MAX_MESH_CONSTANT * h),
        Check::new("residual fraction <= 0.05", bad as f64 / interior as f64, 0.05),
        Check::new("residual field matches w", mismatch, cfg.tol),
    ])
}

fn casebook(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, CliError> {
    let case = cfg.case.unwrap_or(Case::L1Disc);
    let r = match case {
        Case::L1Disc => l1_disc_case::<f64>(cfg.samples, AXIS_SAMPLES)?,
        Case::LInfImage => linf_image_case::<f64>(cfg.samples, AXIS_SAMPLES)?,
    };
    report.set("norm", r.norm);
    report.set("boundary_samples", r.n_boundary);
    report.set("axis_samples", r.axis.len());
    report.set("mesh", r.mesh);
    report.set("upper_slopes", format!("{} {}", r.kink_slopes[0].0, r.kink_slopes[0].1));
    report.set("lower_slopes", format!("{} {}", r.kink_slopes[1].0, r.kink_slopes[1].1));
    report.set("slope_gap", r.slope_gap);
    report.set("verdict", if r.verdict { "forced kink" } else { "no forced kink" });
    if let Some(e) = r.isometry_error {
        report.set("isometry_error", e);
        report.push_check(Check::new("isometry error", e, 1e-12));
    }
    let mut t = Table::new(&["x", "upper", "lower", "abs_x"]);
    for (x, u, l) in r.profile() {
        t.push(vec![x, u, l, x.abs()]);
    }
    Ok(vec![Artifact::table("profile.dat", t)])
}

fn audit_casebook(cfg: &RunConfig, profile: &Artifact) -> Result<Vec<Check>, CliError> {
    let t = profile.as_table()?;
    let (x, up, lo) = (t.column("x")?, t.column("upper")?, t.column("lower")?);
    if x.len() < 3 || x.len() % 2 == 0 {
        return Err(CliError::Input("profile needs an odd number of axis samples".into()));
    }
    let mesh = 8.0 / cfg.samples as f64;
    let abs_err = |f: &[f64]| x.iter().zip(f).fold(0.0, |m: f64, (&x, &v)| m.max((v - x.abs()).abs()));
    let spread = up.iter().zip(&lo).fold(f64::NEG_INFINITY, |m, (u, l)| m.max(u - l));
    let mid = x.len() / 2;
    let gap = |f: &[f64]| (f[mid + 1] - f[mid]) / (x[mid + 1] - x[mid]) - (f[mid] - f[mid - 1]) / (x[mid] - x[mid - 1]);
    let slope_gap = gap(&up).min(gap(&lo));
    Ok(vec![
        Check::new("|upper - |x|| <= 2 mesh", abs_err(&up), 2.0 * mesh),
        Check::new("|lower - |x|| <= 2 mesh", abs_err(&lo), 2.0 * mesh),
        Check::new("upper - lower <= 4 mesh", spread, 4.0 * mesh),
        Check::new("u(0,0) <= 0 up to 2 mesh", up[mid], 2.0 * mesh),
        Check::new("1.9 <= slope gap", 1.9, slope_gap),
    ])
}
