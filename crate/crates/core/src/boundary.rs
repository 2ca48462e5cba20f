//! Boundary-preserving Lipschitz approximation: the local step with its
//! certified error and the global exhaustion scheme built from it.

use crate::error::{Error, Result};
use crate::extend::{constrained_max_core, inf_convolution, Bound, ExtensionProblem};
use crate::metric::{check_indices, complement, normalize_subset, MetricSpace, ScalarField};
use crate::scalar::Real;

/// Slope resolution of the stage bisection.
pub const BISECTION_TOL: f64 = 1e-12;

/// Amount added to a bisected slope to keep the stage inequality strict.
pub const SLOPE_NUDGE: f64 = 1e-12;

/// Relative excess of a measured constant over `μ` that is attributed to rounding.
pub const MU_INFLATION: f64 = 1e-12;

/// `ε(λ, μ, E, F) = (1−λ)/(λ−μ) · (λ+μ) · (diam(E∖F) + dist(E∖F, F))`, or 0 when `E∖F` is empty.
pub fn epsilon_lambda<T: Real>(lambda: T, mu: T, diam: T, dist: T, ef_empty: bool) -> Result<T> {
    check_slopes(lambda, mu)?;
    if ef_empty {
        return Ok(T::zero());
    }
    if diam < T::zero() || dist < T::zero() {
        return Err(Error::Domain(format!("diameter {diam} and distance {dist} must be nonnegative")));
    }
    Ok(stage_factor(lambda, mu) * (diam + dist))
}

/// `(1−λ)(λ+μ)/(λ−μ)`, strictly decreasing in `λ` on `(μ, 1)`.
fn stage_factor<T: Real>(lambda: T, mu: T) -> T {
    (T::one() - lambda) * (lambda + mu) / (lambda - mu)
}

fn check_slopes<T: Real>(lambda: T, mu: T) -> Result<()> {
    if !(mu >= T::zero() && mu < lambda && lambda < T::one()) {
        return Err(Error::Domain(format!("slopes must satisfy 0 <= mu < lambda < 1, got mu = {mu}, lambda = {lambda}")));
    }
    Ok(())
}

/// Input of the local step. `u0` is indexed like the space, `u_mu[k]` is the value at `constraint[k]`.
#[derive(Debug, Clone, Copy)]
pub struct LocalStepInput<'a, T> {
    pub space: &'a MetricSpace<T>,
    pub constraint: &'a [usize],
    pub u0: &'a [T],
    pub u_mu: &'a [T],
    pub mu: T,
    pub delta: T,
    pub lambda: T,
    pub tol: T,
}

/// Output of the local step together with the proof objects recomputed as diagnostics.
#[derive(Debug, Clone)]
pub struct LocalStepResult<T> {
    pub u_lambda: ScalarField<T>,
    pub eps_lambda: T,
    /// Points where `u_λ >= u0 + δ + ε_λ/2`.
    pub s_lambda: Vec<usize>,
    /// Points outside `F ∪ S_λ` where the re-anchored inf-convolution reaches `u0 + δ + ε_λ`.
    pub g_lambda: Vec<usize>,
    pub certified_bound: T,
    /// `μ` after rounding inflation.
    pub mu_used: T,
    pub measured_lip: T,
    /// `max |u0 − u_λ|`.
    pub max_deviation: T,
    /// `max |u_λ − v_λ|` for the inf-convolution `v_λ` anchored on `F ∪ S_λ`.
    pub representation_gap: T,
}

/// The local step: a λ-Lipschitz `u_λ` equal to `u_μ` on `F` with `|u0 − u_λ| <= δ + ε_λ`.
pub fn local_step<T: Real>(input: &LocalStepInput<'_, T>) -> Result<LocalStepResult<T>> {
    local_step_core(input, None)
}

pub(crate) fn local_step_core<T: Real>(input: &LocalStepInput<'_, T>, u0_lip: Option<T>) -> Result<LocalStepResult<T>> {
    let LocalStepInput { space, constraint: f, u0, u_mu, delta, lambda, tol, .. } = *input;
    let n = space.len();
    check_slopes(lambda, input.mu)?;
    if !(delta >= T::zero()) {
        return Err(Error::Domain(format!("delta = {delta} must be nonnegative")));
    }
    if f.is_empty() {
        return Err(Error::Domain("constraint set F is empty".into()));
    }
    check_indices(f, n)?;
    if normalize_subset(f.to_vec()).len() != f.len() {
        return Err(Error::Domain("constraint set F contains repeated indices".into()));
    }
    if u0.len() != n || u_mu.len() != f.len() {
        return Err(Error::Domain(format!(
            "u0 has {} values for {n} points and u_mu has {} values for {} constraint points",
            u0.len(),
            u_mu.len(),
            f.len()
        )));
    }
    ScalarField::new(u0.to_vec())?;
    ScalarField::new(u_mu.to_vec())?;

    let lip_u0 = match u0_lip {
        Some(l) => l,
        None => space.lip_all(u0, tol)?.value,
    };
    if lip_u0 > T::one() + tol {
        return Err(Error::Precondition(format!("lip(u0, E) = {lip_u0} exceeds 1")));
    }
    let problem = ExtensionProblem::new(space, f, u_mu, lambda)?;
    let lip_mu = problem.anchor_lip(tol)?;
    let mut mu = input.mu;
    if lip_mu > mu {
        if lip_mu <= mu * (T::one() + T::lit(MU_INFLATION)) + T::epsilon() * T::lit(4.0) && lip_mu < lambda {
            mu = lip_mu;
        } else {
            return Err(Error::Precondition(format!("lip(u_mu, F) = {lip_mu} exceeds mu = {mu}")));
        }
    }
    for (&y, &v) in f.iter().zip(u_mu) {
        let gap = (v - u0[y]).abs();
        if gap > delta + tol {
            return Err(Error::Precondition(format!("|u_mu - u0| = {gap} exceeds delta = {delta} at point {y}")));
        }
    }

    let rest = complement(n, f);
    let eps = if rest.is_empty() {
        T::zero()
    } else {
        let (dist, diam) = space.set_metrics(&rest, f)?;
        epsilon_lambda(lambda, mu, diam, dist, false)?
    };
    let cap = delta + eps;
    let b: Vec<T> = u0.iter().map(|&v| v + cap).collect();
    let u = constrained_max_core(&problem, &Bound::Values(b.clone()), tol, Some(lip_mu))?;

    let half = delta + eps / T::lit(2.0);
    let s_lambda: Vec<usize> = (0..n).filter(|&x| u[x] >= u0[x] + half).collect();
    let anchors = normalize_subset(f.iter().chain(&s_lambda).copied().collect());
    let anchor_vals: Vec<T> = anchors.iter().map(|&y| u[y]).collect();
    let v = inf_convolution(&ExtensionProblem::new(space, &anchors, &anchor_vals, lambda)?)?;
    let mut in_anchor = vec![false; n];
    for &y in &anchors {
        in_anchor[y] = true;
    }
    let g_lambda: Vec<usize> = (0..n).filter(|&x| !in_anchor[x] && v[x] >= b[x]).collect();

    let measured_lip = space.lip_all(&u, tol)?.value;
    let max_deviation = (0..n).fold(T::zero(), |m, x| m.max((u0[x] - u[x]).abs()));
    let representation_gap = (0..n).fold(T::zero(), |m, x| m.max((u[x] - v[x]).abs()));
    let max_f_gap = f.iter().zip(u_mu).fold(T::zero(), |m, (&y, &h)| m.max((u[y] - h).abs()));

    let checks = [
        ("lip(u_lambda, E) <= lambda", measured_lip, lambda + tol),
        ("|u_lambda - u_mu| on F <= 0", max_f_gap, T::zero()),
        ("|u0 - u_lambda| <= delta + eps_lambda", max_deviation, cap + tol),
        ("|G_lambda| <= 0", T::from_usize(g_lambda.len()).unwrap_or_else(T::infinity), T::zero()),
        ("|u_lambda - v_lambda| <= 0", representation_gap, tol),
    ];
    for (name, lhs, bound) in checks {
        if lhs > bound {
            return Err(Error::invariant(name, lhs.as_f64(), bound.as_f64()));
        }
    }

    Ok(LocalStepResult {
        u_lambda: u,
        eps_lambda: eps,
        s_lambda,
        g_lambda,
        certified_bound: cap,
        mu_used: mu,
        measured_lip,
        max_deviation,
        representation_gap,
    })
}

/// Parameters of the global approximation.
#[derive(Debug, Clone, Copy)]
pub struct GlobalParams<T> {
    /// Lipschitz bound of `u0` on `E`; measured when `None`.
    pub k: Option<T>,
    pub eps: T,
    /// Radius increment of the exhausting balls; half the largest distance
    /// from the base point when `None`, which gives two stages.
    pub ball_step: Option<T>,
    /// Center of the exhausting balls, a point of `F`; the first point of `F` when `None`.
    pub base_point: Option<usize>,
    pub tol: T,
}

impl<T: Real> GlobalParams<T> {
    pub fn new(eps: T) -> Self {
        Self { k: None, eps, ball_step: None, base_point: None, tol: T::lit(crate::DEFAULT_TOL) }
    }
}

/// One stage of the exhaustion.
#[derive(Debug, Clone)]
pub struct StagePlan<T> {
    /// `E_n`, sorted.
    pub set: Vec<usize>,
    pub radius: T,
    /// `λ_n` in the original scale.
    pub lambda: T,
    /// `ε/2^n`.
    pub budget: T,
    /// `diam(E_n∖E_{n−1}) + dist(E_n∖E_{n−1}, E_{n−1})`.
    pub size: T,
    /// Left side of the stage inequality in the original scale.
    pub inequality_lhs: T,
    /// `(slope, stage value)` pairs visited by the bisection.
    pub trace: Vec<(T, T)>,
}

/// Exhaustion sets `E_n` and slopes `λ_n`.
#[derive(Debug, Clone)]
pub struct Schedule<T> {
    pub base_point: usize,
    pub ball_step: T,
    pub k: T,
    pub eps: T,
    /// `λ_0 = lip(u0, F)`.
    pub lambda0: T,
    /// `E_0 = F`, sorted.
    pub initial: Vec<usize>,
    pub stages: Vec<StagePlan<T>>,
}

impl<T: Real> Schedule<T> {
    /// `λ_0, λ_1, …, λ_N`.
    pub fn lambdas(&self) -> Vec<T> {
        std::iter::once(self.lambda0).chain(self.stages.iter().map(|s| s.lambda)).collect()
    }
}

/// Builds the exhaustion schedule for `u0` on `E` with boundary set `F`.
pub fn build_schedule<T: Real>(space: &MetricSpace<T>, f: &[usize], u0: &[T], params: &GlobalParams<T>) -> Result<Schedule<T>> {
    let tol = params.tol;
    let f_sorted = validate_global(space, f, u0, params)?;
    let k = match params.k {
        Some(k) => {
            let lip = space.lip_all(u0, tol)?.value;
            if lip > k + tol {
                return Err(Error::Precondition(format!("lip(u0, E) = {lip} exceeds K = {k}")));
            }
            k
        }
        None => space.lip_all(u0, tol)?.value,
    };
    schedule_with_k(space, &f_sorted, u0, k, params)
}

fn validate_global<T: Real>(space: &MetricSpace<T>, f: &[usize], u0: &[T], params: &GlobalParams<T>) -> Result<Vec<usize>> {
    if f.is_empty() {
        return Err(Error::Domain("boundary set F is empty".into()));
    }
    check_indices(f, space.len())?;
    if u0.len() != space.len() {
        return Err(Error::Domain(format!("u0 has {} values for {} points", u0.len(), space.len())));
    }
    ScalarField::new(u0.to_vec())?;
    if !(params.eps > T::zero() && params.eps.is_finite()) {
        return Err(Error::Domain(format!("eps = {} must be positive", params.eps)));
    }
    if let Some(s) = params.ball_step {
        if !(s > T::zero() && s.is_finite()) {
            return Err(Error::Domain(format!("ball_step = {s} must be positive")));
        }
    }
    if let Some(p) = params.base_point {
        if !f.contains(&p) {
            return Err(Error::Domain(format!("base point {p} is not in F")));
        }
    }
    Ok(normalize_subset(f.to_vec()))
}

fn schedule_with_k<T: Real>(space: &MetricSpace<T>, f: &[usize], u0: &[T], k: T, params: &GlobalParams<T>) -> Result<Schedule<T>> {
    let tol = params.tol;
    if !(k > T::zero() && k.is_finite()) {
        return Err(Error::Precondition(format!("K = {k} must be positive")));
    }
    let lambda0 = space.lip_constant(u0, f, tol)?.value;
    if lambda0 >= k {
        return Err(Error::Precondition(format!(
            "boundary constant not strictly smaller: lip(u0, F) = {lambda0} >= K = {k}"
        )));
    }
    let n = space.len();
    let base = params.base_point.unwrap_or(f[0]);
    let from_base: Vec<T> = (0..n).map(|x| space.dist(base, x)).collect();
    let reach = from_base.iter().fold(T::zero(), |m, &d| m.max(d));
    let ball_step = match params.ball_step {
        Some(s) => s,
        None if reach > T::zero() => reach / T::lit(2.0),
        None => T::one(),
    };
    let eps_n = params.eps / k;

    let mut in_set = vec![false; n];
    for &y in f {
        in_set[y] = true;
    }
    let mut prev_set = f.to_vec();
    let mut prev_lambda = lambda0 / k;
    let mut stages = Vec::new();
    let mut m = 1usize;
    while prev_set.len() < n {
        let radius = ball_step * T::from_usize(m).unwrap_or_else(T::infinity);
        m += 1;
        let last = radius >= reach;
        let added: Vec<usize> = (0..n).filter(|&x| !in_set[x] && (last || from_base[x] <= radius)).collect();
        if added.is_empty() {
            continue;
        }
        let (dist, diam) = space.set_metrics(&added, &prev_set)?;
        let size = diam + dist;
        let stage_no = stages.len() as i32 + 1;
        let target = eps_n / T::lit(2.0).powi(stage_no);
        let (lambda, trace) = solve_stage(prev_lambda, size, target)?;
        for &x in &added {
            in_set[x] = true;
        }
        let set: Vec<usize> = (0..n).filter(|&x| in_set[x]).collect();
        stages.push(StagePlan {
            set: set.clone(),
            radius,
            lambda: lambda * k,
            budget: params.eps / T::lit(2.0).powi(stage_no),
            size,
            inequality_lhs: k * stage_factor(lambda, prev_lambda) * size,
            trace: trace.into_iter().map(|(l, v)| (l * k, v * k)).collect(),
        });
        prev_set = set;
        prev_lambda = lambda;
    }
    Ok(Schedule { base_point: base, ball_step, k, eps: params.eps, lambda0, initial: f.to_vec(), stages })
}

/// Smallest slope in `(prev, 1)` with `stage_factor(λ, prev) · size <= target`, by bisection.
fn solve_stage<T: Real>(prev: T, size: T, target: T) -> Result<(T, Vec<(T, T)>)> {
    let value = |l: T| stage_factor(l, prev) * size;
    let (mut lo, mut hi) = (prev, T::one());
    let mut trace = Vec::new();
    let tol = T::lit(BISECTION_TOL);
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let val = value(mid);
        trace.push((mid, val));
        if val <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut sorted = trace.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite slopes"));
    if sorted.windows(2).any(|w| w[1].1 > w[0].1) {
        return Err(Error::invariant("stage function nonincreasing along the bisection trace", 1.0, 0.0));
    }
    let lambda = hi + T::lit(SLOPE_NUDGE);
    if lambda >= T::one() {
        return Err(Error::RootFind(format!(
            "stage budget {target} too small: the slope reaches K (size {size})"
        )));
    }
    let lambda = if value(lambda) <= target { lambda } else { hi };
    Ok((lambda, trace))
}

/// Per-stage diagnostics of the global approximation, in the original scale.
#[derive(Debug, Clone)]
pub struct StageReport<T> {
    pub n: usize,
    pub size: usize,
    pub lambda: T,
    pub eps_lambda: T,
    pub budget: T,
    pub measured_lip: T,
    pub sup_error: T,
}

/// Result of [`global_approx`].
#[derive(Debug, Clone)]
pub struct GlobalApprox<T> {
    pub u: ScalarField<T>,
    pub schedule: Schedule<T>,
    pub stages: Vec<StageReport<T>>,
    /// `max |u − u0|`.
    pub sup_error: T,
}

/// A function `u` with `u = u0` on `F`, `|u − u0| <= ε` and `lip(u, E_n) <= λ_n < K` on every stage set.
pub fn global_approx<T: Real>(space: &MetricSpace<T>, f: &[usize], u0: &[T], params: &GlobalParams<T>) -> Result<GlobalApprox<T>> {
    let tol = params.tol;
    let f_sorted = validate_global(space, f, u0, params)?;
    let lip_u0 = space.lip_all(u0, tol)?.value;
    let k = match params.k {
        Some(k) if lip_u0 > k + tol => {
            return Err(Error::Precondition(format!("lip(u0, E) = {lip_u0} exceeds K = {k}")));
        }
        Some(k) => k,
        None => lip_u0,
    };
    let schedule = schedule_with_k(space, &f_sorted, u0, k, params)?;
    let n = space.len();
    let u0n: Vec<T> = u0.iter().map(|&v| v / k).collect();
    let lip_u0n = lip_u0 / k;
    let eps_n = params.eps / k;

    let mut u = u0n.clone();
    let mut prev_set = f_sorted.clone();
    let mut prev_lambda = schedule.lambda0 / k;
    let mut delta = T::zero();
    let mut reports = Vec::new();
    let mut pos = vec![usize::MAX; n];
    for (i, stage) in schedule.stages.iter().enumerate() {
        let set = &stage.set;
        let sub = space.subspace(set)?;
        for (p, &x) in set.iter().enumerate() {
            pos[x] = p;
        }
        let local_f: Vec<usize> = prev_set.iter().map(|&x| pos[x]).collect();
        let local_u0: Vec<T> = set.iter().map(|&x| u0n[x]).collect();
        let local_mu: Vec<T> = prev_set.iter().map(|&x| u[x]).collect();
        let lambda = stage.lambda / k;
        let step = local_step_core(
            &LocalStepInput {
                space: &sub,
                constraint: &local_f,
                u0: &local_u0,
                u_mu: &local_mu,
                mu: prev_lambda,
                delta,
                lambda,
                tol,
            },
            Some(lip_u0n.min(T::one())),
        )?;
        for (p, &x) in set.iter().enumerate() {
            u[x] = step.u_lambda[p];
        }
        reports.push(StageReport {
            n: i + 1,
            size: set.len(),
            lambda: stage.lambda,
            eps_lambda: step.eps_lambda * k,
            budget: stage.budget,
            measured_lip: step.measured_lip * k,
            sup_error: step.max_deviation * k,
        });
        delta = delta + eps_n / T::lit(2.0).powi(i as i32 + 1);
        prev_set = set.clone();
        prev_lambda = lambda;
    }

    let mut out: Vec<T> = u.iter().map(|&v| v * k).collect();
    for &y in &f_sorted {
        out[y] = u0[y];
    }
    let sup_error = (0..n).fold(T::zero(), |m, x| m.max((out[x] - u0[x]).abs()));
    if sup_error > params.eps + tol {
        return Err(Error::invariant("|u - u0| <= eps", sup_error.as_f64(), (params.eps + tol).as_f64()));
    }
    for r in &reports {
        if r.measured_lip > r.lambda + tol {
            return Err(Error::invariant(format!("lip(u, E_{}) <= lambda_{}", r.n, r.n), r.measured_lip.as_f64(), r.lambda.as_f64()));
        }
        if r.lambda >= k {
            return Err(Error::invariant(format!("lambda_{} < K", r.n), r.lambda.as_f64(), k.as_f64()));
        }
    }
    Ok(GlobalApprox { u: ScalarField::from_vec_unchecked(out), schedule, stages: reports, sup_error })
}
