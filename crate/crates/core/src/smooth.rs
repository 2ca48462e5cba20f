//! Smoothing operators on regular grids.
//!
//! Values outside the box are continued by the nearest lattice node, so every
//! operator is defined on the whole lattice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::metric::ScalarField;
use crate::scalar::Real;

/// A normalized bump `(1 − (‖z‖/δ)²)³` sampled at lattice offsets with `‖z‖ < δ`.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    radius: T,
    offsets: Vec<(isize, isize)>,
    weights: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn bump(grid: &GridDomain<T>, radius: T) -> Result<Self> {
        if !(radius.is_finite() && radius >= grid.mesh()) {
            return Err(Error::UnderResolved(format!(
                "kernel under-resolved: radius {radius} is below the mesh width {}",
                grid.mesh()
            )));
        }
        let offsets = grid.offsets_within(radius, true);
        let raw: Vec<T> = offsets.iter().map(|&(di, dj)| bump(grid.offset_norm(di, dj) / radius)).collect();
        let mass = raw.iter().fold(T::zero(), |s, &w| s + w);
        let weights = raw.into_iter().map(|w| w / mass).collect();
        Ok(Self { radius, offsets, weights })
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Discrete mass of the kernel.
    pub fn mass(&self) -> T {
        self.weights.iter().fold(T::zero(), |s, &w| s + w)
    }
}

#[inline]
fn bump<T: Real>(s: T) -> T {
    let t = T::one() - s * s;
    if t > T::zero() {
        t * t * t
    } else {
        T::zero()
    }
}

fn check_len<T: Real>(grid: &GridDomain<T>, f: &[T]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::Domain(format!("field has {} values for {} nodes", f.len(), grid.len())));
    }
    match f.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Applies `reduce` over the stencil at each node, with a clamp-free path for
/// nodes whose stencil stays inside the box.
fn stencil_map<T: Real, A: Copy + Send + Sync>(
    grid: &GridDomain<T>,
    offsets: &[(isize, isize)],
    data: &[A],
    f: &[T],
    init: T,
    reduce: impl Fn(T, T, A) -> T + Sync,
) -> Vec<T> {
    let [nx, ny] = grid.shape();
    let ri = offsets.iter().map(|o| o.0.unsigned_abs()).max().unwrap_or(0);
    let rj = offsets.iter().map(|o| o.1.unsigned_abs()).max().unwrap_or(0);
    let linear: Vec<isize> = offsets.iter().map(|&(di, dj)| dj * nx as isize + di).collect();
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.ij(k);
            if i >= ri && i + ri < nx && j >= rj && j + rj < ny {
                linear.iter().zip(data).fold(init, |acc, (&l, &a)| reduce(acc, f[(k as isize + l) as usize], a))
            } else {
                offsets
                    .iter()
                    .zip(data)
                    .fold(init, |acc, (&(di, dj), &a)| reduce(acc, f[grid.clamped(i, j, di, dj)], a))
            }
        })
        .collect()
}

/// Discrete convolution `Σ_z θ(z) f(x − z)`.
pub fn mollify<T: Real>(grid: &GridDomain<T>, f: &[T], kernel: &Kernel<T>) -> Result<ScalarField<T>> {
    check_len(grid, f)?;
    let neg: Vec<(isize, isize)> = kernel.offsets.iter().map(|&(a, b)| (-a, -b)).collect();
    Ok(ScalarField::from_vec_unchecked(stencil_map(grid, &neg, &kernel.weights, f, T::zero(), |s, v, w| s + w * v)))
}

/// Parameters of the Lasry–Lions regularization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams<T> {
    pub lambda: T,
    pub mu: T,
    pub k: T,
}

impl<T: Real> EnvelopeParams<T> {
    pub fn new(lambda: T, mu: T, k: T) -> Result<Self> {
        if !(mu > T::zero() && mu < lambda && lambda.is_finite()) {
            return Err(Error::Domain(format!("envelope parameters need 0 < mu < lambda, got mu = {mu}, lambda = {lambda}")));
        }
        if !(k >= T::zero() && k.is_finite()) {
            return Err(Error::Domain(format!("Lipschitz bound {k} must be finite and nonnegative")));
        }
        Ok(Self { lambda, mu, k })
    }
}

/// An envelope together with the Lipschitz bound and search radius it used.
#[derive(Debug, Clone)]
pub struct Envelope<T> {
    pub field: ScalarField<T>,
    /// `max(K, lip(f))`.
    pub k_used: T,
    /// Radius of the search window.
    pub window: T,
}

fn k_used<T: Real>(grid: &GridDomain<T>, f: &[T], k: T) -> Result<T> {
    if !(k >= T::zero() && k.is_finite()) {
        return Err(Error::Domain(format!("Lipschitz bound {k} must be finite and nonnegative")));
    }
    let measured = grid.lip(f, &grid.all_nodes(), T::lit(crate::metric::DEFAULT_TOL))?;
    Ok(k.max(measured))
}

fn quadratic_envelope<T: Real>(grid: &GridDomain<T>, f: &[T], t: T, k: T, upper: bool) -> Envelope<T> {
    let window = (t + t) * k;
    let offsets = grid.offsets_within(window, false);
    let two_t = t + t;
    let penalty: Vec<T> = offsets
        .iter()
        .map(|&(di, dj)| {
            let d = grid.offset_norm(di, dj);
            d * d / two_t
        })
        .collect();
    let neg: Vec<(isize, isize)> = offsets.iter().map(|&(a, b)| (-a, -b)).collect();
    let out = if upper {
        stencil_map(grid, &neg, &penalty, f, T::neg_infinity(), |m, v, q| {
            let c = v - q;
            if c > m {
                c
            } else {
                m
            }
        })
    } else {
        stencil_map(grid, &neg, &penalty, f, T::infinity(), |m, v, q| {
            let c = v + q;
            if c < m {
                c
            } else {
                m
            }
        })
    };
    Envelope { field: ScalarField::from_vec_unchecked(out), k_used: k, window }
}

/// `g_λ(x) = min_y f(y) + ‖x − y‖²/(2λ)` over the window `‖x − y‖ ≤ 2λK`.
pub fn moreau_inf<T: Real>(grid: &GridDomain<T>, f: &[T], lambda: T, k: T) -> Result<Envelope<T>> {
    check_len(grid, f)?;
    positive("lambda", lambda)?;
    let k = k_used(grid, f, k)?;
    Ok(quadratic_envelope(grid, f, lambda, k, false))
}

/// `g^μ(x) = max_y f(y) − ‖x − y‖²/(2μ)` over the window `‖x − y‖ ≤ 2μK`.
pub fn moreau_sup<T: Real>(grid: &GridDomain<T>, f: &[T], mu: T, k: T) -> Result<Envelope<T>> {
    check_len(grid, f)?;
    positive("mu", mu)?;
    let k = k_used(grid, f, k)?;
    Ok(quadratic_envelope(grid, f, mu, k, true))
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be positive and finite")))
    }
}

/// Output of [`lasry_lions`].
#[derive(Debug, Clone)]
pub struct LasryLions<T> {
    pub field: ScalarField<T>,
    /// The inner envelope `g_λ`.
    pub inner: ScalarField<T>,
    pub k_used: T,
    /// `max |g_λ^μ − f|`.
    pub sup_distance: T,
}

/// `g_λ^μ = (g_λ)^μ`.
pub fn lasry_lions<T: Real>(grid: &GridDomain<T>, f: &[T], params: &EnvelopeParams<T>) -> Result<LasryLions<T>> {
    check_len(grid, f)?;
    let p = EnvelopeParams::new(params.lambda, params.mu, params.k)?;
    let k = k_used(grid, f, p.k)?;
    let inner = quadratic_envelope(grid, f, p.lambda, k, false).field;
    let field = quadratic_envelope(grid, &inner, p.mu, k, true).field;
    let sup_distance = field.iter().zip(f).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    Ok(LasryLions { field, inner, k_used: k, sup_distance })
}

/// `φ_ε(t)`: zero on `[−ε/2, ε/2]`, shifted towards zero by `ε/2` outside.
#[inline]
pub fn flatten_value<T: Real>(t: T, eps: T) -> T {
    let half = eps / T::lit(2.0);
    if t > half {
        shrink_toward(t, t - half, half)
    } else if t < -half {
        -shrink_toward(-t, -t - half, half)
    } else {
        T::zero()
    }
}

/// Moves `r` up toward `t` until the computed gap `t - r` is at most `half`.
fn shrink_toward<T: Real>(t: T, mut r: T, half: T) -> T {
    while t - r > half {
        r = r + (r.abs() * T::epsilon()).max(T::min_positive_value());
    }
    r
}

/// Pointwise `φ_ε ∘ f`.
pub fn flatten<T: Real>(f: &[T], eps: T) -> Result<ScalarField<T>> {
    positive("eps", eps)?;
    ScalarField::new(f.iter().map(|&t| flatten_value(t, eps)).collect())
}

/// Smoothing radii `min(ε, reach · dist(x, ∂Ω))` on interior nodes, set to zero
/// where that falls below `2h` and on boundary and exterior nodes.
pub fn clamped_radii<T: Real>(grid: &GridDomain<T>, eps: T, reach: T) -> Vec<T> {
    let dist = grid.boundary_distance();
    let floor = grid.mesh() + grid.mesh();
    (0..grid.len())
        .map(|k| {
            if grid.kind(k) != crate::grid::NodeKind::Interior {
                return T::zero();
            }
            let r = eps.min(dist[k] * reach);
            if r >= floor {
                r
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Output of [`variable_mollify`].
#[derive(Debug, Clone)]
pub struct VariableMollified<T> {
    pub field: ScalarField<T>,
    /// Per node, the largest slope of `u` from that node to its stencil.
    pub local_slope: Vec<T>,
}

/// Convolution with a bump of radius `radii[x]` at each node. A radius of zero
/// leaves the node unchanged; positive radii below `2h` are rejected.
///
/// Verifies `|u − v| ≤ radii · s(x)` where `s(x)` is the largest slope of `u`
/// between `x` and its stencil, which is at most `radii` for 1-Lipschitz `u`.
pub fn variable_mollify<T: Real>(grid: &GridDomain<T>, u: &[T], radii: &[T]) -> Result<VariableMollified<T>> {
    check_len(grid, u)?;
    if radii.len() != grid.len() {
        return Err(Error::Domain(format!("{} radii for {} nodes", radii.len(), grid.len())));
    }
    let floor = grid.mesh() + grid.mesh();
    if let Some(k) = (0..grid.len()).find(|&k| !(radii[k] == T::zero() || radii[k] >= floor) || !radii[k].is_finite()) {
        return Err(Error::UnderResolved(format!(
            "smoothing radius {} at node {k} is below 2h = {floor}",
            radii[k]
        )));
    }
    let rows: Vec<(T, T)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let r = radii[k];
            if r == T::zero() {
                return (u[k], T::zero());
            }
            let (i, j) = grid.ij(k);
            let (mut sum, mut mass, mut slope) = (T::zero(), T::zero(), T::zero());
            for (di, dj) in grid.offsets_within(r, true) {
                let d = grid.offset_norm(di, dj);
                let w = bump(d / r);
                let v = u[grid.clamped(i, j, di, dj)];
                sum = sum + w * v;
                mass = mass + w;
                if d > T::zero() {
                    slope = slope.max((v - u[k]).abs() / d);
                }
            }
            (sum / mass, slope)
        })
        .collect();
    let (field, local_slope): (Vec<T>, Vec<T>) = rows.into_iter().unzip();
    let slack = T::lit(1e-12).max(T::lit(64.0) * T::epsilon());
    for k in 0..grid.len() {
        let gap = (field[k] - u[k]).abs();
        let bound = radii[k] * local_slope[k];
        if gap > bound + slack * (T::one() + u[k].abs()) {
            return Err(Error::invariant(format!("|u - v| <= eps(x) lip at node {k}"), gap.as_f64(), bound.as_f64()));
        }
    }
    Ok(VariableMollified { field: ScalarField::from_vec_unchecked(field), local_slope })
}

/// Samples `δ̃(t) = ∫_t^{t+1} δ(s) ds`, `δ = (K − L)/2`, from samples `L(i·dr)`.
///
/// `1/dr` must be an integer; `L` is continued by its last sample.
pub fn tolerance_shape<T: Real>(l_profile: &[T], dr: T, k: T) -> Result<Vec<T>> {
    if l_profile.is_empty() {
        return Err(Error::Domain("empty profile".into()));
    }
    positive("dr", dr)?;
    let steps = (T::one() / dr).round();
    if (steps * dr - T::one()).abs() > T::lit(1e-9) || steps < T::one() {
        return Err(Error::Domain(format!("1/dr = {} is not an integer", T::one() / dr)));
    }
    let m = steps.to_usize().expect("step count");
    if let Some(i) = l_profile.iter().position(|&l| !(l <= k)) {
        return Err(Error::Precondition(format!(
            "interior constant exceeds K: L({}) = {} > {k}",
            T::from_usize(i).expect("index") * dr,
            l_profile[i]
        )));
    }
    if let Some(i) = (1..l_profile.len()).find(|&i| l_profile[i] < l_profile[i - 1]) {
        return Err(Error::Precondition(format!("profile decreases at sample {i}")));
    }
    let n = l_profile.len();
    let half = T::lit(0.5);
    let delta = |i: usize| (k - l_profile[i.min(n - 1)]) * half;
    let out: Vec<T> = (0..n)
        .map(|i| {
            let inner = (i + 1..i + m).fold(T::zero(), |s, q| s + delta(q));
            dr * (half * delta(i) + inner + half * delta(i + m))
        })
        .collect();
    let dmax = (0..n).fold(T::zero(), |a, i| a.max(delta(i)));
    let slack = T::lit(1e-12) * (T::one() + k.abs());
    for i in 0..n {
        if !(out[i] > T::zero()) {
            return Err(Error::invariant(format!("0 < shaped tolerance at sample {i}"), 0.0, out[i].as_f64()));
        }
        if out[i] > delta(i) + slack {
            return Err(Error::invariant(format!("shaped tolerance <= delta at sample {i}"), out[i].as_f64(), delta(i).as_f64()));
        }
        if i > 0 && (out[i] - out[i - 1]).abs() > dr * dmax + slack {
            return Err(Error::invariant(
                format!("shaped tolerance variation at sample {i}"),
                (out[i] - out[i - 1]).abs().as_f64(),
                (dr * dmax).as_f64(),
            ));
        }
    }
    Ok(out)
}

/// Central-difference gradient at interior nodes, `None` elsewhere.
pub fn grad_field<T: Real>(grid: &GridDomain<T>, v: &[T]) -> Result<Vec<Option<[T; 2]>>> {
    check_len(grid, v)?;
    let [hx, hy] = grid.spacing();
    let two = T::lit(2.0);
    Ok((0..grid.len())
        .map(|k| {
            if grid.kind(k) != crate::grid::NodeKind::Interior {
                return None;
            }
            let nb = grid.axis_neighbors(k);
            let gx = (v[nb[1]?] - v[nb[0]?]) / (two * hx);
            let gy = if grid.dim() == 2 { (v[nb[3]?] - v[nb[2]?]) / (two * hy) } else { T::zero() };
            Some([gx, gy])
        })
        .collect())
}

/// `‖Dv(x)‖_*` by central differences at interior nodes, `None` elsewhere.
pub fn dual_grad_field<T: Real>(grid: &GridDomain<T>, v: &[T]) -> Result<Vec<Option<T>>> {
    Ok(grad_field(grid, v)?.into_iter().map(|g| g.map(|[a, b]| grid.dual_norm(a, b))).collect())
}

/// One sampled local Lipschitz inequality `lip(out, B(c, r)) ≤ lip(in, B(c, r + expand)) + C·h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCheck<T> {
    pub center: usize,
    pub radius: T,
    pub lhs: T,
    pub rhs: T,
}

impl<T: Real> BallCheck<T> {
    /// The smallest `C ≥ 0` making the inequality hold.
    pub fn mesh_constant(&self, h: T) -> T {
        ((self.lhs - self.rhs) / h).max(T::zero())
    }
}

/// `count` ball centers drawn uniformly from the lattice with radii in `[r_min, r_max]`.
pub fn sample_balls<T: Real>(grid: &GridDomain<T>, count: usize, seed: u64, r_min: T, r_max: T) -> Vec<(usize, T)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = rng.random_range(0..grid.len());
            let s = T::lit(rng.random::<f64>());
            (c, r_min + (r_max - r_min) * s)
        })
        .collect()
}

/// Evaluates the local inequality on each ball. The right side over a ball
/// that covers the lattice is computed once.
pub fn check_local_lip<T: Real>(
    grid: &GridDomain<T>,
    input: &[T],
    output: &[T],
    expand: T,
    balls: &[(usize, T)],
) -> Result<Vec<BallCheck<T>>> {
    check_len(grid, input)?;
    check_len(grid, output)?;
    let tol = T::lit(crate::metric::DEFAULT_TOL);
    let mut global: Option<T> = None;
    balls
        .iter()
        .map(|&(c, r)| {
            let lhs = grid.lip(output, &grid.ball(c, r), tol)?;
            let big = grid.ball(c, r + expand);
            let rhs = if big.len() == grid.len() {
                match global {
                    Some(v) => v,
                    None => {
                        let v = grid.lip(input, &big, tol)?;
                        global = Some(v);
                        v
                    }
                }
            } else {
                grid.lip(input, &big, tol)?
            };
            Ok(BallCheck { center: c, radius: r, lhs, rhs })
        })
        .collect()
}

/// Largest mesh constant over the checks.
pub fn max_mesh_constant<T: Real>(checks: &[BallCheck<T>], h: T) -> T {
    checks.iter().fold(T::zero(), |m, c| m.max(c.mesh_constant(h)))
}
