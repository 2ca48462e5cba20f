//! Almost-classical solutions of the eikonal problem `‖Dw‖_* = 1`, `w = u0` on ∂Ω.
//!
//! The base `v` comes from [`global_approx`] followed by variable-radius
//! mollification. The perturbation `w − v` is built either per cell, from
//! sawtooth profiles that vanish on the cell boundary, or globally, from unit
//! cones that bounce between the obstacles `v ± β`.

use rayon::prelude::*;

use crate::boundary::{global_approx, GlobalParams};
use crate::error::{Check, Error, Result};
use crate::grid::{GridDomain, NodeKind};
use crate::kernels::{cone, with_plane_norm};
use crate::metric::DEFAULT_TOL;
use crate::scalar::Real;
use crate::smooth::{clamped_radii, grad_field, variable_mollify};

/// Bisection tolerance for slope roots.
pub const SLOPE_TOL: f64 = 1e-12;

/// Nodes with `|‖Dw‖_* − 1|` above this count as residual.
pub const RESIDUAL_TOL: f64 = 0.05;

/// `F(x, x*) = ‖x* + Dv(x)‖_* − 1`.
pub fn hamiltonian_residual<T: Real>(grid: &GridDomain<T>, x_star: [T; 2], v_grad: [T; 2]) -> T {
    grid.dual_norm(x_star[0] + v_grad[0], x_star[1] + v_grad[1]) - T::one()
}

/// Measured hypotheses on the base `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses<T> {
    /// `max ‖Dv‖_*` over interior nodes.
    pub max_dual_grad: T,
    pub worst_node: Option<usize>,
    /// `1 − max ‖Dv‖_*`.
    pub slack: T,
    /// `min F(x, x*)` over interior nodes and sampled `‖x*‖_* = 3`.
    pub coercivity_margin: T,
}

/// Checks `F(x, 0) ≤ 0` at every interior node and measures the coercivity
/// margin on covectors of dual norm 3.
pub fn check_hypotheses<T: Real>(grid: &GridDomain<T>, v: &[T], tol: T) -> Result<Hypotheses<T>> {
    let grads = grad_field(grid, v)?;
    let dirs = dual_sphere(grid, T::lit(3.0), 16);
    let mut max = T::zero();
    let mut worst = None;
    let mut margin = T::infinity();
    for (k, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        let n = grid.dual_norm(g[0], g[1]);
        if n > max || worst.is_none() {
            max = max.max(n);
            worst = Some(k);
        }
        for d in &dirs {
            margin = margin.min(hamiltonian_residual(grid, *d, *g));
        }
    }
    if max > T::one() + tol {
        let node = worst.expect("interior node");
        return Err(Error::invariant(format!("|Dv|_* <= 1 at node {node}"), max.as_f64(), 1.0));
    }
    if worst.is_none() {
        margin = T::zero();
    }
    Ok(Hypotheses { max_dual_grad: max, worst_node: worst, slack: T::one() - max, coercivity_margin: margin })
}

/// `count` covectors of dual norm `r` spread over the dual sphere.
fn dual_sphere<T: Real>(grid: &GridDomain<T>, r: T, count: usize) -> Vec<[T; 2]> {
    if grid.dim() == 1 {
        return vec![[r, T::zero()], [-r, T::zero()]];
    }
    (0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            let (a, b) = (T::lit(t.cos()), T::lit(t.sin()));
            let n = grid.dual_norm(a, b);
            [a * r / n, b * r / n]
        })
        .collect()
}

/// A closed lattice rectangle `[i0, i0 + ni] × [j0, j0 + nj]` in node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub i0: usize,
    pub j0: usize,
    pub ni: usize,
    pub nj: usize,
}

impl Cell {
    /// Nodes of the closed cell, row-major.
    pub fn nodes<T: Real>(&self, grid: &GridDomain<T>) -> Vec<usize> {
        (self.j0..=self.j0 + self.nj)
            .flat_map(|j| (self.i0..=self.i0 + self.ni).map(move |i| (i, j)))
            .map(|(i, j)| grid.index(i, j))
            .collect()
    }

    /// Nodes strictly inside the cell.
    pub fn inner_nodes<T: Real>(&self, grid: &GridDomain<T>) -> Vec<usize> {
        let jr = if grid.dim() == 1 { 0..1 } else { self.j0 + 1..self.j0 + self.nj };
        jr.flat_map(|j| (self.i0 + 1..self.i0 + self.ni).map(move |i| (i, j)))
            .map(|(i, j)| grid.index(i, j))
            .collect()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i <= self.i0 + self.ni && j >= self.j0 && j <= self.j0 + self.nj
    }

    pub fn diameter<T: Real>(&self, grid: &GridDomain<T>) -> T {
        let [hx, hy] = grid.spacing();
        grid.vector_norm(hx * T::from_usize(self.ni).expect("size"), hy * T::from_usize(self.nj).expect("size"))
    }

    pub fn area<T: Real>(&self, grid: &GridDomain<T>) -> T {
        let [hx, hy] = grid.spacing();
        let a = hx * T::from_usize(self.ni).expect("size");
        if grid.dim() == 1 {
            a
        } else {
            a * hy * T::from_usize(self.nj).expect("size")
        }
    }

    /// Halves along each active axis with at least `2·min_side` intervals.
    pub fn split(&self, dim: usize, min_side: usize) -> Option<Vec<Cell>> {
        let cut = |n: usize| if n >= 2 * min_side { vec![(0, n / 2), (n / 2, n - n / 2)] } else { vec![(0, n)] };
        let xs = cut(self.ni);
        let ys = if dim == 1 { vec![(0, self.nj)] } else { cut(self.nj) };
        if xs.len() == 1 && ys.len() == 1 {
            return None;
        }
        Some(
            ys.iter()
                .flat_map(|&(oj, nj)| xs.iter().map(move |&(oi, ni)| Cell { i0: self.i0 + oi, j0: self.j0 + oj, ni, nj }))
                .collect(),
        )
    }

    fn fully_inside<T: Real>(&self, grid: &GridDomain<T>) -> bool {
        self.nodes(grid).into_iter().all(|k| grid.kind(k).is_inside())
    }
}

/// Cells covering the interior up to a collar of uncovered interior nodes.
#[derive(Debug, Clone)]
pub struct CellDecomposition {
    pub cells: Vec<Cell>,
    /// Interior nodes outside every closed cell.
    pub collar: Vec<usize>,
}

impl CellDecomposition {
    pub fn total_area<T: Real>(&self, grid: &GridDomain<T>) -> T {
        self.cells.iter().fold(T::zero(), |s, c| s + c.area(grid))
    }

    /// Number of closed cells containing each node.
    pub fn multiplicity<T: Real>(&self, grid: &GridDomain<T>) -> Vec<u8> {
        let mut m = vec![0u8; grid.len()];
        for c in &self.cells {
            for k in c.nodes(grid) {
                m[k] = m[k].saturating_add(1);
            }
        }
        m
    }
}

/// Smallest cell side in lattice intervals.
pub const MIN_CELL_SIDE: usize = 2;

/// Dyadic splitting of the box into cells whose closures lie inside the domain
/// and whose diameter is at most `eps`.
pub fn decompose<T: Real>(grid: &GridDomain<T>, eps: T) -> Result<CellDecomposition> {
    let h = grid.mesh();
    if !(eps >= T::lit(4.0) * h) {
        return Err(Error::UnderResolved(format!("cell size {eps} is below 4h = {}", T::lit(4.0) * h)));
    }
    refine_cells(grid, |c| c.diameter(grid) > eps)
}

/// Dyadic splitting driven by `too_coarse`; cells that cannot be split and are
/// not fully inside are dropped.
fn refine_cells<T: Real>(grid: &GridDomain<T>, too_coarse: impl Fn(&Cell) -> bool) -> Result<CellDecomposition> {
    let [nx, ny] = grid.shape();
    let root = Cell { i0: 0, j0: 0, ni: nx - 1, nj: if grid.dim() == 1 { 0 } else { ny - 1 } };
    let mut stack = vec![root];
    let mut cells = Vec::new();
    while let Some(c) = stack.pop() {
        let inside = c.fully_inside(grid);
        if inside && !too_coarse(&c) {
            cells.push(c);
            continue;
        }
        match c.split(grid.dim(), MIN_CELL_SIDE) {
            Some(children) => stack.extend(children.into_iter().rev()),
            None if inside => cells.push(c),
            None => {}
        }
    }
    cells.sort_by_key(|c| (c.j0, c.i0));
    let collar = collar_of(grid, &cells);
    let d = CellDecomposition { cells, collar };
    check_decomposition(grid, &d)?;
    Ok(d)
}

fn collar_of<T: Real>(grid: &GridDomain<T>, cells: &[Cell]) -> Vec<usize> {
    let mut covered = vec![false; grid.len()];
    for c in cells {
        for k in c.nodes(grid) {
            covered[k] = true;
        }
    }
    (0..grid.len()).filter(|&k| grid.kind(k) == NodeKind::Interior && !covered[k]).collect()
}

fn check_decomposition<T: Real>(grid: &GridDomain<T>, d: &CellDecomposition) -> Result<()> {
    let m = d.multiplicity(grid);
    let limit = if grid.dim() == 1 { 2 } else { 4 };
    if let Some(k) = (0..grid.len()).find(|&k| m[k] > limit) {
        return Err(Error::invariant(format!("node {k} lies in at most {limit} cells"), m[k] as f64, limit as f64));
    }
    let mut owner = vec![false; grid.len()];
    for c in &d.cells {
        for k in c.inner_nodes(grid) {
            if owner[k] {
                return Err(Error::invariant(format!("cell interiors are disjoint at node {k}"), 1.0, 0.0));
            }
            owner[k] = true;
        }
    }
    Ok(())
}

/// Root `s > 0` of `‖p + s·dir‖_* = target` for a unit covector `dir`.
pub fn slope_root<T: Real>(grid: &GridDomain<T>, p: [T; 2], dir: [T; 2], target: T) -> Result<T> {
    let f = |s: T| grid.dual_norm(p[0] + s * dir[0], p[1] + s * dir[1]) - target;
    if !(f(T::zero()) < T::zero()) {
        return Err(Error::RootFind(format!(
            "|p|_* = {} leaves no room below the target {target}",
            grid.dual_norm(p[0], p[1])
        )));
    }
    let mut hi = target + grid.dual_norm(p[0], p[1]);
    if !(f(hi) >= T::zero()) {
        hi = hi + hi;
    }
    let mut lo = T::zero();
    let tol = T::lit(SLOPE_TOL);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo > tol {
        return Err(Error::RootFind("slope bisection did not converge".into()));
    }
    Ok(lo)
}

/// A sawtooth perturbation on one cell.
#[derive(Debug, Clone)]
pub struct CellSawtooth<T> {
    /// `(node, u)` over the closed cell, row-major.
    pub values: Vec<(usize, T)>,
    /// Axis of the teeth (0 = x, 1 = y).
    pub axis: usize,
    /// Rising slope.
    pub a: T,
    /// Falling slope magnitude.
    pub b: T,
    pub period: T,
    /// Clip slope of the boundary cone.
    pub clip: T,
    /// Fraction of cell nodes where the boundary cone is active.
    pub clipped_fraction: T,
}

/// Sawtooth `u` on `cell` with `u = 0` on the cell boundary, `0 ≤ u ≤ cap`, and
/// `‖p + Du‖_* = 1` off the clipped band.
pub fn cell_sawtooth<T: Real>(grid: &GridDomain<T>, cell: &Cell, p: [T; 2], cap: T) -> Result<CellSawtooth<T>> {
    cell_sawtooth_to(grid, cell, p, cap, T::one())
}

/// As [`cell_sawtooth`] with the slope target `‖p + Du‖_* = target`.
pub fn cell_sawtooth_to<T: Real>(grid: &GridDomain<T>, cell: &Cell, p: [T; 2], cap: T, target: T) -> Result<CellSawtooth<T>> {
    if !(cap > T::zero()) {
        return Err(Error::Domain(format!("amplitude cap {cap} must be positive")));
    }
    let axes: &[usize] = if grid.dim() == 1 { &[0] } else { &[0, 1] };
    let unit = |a: usize, s: T| if a == 0 { [s, T::zero()] } else { [T::zero(), s] };
    let mut best: Option<(usize, T, T)> = None;
    for &axis in axes {
        let a = slope_root(grid, p, unit(axis, T::one()), target)?;
        let b = slope_root(grid, p, unit(axis, -T::one()), target)?;
        if best.is_none_or(|(_, ba, bb)| a.min(b) > ba.min(bb)) {
            best = Some((axis, a, b));
        }
    }
    let (axis, a, b) = best.expect("at least one axis");
    let mut clip = T::infinity();
    for &ax in axes {
        for s in [T::one(), -T::one()] {
            clip = clip.min(slope_root(grid, p, unit(ax, s), target)?);
        }
    }
    let h = grid.spacing()[axis];
    let period = (T::lit(4.0) * h).max(cap / a.max(b));
    let rise = period * b / (a + b);
    let [hx, hy] = grid.spacing();
    let nodes = cell.nodes(grid);
    let mut clipped = 0usize;
    let values: Vec<(usize, T)> = nodes
        .iter()
        .map(|&k| {
            let (i, j) = grid.ij(k);
            let t = h * T::from_usize(if axis == 0 { i - cell.i0 } else { j - cell.j0 }).expect("offset");
            let phase = t - (t / period).floor() * period;
            let saw = if phase <= rise { a * phase } else { a * rise - b * (phase - rise) };
            let dx = hx * T::from_usize((i - cell.i0).min(cell.i0 + cell.ni - i)).expect("offset");
            let dy = if grid.dim() == 1 {
                T::infinity()
            } else {
                hy * T::from_usize((j - cell.j0).min(cell.j0 + cell.nj - j)).expect("offset")
            };
            let bound = clip * dx.min(dy);
            if bound < saw {
                clipped += 1;
                (k, bound)
            } else {
                (k, saw.max(T::zero()))
            }
        })
        .collect();
    if let Some(&(k, u)) = values.iter().find(|&&(_, u)| u > cap || u < T::zero()) {
        return Err(Error::invariant(format!("0 <= u <= cap at node {k}"), u.as_f64(), cap.as_f64()));
    }
    Ok(CellSawtooth {
        values,
        axis,
        a,
        b,
        period,
        clip,
        clipped_fraction: T::from_usize(clipped).expect("count") / T::from_usize(nodes.len()).expect("count"),
    })
}

/// How `w − v` is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Perturbation {
    /// Unit cones alternating between the obstacles `v ± β`.
    #[default]
    Fronts,
    /// Per-cell sawtooth profiles.
    Cells,
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fronts" => Ok(Perturbation::Fronts),
            "cells" => Ok(Perturbation::Cells),
            _ => Err(Error::Domain(format!("unknown perturbation {s:?} (fronts, cells)"))),
        }
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Perturbation::Fronts => "fronts",
            Perturbation::Cells => "cells",
        })
    }
}

/// Parameters of [`almost_classical`].
#[derive(Debug, Clone, Copy)]
pub struct EikonalParams<T> {
    pub eps: T,
    /// Budget of `|v − u0|`; the perturbation uses what is left of `eps`.
    pub base_eps: T,
    /// Largest smoothing radius of the base.
    pub smoothing: T,
    /// Smoothing radii are at most this multiple of the distance to the boundary.
    pub boundary_reach: T,
    pub method: Perturbation,
    /// Allowed residual fraction.
    pub rho_max: T,
    /// Allowed `lip(w) − 1` in units of the mesh width.
    pub lip_mesh_constant: T,
    pub tol: T,
}

impl<T: Real> EikonalParams<T> {
    pub fn new(eps: T) -> Self {
        Self {
            eps,
            base_eps: eps / T::lit(20.0),
            smoothing: eps / T::lit(4.0),
            boundary_reach: T::lit(0.5),
            method: Perturbation::Fronts,
            rho_max: T::lit(0.05),
            lip_mesh_constant: T::lit(5.0),
            tol: T::lit(DEFAULT_TOL),
        }
    }
}

/// Measured properties of `w`.
#[derive(Debug, Clone)]
pub struct EikonalReport<T> {
    pub method: Perturbation,
    /// Fraction of interior nodes with `|‖Dw‖_* − 1| > 0.05`.
    pub residual_fraction: T,
    /// `max |w − v|`.
    pub sup_norm_u: T,
    /// `max |w − u0|` over boundary nodes.
    pub boundary_error: T,
    /// `max |w − u0|` over inside nodes.
    pub sup_error: T,
    pub lip_w: T,
    pub lip_boundary: T,
    pub hypotheses: Hypotheses<T>,
    pub base_lambda: T,
    pub cells: usize,
    pub collar: usize,
    /// Cells at the smallest size whose gradient oscillation stayed above the threshold.
    pub unresolved_cells: usize,
    pub layers: usize,
    pub checks: Vec<Check>,
}

impl<T: Real> EikonalReport<T> {
    pub fn ensure(&self) -> Result<()> {
        crate::error::ensure_all(&self.checks)
    }
}

/// Output of [`almost_classical`].
#[derive(Debug, Clone)]
pub struct EikonalSolution<T> {
    pub w: Vec<T>,
    pub v: Vec<T>,
    /// `|‖Dw‖_* − 1|` at interior nodes, `None` elsewhere.
    pub residual: Vec<Option<T>>,
    pub report: EikonalReport<T>,
}

/// Builds `w` with `w = u0` on boundary nodes, `|w − u0| ≤ eps`, `lip(w) ≈ 1` and
/// `‖Dw‖_* = 1` off a small residual set.
///
/// `u0` is given on every lattice node; only inside nodes are used. The report's
/// checks record the measured inequalities without failing; call
/// [`EikonalReport::ensure`] to turn a violation into an error.
pub fn almost_classical<T: Real>(grid: &GridDomain<T>, u0: &[T], params: &EikonalParams<T>) -> Result<EikonalSolution<T>> {
    if u0.len() != grid.len() {
        return Err(Error::Domain(format!("u0 has {} values for {} nodes", u0.len(), grid.len())));
    }
    if let Some(i) = u0.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if !(params.eps > T::zero() && params.base_eps > T::zero() && params.base_eps < params.eps) {
        return Err(Error::Domain(format!("need 0 < base_eps < eps, got {} and {}", params.base_eps, params.eps)));
    }
    let tol = params.tol;
    let inside = grid.inside_nodes();
    let bnd = grid.boundary_nodes();
    if bnd.is_empty() || inside.len() == bnd.len() {
        return Err(Error::Domain("domain needs boundary and interior nodes".into()));
    }
    let lip_boundary = grid.lip(u0, &bnd, tol)?;
    if !(lip_boundary < T::one()) {
        return Err(Error::Precondition(format!(
            "lip(u0, boundary) = {lip_boundary} must be below 1"
        )));
    }

    let space = grid.metric_space(&inside)?;
    let local_u0: Vec<T> = inside.iter().map(|&k| u0[k]).collect();
    let mut pos = vec![usize::MAX; grid.len()];
    for (p, &k) in inside.iter().enumerate() {
        pos[k] = p;
    }
    let f: Vec<usize> = bnd.iter().map(|&k| pos[k]).collect();
    let mut gp = GlobalParams::new(params.base_eps);
    gp.k = Some(T::one());
    gp.ball_step = Some(T::lit(1e6));
    gp.tol = tol;
    let approx = global_approx(&space, &f, &local_u0, &gp)?;
    let base_lambda = approx.stages.iter().fold(T::zero(), |m, s| m.max(s.lambda));
    let mut v0 = u0.to_vec();
    for (p, &k) in inside.iter().enumerate() {
        v0[k] = approx.u[p];
    }
    let radii = if params.smoothing >= grid.mesh() + grid.mesh() {
        clamped_radii(grid, params.smoothing, params.boundary_reach)
    } else {
        vec![T::zero(); grid.len()]
    };
    let v = variable_mollify(grid, &v0, &radii)?.field.into_vec();
    let hypotheses = check_hypotheses(grid, &v, tol)?;

    let base_dev = inside.iter().fold(T::zero(), |m, &k| m.max((v[k] - u0[k]).abs()));
    let room = params.eps - base_dev;
    let margin = T::lit(1e-3) * params.eps;
    if !(room > margin) {
        return Err(Error::invariant("|v - u0| leaves room below eps", base_dev.as_f64(), params.eps.as_f64()));
    }

    let mut report = EikonalReport {
        method: params.method,
        residual_fraction: T::zero(),
        sup_norm_u: T::zero(),
        boundary_error: T::zero(),
        sup_error: T::zero(),
        lip_w: T::zero(),
        lip_boundary,
        hypotheses,
        base_lambda,
        cells: 0,
        collar: 0,
        unresolved_cells: 0,
        layers: 0,
        checks: Vec::new(),
    };
    let mut w = match params.method {
        Perturbation::Fronts => {
            // Centering the obstacles on u0 doubles as the widest admissible band
            // whenever u0 itself leaves the fronts room to advance.
            let half = params.eps - margin;
            let (center, beta) = if grid.lip(u0, &inside, tol)? < T::one() { (u0, half) } else { (&v[..], room - margin) };
            let upper: Vec<T> = center.iter().map(|&c| c + beta).collect();
            let lower: Vec<T> = center.iter().map(|&c| c - beta).collect();
            // Lowering the sources by their depth behind the boundary helps on
            // some lattices and hurts on others; keep whichever leaves fewer
            // residual nodes.
            let depth = boundary_depths(grid);
            let mut best: Option<(Vec<T>, usize, usize)> = None;
            for lowered in [false, true] {
                let (mut w, layers) = fronts(grid, u0, &v, &upper, &lower, lowered.then_some(&depth[..]))?;
                for k in 0..grid.len() {
                    if grid.kind(k) != NodeKind::Interior {
                        w[k] = u0[k];
                    }
                }
                let bad = residual_count(grid, &w)?;
                if best.as_ref().map_or(true, |b| bad < b.2) {
                    best = Some((w, layers, bad));
                }
            }
            let (w, layers, _) = best.expect("two candidates");
            report.layers = layers;
            w
        }
        Perturbation::Cells => {
            let cap = (params.eps / T::lit(2.0)).min(room - margin);
            cells_perturbation(grid, &v, cap, &mut report)?
        }
    };
    for &k in &bnd {
        w[k] = u0[k];
    }
    for k in 0..grid.len() {
        if !grid.kind(k).is_inside() {
            w[k] = u0[k];
        }
    }

    let residual: Vec<Option<T>> = dual_residual(grid, &w)?;
    let interior = residual.iter().filter(|r| r.is_some()).count();
    let bad = residual.iter().flatten().filter(|&&r| r > T::lit(RESIDUAL_TOL)).count();
    report.residual_fraction = T::from_usize(bad).expect("count") / T::from_usize(interior.max(1)).expect("count");
    report.sup_norm_u = inside.iter().fold(T::zero(), |m, &k| m.max((w[k] - v[k]).abs()));
    report.boundary_error = bnd.iter().fold(T::zero(), |m, &k| m.max((w[k] - u0[k]).abs()));
    report.sup_error = inside.iter().fold(T::zero(), |m, &k| m.max((w[k] - u0[k]).abs()));
    report.lip_w = grid.lip(&w, &inside, tol)?;
    let h = grid.mesh();
    report.checks = vec![
        Check::new("boundary_error", report.boundary_error.as_f64(), 0.0),
        Check::new("|w - u0| <= eps", report.sup_error.as_f64(), (params.eps + tol).as_f64()),
        Check::new("lip(w) <= 1 + C h", report.lip_w.as_f64(), (T::one() + params.lip_mesh_constant * h).as_f64()),
        Check::new("residual_fraction <= rho_max", report.residual_fraction.as_f64(), params.rho_max.as_f64()),
    ];
    Ok(EikonalSolution { w, v, residual, report })
}

/// `|‖Dw‖_* − 1|` at interior nodes, `None` elsewhere.
fn dual_residual<T: Real>(grid: &GridDomain<T>, w: &[T]) -> Result<Vec<Option<T>>> {
    Ok(crate::smooth::dual_grad_field(grid, w)?.into_iter().map(|g| g.map(|n| (n - T::one()).abs())).collect())
}

fn residual_count<T: Real>(grid: &GridDomain<T>, w: &[T]) -> Result<usize> {
    Ok(dual_residual(grid, w)?.into_iter().flatten().filter(|&r| r > T::lit(RESIDUAL_TOL)).count())
}

/// Unit cones alternately rising to `upper` and falling to `lower`, starting from
/// the boundary values, optionally lowered by `depth`. Returns `w` on inside
/// nodes (`v` elsewhere) and the number of layers.
fn fronts<T: Real>(
    grid: &GridDomain<T>,
    u0: &[T],
    v: &[T],
    upper: &[T],
    lower: &[T],
    depth: Option<&[T]>,
) -> Result<(Vec<T>, usize)> {
    let n = grid.len();
    let mut w = v.to_vec();
    let mut assigned: Vec<bool> = (0..n).map(|k| grid.kind(k) != NodeKind::Interior).collect();
    let mut sources: Vec<(usize, T)> =
        grid.boundary_nodes().into_iter().map(|k| (k, u0[k] - depth.map_or(T::zero(), |d| d[k]))).collect();
    let mut rising = true;
    let mut layers = 0;
    let pts: Vec<[T; 2]> = (0..n).map(|k| grid.point(k)).collect();
    let xs: Vec<T> = pts.iter().map(|p| p[0]).collect();
    let ys: Vec<T> = pts.iter().map(|p| p[1]).collect();
    let norm = if grid.dim() == 1 { crate::metric::Norm::L1 } else { grid.norm().p };
    loop {
        let open: Vec<usize> = (0..n).filter(|&k| !assigned[k]).collect();
        if open.is_empty() {
            break;
        }
        if sources.is_empty() {
            return Err(Error::Domain(format!("{} interior nodes are not connected to the boundary", open.len())));
        }
        layers += 1;
        let sx: Vec<T> = sources.iter().map(|&(k, _)| xs[k]).collect();
        let sy: Vec<T> = sources.iter().map(|&(k, _)| ys[k]).collect();
        let sv: Vec<T> = sources.iter().map(|&(_, g)| g).collect();
        // Clamping between the unit-slope envelopes of everything assigned so far
        // keeps the union 1-Lipschitz; a layer alone only respects its sources.
        let fixed: Vec<usize> = (0..n).filter(|&k| assigned[k] && grid.kind(k).is_inside()).collect();
        let fx: Vec<T> = fixed.iter().map(|&k| xs[k]).collect();
        let fy: Vec<T> = fixed.iter().map(|&k| ys[k]).collect();
        let fv: Vec<T> = fixed.iter().map(|&k| w[k]).collect();
        let phi: Vec<T> = with_plane_norm!(norm, N => open
            .par_iter()
            .map(|&k| {
                let val = cone::<T, N>(xs[k], ys[k], T::one(), &sx, &sy, &sv, rising);
                let hi = cone::<T, N>(xs[k], ys[k], T::one(), &fx, &fy, &fv, true);
                let lo = cone::<T, N>(xs[k], ys[k], T::one(), &fx, &fy, &fv, false);
                val.max(lo).min(hi)
            })
            .collect());
        // A layer only grows through nodes connected to its own sources, so a
        // front never jumps over ground that an earlier front has not reached.
        let mut slot = vec![usize::MAX; n];
        for (p, &k) in open.iter().enumerate() {
            let val = phi[p];
            if if rising { val < upper[k] } else { val > lower[k] } {
                slot[k] = p;
            }
        }
        let mut fresh: Vec<usize> = Vec::new();
        let mut seeds: Vec<usize> = if layers == 1 {
            sources.iter().flat_map(|&(b, _)| ring(grid, b)).collect()
        } else {
            sources.iter().map(|&(k, _)| k).collect()
        };
        while let Some(k) = seeds.pop() {
            if slot[k] == usize::MAX || assigned[k] {
                continue;
            }
            w[k] = phi[slot[k]];
            assigned[k] = true;
            fresh.push(k);
            seeds.extend(ring(grid, k));
        }
        fresh.sort_unstable();
        if fresh.is_empty() {
            return Err(Error::invariant("front advances", 0.0, 1.0));
        }
        let mut next = vec![false; n];
        for &k in &fresh {
            for m in ring(grid, k) {
                if !assigned[m] {
                    next[m] = true;
                }
            }
        }
        // Nodes just past the front restart from the mirror image of the current
        // layer across the line where it meets the obstacle, so the next cones
        // continue the reflected plane. The value is clamped to stay 1-Lipschitz
        // against assigned neighbors.
        let obstacle = if rising { upper } else { lower };
        let mut layer = vec![None; n];
        for (p, &k) in open.iter().enumerate() {
            layer[k] = Some(phi[p]);
        }
        sources = open
            .iter()
            .zip(&phi)
            .filter(|&(&k, _)| next[k])
            .map(|(&k, &val)| {
                let (mut lo, mut hi) = (T::neg_infinity(), T::infinity());
                for m in ring(grid, k).filter(|&m| assigned[m]) {
                    let d = grid.node_dist(k, m);
                    lo = lo.max(w[m] - d);
                    hi = hi.min(w[m] + d);
                }
                let kappa = match (lattice_grad(grid, k, |m| layer[m]), lattice_grad(grid, k, |m| Some(obstacle[m]))) {
                    (Some(g), Some(a)) => mirror_factor(grid, g, a),
                    _ => T::lit(2.0),
                };
                (k, (val - kappa * (val - obstacle[k])).max(lo).min(hi))
            })
            .collect();
        rising = !rising;
    }
    Ok((w, layers))
}

/// Central differences of `f` at node `k`, one-sided where a neighbor is
/// missing or undefined.
fn lattice_grad<T: Real>(grid: &GridDomain<T>, k: usize, f: impl Fn(usize) -> Option<T>) -> Option<[T; 2]> {
    let [left, right, down, up] = grid.axis_neighbors(k);
    let [hx, hy] = grid.spacing();
    let c = f(k)?;
    let diff = |a: Option<usize>, b: Option<usize>, h: T| match (a.and_then(&f), b.and_then(&f)) {
        (Some(x), Some(y)) => Some((y - x) / (h + h)),
        (Some(x), None) => Some((c - x) / h),
        (None, Some(y)) => Some((y - c) / h),
        (None, None) => None,
    };
    let gx = diff(left, right, hx)?;
    let gy = if grid.dim() == 1 { T::zero() } else { diff(down, up, hy)? };
    Some([gx, gy])
}

/// Factor `κ` such that `φ − κ (φ − obstacle)` continues `φ` across the crease
/// `φ = obstacle` with the mirrored gradient `g − t n`, where `n` is the crease
/// normal and `t > 0` restores `‖g − t n‖_* = 1`.
fn mirror_factor<T: Real>(grid: &GridDomain<T>, g: [T; 2], a: [T; 2]) -> T {
    let fallback = T::lit(2.0);
    let gn = grid.dual_norm(g[0], g[1]);
    if !(gn > T::lit(0.5)) {
        return fallback;
    }
    let g = [g[0] / gn, g[1] / gn];
    let d = [g[0] - a[0], g[1] - a[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if !(len > T::lit(1e-6)) {
        return fallback;
    }
    let nrm = [d[0] / len, d[1] / len];
    let excess = |t: T| grid.dual_norm(g[0] - t * nrm[0], g[1] - t * nrm[1]) - T::one();
    // The excess is convex in t and vanishes at 0; scan past its negative dip
    // for the second root, then bisect.
    let step = T::lit(0.01);
    let (mut a_t, mut dipped) = (T::zero(), false);
    let mut b_t = None;
    for i in 1..=400 {
        let t = step * T::from_usize(i).expect("count");
        let e = excess(t);
        if e < T::zero() {
            dipped = true;
            a_t = t;
        } else if dipped {
            b_t = Some(t);
            break;
        }
    }
    let Some(mut b_t) = b_t else { return fallback };
    for _ in 0..60 {
        let m = (a_t + b_t) / T::lit(2.0);
        if excess(m) < T::zero() {
            a_t = m;
        } else {
            b_t = m;
        }
    }
    ((a_t + b_t) / T::lit(2.0) / len).min(T::lit(16.0))
}

/// How far each boundary node lies behind the innermost boundary line fitted
/// through its neighborhood, as a distance in the ambient norm. Zero off the
/// boundary and in one dimension.
fn boundary_depths<T: Real>(grid: &GridDomain<T>) -> Vec<T> {
    const WINDOW: isize = 4;
    let mut out = vec![T::zero(); grid.len()];
    if grid.dim() == 1 {
        return out;
    }
    let [nx, ny] = grid.shape();
    for b in grid.boundary_nodes() {
        let (i, j) = grid.ij(b);
        let (mut edge, mut inner) = (Vec::new(), Vec::new());
        for dj in -WINDOW..=WINDOW {
            for di in -WINDOW..=WINDOW {
                let (x, y) = (i as isize + di, j as isize + dj);
                if x < 0 || y < 0 || x as usize >= nx || y as usize >= ny {
                    continue;
                }
                let m = grid.index(x as usize, y as usize);
                match grid.kind(m) {
                    NodeKind::Boundary => edge.push(grid.point(m)),
                    NodeKind::Interior => inner.push(grid.point(m)),
                    NodeKind::Exterior => {}
                }
            }
        }
        if edge.len() < 3 || inner.is_empty() {
            continue;
        }
        let mean = |pts: &[[T; 2]]| {
            let m = T::from_usize(pts.len()).expect("count");
            let s = pts.iter().fold([T::zero(); 2], |s, p| [s[0] + p[0], s[1] + p[1]]);
            [s[0] / m, s[1] / m]
        };
        let c = mean(&edge);
        let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
        for p in &edge {
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            sxx = sxx + dx * dx;
            sxy = sxy + dx * dy;
            syy = syy + dy * dy;
        }
        let half = (sxx - syy) / T::lit(2.0);
        let lam = (sxx + syy) / T::lit(2.0) - (half * half + sxy * sxy).sqrt();
        let (u, v) = ([sxy, lam - sxx], [lam - syy, sxy]);
        let e = if u[0] * u[0] + u[1] * u[1] >= v[0] * v[0] + v[1] * v[1] { u } else { v };
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        if !(len > T::zero()) {
            continue;
        }
        let mut nrm = [e[0] / len, e[1] / len];
        let ci = mean(&inner);
        if nrm[0] * (ci[0] - c[0]) + nrm[1] * (ci[1] - c[1]) < T::zero() {
            nrm = [-nrm[0], -nrm[1]];
        }
        let p = grid.point(b);
        let behind = edge
            .iter()
            .fold(T::zero(), |m, q| m.max(nrm[0] * (q[0] - p[0]) + nrm[1] * (q[1] - p[1])));
        out[b] = behind.min(grid.mesh()) / grid.dual_norm(nrm[0], nrm[1]);
    }
    out
}

/// The up to eight lattice neighbors of a node.
fn ring<T: Real>(grid: &GridDomain<T>, k: usize) -> impl Iterator<Item = usize> + '_ {
    let (i, j) = grid.ij(k);
    let [nx, ny] = grid.shape();
    (-1isize..=1)
        .flat_map(|dj| (-1isize..=1).map(move |di| (di, dj)))
        .filter(|&(di, dj)| di != 0 || dj != 0)
        .filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny).then(|| grid.index(a as usize, b as usize))
        })
}

/// Per-cell sawtooth perturbation with refinement where `Dv` oscillates.
fn cells_perturbation<T: Real>(grid: &GridDomain<T>, v: &[T], cap: T, report: &mut EikonalReport<T>) -> Result<Vec<T>> {
    let grads = grad_field(grid, v)?;
    let stats = |c: &Cell| -> Option<([T; 2], T)> {
        let g: Vec<[T; 2]> = c.nodes(grid).into_iter().filter_map(|k| grads[k]).collect();
        if g.is_empty() {
            return None;
        }
        let m = T::from_usize(g.len()).expect("count");
        let p = g.iter().fold([T::zero(); 2], |s, x| [s[0] + x[0], s[1] + x[1]]);
        let p = [p[0] / m, p[1] / m];
        let osc = g.iter().fold(T::zero(), |o, x| o.max(grid.dual_norm(x[0] - p[0], x[1] - p[1])));
        Some((p, osc))
    };
    let threshold = |p: [T; 2]| T::lit(0.1) * (T::one() - grid.dual_norm(p[0], p[1]));
    let dec = refine_cells(grid, |c| {
        if c.diameter(grid) > cap + cap {
            return true;
        }
        stats(c).is_some_and(|(p, osc)| osc > threshold(p))
    })?;
    report.cells = dec.cells.len();
    report.collar = dec.collar.len();
    let mut w = v.to_vec();
    let results: Vec<Result<Option<CellSawtooth<T>>>> = dec
        .cells
        .par_iter()
        .map(|c| {
            let Some((p, osc)) = stats(c) else { return Ok(None) };
            let target = T::one() - osc.max(T::zero());
            if grid.dual_norm(p[0], p[1]) >= target - T::lit(1e-6) {
                return Ok(None);
            }
            cell_sawtooth_to(grid, c, p, cap, target).map(Some)
        })
        .collect();
    for (c, r) in dec.cells.iter().zip(results) {
        let Some((p, osc)) = stats(c) else { continue };
        if osc > threshold(p) {
            report.unresolved_cells += 1;
        }
        if let Some(s) = r? {
            for (k, u) in s.values {
                w[k] = v[k] + u;
            }
        }
    }
    Ok(w)
}
