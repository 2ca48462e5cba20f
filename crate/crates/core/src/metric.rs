//! Finite metric spaces, norms, Lipschitz constants and set distances.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{extreme_dist_key, max_ratio_key, with_plane_norm, Packed, PlaneNorm};
use crate::scalar::Real;

/// Default absolute tolerance for floating comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Coordinate spaces up to this size get a cached distance matrix.
pub const CACHE_LIMIT: usize = 2000;

/// Exhaustive triangle checks are used up to this many points.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 500;

/// A p-norm on coordinate differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    /// Sum of absolute values.
    L1,
    /// Euclidean norm.
    L2,
    /// Maximum absolute value.
    LInf,
}

impl Norm {
    /// The dual exponent: ℓ1 and ℓ∞ are dual to each other, ℓ2 is self-dual.
    pub fn dual(self) -> Norm {
        match self {
            Norm::L1 => Norm::LInf,
            Norm::L2 => Norm::L2,
            Norm::LInf => Norm::L1,
        }
    }

    pub fn eval<T: Real>(self, v: &[T]) -> T {
        match self {
            Norm::L1 => v.iter().fold(T::zero(), |s, &x| s + x.abs()),
            Norm::L2 => v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt(),
            Norm::LInf => v.iter().fold(T::zero(), |m, &x| m.max(x.abs())),
        }
    }

    #[inline(always)]
    pub fn eval2<T: Real>(self, a: T, b: T) -> T {
        match self {
            Norm::L1 => a.abs() + b.abs(),
            Norm::L2 => (a * a + b * b).sqrt(),
            Norm::LInf => a.abs().max(b.abs()),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::LInf => "linf",
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" | "1" => Ok(Norm::L1),
            "l2" | "2" => Ok(Norm::L2),
            "linf" | "inf" | "l_inf" | "max" => Ok(Norm::LInf),
            other => Err(Error::Domain(format!("unknown norm tag `{other}` (expected l1, l2 or linf)"))),
        }
    }
}

/// An ambient norm `p` together with its dual `q`, used for gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormContext {
    pub p: Norm,
    pub q: Norm,
}

impl NormContext {
    pub fn new(p: Norm) -> Self {
        Self { p, q: p.dual() }
    }

    pub fn norm<T: Real>(&self, v: &[T]) -> T {
        self.p.eval(v)
    }

    pub fn dual_norm<T: Real>(&self, g: &[T]) -> T {
        self.q.eval(g)
    }
}

/// Real values attached to point or node indices. All values are finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField<T>(Vec<T>);

impl<T: Real> ScalarField<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, c: T) -> Self {
        Self(vec![c; n])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// Values at the given indices, in order.
    pub fn restrict(&self, idx: &[usize]) -> Vec<T> {
        idx.iter().map(|&i| self.0[i]).collect()
    }
}

impl<T> Deref for ScalarField<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone)]
enum Repr<T> {
    Coords { dim: usize, coords: Vec<T>, norm: Norm },
    Matrix { d: Vec<T> },
}

/// Borrowed distance evaluator selected once per loop so that the inner
/// loops are monomorphized per metric.
#[derive(Clone, Copy)]
pub(crate) enum DistKernel<'a, T> {
    Table(&'a [T], usize),
    Line(&'a [T]),
    Plane(&'a [T], &'a [T], Norm),
    General(&'a MetricSpace<T>),
}

/// Evaluates `$body` with `$d` bound to a concrete `Fn(usize, usize) -> T`
/// for the metric of `$space`.
macro_rules! with_dist {
    ($space:expr, |$d:ident| $body:expr) => {{
        use $crate::metric::{DistKernel, Norm};
        match $space.kernel() {
            DistKernel::Table(c, n) => {
                let $d = move |i: usize, j: usize| c[i * n + j];
                $body
            }
            DistKernel::Line(x) => {
                let $d = move |i: usize, j: usize| (x[i] - x[j]).abs();
                $body
            }
            DistKernel::Plane(xs, ys, Norm::L1) => {
                let $d = move |i: usize, j: usize| (xs[i] - xs[j]).abs() + (ys[i] - ys[j]).abs();
                $body
            }
            DistKernel::Plane(xs, ys, Norm::L2) => {
                let $d = move |i: usize, j: usize| {
                    let (a, b) = (xs[i] - xs[j], ys[i] - ys[j]);
                    (a * a + b * b).sqrt()
                };
                $body
            }
            DistKernel::Plane(xs, ys, Norm::LInf) => {
                let $d = move |i: usize, j: usize| (xs[i] - xs[j]).abs().max((ys[i] - ys[j]).abs());
                $body
            }
            DistKernel::General(sp) => {
                let $d = move |i: usize, j: usize| sp.dist(i, j);
                $body
            }
        }
    }};
}
pub(crate) use with_dist;

/// A finite metric space given by coordinates and a norm, or by a distance matrix.
#[derive(Debug, Clone)]
pub struct MetricSpace<T> {
    n: usize,
    repr: Repr<T>,
    cache: Option<Vec<T>>,
    planes: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Real> MetricSpace<T> {
    /// Points with `dim` coordinates each, stored row by row in `coords`.
    pub fn from_coords(dim: usize, coords: Vec<T>, norm: Norm) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("coordinate dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Domain(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i / dim));
        }
        let n = coords.len() / dim;
        let planes = (dim == 2).then(|| {
            (coords.iter().step_by(2).copied().collect(), coords.iter().skip(1).step_by(2).copied().collect())
        });
        let mut space = Self { n, repr: Repr::Coords { dim, coords, norm }, cache: None, planes };
        if n <= CACHE_LIMIT {
            let d = (0..n * n).map(|k| space.dist(k / n, k % n)).collect();
            space.cache = Some(d);
        }
        Ok(space)
    }

    /// Points given as 2D pairs.
    pub fn from_points2(points: &[[T; 2]], norm: Norm) -> Result<Self> {
        Self::from_coords(2, points.iter().flatten().copied().collect(), norm)
    }

    /// Points on the real line.
    pub fn from_points1(points: &[T], norm: Norm) -> Result<Self> {
        Self::from_coords(1, points.to_vec(), norm)
    }

    /// An explicit `n × n` distance matrix in row-major order.
    ///
    /// Symmetry, zero diagonal and nonnegativity are enforced; the triangle
    /// inequality is checked separately by [`MetricSpace::validate_triangle`].
    pub fn from_matrix(n: usize, d: Vec<T>, tol: T) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Domain(format!("distance matrix has {} entries, expected {}", d.len(), n * n)));
        }
        for i in 0..n {
            if d[i * n + i].abs() > tol {
                return Err(Error::Domain(format!("d({i},{i}) = {} is not zero", d[i * n + i])));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::Domain(format!("d({i},{j}) = {v} is not a finite nonnegative number")));
                }
                if (v - d[j * n + i]).abs() > tol {
                    return Err(Error::Domain(format!("d({i},{j}) = {v} differs from d({j},{i}) = {}", d[j * n + i])));
                }
            }
        }
        let mut d = d;
        for i in 0..n {
            d[i * n + i] = T::zero();
            for j in 0..i {
                d[j * n + i] = d[i * n + j];
            }
        }
        Ok(Self { n, repr: Repr::Matrix { d }, cache: None, planes: None })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The norm tag, for coordinate spaces.
    pub fn norm(&self) -> Option<Norm> {
        match &self.repr {
            Repr::Coords { norm, .. } => Some(*norm),
            Repr::Matrix { .. } => None,
        }
    }

    /// Coordinate dimension, for coordinate spaces.
    pub fn dim(&self) -> Option<usize> {
        match &self.repr {
            Repr::Coords { dim, .. } => Some(*dim),
            Repr::Matrix { .. } => None,
        }
    }

    /// Coordinates of point `i`, for coordinate spaces.
    pub fn coords(&self, i: usize) -> Option<&[T]> {
        match &self.repr {
            Repr::Coords { dim, coords, .. } => Some(&coords[i * dim..(i + 1) * dim]),
            Repr::Matrix { .. } => None,
        }
    }

    /// Planar coordinate arrays when the space is a large 2D coordinate space.
    pub(crate) fn planar(&self) -> Option<(&[T], &[T], Norm)> {
        match (&self.cache, &self.planes, self.norm()) {
            (None, Some((xs, ys)), Some(norm)) => Some((xs, ys, norm)),
            _ => None,
        }
    }

    pub(crate) fn kernel(&self) -> DistKernel<'_, T> {
        if let Some(c) = &self.cache {
            return DistKernel::Table(c, self.n);
        }
        match &self.repr {
            Repr::Matrix { d } => DistKernel::Table(d, self.n),
            Repr::Coords { dim: 1, coords, .. } => DistKernel::Line(coords),
            Repr::Coords { norm, .. } => match &self.planes {
                Some((xs, ys)) => DistKernel::Plane(xs, ys, *norm),
                None => DistKernel::General(self),
            },
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> T {
        if let Some(c) = &self.cache {
            return c[i * self.n + j];
        }
        match &self.repr {
            Repr::Coords { dim, coords, norm } => match *dim {
                1 => (coords[i] - coords[j]).abs(),
                2 => norm.eval2(coords[2 * i] - coords[2 * j], coords[2 * i + 1] - coords[2 * j + 1]),
                d => {
                    let (a, b) = (&coords[i * d..(i + 1) * d], &coords[j * d..(j + 1) * d]);
                    match norm {
                        Norm::L1 => a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y).abs()),
                        Norm::L2 => a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y)).sqrt(),
                        Norm::LInf => a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())),
                    }
                }
            },
            Repr::Matrix { d } => d[i * self.n + j],
        }
    }

    /// The subspace formed by `idx`, re-indexed `0..idx.len()` in the given order.
    pub fn subspace(&self, idx: &[usize]) -> Result<Self> {
        check_indices(idx, self.n)?;
        match &self.repr {
            Repr::Coords { dim, coords, norm } => {
                let sub = idx.iter().flat_map(|&i| coords[i * dim..(i + 1) * dim].iter().copied()).collect();
                Self::from_coords(*dim, sub, *norm)
            }
            Repr::Matrix { d } => {
                let m = idx.len();
                let sub = (0..m * m).map(|k| d[idx[k / m] * self.n + idx[k % m]]).collect();
                Ok(Self { n: m, repr: Repr::Matrix { d: sub }, cache: None, planes: None })
            }
        }
    }

    /// Checks `d(i,k) <= d(i,j) + d(j,k) + tol` on all triples (up to
    /// [`EXHAUSTIVE_TRIANGLE_LIMIT`] points) or on `samples` random triples.
    pub fn validate_triangle(&self, tol: T, samples: usize, seed: u64) -> Result<()> {
        let n = self.n;
        let violation = |i: usize, j: usize, k: usize| -> Option<Error> {
            let (lhs, rhs) = (self.dist(i, k), self.dist(i, j) + self.dist(j, k));
            (lhs > rhs + tol).then(|| {
                Error::Domain(format!("triangle inequality fails on ({i},{j},{k}): {lhs} > {rhs}"))
            })
        };
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            let found = (0..n).into_par_iter().find_map_first(|i| {
                (0..n).find_map(|j| (i + 1..n).find_map(|k| violation(i, j, k)))
            });
            return found.map_or(Ok(()), Err);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            if let Some(e) = violation(i, j, k) {
                return Err(e);
            }
        }
        Ok(())
    }

    /// `dist(x, B)`: minimum of `d(x,y)` over `y ∈ B`.
    pub fn dist_to_set(&self, x: usize, b: &[usize]) -> Result<T> {
        if b.is_empty() {
            return Err(Error::Domain("distance to an empty set".into()));
        }
        check_indices(&[x], self.n)?;
        check_indices(b, self.n)?;
        Ok(b.iter().fold(T::infinity(), |m, &y| m.min(self.dist(x, y))))
    }

    /// `diam(A)`: maximum pairwise distance within `A`.
    pub fn diameter(&self, a: &[usize]) -> Result<T> {
        if a.is_empty() {
            return Err(Error::Domain("diameter of an empty set".into()));
        }
        check_indices(a, self.n)?;
        if let Some((xs, ys, norm)) = self.planar() {
            let pk = Packed::gather(xs, ys, std::iter::repeat_n(T::zero(), a.len()), a);
            let rows: Vec<T> = with_plane_norm!(norm, N => (0..a.len())
                .into_par_iter()
                .map(|p| extreme_dist_key::<T, N>(pk.xs[p], pk.ys[p], &pk.xs[p + 1..], &pk.ys[p + 1..], true))
                .collect::<Vec<T>>()
                .into_iter()
                .map(|k| <N as PlaneNorm<T>>::key_to_dist(k.max(T::zero())))
                .collect());
            return Ok(rows.into_iter().fold(T::zero(), T::max));
        }
        let rows: Vec<T> = with_dist!(self, |d| (0..a.len())
            .into_par_iter()
            .map(|p| a[p + 1..].iter().fold(T::zero(), |m, &y| m.max(d(a[p], y))))
            .collect());
        Ok(rows.into_iter().fold(T::zero(), T::max))
    }

    /// `dist(A, B)`: minimum distance between a point of `A` and a point of `B`.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> Result<T> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Domain("distance between sets requires both to be nonempty".into()));
        }
        check_indices(a, self.n)?;
        check_indices(b, self.n)?;
        if let Some((xs, ys, norm)) = self.planar() {
            let pk = Packed::gather(xs, ys, std::iter::repeat_n(T::zero(), b.len()), b);
            let rows: Vec<T> = with_plane_norm!(norm, N => a
                .par_iter()
                .map(|&x| <N as PlaneNorm<T>>::key_to_dist(extreme_dist_key::<T, N>(xs[x], ys[x], &pk.xs, &pk.ys, false)))
                .collect());
            return Ok(rows.into_iter().fold(T::infinity(), T::min));
        }
        let rows: Vec<T> = with_dist!(self, |d| a
            .par_iter()
            .map(|&x| b.iter().fold(T::infinity(), |m, &y| m.min(d(x, y))))
            .collect());
        Ok(rows.into_iter().fold(T::infinity(), T::min))
    }

    /// `(dist(A,B), diam(A))`.
    pub fn set_metrics(&self, a: &[usize], b: &[usize]) -> Result<(T, T)> {
        Ok((self.set_distance(a, b)?, self.diameter(a)?))
    }

    /// Lipschitz constant of `f` (indexed like the space) on the subset `s`.
    pub fn lip_constant(&self, f: &[T], s: &[usize], tol: T) -> Result<Lip<T>> {
        if f.len() != self.n {
            return Err(Error::Domain(format!("field has {} values for {} points", f.len(), self.n)));
        }
        if s.is_empty() {
            return Err(Error::Domain("Lipschitz constant on an empty set".into()));
        }
        check_indices(s, self.n)?;
        if let Some((xs, ys, norm)) = self.planar() {
            return lip_planar(xs, ys, norm, f, s, tol);
        }
        with_dist!(self, |d| lip_over(s, d, f, tol))
    }

    /// Lipschitz constant over every point of the space.
    pub fn lip_all(&self, f: &[T], tol: T) -> Result<Lip<T>> {
        let all: Vec<usize> = (0..self.n).collect();
        self.lip_constant(f, &all, tol)
    }
}

/// A Lipschitz constant together with a pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lip<T> {
    pub value: T,
    pub witness: Option<(usize, usize)>,
}

/// Maximum of `|f(i) - f(j)| / d(i,j)` over pairs of `s`, with a deterministic witness.
pub(crate) fn lip_over<T: Real>(
    s: &[usize],
    dist: impl Fn(usize, usize) -> T + Sync,
    f: &[T],
    tol: T,
) -> Result<Lip<T>> {
    let rows: Vec<Result<(T, Option<(usize, usize)>)>> = (0..s.len())
        .into_par_iter()
        .map(|p| lip_row(s[p], &s[p + 1..], &dist, f, tol))
        .collect();
    let mut out = Lip { value: T::zero(), witness: None };
    for r in rows {
        let (v, w) = r?;
        if v > out.value {
            out = Lip { value: v, witness: w };
        }
    }
    Ok(out)
}

fn lip_planar<T: Real>(xs: &[T], ys: &[T], norm: Norm, f: &[T], s: &[usize], tol: T) -> Result<Lip<T>> {
    let pk = Packed::gather(xs, ys, s.iter().map(|&i| f[i]), s);
    let m = s.len();
    let rows: Vec<T> = with_plane_norm!(norm, N => (0..m)
        .into_par_iter()
        .map(|p| {
            let (tx, ty, tv) = pk.tail(p + 1);
            <N as PlaneNorm<T>>::key_to_ratio(max_ratio_key::<T, N>(pk.xs[p], pk.ys[p], pk.vs[p], tx, ty, tv))
        })
        .collect());
    let row_exact = |p: usize| lip_row(s[p], &s[p + 1..], |i, j| norm.eval2(xs[i] - xs[j], ys[i] - ys[j]), f, tol);
    let mut best = (T::zero(), usize::MAX);
    for (p, &r) in rows.iter().enumerate() {
        let r = if r.is_finite() { r } else { row_exact(p)?.0 };
        if r > best.0 {
            best = (r, p);
        }
    }
    if best.1 == usize::MAX {
        return Ok(Lip { value: T::zero(), witness: None });
    }
    let (exact, witness) = row_exact(best.1)?;
    Ok(Lip { value: exact.max(best.0), witness })
}

/// Largest quotient between `i` and the points of `rest`, with its pair.
fn lip_row<T: Real>(
    i: usize,
    rest: &[usize],
    dist: impl Fn(usize, usize) -> T,
    f: &[T],
    tol: T,
) -> Result<(T, Option<(usize, usize)>)> {
    let fi = f[i];
    let mut best = T::zero();
    let mut arg = None;
    for &j in rest {
        let diff = (fi - f[j]).abs();
        let d = dist(i, j);
        if d <= T::zero() {
            if diff > tol {
                return Err(Error::InfiniteLipschitz(i, j));
            }
            continue;
        }
        if diff > best * d {
            best = diff / d;
            arg = Some((i, j));
        }
    }
    Ok((best, arg))
}

pub(crate) fn check_indices(idx: &[usize], n: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::Domain(format!("index {i} out of range for {n} points"))),
        None => Ok(()),
    }
}

/// Sorted complement of `sub` within `0..n`.
pub fn complement(n: usize, sub: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in sub {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}

/// Sorts and deduplicates an index list.
pub fn normalize_subset(mut idx: Vec<usize>) -> Vec<usize> {
    idx.sort_unstable();
    idx.dedup();
    idx
}
