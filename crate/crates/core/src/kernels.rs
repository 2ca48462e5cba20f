//! Lane-unrolled inner loops over contiguous planar coordinate arrays.
//!
//! Ratios and distances are compared through monotone keys (squared values
//! for the Euclidean norm) so that the hot loops avoid square roots.

use crate::scalar::Real;

const LANES: usize = 4;

/// A planar norm with monotone comparison keys.
pub(crate) trait PlaneNorm<T: Real>: Copy + Send + Sync {
    fn dist(a: T, b: T) -> T;
    /// Monotone in `d(a,b)`.
    fn dist_key(a: T, b: T) -> T;
    fn key_to_dist(k: T) -> T;
    /// Monotone in `|dv| / d(a,b)`.
    fn ratio_key(dv: T, a: T, b: T) -> T;
    fn key_to_ratio(k: T) -> T;
}

#[derive(Clone, Copy)]
pub(crate) struct L1;
#[derive(Clone, Copy)]
pub(crate) struct L2;
#[derive(Clone, Copy)]
pub(crate) struct LInf;

impl<T: Real> PlaneNorm<T> for L1 {
    #[inline(always)]
    fn dist(a: T, b: T) -> T {
        a.abs() + b.abs()
    }
    #[inline(always)]
    fn dist_key(a: T, b: T) -> T {
        a.abs() + b.abs()
    }
    #[inline(always)]
    fn key_to_dist(k: T) -> T {
        k
    }
    #[inline(always)]
    fn ratio_key(dv: T, a: T, b: T) -> T {
        dv.abs() / (a.abs() + b.abs())
    }
    #[inline(always)]
    fn key_to_ratio(k: T) -> T {
        k
    }
}

impl<T: Real> PlaneNorm<T> for L2 {
    #[inline(always)]
    fn dist(a: T, b: T) -> T {
        (a * a + b * b).sqrt()
    }
    #[inline(always)]
    fn dist_key(a: T, b: T) -> T {
        a * a + b * b
    }
    #[inline(always)]
    fn key_to_dist(k: T) -> T {
        k.sqrt()
    }
    #[inline(always)]
    fn ratio_key(dv: T, a: T, b: T) -> T {
        dv * dv / (a * a + b * b)
    }
    #[inline(always)]
    fn key_to_ratio(k: T) -> T {
        k.sqrt()
    }
}

impl<T: Real> PlaneNorm<T> for LInf {
    #[inline(always)]
    fn dist(a: T, b: T) -> T {
        a.abs().max(b.abs())
    }
    #[inline(always)]
    fn dist_key(a: T, b: T) -> T {
        let (a, b) = (a.abs(), b.abs());
        if a > b {
            a
        } else {
            b
        }
    }
    #[inline(always)]
    fn key_to_dist(k: T) -> T {
        k
    }
    #[inline(always)]
    fn ratio_key(dv: T, a: T, b: T) -> T {
        dv.abs() / <Self as PlaneNorm<T>>::dist_key(a, b)
    }
    #[inline(always)]
    fn key_to_ratio(k: T) -> T {
        k
    }
}

/// Evaluates `$body` with the type alias `$n` bound to the planar norm type for `$norm`.
macro_rules! with_plane_norm {
    ($norm:expr, $n:ident => $body:expr) => {{
        match $norm {
            $crate::metric::Norm::L1 => {
                type $n = $crate::kernels::L1;
                $body
            }
            $crate::metric::Norm::L2 => {
                type $n = $crate::kernels::L2;
                $body
            }
            $crate::metric::Norm::LInf => {
                type $n = $crate::kernels::LInf;
                $body
            }
        }
    }};
}
pub(crate) use with_plane_norm;

/// Contiguous copy of selected planar points and values.
pub(crate) struct Packed<T> {
    pub xs: Vec<T>,
    pub ys: Vec<T>,
    pub vs: Vec<T>,
}

impl<T: Real> Packed<T> {
    pub fn gather(xs: &[T], ys: &[T], vals: impl Iterator<Item = T>, idx: &[usize]) -> Self {
        let p = Self {
            xs: idx.iter().map(|&i| xs[i]).collect(),
            ys: idx.iter().map(|&i| ys[i]).collect(),
            vs: vals.collect(),
        };
        debug_assert_eq!(p.vs.len(), p.xs.len());
        p
    }

    pub fn tail(&self, from: usize) -> (&[T], &[T], &[T]) {
        (&self.xs[from..], &self.ys[from..], &self.vs[from..])
    }
}

#[inline(always)]
fn equalize<'a, T>(xs: &'a [T], ys: &'a [T], vs: &'a [T]) -> (&'a [T], &'a [T], &'a [T]) {
    let n = xs.len().min(ys.len()).min(vs.len());
    (&xs[..n], &ys[..n], &vs[..n])
}

#[inline(always)]
fn lanes<T>(c: &[T]) -> &[T; LANES] {
    c.try_into().expect("chunk of LANES")
}

/// Largest ratio key `|v0 − vs[j]| / d(p0, p_j)`. Zero distances give `inf`
/// for distinct values and are ignored (NaN) for equal values.
#[inline(always)]
pub(crate) fn max_ratio_key<T: Real, N: PlaneNorm<T>>(x0: T, y0: T, v0: T, xs: &[T], ys: &[T], vs: &[T]) -> T {
    let (xs, ys, vs) = equalize(xs, ys, vs);
    let mut acc = [T::zero(); LANES];
    let cx = xs.chunks_exact(LANES);
    let tail = cx.remainder().len();
    for ((cx, cy), cv) in cx.zip(ys.chunks_exact(LANES)).zip(vs.chunks_exact(LANES)) {
        let (cx, cy, cv) = (lanes(cx), lanes(cy), lanes(cv));
        for l in 0..LANES {
            let r = N::ratio_key(v0 - cv[l], x0 - cx[l], y0 - cy[l]);
            acc[l] = if r > acc[l] { r } else { acc[l] };
        }
    }
    let mut best = acc.iter().fold(T::zero(), |m, &a| if a > m { a } else { m });
    let n = xs.len();
    for j in n - tail..n {
        let r = N::ratio_key(v0 - vs[j], x0 - xs[j], y0 - ys[j]);
        best = if r > best { r } else { best };
    }
    best
}

/// `min_j vs[j] + λ d(p0, p_j)` when `upper`, else `max_j vs[j] − λ d(p0, p_j)`.
#[inline(always)]
pub(crate) fn cone<T: Real, N: PlaneNorm<T>>(x0: T, y0: T, lambda: T, xs: &[T], ys: &[T], vs: &[T], upper: bool) -> T {
    let (xs, ys, vs) = equalize(xs, ys, vs);
    let n = xs.len();
    let tail = n % LANES;
    let chunks = || xs.chunks_exact(LANES).zip(ys.chunks_exact(LANES)).zip(vs.chunks_exact(LANES));
    if upper {
        let mut acc = [T::infinity(); LANES];
        for ((cx, cy), cv) in chunks() {
            let (cx, cy, cv) = (lanes(cx), lanes(cy), lanes(cv));
            for l in 0..LANES {
                let c = cv[l] + lambda * N::dist(x0 - cx[l], y0 - cy[l]);
                acc[l] = if c < acc[l] { c } else { acc[l] };
            }
        }
        let mut best = acc.iter().fold(T::infinity(), |m, &a| if a < m { a } else { m });
        for j in n - tail..n {
            let c = vs[j] + lambda * N::dist(x0 - xs[j], y0 - ys[j]);
            best = if c < best { c } else { best };
        }
        best
    } else {
        let mut acc = [T::neg_infinity(); LANES];
        for ((cx, cy), cv) in chunks() {
            let (cx, cy, cv) = (lanes(cx), lanes(cy), lanes(cv));
            for l in 0..LANES {
                let c = cv[l] - lambda * N::dist(x0 - cx[l], y0 - cy[l]);
                acc[l] = if c > acc[l] { c } else { acc[l] };
            }
        }
        let mut best = acc.iter().fold(T::neg_infinity(), |m, &a| if a > m { a } else { m });
        for j in n - tail..n {
            let c = vs[j] - lambda * N::dist(x0 - xs[j], y0 - ys[j]);
            best = if c > best { c } else { best };
        }
        best
    }
}

/// Largest (`far`) or smallest distance key from `p0` to the points.
#[inline(always)]
pub(crate) fn extreme_dist_key<T: Real, N: PlaneNorm<T>>(x0: T, y0: T, xs: &[T], ys: &[T], far: bool) -> T {
    let n = xs.len().min(ys.len());
    let (xs, ys) = (&xs[..n], &ys[..n]);
    let tail = n % LANES;
    let init = if far { T::neg_infinity() } else { T::infinity() };
    let mut acc = [init; LANES];
    for (cx, cy) in xs.chunks_exact(LANES).zip(ys.chunks_exact(LANES)) {
        let (cx, cy) = (lanes(cx), lanes(cy));
        for l in 0..LANES {
            let k = N::dist_key(x0 - cx[l], y0 - cy[l]);
            acc[l] = if (k > acc[l]) == far { k } else { acc[l] };
        }
    }
    let mut best = init;
    for k in acc.into_iter().chain((n - tail..n).map(|j| N::dist_key(x0 - xs[j], y0 - ys[j]))) {
        if (far && k > best) || (!far && k < best) {
            best = k;
        }
    }
    best
}
