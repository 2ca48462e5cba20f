//! Extremal Lipschitz extensions and the constrained maximal Lipschitz function.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{cone, with_plane_norm, Packed};
use crate::metric::{check_indices, with_dist, MetricSpace, ScalarField};
use crate::scalar::Real;

/// Data of an extension problem: values `h` on the anchor set `F` and a slope `λ`.
///
/// `h[k]` is the value at `anchors[k]`.
#[derive(Debug, Clone, Copy)]
pub struct ExtensionProblem<'a, T> {
    pub space: &'a MetricSpace<T>,
    pub anchors: &'a [usize],
    pub h: &'a [T],
    pub lambda: T,
}

/// Upper bound used by [`constrained_max_lipschitz`].
#[derive(Debug, Clone, PartialEq)]
pub enum Bound<T> {
    /// No upper bound.
    Unbounded,
    /// One bound per point of the space.
    Values(Vec<T>),
}

impl<'a, T: Real> ExtensionProblem<'a, T> {
    pub fn new(space: &'a MetricSpace<T>, anchors: &'a [usize], h: &'a [T], lambda: T) -> Result<Self> {
        let p = Self { space, anchors, h, lambda };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::Domain("extension requires a nonempty anchor set".into()));
        }
        if self.anchors.len() != self.h.len() {
            return Err(Error::Domain(format!(
                "{} anchor values for {} anchors",
                self.h.len(),
                self.anchors.len()
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= T::zero()) {
            return Err(Error::Domain(format!("slope {} must be finite and nonnegative", self.lambda)));
        }
        if let Some(k) = self.h.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.anchors[k]));
        }
        check_indices(self.anchors, self.space.len())
    }

    /// Measured Lipschitz constant of `h` on the anchors.
    pub fn anchor_lip(&self, tol: T) -> Result<T> {
        let m = self.anchors.len();
        let local: Vec<usize> = (0..m).collect();
        let lip = crate::metric::lip_over(&local, |a, b| self.space.dist(self.anchors[a], self.anchors[b]), self.h, tol)?;
        Ok(lip.value)
    }
}

#[derive(Clone, Copy)]
enum Sense {
    Lower,
    Upper,
}

/// `x ↦ inf_k h_k + λ d(x, a_k)` (Upper) or `sup_k h_k − λ d(x, a_k)` (Lower).
fn cone_transform<T: Real>(space: &MetricSpace<T>, anchors: &[usize], h: &[T], lambda: T, sense: Sense) -> Vec<T> {
    if let Some((xs, ys, norm)) = space.planar() {
        let pk = Packed::gather(xs, ys, h.iter().copied(), anchors);
        let upper = matches!(sense, Sense::Upper);
        return with_plane_norm!(norm, N => (0..space.len())
            .into_par_iter()
            .map(|x| cone::<T, N>(xs[x], ys[x], lambda, &pk.xs, &pk.ys, &pk.vs, upper))
            .collect());
    }
    with_dist!(space, |d| (0..space.len())
        .into_par_iter()
        .map(|x| match sense {
            Sense::Upper => anchors
                .iter()
                .zip(h)
                .fold(T::infinity(), |m, (&y, &v)| m.min(v + lambda * d(x, y))),
            Sense::Lower => anchors
                .iter()
                .zip(h)
                .fold(T::neg_infinity(), |m, (&y, &v)| m.max(v - lambda * d(x, y))),
        })
        .collect())
}

/// The smallest λ-Lipschitz extension `v(x) = sup_y h(y) − λ d(x,y)`.
pub fn sup_convolution<T: Real>(p: &ExtensionProblem<'_, T>) -> Result<ScalarField<T>> {
    p.validate()?;
    Ok(ScalarField::from_vec_unchecked(cone_transform(p.space, p.anchors, p.h, p.lambda, Sense::Lower)))
}

/// The largest λ-Lipschitz extension `v(x) = inf_y h(y) + λ d(x,y)`.
pub fn inf_convolution<T: Real>(p: &ExtensionProblem<'_, T>) -> Result<ScalarField<T>> {
    p.validate()?;
    Ok(ScalarField::from_vec_unchecked(cone_transform(p.space, p.anchors, p.h, p.lambda, Sense::Upper)))
}

/// The largest λ-Lipschitz `u` with `u <= b` on the space and `u = h` on the anchors.
///
/// Computed as `u(x) = inf_y b̃(y) + λ d(x,y)` where `b̃ = h` on the anchors and
/// `b̃ = b` elsewhere. Anchor values are returned exactly.
pub fn constrained_max_lipschitz<T: Real>(p: &ExtensionProblem<'_, T>, bound: &Bound<T>, tol: T) -> Result<ScalarField<T>> {
    p.validate()?;
    constrained_max_core(p, bound, tol, None)
}

pub(crate) fn constrained_max_core<T: Real>(
    p: &ExtensionProblem<'_, T>,
    bound: &Bound<T>,
    tol: T,
    known_anchor_lip: Option<T>,
) -> Result<ScalarField<T>> {
    let n = p.space.len();
    let lip_h = match known_anchor_lip {
        Some(l) => l,
        None => p.anchor_lip(tol)?,
    };
    if lip_h > p.lambda + tol {
        return Err(Error::EmptyConstraintFamily(format!(
            "lip(h, F) = {lip_h} exceeds the slope {}",
            p.lambda
        )));
    }
    let u = match bound {
        Bound::Unbounded => cone_transform(p.space, p.anchors, p.h, p.lambda, Sense::Upper),
        Bound::Values(b) => {
            if b.len() != n {
                return Err(Error::Domain(format!("bound has {} values for {n} points", b.len())));
            }
            if let Some(i) = b.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            for (&y, &v) in p.anchors.iter().zip(p.h) {
                if v > b[y] + tol {
                    return Err(Error::EmptyConstraintFamily(format!(
                        "h({y}) = {v} exceeds the bound {} on F",
                        b[y]
                    )));
                }
            }
            let lower = cone_transform(p.space, p.anchors, p.h, p.lambda, Sense::Lower);
            if let Some(x) = (0..n).find(|&x| lower[x] > b[x] + tol) {
                return Err(Error::EmptyConstraintFamily(format!(
                    "smallest extension {} exceeds the bound {} at point {x}",
                    lower[x], b[x]
                )));
            }
            let mut tilde = b.clone();
            for (&y, &v) in p.anchors.iter().zip(p.h) {
                tilde[y] = v;
            }
            let all: Vec<usize> = (0..n).collect();
            let u = cone_transform(p.space, &all, &tilde, p.lambda, Sense::Upper);
            if let Some(x) = (0..n).find(|&x| u[x] > b[x] + tol) {
                return Err(Error::invariant(format!("u <= b at point {x}"), u[x].as_f64(), b[x].as_f64()));
            }
            u
        }
    };
    snap_to_anchors(u, p.anchors, p.h, tol).map(ScalarField::from_vec_unchecked)
}

/// Verifies `u = h` on the anchors within `tol` and then sets those values exactly.
fn snap_to_anchors<T: Real>(mut u: Vec<T>, anchors: &[usize], h: &[T], tol: T) -> Result<Vec<T>> {
    for (&y, &v) in anchors.iter().zip(h) {
        let gap = (u[y] - v).abs();
        if gap > tol {
            return Err(Error::invariant(format!("u = h at anchor {y}"), gap.as_f64(), tol.as_f64()));
        }
        u[y] = v;
    }
    Ok(u)
}
