//! The ℓ1-disc obstruction: boundary data `u0(x,y) = |x| − |y|` on the unit
//! ℓ1 ball forces every 1-Lipschitz extension to equal `|x|` on the x-axis,
//! so no differentiable solution exists. The same instance is replayed in ℓ∞
//! through the isometry `T(x,y) = (x+y, x−y)`.

use crate::error::{Check, Error, Result};
use crate::extend::{inf_convolution, sup_convolution, ExtensionProblem};
use crate::metric::{MetricSpace, Norm};
use crate::scalar::Real;

/// Slack allowed on the one-sided slope gap `2` at the origin.
pub const SLOPE_TOL: f64 = 0.1;

/// Fewest boundary samples accepted.
pub const MIN_BOUNDARY: usize = 64;

/// Sample points of the instance: boundary samples first, then the axis.
#[derive(Debug, Clone)]
pub struct CaseInstance<T> {
    pub norm: Norm,
    pub points: Vec<[T; 2]>,
    /// Boundary data on the first `values.len()` points.
    pub values: Vec<T>,
    /// Axis abscissae in the original coordinates, increasing, with 0 in the middle.
    pub axis: Vec<T>,
    /// ℓ1 spacing of consecutive boundary samples.
    pub mesh: T,
}

impl<T: Real> CaseInstance<T> {
    /// `n_boundary` equally spaced samples of the unit ℓ1 sphere (a multiple of 4,
    /// so the vertices are included) and `n_axis` interior axis samples (odd).
    pub fn l1_disc(n_boundary: usize, n_axis: usize) -> Result<Self> {
        if n_boundary < MIN_BOUNDARY {
            return Err(Error::UnderResolved(format!(
                "{n_boundary} boundary samples, need at least {MIN_BOUNDARY}"
            )));
        }
        if n_boundary % 4 != 0 {
            return Err(Error::Domain(format!("boundary sample count {n_boundary} must be a multiple of 4")));
        }
        if n_axis < 3 || n_axis % 2 == 0 {
            return Err(Error::Domain(format!("axis sample count {n_axis} must be odd and at least 3")));
        }
        let per_edge = n_boundary / 4;
        let step = T::one() / T::from_usize(per_edge).expect("count");
        let corners = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]].map(|[a, b]| [T::lit(a), T::lit(b)]);
        let mut points = Vec::with_capacity(n_boundary + n_axis);
        for e in 0..4 {
            let (a, b) = (corners[e], corners[(e + 1) % 4]);
            for k in 0..per_edge {
                let t = T::from_usize(k).expect("count") * step;
                points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        let values = points.iter().map(|p| p[0].abs() - p[1].abs()).collect();
        let denom = T::from_usize(n_axis + 1).expect("count");
        let axis: Vec<T> = (0..n_axis)
            .map(|i| {
                let x = -T::one() + T::lit(2.0) * T::from_usize(i + 1).expect("count") / denom;
                if i == n_axis / 2 { T::zero() } else { x }
            })
            .collect();
        points.extend(axis.iter().map(|&x| [x, T::zero()]));
        Ok(Self { norm: Norm::L1, points, values, axis, mesh: step + step })
    }

    /// The instance pushed forward by `T(x,y) = (x+y, x−y)` into ℓ∞.
    pub fn linf_image(&self) -> Self {
        Self {
            norm: Norm::LInf,
            points: self.points.iter().map(|&p| rotate(p)).collect(),
            ..self.clone()
        }
    }

    pub fn boundary_len(&self) -> usize {
        self.values.len()
    }

    pub fn space(&self) -> Result<MetricSpace<T>> {
        MetricSpace::from_points2(&self.points, self.norm)
    }
}

/// `T(x,y) = (x+y, x−y)`, an isometry from ℓ1 onto ℓ∞ in the plane.
pub fn rotate<T: Real>(p: [T; 2]) -> [T; 2] {
    [p[0] + p[1], p[0] - p[1]]
}

/// Outcome of one run of the obstruction.
#[derive(Debug, Clone)]
pub struct CaseResult<T> {
    pub norm: Norm,
    pub n_boundary: usize,
    pub mesh: T,
    pub axis: Vec<T>,
    /// Largest 1-Lipschitz extension on the axis.
    pub upper: Vec<T>,
    /// Smallest 1-Lipschitz extension on the axis.
    pub lower: Vec<T>,
    /// Left and right difference quotients at the origin, for `upper` then `lower`.
    pub kink_slopes: [(T, T); 2],
    /// Smallest `right − left` over both extensions.
    pub slope_gap: T,
    /// `max |d∞(Tp,Tq) − d1(p,q)|` over sample pairs, for the image run.
    pub isometry_error: Option<T>,
    pub verdict: bool,
    pub checks: Vec<Check>,
}

impl<T: Real> CaseResult<T> {
    /// Axis rows `(x, upper, lower)` for plotting.
    pub fn profile(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        self.axis.iter().zip(&self.upper).zip(&self.lower).map(|((&x, &u), &l)| (x, u, l))
    }
}

/// Runs the obstruction on the ℓ1 disc.
pub fn l1_disc_case<T: Real>(n_boundary: usize, n_axis: usize) -> Result<CaseResult<T>> {
    run_case(&CaseInstance::l1_disc(n_boundary, n_axis)?, None)
}

/// Runs the ℓ∞ image of the ℓ1 disc and checks the isometry on all sample pairs.
pub fn linf_image_case<T: Real>(n_boundary: usize, n_axis: usize) -> Result<CaseResult<T>> {
    let source = CaseInstance::l1_disc(n_boundary, n_axis)?;
    let image = source.linf_image();
    let (a, b): (MetricSpace<T>, MetricSpace<T>) = (source.space()?, image.space()?);
    let err = (0..a.len())
        .flat_map(|i| (i + 1..a.len()).map(move |j| (i, j)))
        .fold(T::zero(), |m, (i, j)| m.max((a.dist(i, j) - b.dist(i, j)).abs()));
    run_case(&image, Some(err))
}

/// Extremal 1-Lipschitz extensions of the boundary data, evaluated on the axis.
pub fn run_case<T: Real>(inst: &CaseInstance<T>, isometry_error: Option<T>) -> Result<CaseResult<T>> {
    let space = inst.space()?;
    let nb = inst.boundary_len();
    let anchors: Vec<usize> = (0..nb).collect();
    let problem = ExtensionProblem::new(&space, &anchors, &inst.values, T::one())?;
    let upper = inf_convolution(&problem)?.restrict(&(nb..space.len()).collect::<Vec<_>>());
    let lower = sup_convolution(&problem)?.restrict(&(nb..space.len()).collect::<Vec<_>>());

    let mid = inst.axis.len() / 2;
    let dx = inst.axis[mid + 1] - inst.axis[mid];
    let slopes = |f: &[T]| ((f[mid] - f[mid - 1]) / dx, (f[mid + 1] - f[mid]) / dx);
    let kink_slopes = [slopes(&upper), slopes(&lower)];
    let slope_gap = kink_slopes.iter().fold(T::infinity(), |g, &(l, r)| g.min(r - l));

    let mesh = inst.mesh;
    let abs_err = |f: &[T]| inst.axis.iter().zip(f).fold(T::zero(), |m, (&x, &v)| m.max((v - x.abs()).abs()));
    let spread = upper.iter().zip(&lower).fold(T::zero(), |m, (&u, &l)| m.max(u - l));
    let two_mesh = (mesh + mesh).as_f64();
    let mut checks = vec![
        Check::new("|upper - |x|| <= 2 mesh", abs_err(&upper).as_f64(), two_mesh),
        Check::new("|lower - |x|| <= 2 mesh", abs_err(&lower).as_f64(), two_mesh),
        Check::new("upper - lower <= 4 mesh", spread.as_f64(), 2.0 * two_mesh),
        Check::new("u(0,0) <= 0", upper[mid].as_f64(), two_mesh),
        Check::new("2 - slope_tol <= slope gap", 2.0 - SLOPE_TOL, slope_gap.as_f64()),
    ];
    if let Some(e) = isometry_error {
        checks.push(Check::new("isometry error", e.as_f64(), 1e-12));
    }
    let verdict = spread.as_f64() <= 2.0 * two_mesh && slope_gap.as_f64() >= 2.0 - SLOPE_TOL;
    Ok(CaseResult {
        norm: inst.norm,
        n_boundary: nb,
        mesh,
        axis: inst.axis.clone(),
        upper,
        lower,
        kink_slopes,
        slope_gap,
        isometry_error,
        verdict,
        checks,
    })
}
