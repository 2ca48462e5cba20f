//! Boundary-preserving Lipschitz approximation on finite metric spaces and
//! regular grids: extremal extensions, the local step and global exhaustion
//! scheme, envelope smoothing, eikonal surrogates and the ℓ1-disc casebook.

pub mod boundary;
pub mod casebook;
pub mod eikonal;
pub mod error;
pub mod extend;
pub mod grid;
pub mod io;
pub mod smooth;
mod kernels;
pub mod metric;
pub mod scalar;

pub use boundary::{
    build_schedule, epsilon_lambda, global_approx, local_step, GlobalApprox, GlobalParams, LocalStepInput,
    LocalStepResult, Schedule, StagePlan, StageReport,
};
pub use casebook::{l1_disc_case, linf_image_case, CaseInstance, CaseResult};
pub use eikonal::{almost_classical, EikonalParams, EikonalReport, EikonalSolution, Perturbation};
pub use error::{Check, Error, Result};
pub use extend::{constrained_max_lipschitz, inf_convolution, sup_convolution, Bound, ExtensionProblem};
pub use grid::{GridDomain, NodeKind};
pub use io::{GridField, PointCloud, PointTag, Report};
pub use metric::{Lip, MetricSpace, Norm, NormContext, ScalarField, DEFAULT_TOL};
pub use scalar::Real;
pub use smooth::{
    flatten, lasry_lions, moreau_inf, moreau_sup, mollify, variable_mollify, EnvelopeParams, Kernel, LasryLions,
};

pub type MetricSpace64 = MetricSpace<f64>;
pub type MetricSpace32 = MetricSpace<f32>;
pub type ScalarField64 = ScalarField<f64>;
pub type ScalarField32 = ScalarField<f32>;
pub type GridDomain64 = GridDomain<f64>;
pub type GridDomain32 = GridDomain<f32>;
