//! Convex-concave spline construction and evaluation.

mod curvature;
mod io;
mod model;
mod oned;

pub use curvature::{
    audit_c, audit_extremes, c_from_extremes, c_from_second_derivative_1d, estimate_c, estimate_c_all, hessian_extremes,
    AuditStatus, CurvatureAudit, HessianExtremes, SAFETY_MARGIN,
};
pub use io::{load_ccs, read_ccs, save_ccs, write_ccs, CCS_MAGIC};
pub use model::{
    agreement, ccs_accuracy, eval_ccs, sample_planes, CcsModel, OutputEval, SampledSupport, SupportSet,
};
pub use oned::{
    build_ccs_1d, gaussian_mixture_1d, max_grid_error, uniform_grid, Ccs1D, Curvature1D, GaussianMixture,
    GridError, CURVATURE_GRID_POINTS, MIN_SIGMA,
};
