//! Control costs, the skeleton equation and rate-function evaluation.

mod control;
mod costs;
mod rate;
mod skeleton;

pub use control::{ControlPair, PiecewiseConstant};
pub use costs::{cost_l1, cost_l2, cost_total, entropy_ell};
pub use rate::{rate_endpoint, OptimizerConfig, RateResult, TraceEntry};
pub use skeleton::{skeleton_solve, SkeletonPath, FALLBACK_SAMPLES};
