//! Frozen fast process, averaged drift, the averaged ODE and the averaging
//! error experiment.

mod experiment;
mod frozen;
mod ode;

pub use experiment::{averaging_error_experiment, AveragingOptions, AveragingRow, AveragingTable};
pub use frozen::{averaged_drift, invariant_measure_estimate, DriftEstimate, FrozenFastConfig};
pub use ode::{averaged_ode_solve, AveragedPath, DriftMode};
pub(crate) use frozen::averaged_drift_view;
