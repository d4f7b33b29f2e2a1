//! Jump-adapted Euler–Maruyama simulation of particle ensembles for the
//! uncontrolled and controlled slow-fast systems.

mod config;
mod engine;
mod increments;
mod record;

pub use config::SimConfig;
pub use engine::{
    sample_compound_poisson, simulate, simulate_controlled, simulate_coupled, Recording, ReferencePath,
    SimOptions,
};
pub use increments::{path_increment_stats, IncrementRow, IncrementTable};
pub use record::{read_trajectories, BlockDiagnostics, ParticleEnsemble, PathRecord};
