//! Structure-preserving midpoint integrators for classical spin systems.
//!
//! A configuration is `n` nonzero vectors `w_i ∈ R³` evolving under
//! `ẇ_i = w_i × ∂H/∂w_i`. The steppers in [`integrate`] differ in how they
//! place the midpoint at which the vector field is evaluated; [`verify`]
//! measures which structure each one keeps.

pub mod error;
pub mod integrate;
pub mod model;
pub mod quat;
pub mod solve;
pub mod spin;
pub mod verify;

pub use error::{Result, SpinError};
pub use integrate::{run_trajectory, Method, Metric, StepOutcome, StepperSpec, Trajectory, TrajectoryFailure};
pub use model::{make_model, Hamiltonian, ModelSpec};
pub use quat::{Quaternion, QuaternionConfiguration};
pub use solve::{SolverMethod, SolverSettings};
pub use spin::{SpinConfiguration, Vec3};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
