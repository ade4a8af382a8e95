use thiserror::Error;

/// Errors raised by the spin-system primitives, solvers and steppers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpinError {
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("spin {index} has norm {norm:e}, too close to the origin for a ray to be defined")]
    SingularRay { index: usize, norm: f64 },

    #[error("spins {index} are antipodal: |w + W| = {norm:e}")]
    Antipodal { index: usize, norm: f64 },

    #[error("singular quaternion: {0}")]
    SingularQuaternion(String),

    #[error("newton jacobian is singular at iteration {iteration}")]
    SolverSingular { iteration: usize },

    #[error("implicit solve did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("model `{0}` is not constant on rays")]
    NotRayConstant(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("step too large: spin {index} turned by {angle:.4} rad (limit pi/2)")]
    StepTooLarge { index: usize, angle: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<SpinError>,
    },
}

pub type Result<T, E = SpinError> = std::result::Result<T, E>;
