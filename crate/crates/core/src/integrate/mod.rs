//! One-step midpoint methods and the trajectory driver.
//!
//! All implicit solves run in flat ambient coordinates (`R^{3n}` for spins,
//! `R^{4n}` for quaternions). Nothing is renormalized after a step, so the
//! conservation diagnostics measure the schemes themselves.

mod geodesic;
mod midpoint;
mod trajectory;

pub use geodesic::{aligned_lifts, geodesic_midpoint_round, geodesic_midpoint_scaled};
pub use midpoint::{
    classical_midpoint_step, collective_midpoint_step, collective_midpoint_step_lifted,
    extended_spherical_midpoint_step, hamiltonian_vector_field, riemannian_midpoint_step, spherical_midpoint_step,
    StepOutcome, VectorField,
};
pub use trajectory::{run_trajectory, StepDiagnostics, Trajectory, TrajectoryFailure};

use std::fmt;

use crate::error::{Result, SpinError};
use crate::model::{Hamiltonian, RayExtension};
use crate::solve::SolverSettings;
use crate::spin::SpinConfiguration;

/// Metric used by the Riemannian midpoint method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Flat metric on `R^{3n}`; reproduces the classical midpoint method.
    Euclidean,
    /// Round metric on each sphere `|w_i| = const`, geodesics are great circles.
    RoundSphere,
    /// `g_w(u, v) = Σ u_i · v_i / |w_i|`, the metric the Hopf map pushes down
    /// from the flat metric on quaternions.
    Scaled,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::RoundSphere => "round_sphere",
            Metric::Scaled => "scaled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical midpoint on `X_H` in `R^{3n}`.
    Classical,
    /// Spherical midpoint: classical midpoint on `X_H ∘ ρ`, unit spins only.
    Spherical,
    ExtendedSpherical,
    /// Classical midpoint on the collective Hamiltonian, projected by the Hopf map.
    Collective,
    Riemannian(Metric),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Classical => "classical".into(),
            Method::Spherical => "spherical".into(),
            Method::ExtendedSpherical => "extended_spherical".into(),
            Method::Collective => "collective".into(),
            Method::Riemannian(m) => format!("riemannian_{}", m.label()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperSpec {
    pub method: Method,
    pub dt: f64,
    pub solver: SolverSettings,
}

impl StepperSpec {
    pub fn new(method: Method, dt: f64) -> Self {
        Self {
            method,
            dt,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_solver(mut self, solver: SolverSettings) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Same method stepping backwards in time (`dt → -dt`).
    pub fn reversed(&self) -> Self {
        self.clone().with_dt(-self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SpinError::Configuration(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        self.solver.validate()
    }

    /// Advances `w` by one step of the selected method for `X_H`.
    ///
    /// The collective method needs a ray-constant Hamiltonian; other models
    /// are replaced by their ray extension at the current spin radii, which
    /// has the same vector field on the current coadjoint orbit.
    pub fn step(&self, model: &dyn Hamiltonian, w: &SpinConfiguration) -> Result<StepOutcome> {
        match self.method {
            Method::Classical => {
                let field = hamiltonian_vector_field(model);
                let report = classical_midpoint_step(
                    |x: &[f64]| {
                        let spins = crate::spin::unflatten(x);
                        Ok(crate::spin::flatten(&field(&spins)?))
                    },
                    &w.to_flat(),
                    self.dt,
                    &self.solver,
                    3,
                )?;
                let state = SpinConfiguration::from_flat(&report.solution)?;
                midpoint::check_step_angle(w.spins(), state.spins())?;
                Ok(StepOutcome {
                    state,
                    iterations: report.iterations,
                    residual: report.residual,
                })
            }
            Method::Spherical => spherical_midpoint_step(model, w, self),
            Method::ExtendedSpherical => extended_spherical_midpoint_step(model, w, self),
            Method::Collective => {
                if model.is_ray_constant() {
                    collective_midpoint_step(model, w, self)
                } else {
                    let extended = RayExtension::new(model, w.norms())?;
                    collective_midpoint_step(&extended, w, self)
                }
            }
            Method::Riemannian(metric) => riemannian_midpoint_step(metric, &hamiltonian_vector_field(model), w, self),
        }
    }
}
