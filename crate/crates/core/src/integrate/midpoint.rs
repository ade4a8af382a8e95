use crate::error::{Result, SpinError};
use crate::model::Hamiltonian;
use crate::quat::{
    flatten_quats, hopf, hopf_section, quat_hamiltonian_vf, unflatten_quats, CollectiveModel, QuaternionConfiguration,
};
use crate::solve::{solve_implicit, SolveReport, SolverSettings};
use crate::spin::{
    flatten, gamma_slice, hamiltonian_field, unflatten, SpinConfiguration, Vec3, ANTIPODAL_EPSILON, NORM_TOL,
};

use super::geodesic::scaled_midpoint_slice;
use super::{Metric, StepperSpec};

/// Result of one step: the new state plus solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: SpinConfiguration,
    pub iterations: usize,
    pub residual: f64,
}

/// A vector field on spin configurations.
pub trait VectorField {
    fn eval(&self, w: &[Vec3]) -> Result<Vec<Vec3>>;
}

impl<F> VectorField for F
where
    F: Fn(&[Vec3]) -> Result<Vec<Vec3>>,
{
    fn eval(&self, w: &[Vec3]) -> Result<Vec<Vec3>> {
        self(w)
    }
}

/// `X_H` as a [`VectorField`].
pub fn hamiltonian_vector_field(model: &dyn Hamiltonian) -> impl Fn(&[Vec3]) -> Result<Vec<Vec3>> + '_ {
    move |w: &[Vec3]| {
        if w.len() != model.len() {
            return Err(SpinError::Configuration(format!(
                "model `{}` has {} spins, got {}",
                model.name(),
                model.len(),
                w.len()
            )));
        }
        Ok(hamiltonian_field(model, w))
    }
}

/// Solves `(Z - z)/Δt = X((Z + z)/2)` on a flat vector space.
///
/// `block` groups coordinates for the residual norm (3 for spins, 4 for
/// quaternions). Non-convergence is an error.
pub fn classical_midpoint_step<F>(
    mut field: F,
    x: &[f64],
    dt: f64,
    solver: &SolverSettings,
    block: usize,
) -> Result<SolveReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let start = x.to_vec();
    let report = solve_implicit(
        |z: &[f64]| {
            let mid: Vec<f64> = start.iter().zip(z).map(|(a, b)| 0.5 * (a + b)).collect();
            let v = field(&mid)?;
            Ok(start.iter().zip(&v).map(|(a, vi)| a + dt * vi).collect())
        },
        x.to_vec(),
        solver,
        block,
    )?;
    if !report.converged {
        return Err(SpinError::NotConverged {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok(report)
}

fn check_len(model: &dyn Hamiltonian, w: &SpinConfiguration) -> Result<()> {
    if model.len() != w.len() {
        return Err(SpinError::Configuration(format!(
            "model `{}` has {} spins, configuration has {}",
            model.name(),
            model.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Rejects steps that turn any spin by more than a right angle.
pub(crate) fn check_step_angle(w: &[Vec3], big_w: &[Vec3]) -> Result<()> {
    for (index, (a, b)) in w.iter().zip(big_w).enumerate() {
        let angle = a.cross(b).norm().atan2(a.dot(b));
        if angle > std::f64::consts::FRAC_PI_2 {
            return Err(SpinError::StepTooLarge { index, angle });
        }
    }
    Ok(())
}

fn finish(w: &SpinConfiguration, report: SolveReport) -> Result<StepOutcome> {
    if !report.converged {
        return Err(SpinError::NotConverged {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    let spins = unflatten(&report.solution);
    check_step_angle(w.spins(), &spins)?;
    Ok(StepOutcome {
        state: SpinConfiguration::new(spins)?,
        iterations: report.iterations,
        residual: report.residual,
    })
}

/// `(W_i - w_i)/Δt = m_i × ∂H/∂w_i(m)` with `m_i = (w_i + W_i)/|w_i + W_i|`,
/// solved as the classical midpoint method for `X_H ∘ ρ`.
pub fn spherical_midpoint_step(
    model: &dyn Hamiltonian,
    w: &SpinConfiguration,
    spec: &StepperSpec,
) -> Result<StepOutcome> {
    check_len(model, w)?;
    if !w.is_unit(NORM_TOL) {
        return Err(SpinError::Domain(
            "spherical midpoint needs unit spins; use the extended method for other radii".into(),
        ));
    }
    let report = classical_midpoint_step(
        |mid: &[f64]| {
            let projected = unflatten(mid)
                .into_iter()
                .enumerate()
                .map(|(index, v)| {
                    let norm = 2.0 * v.norm();
                    if norm <= ANTIPODAL_EPSILON {
                        Err(SpinError::Antipodal { index, norm })
                    } else {
                        Ok(v.normalize())
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(flatten(&hamiltonian_field(model, &projected)))
        },
        &w.to_flat(),
        spec.dt,
        &spec.solver,
        3,
    )?;
    finish(w, report)
}

/// `(W - w)/Δt = X_H(Γ(w, W))`.
pub fn extended_spherical_midpoint_step(
    model: &dyn Hamiltonian,
    w: &SpinConfiguration,
    spec: &StepperSpec,
) -> Result<StepOutcome> {
    check_len(model, w)?;
    let start = w.spins().to_vec();
    let dt = spec.dt;
    let report = solve_implicit(
        |x: &[f64]| {
            let big_w = unflatten(x);
            let gamma = gamma_slice(&start, &big_w)?;
            let field = hamiltonian_field(model, &gamma);
            Ok(start
                .iter()
                .zip(&field)
                .flat_map(|(a, v)| {
                    let next = a + v * dt;
                    [next.x, next.y, next.z]
                })
                .collect())
        },
        w.to_flat(),
        &spec.solver,
        3,
    )?;
    finish(w, report)
}

/// Classical midpoint for `X_{H∘π}` on quaternions, starting from `z`.
pub fn collective_midpoint_step_lifted(
    model: &dyn Hamiltonian,
    z: &QuaternionConfiguration,
    spec: &StepperSpec,
) -> Result<(QuaternionConfiguration, SolveReport)> {
    if model.len() != z.len() {
        return Err(SpinError::Configuration(format!(
            "model `{}` has {} spins, lift has {}",
            model.name(),
            model.len(),
            z.len()
        )));
    }
    let collective = CollectiveModel::new(model);
    let report = classical_midpoint_step(
        |mid: &[f64]| Ok(flatten_quats(&quat_hamiltonian_vf(&collective, &unflatten_quats(mid)))),
        &z.to_flat(),
        spec.dt,
        &spec.solver,
        4,
    )?;
    let lifted = QuaternionConfiguration::from_flat(&report.solution)?;
    Ok((lifted, report))
}

/// Lift with the Hopf section, take a classical midpoint step for the
/// collective Hamiltonian `H ∘ π`, and project back.
pub fn collective_midpoint_step(
    model: &dyn Hamiltonian,
    w: &SpinConfiguration,
    spec: &StepperSpec,
) -> Result<StepOutcome> {
    check_len(model, w)?;
    if !model.is_ray_constant() {
        return Err(SpinError::NotRayConstant(model.name().to_string()));
    }
    let z = hopf_section(w)?;
    let (lifted, report) = collective_midpoint_step_lifted(model, &z, spec)?;
    let state = hopf(&lifted);
    check_step_angle(w.spins(), state.spins())?;
    Ok(StepOutcome {
        state,
        iterations: report.iterations,
        residual: report.residual,
    })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Riemannian midpoint: the velocity of the geodesic from `w` to `W` at its
/// midpoint equals `Δt X` evaluated at that midpoint.
pub fn riemannian_midpoint_step(
    metric: Metric,
    field: &dyn VectorField,
    w: &SpinConfiguration,
    spec: &StepperSpec,
) -> Result<StepOutcome> {
    let dt = spec.dt;
    let start = w.spins().to_vec();
    let report = match metric {
        Metric::Euclidean => classical_midpoint_step(
            |mid: &[f64]| Ok(flatten(&field.eval(&unflatten(mid))?)),
            &w.to_flat(),
            dt,
            &spec.solver,
            3,
        )?,
        Metric::RoundSphere => {
            let radii = w.norms();
            solve_implicit(
                |x: &[f64]| {
                    let big_w = unflatten(x);
                    let mut mid = Vec::with_capacity(start.len());
                    let mut factors = Vec::with_capacity(start.len());
                    for (index, ((a, b), r)) in start.iter().zip(&big_w).zip(&radii).enumerate() {
                        let sum = a + b;
                        let norm = sum.norm();
                        if norm <= ANTIPODAL_EPSILON * r {
                            return Err(SpinError::Geometry(format!(
                                "spin {index}: antipodal endpoints, no unique great circle"
                            )));
                        }
                        mid.push(sum * (r / norm));
                        // chord = arc · sinc(θ/2)
                        let half_angle = (b - a).norm().atan2(norm);
                        factors.push(sinc(half_angle));
                    }
                    let v = field.eval(&mid)?;
                    Ok(start
                        .iter()
                        .zip(v.iter().zip(&factors))
                        .flat_map(|(a, (vi, s))| {
                            let next = a + vi * (dt * s);
                            [next.x, next.y, next.z]
                        })
                        .collect())
                },
                w.to_flat(),
                &spec.solver,
                3,
            )?
        }
        Metric::Scaled => solve_implicit(
            |x: &[f64]| {
                let big_w = unflatten(x);
                let (mid, _) = scaled_midpoint_slice(&start, &big_w)?;
                let v = field.eval(&mid)?;
                Ok(start
                    .iter()
                    .zip(&v)
                    .flat_map(|(a, vi)| {
                        let next = a + vi * dt;
                        [next.x, next.y, next.z]
                    })
                    .collect())
            },
            w.to_flat(),
            &spec.solver,
            3,
        )?,
    };
    finish(w, report)
}
