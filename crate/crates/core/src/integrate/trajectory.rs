use crate::error::SpinError;
use crate::model::Hamiltonian;
use crate::spin::SpinConfiguration;

use super::StepperSpec;

/// Per-state diagnostics. Entry 0 describes the initial state and carries
/// zero iterations and residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub energy: f64,
    pub norms: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<SpinConfiguration>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    fn start(model: &dyn Hamiltonian, w0: &SpinConfiguration, dt: f64) -> Self {
        Self {
            dt,
            times: vec![0.0],
            states: vec![w0.clone()],
            diagnostics: vec![StepDiagnostics {
                energy: model.value(w0.spins()),
                norms: w0.norms(),
                iterations: 0,
                residual: 0.0,
            }],
        }
    }

    /// Number of recorded states, `steps + 1` for a complete run.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> &SpinConfiguration {
        &self.states[0]
    }

    pub fn last(&self) -> &SpinConfiguration {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn energies(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.energy).collect()
    }

    /// Mean solver iterations over the steps taken (initial state excluded).
    pub fn mean_iterations(&self) -> f64 {
        let steps = self.diagnostics.len().saturating_sub(1);
        if steps == 0 {
            return 0.0;
        }
        self.diagnostics[1..].iter().map(|d| d.iterations as f64).sum::<f64>() / steps as f64
    }
}

/// A run that stopped early. `partial` holds every state reached before
/// the failing step.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct TrajectoryFailure {
    pub partial: Trajectory,
    pub step: usize,
    pub error: SpinError,
}

/// Applies `spec` to `w0` `steps` times. `steps = 0` yields the initial
/// state alone.
pub fn run_trajectory(
    model: &dyn Hamiltonian,
    w0: &SpinConfiguration,
    spec: &StepperSpec,
    steps: usize,
) -> Result<Trajectory, TrajectoryFailure> {
    let mut traj = Trajectory::start(model, w0, spec.dt);
    if let Err(error) = spec.validate().and_then(|_| {
        if model.len() == w0.len() {
            Ok(())
        } else {
            Err(SpinError::Configuration(format!(
                "model `{}` has {} spins, initial state has {}",
                model.name(),
                model.len(),
                w0.len()
            )))
        }
    }) {
        return Err(TrajectoryFailure {
            partial: traj,
            step: 0,
            error,
        });
    }
    traj.times.reserve(steps);
    traj.states.reserve(steps);
    traj.diagnostics.reserve(steps);
    for step in 1..=steps {
        let current = traj.last();
        match spec.step(model, current) {
            Ok(out) => {
                traj.diagnostics.push(StepDiagnostics {
                    energy: model.value(out.state.spins()),
                    norms: out.state.norms(),
                    iterations: out.iterations,
                    residual: out.residual,
                });
                traj.states.push(out.state);
                traj.times.push(step as f64 * spec.dt);
            }
            Err(error) => {
                return Err(TrajectoryFailure {
                    partial: traj,
                    step,
                    error: SpinError::StepFailed {
                        step,
                        source: Box::new(error),
                    },
                })
            }
        }
    }
    Ok(traj)
}
