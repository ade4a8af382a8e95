//! Experiment configuration. Strict JSON: unknown keys are errors and the
//! only defaults are the ones documented on each field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spinmid::integrate::{Method, Metric, StepperSpec};
use spinmid::model::ModelSpec;
use spinmid::{SolverMethod, SolverSettings, SpinConfiguration, Vec3};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Replace the model by `H ∘ ρ` scaled to the initial radii. Default false.
    #[serde(default)]
    pub ray_extend: bool,
    pub initial_state: InitialState,
    pub stepper: StepperConfig,
    pub steps: usize,
    pub outputs: PathBuf,
    pub seed: u64,
    /// Trajectory CSV layout. Default `long`.
    #[serde(default)]
    pub csv_layout: CsvLayout,
    /// Checks run by `verify`. Default empty.
    #[serde(default)]
    pub checks: Vec<String>,
    /// Per-check threshold overrides for `verify`.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    /// Step sizes for `converge`.
    #[serde(default)]
    pub dts: Vec<f64>,
    /// End time for `converge`. Default 1.
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Method labels for `compare`.
    #[serde(default)]
    pub methods: Vec<String>,
}

fn default_t_final() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Chain { n: usize, periodic: bool },
    RigidBody { n: usize, inertia: [f64; 3] },
    Field { n: usize, field: [f64; 3] },
    PointVortices { strengths: Vec<f64> },
    Constant { n: usize, value: f64 },
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        match self.clone() {
            ModelConfig::Chain { n, periodic } => ModelSpec::Chain { n, periodic },
            ModelConfig::RigidBody { n, inertia } => ModelSpec::RigidBody { n, inertia },
            ModelConfig::Field { n, field } => ModelSpec::Field { n, field },
            ModelConfig::PointVortices { strengths } => ModelSpec::PointVortices { strengths },
            ModelConfig::Constant { n, value } => ModelSpec::Constant { n, value },
        }
    }

    pub fn spin_count(&self) -> usize {
        match self {
            ModelConfig::Chain { n, .. }
            | ModelConfig::RigidBody { n, .. }
            | ModelConfig::Field { n, .. }
            | ModelConfig::Constant { n, .. } => *n,
            ModelConfig::PointVortices { strengths } => strengths.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Explicit spins, one `[x, y, z]` per site.
    Spins { spins: Vec<[f64; 3]> },
    /// `spiral`: unit spins `(cos θ_i, sin θ_i, 0.3)` normalized,
    /// `θ_i = 2π i / n`. `tilted`: every spin `(sin 0.3, 0, cos 0.3)`.
    Preset {
        name: String,
        #[serde(default)]
        radii: Option<Vec<f64>>,
    },
    /// Uniform random unit spins from the config seed.
    Random {
        #[serde(default)]
        radii: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    #[default]
    Long,
    Wide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    /// classical | spherical | extended_spherical | collective | riemannian
    pub method: String,
    /// euclidean | round_sphere | scaled; required iff method is riemannian.
    #[serde(default)]
    pub metric: Option<String>,
    pub dt: f64,
    /// Defaults: fixed_point, tol 1e-12, max_iter 100, fd_step 1e-6.
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_solver_method")]
    pub method: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn default_solver_method() -> String {
    "fixed_point".into()
}
fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    100
}
fn default_fd_step() -> f64 {
    1e-6
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: default_solver_method(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            fd_step: default_fd_step(),
        }
    }
}

pub const CHECK_NAMES: [&str; 5] = ["symplectic", "orbit", "energy", "intertwine", "equivariance"];

pub fn parse_metric(label: &str) -> Result<Metric, CliError> {
    match label {
        "euclidean" => Ok(Metric::Euclidean),
        "round_sphere" => Ok(Metric::RoundSphere),
        "scaled" => Ok(Metric::Scaled),
        other => Err(CliError::Config(format!("unknown metric `{other}`"))),
    }
}

/// Parses a full method label, e.g. `spherical` or `riemannian_scaled`.
pub fn parse_method_label(label: &str) -> Result<Method, CliError> {
    match label {
        "classical" => Ok(Method::Classical),
        "spherical" => Ok(Method::Spherical),
        "extended_spherical" => Ok(Method::ExtendedSpherical),
        "collective" => Ok(Method::Collective),
        other => match other.strip_prefix("riemannian_") {
            Some(metric) => Ok(Method::Riemannian(parse_metric(metric)?)),
            None => Err(CliError::Config(format!("unknown method `{other}`"))),
        },
    }
}

impl StepperConfig {
    pub fn method(&self) -> Result<Method, CliError> {
        match (self.method.as_str(), &self.metric) {
            ("riemannian", Some(m)) => Ok(Method::Riemannian(parse_metric(m)?)),
            ("riemannian", None) => Err(CliError::Config("method riemannian needs a metric".into())),
            (_, Some(_)) => Err(CliError::Config(format!(
                "metric given for non-riemannian method `{}`",
                self.method
            ))),
            (other, None) if other.starts_with("riemannian_") => Err(CliError::Config(format!(
                "use method \"riemannian\" with a separate metric instead of `{other}`"
            ))),
            (other, None) => parse_method_label(other),
        }
    }

    pub fn solver(&self) -> Result<SolverSettings, CliError> {
        let method = match self.solver.method.as_str() {
            "fixed_point" => SolverMethod::FixedPoint,
            "newton" => SolverMethod::Newton,
            other => return Err(CliError::Config(format!("unknown solver method `{other}`"))),
        };
        let settings = SolverSettings {
            method,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            fd_step: self.solver.fd_step,
        };
        settings.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(settings)
    }

    pub fn spec(&self) -> Result<StepperSpec, CliError> {
        let spec = StepperSpec::new(self.method()?, self.dt).with_solver(self.solver()?);
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks everything that can be checked without running a step.
    pub fn validate(&self) -> Result<(), CliError> {
        spinmid::make_model(&self.model.spec()).map_err(|e| CliError::Config(e.to_string()))?;
        self.stepper.spec()?;
        let w0 = self.initial_configuration()?;
        if w0.len() != self.model.spin_count() {
            return Err(CliError::Config(format!(
                "initial state has {} spins but the model has {}",
                w0.len(),
                self.model.spin_count()
            )));
        }
        for name in self.checks.iter().chain(self.thresholds.keys()) {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown check `{name}`; expected one of {}",
                    CHECK_NAMES.join(", ")
                )));
            }
        }
        if let Some((name, t)) = self.thresholds.iter().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return Err(CliError::Config(format!(
                "threshold for `{name}` must be positive, got {t}"
            )));
        }
        if self.dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(CliError::Config("every dt must be positive".into()));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(CliError::Config("t_final must be positive".into()));
        }
        for m in &self.methods {
            parse_method_label(m)?;
        }
        Ok(())
    }

    /// The initial spins, drawing random ones from `seed` when requested.
    pub fn initial_configuration(&self) -> Result<SpinConfiguration, CliError> {
        let n = self.model.spin_count();
        let (unit, radii) = match &self.initial_state {
            InitialState::Spins { spins } => {
                return SpinConfiguration::new(spins.iter().map(|s| Vec3::from(*s)).collect())
                    .map_err(|e| CliError::Config(e.to_string()))
            }
            InitialState::Preset { name, radii } => (preset(name, n)?, radii),
            InitialState::Random { radii } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (SpinConfiguration::random_unit(n, &mut rng), radii)
            }
        };
        match radii {
            None => Ok(unit),
            Some(r) => unit.scaled(r).map_err(|e| CliError::Config(e.to_string())),
        }
    }
}

fn preset(name: &str, n: usize) -> Result<SpinConfiguration, CliError> {
    if n == 0 {
        return Err(CliError::Config("model has no spins".into()));
    }
    let spins = match name {
        "spiral" => (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                Vec3::new(t.cos(), t.sin(), 0.3).normalize()
            })
            .collect(),
        "tilted" => vec![Vec3::new(0.3f64.sin(), 0.0, 0.3f64.cos()); n],
        other => {
            return Err(CliError::Config(format!(
                "unknown preset `{other}`; expected spiral or tilted"
            )))
        }
    };
    SpinConfiguration::new(spins).map_err(|e| CliError::Config(e.to_string()))
}
