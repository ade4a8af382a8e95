//! The four subcommands. Each validates, computes, then writes its files and
//! a manifest into the output directory.

use std::sync::Arc;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use spinmid::model::{FieldModel, RayExtension};
use spinmid::quat::hopf_section;
use spinmid::spin::random_unit_vector;
use spinmid::verify::{
    energy_drift, equivariance_defect, hopf_intertwining_defect, log_log_slope, orbit_defect, symplectic_defect,
    EXACT_ERROR,
};
use spinmid::{make_model, run_trajectory, Hamiltonian, Method, SpinConfiguration, StepperSpec, Trajectory, Vec3};

use crate::config::{parse_method_label, ExperimentConfig, ModelConfig};
use crate::error::CliError;
use crate::output::{config_hash, fmt_float, trajectory_csv, write_manifest, CsvTable, FileRecord, OutputDir};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";

/// Finite-difference arc length for every symplectic defect the CLI reports.
pub const SYMPLECTIC_FD_STEP: f64 = 1e-5;
/// Relative energy error below which the `energy` check counts as exact.
pub const ENERGY_ROUND_OFF: f64 = 1e-13;
/// Trajectory states sampled by the pointwise checks.
pub const SAMPLED_STATES: usize = 5;

/// Default `verify` thresholds. `energy` bounds the ratio of the largest
/// energy error in the second half of the run to that in the first half.
pub fn default_threshold(check: &str) -> f64 {
    match check {
        "symplectic" => 1e-9,
        "orbit" => 1e-9,
        "energy" => 2.0,
        "intertwine" => 1e-10,
        "equivariance" => 1e-10,
        other => unreachable!("unvalidated check `{other}`"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    Converge,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Converge => "converge",
            Command::Compare => "compare",
        }
    }
}

/// Result of a command that ran to completion. `failure` is set when the
/// outputs were written but the command must still exit nonzero.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    pub failure: Option<CliError>,
}

/// Everything derived from a validated config.
struct Experiment {
    cfg: ExperimentConfig,
    model: Arc<dyn Hamiltonian>,
    w0: SpinConfiguration,
    spec: StepperSpec,
    hash: String,
}

impl Experiment {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let w0 = cfg.initial_configuration()?;
        let base = make_model(&cfg.model.spec()).map_err(|e| CliError::Config(e.to_string()))?;
        let model: Arc<dyn Hamiltonian> = if cfg.ray_extend {
            Arc::new(RayExtension::new(base, w0.norms()).map_err(|e| CliError::Config(e.to_string()))?)
        } else {
            base
        };
        Ok(Self {
            cfg: cfg.clone(),
            model,
            w0,
            spec: cfg.stepper.spec()?,
            hash: config_hash(cfg),
        })
    }

    fn run(&self, spec: &StepperSpec) -> Result<Trajectory, CliError> {
        run_trajectory(self.model.as_ref(), &self.w0, spec, self.cfg.steps)
            .map_err(|f| CliError::step(format!("{} step {}", spec.method, f.step), f.error))
    }

    /// Independent random stream for a named use of the seed.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        rng
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let exp = Experiment::new(cfg)?;
    let mut out = OutputDir::create(&cfg.outputs)?;
    let result = match command {
        Command::Simulate => simulate(&exp, &mut out),
        Command::Verify => verify(&exp, &mut out),
        Command::Converge => converge(&exp, &mut out),
        Command::Compare => compare(&exp, &mut out),
    };
    match result {
        Ok(mut outcome) => {
            let status = if outcome.failure.is_some() {
                "checks_failed"
            } else {
                "ok"
            };
            write_manifest(
                &mut out,
                command.name(),
                cfg,
                status,
                outcome.failure.as_ref().map(|e| e.to_string()),
            )?;
            if let Value::Object(map) = &mut outcome.summary {
                map.insert("command".into(), json!(command.name()));
                map.insert("status".into(), json!(status));
                map.insert("config_sha256".into(), json!(exp.hash));
                map.insert(
                    "files".into(),
                    json!(out.files.iter().map(|f| &f.path).collect::<Vec<_>>()),
                );
            }
            Ok(outcome)
        }
        Err(err) => {
            let status = match err {
                CliError::Step { .. } => "step_failed",
                _ => "error",
            };
            // Best effort: the original error is what the caller reports.
            let _ = write_manifest(&mut out, command.name(), cfg, status, Some(err.to_string()));
            Err(err)
        }
    }
}

/// Thread pool for fan-out, capped by `SPINMID_THREADS` when set.
fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("SPINMID_THREADS") {
        let n: usize =
            value.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
                CliError::Config(format!("SPINMID_THREADS must be a positive integer, got `{value}`"))
            })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))
}

fn simulate(exp: &Experiment, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let traj = write_trajectory(exp, out)?;
    Ok(Outcome {
        summary: json!({
            "steps": traj.len() - 1,
            "final_energy": traj.diagnostics.last().map(|d| d.energy),
            "orbit_defect": orbit_defect(&traj),
            "mean_solver_iters": traj.mean_iterations(),
        }),
        failure: None,
    })
}

/// Runs the configured trajectory and writes it. On a step failure the
/// partial trajectory is written before the error is returned.
fn write_trajectory(exp: &Experiment, out: &mut OutputDir) -> Result<Trajectory, CliError> {
    match run_trajectory(exp.model.as_ref(), &exp.w0, &exp.spec, exp.cfg.steps) {
        Ok(traj) => {
            out.write(TRAJECTORY_FILE, &trajectory_csv(&traj, exp.cfg.csv_layout, &exp.hash))?;
            Ok(traj)
        }
        Err(fail) => {
            out.write(
                TRAJECTORY_FILE,
                &trajectory_csv(&fail.partial, exp.cfg.csv_layout, &exp.hash),
            )?;
            Err(CliError::step(format!("step {}", fail.step), fail.error))
        }
    }
}

/// Up to `k` evenly spaced indices into a sequence of length `len`.
fn sample_indices(len: usize, k: usize) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..k).map(|j| (j * (len - 1) + (k - 1) / 2) / (k - 1)).collect();
    idx.dedup();
    idx
}

fn sampled_states(traj: &Trajectory) -> Vec<&SpinConfiguration> {
    sample_indices(traj.len(), SAMPLED_STATES)
        .into_iter()
        .map(|k| &traj.states[k])
        .collect()
}

fn max_symplectic_defect(
    model: &dyn Hamiltonian,
    spec: &StepperSpec,
    states: &[&SpinConfiguration],
) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for w in states {
        let report = symplectic_defect(spec, model, w, SYMPLECTIC_FD_STEP)
            .map_err(|e| CliError::step("symplectic defect", e))?;
        worst = worst.max(report.defect);
    }
    Ok(worst)
}

#[derive(Debug, Serialize)]
struct CheckRecord {
    name: String,
    /// `null` when the measured quantity is unbounded.
    defect: f64,
    threshold: f64,
    pass: bool,
    details: Value,
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    schema: u32,
    config_sha256: &'a str,
    method: String,
    model: &'a str,
    dt: f64,
    steps: usize,
    trajectory: FileRecord,
    checks: Vec<CheckRecord>,
}

fn verify(exp: &Experiment, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let traj = write_trajectory(exp, out)?;
    let trajectory = out.files.last().cloned().expect("trajectory was just written");
    let states = sampled_states(&traj);
    let indices = sample_indices(traj.len(), SAMPLED_STATES);
    let model = exp.model.as_ref();

    let mut checks = Vec::with_capacity(exp.cfg.checks.len());
    for name in &exp.cfg.checks {
        let threshold = exp
            .cfg
            .thresholds
            .get(name)
            .copied()
            .unwrap_or_else(|| default_threshold(name));
        let (defect, details) = match name.as_str() {
            "symplectic" => (
                max_symplectic_defect(model, &exp.spec, &states)?,
                json!({"fd_step": SYMPLECTIC_FD_STEP, "states": indices}),
            ),
            "orbit" => (orbit_defect(&traj), json!({"states": traj.len()})),
            "energy" => {
                let drift = energy_drift(&traj, model);
                // Drift at round-off level has no meaningful ratio.
                let floor = ENERGY_ROUND_OFF * traj.diagnostics[0].energy.abs().max(1.0);
                let ratio = if drift.second_half <= floor {
                    0.0
                } else if drift.first_half == 0.0 {
                    f64::INFINITY
                } else {
                    drift.second_half / drift.first_half
                };
                (
                    ratio,
                    json!({
                        "max_drift": drift.max_drift,
                        "first_half": drift.first_half,
                        "second_half": drift.second_half,
                        "trend": drift.trend,
                        "round_off_floor": floor,
                    }),
                )
            }
            "intertwine" => intertwine_check(exp, &states, &indices)?,
            "equivariance" => equivariance_check(exp, &states, &indices)?,
            other => unreachable!("unvalidated check `{other}`"),
        };
        checks.push(CheckRecord {
            name: name.clone(),
            defect,
            threshold,
            pass: defect <= threshold,
            details,
        });
    }

    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    let summary = json!({
        "checks": checks.iter().map(|c| json!({"name": c.name, "defect": c.defect, "pass": c.pass})).collect::<Vec<_>>(),
    });
    out.write_json(
        crate::commands::REPORT_FILE,
        &VerifyReport {
            schema: crate::output::SCHEMA_VERSION,
            config_sha256: &exp.hash,
            method: exp.spec.method.label(),
            model: model.name(),
            dt: exp.spec.dt,
            steps: traj.len() - 1,
            trajectory,
            checks,
        },
    )?;
    Ok(Outcome {
        summary,
        failure: (!failed.is_empty()).then_some(CliError::ChecksFailed(failed)),
    })
}

/// Hopf-map intertwining of the lifted and the extended spherical steps at
/// randomly phased lifts of the sampled states. Models that are not constant
/// on rays are replaced by their extension at the initial radii.
fn intertwine_check(
    exp: &Experiment,
    states: &[&SpinConfiguration],
    indices: &[usize],
) -> Result<(f64, Value), CliError> {
    let mut rng = exp.rng(1);
    let mut lifts = Vec::with_capacity(states.len());
    for w in states {
        let phases: Vec<f64> = (0..w.len())
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        lifts.push(
            hopf_section(w)
                .map_err(|e| CliError::step("hopf lift", e))?
                .fibre_shift(&phases),
        );
    }
    let spec = StepperSpec::new(Method::Collective, exp.spec.dt).with_solver(exp.spec.solver.clone());
    let extended;
    let model: &dyn Hamiltonian = if exp.model.is_ray_constant() {
        exp.model.as_ref()
    } else {
        extended =
            RayExtension::new(exp.model.as_ref(), exp.w0.norms()).map_err(|e| CliError::step("ray extension", e))?;
        &extended
    };
    let defect = hopf_intertwining_defect(model, &spec, &lifts).map_err(|e| CliError::step("intertwining", e))?;
    Ok((
        defect,
        json!({"states": indices, "ray_extended": !exp.model.is_ray_constant()}),
    ))
}

/// Conjugation by one seeded random rotation per sampled state.
fn equivariance_check(
    exp: &Experiment,
    states: &[&SpinConfiguration],
    indices: &[usize],
) -> Result<(f64, Value), CliError> {
    let mut rng = exp.rng(2);
    let mut worst = 0.0f64;
    for w in states {
        let axis = Unit::new_normalize(random_unit_vector(&mut rng));
        let rotation = Rotation3::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI));
        let d = equivariance_defect(&exp.spec, exp.model.as_ref(), &rotation, w)
            .map_err(|e| CliError::step("equivariance", e))?;
        worst = worst.max(d);
    }
    Ok((worst, json!({"states": indices})))
}

pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const CONVERGENCE_JSON: &str = "convergence.json";
/// The fine reference run uses this fraction of the smallest step.
pub const REFERENCE_REFINEMENT: f64 = 100.0;

#[derive(Debug, Serialize)]
struct ConvergenceOutput<'a> {
    schema: u32,
    config_sha256: &'a str,
    method: String,
    model: &'a str,
    t_final: f64,
    reference: &'static str,
    reference_dt: Option<f64>,
    dts: Vec<f64>,
    errors: Vec<f64>,
    /// Errors shrink strictly as dt shrinks.
    monotone: bool,
    /// Least-squares slope of log error against log dt; `null` when every
    /// error is below round-off.
    slope: Option<f64>,
    table: FileRecord,
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize, CliError> {
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(CliError::Config(format!(
            "dt = {dt} does not divide t_final = {t_final}"
        )));
    }
    Ok(steps as usize)
}

fn converge(exp: &Experiment, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let cfg = &exp.cfg;
    if cfg.dts.len() < 3 {
        return Err(CliError::Config(format!(
            "converge needs at least 3 dts, got {}",
            cfg.dts.len()
        )));
    }
    let steps: Vec<usize> = cfg
        .dts
        .iter()
        .map(|dt| steps_for(cfg.t_final, *dt))
        .collect::<Result<_, _>>()?;
    let model = exp.model.as_ref();
    let run_to = |dt: f64, n: usize| -> Result<SpinConfiguration, CliError> {
        run_trajectory(model, &exp.w0, &exp.spec.clone().with_dt(dt), n)
            .map(|t| t.last().clone())
            .map_err(|f| CliError::step(format!("dt = {dt} step {}", f.step), f.error))
    };

    // Field model: exact rotation about the field. Otherwise a fine run.
    let (reference_kind, reference_dt) = match &cfg.model {
        ModelConfig::Field { .. } => ("closed_form", None),
        _ => (
            "fine_run",
            Some(cfg.dts.iter().copied().fold(f64::INFINITY, f64::min) / REFERENCE_REFINEMENT),
        ),
    };
    let reference = || -> Result<SpinConfiguration, CliError> {
        match (&cfg.model, reference_dt) {
            (ModelConfig::Field { n, field }, _) => {
                let exact = FieldModel::new(*n, Vec3::from(*field)).map_err(|e| CliError::Config(e.to_string()))?;
                SpinConfiguration::new(exact.exact_flow(exp.w0.spins(), cfg.t_final))
                    .map_err(|e| CliError::step("closed-form reference", e))
            }
            (_, Some(dt)) => run_to(dt, steps_for(cfg.t_final, dt)?),
            (_, None) => unreachable!(),
        }
    };

    let (exact, finals) = pool()?.install(|| {
        rayon::join(reference, || {
            cfg.dts
                .par_iter()
                .zip(&steps)
                .map(|(dt, n)| run_to(*dt, *n))
                .collect::<Vec<_>>()
        })
    });
    let exact = exact?;
    let errors: Vec<f64> = finals
        .into_iter()
        .map(|w| w.map(|w| w.max_distance(&exact)))
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..cfg.dts.len()).collect();
    order.sort_by(|a, b| cfg.dts[*b].total_cmp(&cfg.dts[*a]));
    let monotone = order.windows(2).all(|p| errors[p[1]] < errors[p[0]]);
    let slope = if errors.iter().all(|e| *e < EXACT_ERROR) {
        None
    } else {
        log_log_slope(&cfg.dts, &errors)
    };

    let mut table = CsvTable::new(&exp.hash, &["dt".to_string(), "error".to_string()]);
    for (dt, e) in cfg.dts.iter().zip(&errors) {
        table.row(&[fmt_float(*dt), fmt_float(*e)]);
    }
    let table = out.write(CONVERGENCE_CSV, &table.into_bytes())?;
    let summary = json!({"slope": slope, "monotone": monotone, "errors": errors});
    out.write_json(
        CONVERGENCE_JSON,
        &ConvergenceOutput {
            schema: crate::output::SCHEMA_VERSION,
            config_sha256: &exp.hash,
            method: exp.spec.method.label(),
            model: model.name(),
            t_final: cfg.t_final,
            reference: reference_kind,
            reference_dt,
            dts: cfg.dts.clone(),
            errors,
            monotone,
            slope,
            table,
        },
    )?;
    Ok(Outcome { summary, failure: None })
}

pub const COMPARE_CSV: &str = "compare.csv";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_COLUMNS: [&str; 5] = [
    "method",
    "max_drift",
    "orbit_defect",
    "symplectic_defect",
    "mean_solver_iters",
];

#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    method: String,
    max_drift: f64,
    orbit_defect: f64,
    symplectic_defect: f64,
    mean_solver_iters: f64,
}

fn compare_one(exp: &Experiment, method: Method) -> Result<CompareRow, CliError> {
    let spec = StepperSpec {
        method,
        ..exp.spec.clone()
    };
    let traj = exp.run(&spec)?;
    Ok(CompareRow {
        method: method.label(),
        max_drift: energy_drift(&traj, exp.model.as_ref()).max_drift,
        orbit_defect: orbit_defect(&traj),
        symplectic_defect: max_symplectic_defect(exp.model.as_ref(), &spec, &sampled_states(&traj))?,
        mean_solver_iters: traj.mean_iterations(),
    })
}

fn compare(exp: &Experiment, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let cfg = &exp.cfg;
    if cfg.methods.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least 2 methods, got {}",
            cfg.methods.len()
        )));
    }
    let methods: Vec<Method> = cfg
        .methods
        .iter()
        .map(|m| parse_method_label(m))
        .collect::<Result<_, _>>()?;
    let rows: Vec<CompareRow> = pool()?
        .install(|| methods.par_iter().map(|m| compare_one(exp, *m)).collect::<Vec<_>>())
        .into_iter()
        .collect::<Result<_, _>>()?;

    let header: Vec<String> = COMPARE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut table = CsvTable::new(&exp.hash, &header);
    for r in &rows {
        table.row(&[
            r.method.clone(),
            fmt_float(r.max_drift),
            fmt_float(r.orbit_defect),
            fmt_float(r.symplectic_defect),
            fmt_float(r.mean_solver_iters),
        ]);
    }
    let table = out.write(COMPARE_CSV, &table.into_bytes())?;
    out.write_json(
        COMPARE_JSON,
        &json!({
            "schema": crate::output::SCHEMA_VERSION,
            "config_sha256": exp.hash,
            "model": exp.model.name(),
            "dt": exp.spec.dt,
            "steps": cfg.steps,
            "fd_step": SYMPLECTIC_FD_STEP,
            "rows": rows,
            "table": table,
        }),
    )?;
    Ok(Outcome {
        summary: json!({"rows": rows}),
        failure: None,
    })
}
