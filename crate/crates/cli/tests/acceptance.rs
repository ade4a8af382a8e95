//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p spinmid-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Rotation3, Unit};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use spinmid::integrate::classical_midpoint_step;
use spinmid::model::{FieldModel, HeisenbergChain, RayExtension, RigidBody};
use spinmid::quat::{
    double_cover, fibre_orthogonality_residual, hopf_section, quat_hamiltonian_vf, sphere_tangency_residual,
    CollectiveModel,
};
use spinmid::spin::random_unit_vector;
use spinmid::verify::{
    convergence_order, energy_drift, equivariance_defect, intertwining_defect, log_log_slope, orbit_defect,
    symplectic_defect,
};
use spinmid::{
    run_trajectory, Hamiltonian, Method, Metric, Quaternion, SolverSettings, SpinConfiguration, StepperSpec, Vec3,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn orbit_preservation() -> Verdict {
    let body = RigidBody::new(3, [1.0, 2.0, 3.0]).unwrap();
    let w0 = SpinConfiguration::random_unit(3, &mut rng(1))
        .scaled(&[1.0, 2.0, 3.0])
        .unwrap();
    let spec = StepperSpec::new(Method::ExtendedSpherical, 0.1).with_solver(SolverSettings::default().with_tol(1e-12));
    let traj = run_trajectory(&body, &w0, &spec, 10_000).map_err(|e| e.to_string())?;
    let d = orbit_defect(&traj);
    check(
        d <= 1e-9,
        format!("extended, radii (1,2,3), 1e4 steps: orbit defect {d:.2e} <= 1e-9"),
    )
}

fn symplecticity() -> Verdict {
    let body = RigidBody::new(1, [1.0, 2.0, 3.0]).unwrap();
    let spherical = StepperSpec::new(Method::Spherical, 0.1);
    let round = StepperSpec::new(Method::Riemannian(Metric::RoundSphere), 0.1);
    let mut r = rng(2);
    let (mut worst, mut min_ratio) = (0.0f64, f64::INFINITY);
    for _ in 0..20 {
        let w = SpinConfiguration::random_unit(1, &mut r);
        let good = symplectic_defect(&spherical, &body, &w, 1e-5)
            .map_err(|e| e.to_string())?
            .defect;
        let bad = symplectic_defect(&round, &body, &w, 1e-5)
            .map_err(|e| e.to_string())?
            .defect;
        worst = worst.max(good);
        min_ratio = min_ratio.min(bad / good.max(f64::MIN_POSITIVE));
    }
    check(
        worst <= 1e-6 && min_ratio >= 100.0,
        format!("20 states: spherical defect {worst:.2e} <= 1e-6, round-sphere/spherical ratio {min_ratio:.2e} >= 100"),
    )
}

fn hopf_intertwining() -> Verdict {
    let chain = HeisenbergChain::periodic(4).unwrap();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for dt in [0.05, 0.1] {
        for _ in 0..100 {
            let w = SpinConfiguration::random_unit(4, &mut r);
            let a = StepperSpec::new(Method::Collective, dt)
                .step(&chain, &w)
                .map_err(|e| e.to_string())?;
            let b = StepperSpec::new(Method::ExtendedSpherical, dt)
                .step(&chain, &w)
                .map_err(|e| e.to_string())?;
            worst = worst.max(a.state.max_distance(&b.state));
        }
    }
    check(
        worst <= 1e-10,
        format!("collective vs extended, chain n=4, 200 steps: {worst:.2e} <= 1e-10"),
    )
}

fn scaled_metric_equals_extended() -> Verdict {
    let model = RayExtension::unit(HeisenbergChain::periodic(4).unwrap());
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let radii: Vec<f64> = (0..4).map(|_| r.random_range(0.5..2.0)).collect();
        let w = SpinConfiguration::random_unit(4, &mut r).scaled(&radii).unwrap();
        let a = StepperSpec::new(Method::Riemannian(Metric::Scaled), 0.1)
            .step(&model, &w)
            .map_err(|e| e.to_string())?;
        let b = StepperSpec::new(Method::ExtendedSpherical, 0.1)
            .step(&model, &w)
            .map_err(|e| e.to_string())?;
        worst = worst.max(a.state.max_distance(&b.state));
    }
    check(
        worst <= 1e-8,
        format!("scaled Riemannian vs extended, 50 states: {worst:.2e} <= 1e-8"),
    )
}

const I: Complex64 = Complex64::new(0.0, 1.0);

fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn to_flat(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// `X(w)_j = i c_j(w/|w|) w_j/|w_j|` with rates depending only on phases.
fn ray_field(w: &[Complex64]) -> Vec<Complex64> {
    let u: Vec<Complex64> = w.iter().map(|c| c / c.norm()).collect();
    let a = (u[0] * u[1].conj()).re;
    let b = (u[0] * u[1] * u[2]).im;
    let rates = [1.0 + 0.5 * a, -0.3 + b, 0.7 * a * b + 0.2];
    rates.iter().zip(&u).map(|(c, uj)| I * *c * uj).collect()
}

/// Pull-back `Y(z) = X(z²)/(2z)`, tangent to the circles `|z_j| = const`.
fn circle_field(z: &[Complex64]) -> Vec<Complex64> {
    ray_field(&double_cover(z))
        .iter()
        .zip(z)
        .map(|(x, zj)| x / (2.0 * zj))
        .collect()
}

fn double_cover_intertwining() -> Verdict {
    let step = |field: fn(&[Complex64]) -> Vec<Complex64>, dt: f64| {
        move |x: &[f64]| {
            classical_midpoint_step(
                |m: &[f64]| Ok(to_flat(&field(&to_complex(m)))),
                x,
                dt,
                &SolverSettings::default(),
                2,
            )
            .map(|r| r.solution)
        }
    };
    let mut r = rng(5);
    let points: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            (0..3)
                .flat_map(|_| {
                    let c = Complex64::from_polar(r.random_range(0.5..1.5), r.random_range(0.0..std::f64::consts::TAU));
                    [c.re, c.im]
                })
                .collect()
        })
        .collect();
    let mut worst = 0.0f64;
    for dt in [0.05, 0.1, 0.2] {
        let d = intertwining_defect(
            step(circle_field, dt),
            step(ray_field, dt),
            |z: &[f64]| Ok(to_flat(&double_cover(&to_complex(z)))),
            &points,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max(d);
    }
    check(
        worst <= 1e-10,
        format!("z -> z^2, 100 points, dt in {{0.05,0.1,0.2}}: {worst:.2e} <= 1e-10"),
    )
}

fn second_order() -> Verdict {
    let model = FieldModel::new(3, Vec3::new(0.0, 0.0, 1.0)).unwrap();
    let w0 = SpinConfiguration::random_unit(3, &mut rng(6));
    let mut slopes = Vec::new();
    for method in [
        Method::Spherical,
        Method::ExtendedSpherical,
        Method::Collective,
        Method::Riemannian(Metric::Scaled),
    ] {
        let report = convergence_order(
            &StepperSpec::new(method, 0.1),
            &model,
            &w0,
            1.0,
            // Rigid rotation about the field, written out here.
            |w, t| {
                let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), -t);
                Ok(w.rotated(&rot))
            },
            &[0.2, 0.1, 0.05, 0.025],
        )
        .map_err(|e| e.to_string())?;
        slopes.push((method.label(), report.slope.unwrap_or(f64::NAN)));
    }
    let ok = slopes.iter().all(|(_, s)| (1.9..=2.1).contains(s));
    let detail = slopes
        .iter()
        .map(|(m, s)| format!("{m} {s:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("field model slopes in [1.9, 2.1]: {detail}"))
}

fn bounded_energy_drift() -> Verdict {
    let chain = HeisenbergChain::periodic(10).unwrap();
    let w0 = SpinConfiguration::random_unit(10, &mut rng(7));
    let traj =
        run_trajectory(&chain, &w0, &StepperSpec::new(Method::Spherical, 0.1), 100_000).map_err(|e| e.to_string())?;
    let drift = energy_drift(&traj, &chain);
    let dts = [0.2, 0.1, 0.05];
    let mut sweep = Vec::new();
    for dt in dts {
        let steps = (100.0 / dt) as usize;
        let t =
            run_trajectory(&chain, &w0, &StepperSpec::new(Method::Spherical, dt), steps).map_err(|e| e.to_string())?;
        sweep.push(energy_drift(&t, &chain).max_drift);
    }
    let slope = log_log_slope(&dts, &sweep).unwrap_or(f64::NAN);
    check(
        drift.second_half <= 2.0 * drift.first_half && (1.8..=2.2).contains(&slope),
        format!(
            "chain n=10, 1e5 steps: halves {:.3e} / {:.3e} (<= 2x); dt sweep slope {slope:.3} in [1.8, 2.2]",
            drift.first_half, drift.second_half
        ),
    )
}

fn equivariance() -> Verdict {
    let chain = HeisenbergChain::open(5).unwrap();
    let body = RigidBody::new(2, [1.0, 2.0, 3.0]).unwrap();
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for method in [
        Method::Spherical,
        Method::Riemannian(Metric::RoundSphere),
        Method::Riemannian(Metric::Scaled),
    ] {
        let spec = StepperSpec::new(method, 0.1);
        for _ in 0..20 {
            let axis = Unit::new_normalize(random_unit_vector(&mut r));
            let rot = Rotation3::from_axis_angle(&axis, r.random_range(0.0..std::f64::consts::PI));
            for model in [&chain as &dyn Hamiltonian, &body] {
                let w = SpinConfiguration::random_unit(model.len(), &mut r);
                worst = worst.max(equivariance_defect(&spec, model, &rot, &w).map_err(|e| e.to_string())?);
            }
        }
    }
    check(
        worst <= 1e-10,
        format!("3 steppers x 40 rotations: {worst:.2e} <= 1e-10"),
    )
}

/// `|<z, y>| / |z|²` and `|<z k, y>| / |z|²`, maximized over components.
fn residuals_by_hand(z: &[Quaternion], y: &[Quaternion]) -> (f64, f64) {
    z.iter().zip(y).fold((0.0f64, 0.0f64), |(s, f), (zi, yi)| {
        let n = zi.norm_squared();
        (
            s.max(zi.dot(yi).abs() / n),
            f.max((*zi * Quaternion::K).dot(yi).abs() / n),
        )
    })
}

fn lift_hypotheses() -> Verdict {
    let ray_constant = CollectiveModel::new(RayExtension::unit(HeisenbergChain::periodic(4).unwrap()));
    let plain = CollectiveModel::new(FieldModel::new(4, Vec3::new(0.2, -0.4, 1.0)).unwrap());
    let mut r = rng(9);
    let (mut tangency, mut orthogonality, mut violation) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let radii: Vec<f64> = (0..4).map(|_| r.random_range(0.5..2.0)).collect();
        let phases: Vec<f64> = (0..4).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        let w = SpinConfiguration::random_unit(4, &mut r).scaled(&radii).unwrap();
        let z = hopf_section(&w).map_err(|e| e.to_string())?.fibre_shift(&phases);
        let z = z.quats();
        let y = quat_hamiltonian_vf(&ray_constant, z);
        let (s, f) = residuals_by_hand(z, &y);
        tangency = tangency
            .max(s)
            .max(sphere_tangency_residual(z, &y).map_err(|e| e.to_string())?);
        orthogonality = orthogonality
            .max(f)
            .max(fibre_orthogonality_residual(z, &y).map_err(|e| e.to_string())?);
        let y = quat_hamiltonian_vf(&plain, z);
        violation = violation.max(fibre_orthogonality_residual(z, &y).map_err(|e| e.to_string())?);
    }
    check(
        tangency <= 1e-10 && orthogonality <= 1e-10 && violation >= 1e-2,
        format!(
            "ray-constant: tangency {tangency:.2e}, orthogonality {orthogonality:.2e} <= 1e-10; \
             field model orthogonality {violation:.2e} >= 1e-2"
        ),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn cli_determinism() -> Verdict {
    let config = json!({
        "model": {"kind": "rigid_body", "n": 3, "inertia": [1, 2, 3]},
        "initial_state": {"kind": "random", "radii": [1, 2, 3]},
        "stepper": {"method": "extended_spherical", "dt": 0.05},
        "steps": 200,
        "outputs": "unused",
        "seed": 11,
        "checks": ["symplectic", "orbit", "energy", "intertwine", "equivariance"],
        "dts": [0.2, 0.1, 0.05, 0.025],
        "methods": ["classical", "extended_spherical", "collective", "riemannian_scaled", "riemannian_round_sphere"]
    });
    let mut compared = 0;
    for command in ["simulate", "verify", "converge", "compare"] {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let cfg = dir.path().join("config.json");
            std::fs::write(&cfg, serde_json::to_vec(&config).unwrap()).unwrap();
            let out = dir.path().join("out");
            let run = Command::new(env!("CARGO_BIN_EXE_spinmid"))
                .args([
                    command,
                    "--config",
                    cfg.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .unwrap();
            if !run.status.success() {
                return Err(format!(
                    "{command} exited with {}: {}",
                    run.status,
                    String::from_utf8_lossy(&run.stderr).trim_end()
                ));
            }
            outputs.push((run.stdout, files(&out)));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{command}: outputs differ between identical runs"));
        }
        compared += outputs[0].1.len();
    }
    check(true, format!("4 commands run twice, {compared} files byte-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("orbit preservation", orbit_preservation),
        ("symplecticity", symplecticity),
        ("hopf intertwining", hopf_intertwining),
        ("scaled metric equals extended", scaled_metric_equals_extended),
        ("double cover intertwining", double_cover_intertwining),
        ("second order", second_order),
        ("bounded energy drift", bounded_energy_drift),
        ("equivariance", equivariance),
        ("lift hypotheses", lift_hypotheses),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
