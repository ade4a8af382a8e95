use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn spinmid(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spinmid"));
    cmd.args(args).env_remove("SPINMID_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn base_config() -> Value {
    json!({
        "model": {"kind": "chain", "n": 4, "periodic": true},
        "initial_state": {"kind": "preset", "name": "spiral"},
        "stepper": {"method": "spherical", "dt": 0.1},
        "steps": 100,
        "outputs": "unused",
        "seed": 1
    })
}

struct Run {
    _dir: TempDir,
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exited normally")
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }

    fn stderr_record(&self) -> Value {
        serde_json::from_slice(&self.output.stderr).expect("stderr holds one JSON record")
    }
}

fn run_with(command: &str, config: &Value, extra: &[&str], env: &[(&str, &str)]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_vec(config).unwrap()).unwrap();
    let out = dir.path().join("out");
    let mut args = vec![
        command,
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let output = spinmid(&args, env);
    Run { _dir: dir, out, output }
}

fn run(command: &str, config: &Value) -> Run {
    run_with(command, config, &[], &[])
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_writes_one_row_per_spin_and_state() {
    let r = run("simulate", &base_config());
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let csv = r.read("trajectory.csv");
    assert!(csv.starts_with("# spinmid schema=1 config_sha256="));
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "step,time,i,wx,wy,wz,H,norm_i,iters,residual"
    );
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 101 * 4);
    assert!(rows.last().unwrap().starts_with("100,1.0000000000000000e1,3,"));

    let manifest = r.json("manifest.json");
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["config"].get("outputs").is_none());
    let hash = manifest["config_sha256"].as_str().unwrap();
    assert!(csv.lines().next().unwrap().ends_with(hash));
    assert_eq!(manifest["files"][0]["path"], "trajectory.csv");

    let summary: Value = serde_json::from_slice(&r.output.stdout).unwrap();
    assert_eq!(summary["steps"], 100);
}

#[test]
fn wide_layout_has_one_row_per_state() {
    let mut cfg = base_config();
    cfg["csv_layout"] = json!("wide");
    let r = run("simulate", &cfg);
    assert_eq!(r.code(), 0);
    let csv = r.read("trajectory.csv");
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "step,time,H,iters,residual,wx_0,wy_0,wz_0,norm_0,wx_1,wy_1,wz_1,norm_1,\
         wx_2,wy_2,wz_2,norm_2,wx_3,wy_3,wz_3,norm_3"
    );
    assert_eq!(data_rows(&csv).len(), 101);
}

#[test]
fn zero_steps_gives_the_initial_state() {
    let mut cfg = base_config();
    cfg["steps"] = json!(0);
    cfg["csv_layout"] = json!("wide");
    let r = run("simulate", &cfg);
    assert_eq!(r.code(), 0);
    let csv = r.read("trajectory.csv");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0,0.0000000000000000e0,"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let mut cfg = base_config();
    cfg["initial_state"] = json!({"kind": "random", "radii": [1.0, 2.0, 0.5, 1.5]});
    cfg["stepper"]["method"] = json!("extended_spherical");
    let a = run("simulate", &cfg);
    let b = run_with("simulate", &cfg, &[], &[("SPINMID_THREADS", "1")]);
    assert_eq!(a.code(), 0);
    assert_eq!(dir_bytes(&a.out), dir_bytes(&b.out));
    assert_eq!(a.output.stdout, b.output.stdout);
}

#[test]
fn seed_override_changes_random_state_and_hash() {
    let mut cfg = base_config();
    cfg["initial_state"] = json!({"kind": "random"});
    let a = run("simulate", &cfg);
    let b = run_with("simulate", &cfg, &["--seed", "2"], &[]);
    assert_eq!(b.json("manifest.json")["seed"], 2);
    assert_ne!(
        a.json("manifest.json")["config_sha256"],
        b.json("manifest.json")["config_sha256"]
    );
    assert_ne!(
        data_rows(&a.read("trajectory.csv"))[0],
        data_rows(&b.read("trajectory.csv"))[0]
    );
}

#[test]
fn config_errors_exit_2_with_a_record_on_stderr() {
    let mut cfg = base_config();
    cfg["stepsize"] = json!(0.1);
    let r = run("simulate", &cfg);
    assert_eq!(r.code(), 2);
    let record = r.stderr_record();
    assert_eq!(record["error"], "config");
    assert_eq!(record["exit_code"], 2);
    assert!(record["message"].as_str().unwrap().contains("stepsize"));
    assert!(r.output.stdout.is_empty());

    let mut cfg = base_config();
    cfg["initial_state"] = json!({"kind": "spins", "spins": [[1, 0, 0]]});
    assert_eq!(run("simulate", &cfg).code(), 2);

    let missing = spinmid(&["simulate", "--config", "/nonexistent/config.json"], &[]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(spinmid(&["simulate"], &[]).status.code(), Some(2));
    assert_eq!(
        run_with("simulate", &base_config(), &[], &[("SPINMID_THREADS", "zero")]).code(),
        0,
        "simulate does not fan out"
    );
    let mut cfg = base_config();
    cfg["methods"] = json!(["spherical", "collective"]);
    assert_eq!(run_with("compare", &cfg, &[], &[("SPINMID_THREADS", "zero")]).code(), 2);
}

#[test]
fn step_failure_exits_3_and_flushes_the_partial_trajectory() {
    // A field of strength 1 turns each spin by dt per step, past the π/2 guard.
    let cfg = json!({
        "model": {"kind": "field", "n": 2, "field": [0, 0, 1]},
        "initial_state": {"kind": "spins", "spins": [[1, 0, 0], [0, 1, 0]]},
        "stepper": {"method": "spherical", "dt": 2.0},
        "steps": 10,
        "outputs": "unused",
        "seed": 0
    });
    let r = run("simulate", &cfg);
    assert_eq!(r.code(), 3);
    assert_eq!(r.stderr_record()["error"], "step");
    assert_eq!(data_rows(&r.read("trajectory.csv")).len(), 2);
    let manifest = r.json("manifest.json");
    assert_eq!(manifest["status"], "step_failed");
    assert!(manifest["error"].as_str().unwrap().contains("step 1"));
}

#[test]
fn verify_with_no_checks_writes_an_empty_report() {
    let r = run("verify", &base_config());
    assert_eq!(r.code(), 0);
    let report = r.json("report.json");
    assert_eq!(report["checks"], json!([]));
    assert_eq!(report["trajectory"]["path"], "trajectory.csv");
}

#[test]
fn verify_rejects_unknown_checks() {
    let mut cfg = base_config();
    cfg["checks"] = json!(["orbit", "energy_drift"]);
    let r = run("verify", &cfg);
    assert_eq!(r.code(), 2);
    assert!(r.stderr_record()["message"].as_str().unwrap().contains("energy_drift"));
}

#[test]
fn orbit_check_passes_on_the_extended_stepper() {
    let cfg = json!({
        "model": {"kind": "rigid_body", "n": 3, "inertia": [1, 2, 3]},
        "initial_state": {"kind": "random", "radii": [1, 2, 3]},
        "stepper": {"method": "extended_spherical", "dt": 0.1, "solver": {"tol": 1e-12}},
        "steps": 1000,
        "outputs": "unused",
        "seed": 5,
        "checks": ["orbit"]
    });
    let r = run("verify", &cfg);
    assert_eq!(r.code(), 0);
    let check = &r.json("report.json")["checks"][0];
    assert_eq!(check["name"], "orbit");
    assert_eq!(check["threshold"], 1e-9);
    assert_eq!(check["pass"], true);
    assert!(check["defect"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn round_sphere_stepper_fails_the_symplectic_check() {
    let mut cfg = base_config();
    cfg["checks"] = json!(["symplectic"]);
    let good = run("verify", &cfg);
    assert_eq!(good.code(), 0);

    cfg["stepper"] = json!({"method": "riemannian", "metric": "round_sphere", "dt": 0.1});
    let bad = run("verify", &cfg);
    assert_eq!(bad.code(), 1);
    assert_eq!(bad.stderr_record()["error"], "checks_failed");
    let report = bad.json("report.json");
    assert_eq!(report["checks"][0]["pass"], false);
    assert_eq!(report["checks"][0]["threshold"], 1e-9);
    assert_eq!(bad.json("manifest.json")["status"], "checks_failed");

    let good = good.json("report.json")["checks"][0]["defect"].as_f64().unwrap();
    let bad = report["checks"][0]["defect"].as_f64().unwrap();
    assert!(bad >= 100.0 * good, "{bad:e} vs {good:e}");
}

#[test]
fn report_references_the_trajectory_by_hash() {
    let mut cfg = base_config();
    cfg["checks"] = json!(["orbit", "energy", "equivariance", "intertwine"]);
    let r = run("verify", &cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stdout));
    let report = r.json("report.json");
    let manifest = r.json("manifest.json");
    let listed = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["path"] == "trajectory.csv")
        .unwrap();
    assert_eq!(report["trajectory"]["sha256"], listed["sha256"]);
    assert_eq!(report["config_sha256"], manifest["config_sha256"]);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn threshold_overrides_apply() {
    let mut cfg = base_config();
    cfg["checks"] = json!(["orbit"]);
    cfg["thresholds"] = json!({"orbit": 1e-30});
    let r = run("verify", &cfg);
    let check = &r.json("report.json")["checks"][0];
    assert_eq!(check["threshold"], 1e-30);
    // The spiral's norms move by round-off, which is above 1e-30 or exactly zero.
    assert_eq!(r.code(), if check["pass"] == true { 0 } else { 1 });

    cfg["thresholds"] = json!({"orbit": -1.0});
    assert_eq!(run("verify", &cfg).code(), 2);
}

#[test]
fn converge_on_the_field_model_is_second_order() {
    let cfg = json!({
        "model": {"kind": "field", "n": 3, "field": [0.3, -0.2, 1.0]},
        "initial_state": {"kind": "random"},
        "stepper": {"method": "spherical", "dt": 0.1},
        "steps": 0,
        "outputs": "unused",
        "seed": 9,
        "dts": [0.2, 0.1, 0.05, 0.025]
    });
    let r = run("converge", &cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let report = r.json("convergence.json");
    assert_eq!(report["reference"], "closed_form");
    assert_eq!(report["monotone"], true);
    let slope = report["slope"].as_f64().unwrap();
    assert!((1.9..=2.1).contains(&slope), "{slope}");
    let csv = r.read("convergence.csv");
    assert_eq!(csv.lines().nth(1).unwrap(), "dt,error");
    assert_eq!(data_rows(&csv).len(), 4);
}

#[test]
fn converge_preconditions() {
    let mut cfg = base_config();
    cfg["dts"] = json!([0.2, 0.1]);
    assert_eq!(run("converge", &cfg).code(), 2);
    cfg["dts"] = json!([0.2, 0.1, 0.3]);
    cfg["t_final"] = json!(1.0);
    assert_eq!(run("converge", &cfg).code(), 2, "0.3 does not divide 1");
}

#[test]
fn compare_spherical_and_collective_agree() {
    let mut cfg = base_config();
    cfg["initial_state"] = json!({"kind": "random"});
    cfg["steps"] = json!(200);
    cfg["methods"] = json!(["spherical", "collective"]);
    let r = run("compare", &cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let rows = r.json("compare.json")["rows"].as_array().unwrap().clone();
    assert_eq!(rows[0]["method"], "spherical");
    assert_eq!(rows[1]["method"], "collective");
    for col in ["max_drift", "orbit_defect", "symplectic_defect"] {
        let (a, b) = (rows[0][col].as_f64().unwrap(), rows[1][col].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-9, "{col}: {a:e} vs {b:e}");
    }
    let csv = r.read("compare.csv");
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "method,max_drift,orbit_defect,symplectic_defect,mean_solver_iters"
    );
    assert_eq!(data_rows(&csv).len(), 2);
}

#[test]
fn compare_needs_two_known_methods() {
    let mut cfg = base_config();
    cfg["methods"] = json!(["spherical"]);
    assert_eq!(run("compare", &cfg).code(), 2);
    cfg["methods"] = json!(["spherical", "leapfrog"]);
    assert_eq!(run("compare", &cfg).code(), 2);
}
