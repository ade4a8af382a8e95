//! Bit-stable serialization. Floats in CSV use `{:.16e}` (17 significant
//! digits, round-trip exact); JSON uses serde_json's shortest round-trip form.
//! Nothing time- or host-dependent is ever written.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use spinmid::Trajectory;

use crate::config::{CsvLayout, ExperimentConfig};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "spinmid";

pub const LONG_HEADER: [&str; 10] = [
    "step", "time", "i", "wx", "wy", "wz", "H", "norm_i", "iters", "residual",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The config as echoed into manifests and hashed. The output directory is
/// left out so that the same experiment written to two places hashes alike.
pub fn config_echo(cfg: &ExperimentConfig) -> Value {
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(map) = &mut value {
        map.remove("outputs");
    }
    value
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(
        serde_json::to_string(&config_echo(cfg))
            .expect("config serializes")
            .as_bytes(),
    )
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// First line of every CSV file. Readers skip it as a comment.
fn csv_preamble(config_sha256: &str) -> String {
    format!("# {TOOL} schema={SCHEMA_VERSION} config_sha256={config_sha256}\n")
}

/// A CSV table held in memory until it is written.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(config_sha256: &str, header: &[String]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(csv_preamble(config_sha256).into_bytes());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

pub fn trajectory_header(layout: CsvLayout, n: usize) -> Vec<String> {
    match layout {
        CsvLayout::Long => LONG_HEADER.iter().map(|s| s.to_string()).collect(),
        CsvLayout::Wide => {
            let mut h: Vec<String> = ["step", "time", "H", "iters", "residual"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            for i in 0..n {
                h.extend([
                    format!("wx_{i}"),
                    format!("wy_{i}"),
                    format!("wz_{i}"),
                    format!("norm_{i}"),
                ]);
            }
            h
        }
    }
}

pub fn trajectory_csv(traj: &Trajectory, layout: CsvLayout, config_sha256: &str) -> Vec<u8> {
    let n = traj.initial().len();
    let mut table = CsvTable::new(config_sha256, &trajectory_header(layout, n));
    for (k, (state, diag)) in traj.states.iter().zip(&traj.diagnostics).enumerate() {
        let step = k.to_string();
        let time = fmt_float(traj.times[k]);
        let energy = fmt_float(diag.energy);
        let iters = diag.iterations.to_string();
        let residual = fmt_float(diag.residual);
        match layout {
            CsvLayout::Long => {
                for (i, w) in state.iter().enumerate() {
                    table.row(&[
                        step.clone(),
                        time.clone(),
                        i.to_string(),
                        fmt_float(w.x),
                        fmt_float(w.y),
                        fmt_float(w.z),
                        energy.clone(),
                        fmt_float(diag.norms[i]),
                        iters.clone(),
                        residual.clone(),
                    ]);
                }
            }
            CsvLayout::Wide => {
                let mut row = vec![step, time, energy, iters, residual];
                for (w, r) in state.iter().zip(&diag.norms) {
                    row.extend([fmt_float(w.x), fmt_float(w.y), fmt_float(w.z), fmt_float(*r)]);
                }
                table.row(&row);
            }
        }
    }
    table.into_bytes()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Collects the files of one run so the manifest can list them with hashes.
pub struct OutputDir {
    root: PathBuf,
    pub files: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root.display(), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<FileRecord, CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))?;
        let record = FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        };
        self.files.retain(|f| f.path != name);
        self.files.push(record.clone());
        Ok(record)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<FileRecord, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable output");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_sha256: &'a str,
    pub seed: u64,
    pub config: Value,
    pub files: &'a [FileRecord],
    pub status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the manifest last, listing every file written before it.
pub fn write_manifest(
    out: &mut OutputDir,
    command: &str,
    cfg: &ExperimentConfig,
    status: &str,
    error: Option<String>,
) -> Result<(), CliError> {
    let hash = config_hash(cfg);
    let files = out.files.clone();
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        tool: TOOL,
        version: spinmid::VERSION,
        command,
        config_sha256: &hash,
        seed: cfg.seed,
        config: config_echo(cfg),
        files: &files,
        status,
        error,
    };
    out.write_json(MANIFEST_FILE, &manifest)?;
    Ok(())
}
