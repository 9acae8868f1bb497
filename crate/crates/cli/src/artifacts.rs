//! Output directory bookkeeping: CSV/JSON writers and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use dre_core::distributions::Batch;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

/// Ties every file in an output directory to the run config and seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub commands: Vec<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// An output directory being filled by one command.
pub struct OutDir {
    root: PathBuf,
    config_hash: String,
    seed: u64,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let out = Self { root: root.to_path_buf(), config_hash: cfg.hash(), seed: cfg.seed, written: Vec::new() };
        let copy = out.path(CONFIG_COPY);
        fs::write(&copy, cfg.canonical_json()).map_err(|e| CliError::io(&copy, e))?;
        Ok(out)
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn record(&mut self, file: &str) {
        self.written.push(file.to_string());
    }

    pub fn write_bytes(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(file);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.record(file);
        Ok(())
    }

    /// JSON report with the config hash and seed added at the top level.
    pub fn write_report(&mut self, file: &str, report: serde_json::Value) -> Result<serde_json::Value, CliError> {
        let mut body = serde_json::json!({ "config_hash": self.config_hash, "seed": self.seed });
        if let serde_json::Value::Object(fields) = report {
            for (k, v) in fields {
                body[k] = v;
            }
        }
        let text = serde_json::to_string_pretty(&body).expect("report serializes");
        self.write_bytes(file, text.as_bytes())?;
        Ok(body)
    }

    pub fn write_csv(&mut self, file: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let p = self.path(file);
        let csv_err = |e: csv::Error| CliError::format("csv output", &p, e);
        let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))?;
        self.record(file);
        Ok(())
    }

    /// Merges this command's files into the manifest, replacing it if the config changed.
    pub fn finish(self, command: &str) -> Result<Manifest, CliError> {
        let path = self.path(MANIFEST);
        let mut manifest = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<Manifest>(&text)
                .ok()
                .filter(|m| m.config_hash == self.config_hash && m.seed == self.seed),
            Err(_) => None,
        }
        .unwrap_or(Manifest { config_hash: self.config_hash.clone(), seed: self.seed, commands: Vec::new(), artifacts: Vec::new() });
        if !manifest.commands.iter().any(|c| c == command) {
            manifest.commands.push(command.to_string());
        }
        for file in &self.written {
            let sha256 = sha256_file(&self.path(file))?;
            manifest.artifacts.retain(|a| &a.file != file);
            manifest.artifacts.push(ArtifactEntry { file: file.clone(), sha256 });
        }
        manifest.artifacts.sort_by(|a, b| a.file.cmp(&b.file));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Checks the stored config against its hash and every artifact against the manifest.
pub fn verify(root: &Path) -> Result<Manifest, CliError> {
    let mpath = root.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| CliError::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::format("manifest", &mpath, e))?;
    let cpath = root.join(CONFIG_COPY);
    let ctext = fs::read_to_string(&cpath).map_err(|e| CliError::io(&cpath, e))?;
    let cfg = RunConfig::from_json(&ctext)?;
    if cfg.hash() != manifest.config_hash {
        return Err(CliError::Verify(format!("config hash {} does not match manifest {}", cfg.hash(), manifest.config_hash)));
    }
    if cfg.seed != manifest.seed {
        return Err(CliError::Verify(format!("config seed {} does not match manifest {}", cfg.seed, manifest.seed)));
    }
    for a in &manifest.artifacts {
        let actual = sha256_file(&root.join(&a.file))?;
        if actual != a.sha256 {
            return Err(CliError::Verify(format!("{} has sha256 {actual}, manifest says {}", a.file, a.sha256)));
        }
    }
    Ok(manifest)
}

pub fn coordinate_header(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}{i}")).collect()
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn batch_rows(batch: &Batch) -> impl Iterator<Item = Vec<String>> + '_ {
    batch.rows().map(|r| r.iter().map(|v| num(*v)).collect())
}

/// Reads a numeric CSV with a header row into a batch.
pub fn read_points(path: &Path) -> Result<Batch, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format("points file", path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format("points file", path, e))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::format("points file", path, format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::format("points file", path, "no rows"));
    }
    Batch::from_rows(&rows).map_err(|e| CliError::format("points file", path, e))
}
