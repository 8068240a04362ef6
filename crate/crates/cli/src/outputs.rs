//! Output files of one command and the run manifest that records them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "run_manifest.json";

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

/// Collects the files a command writes under the output directory.
pub struct Outputs {
    command: &'static str,
    dir: PathBuf,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    files: BTreeMap<String, String>,
}

impl Outputs {
    pub fn new(command: &'static str, cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Outputs { command, dir, config_hash: cfg.experiment.hash(), inputs: BTreeMap::new(), files: BTreeMap::new() })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Absolute location of `rel`, with its parent directory created.
    pub fn path(&self, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        Ok(path)
    }

    pub fn input(&mut self, name: &str, value: impl Into<String>) {
        self.inputs.insert(name.to_string(), value.into());
    }

    /// Records an input path; files under the output directory are recorded
    /// relative to it.
    pub fn input_path(&mut self, name: &str, path: &Path) {
        let shown = path.strip_prefix(&self.dir).unwrap_or(path);
        self.input(name, shown.display().to_string());
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(rel)?;
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.record(rel)
    }

    /// Records a file some other writer put at `rel`.
    pub fn record(&mut self, rel: &str) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
        self.files.insert(rel.to_string(), hex::encode(Sha256::digest(&bytes)));
        log::info!("wrote {}", path.display());
        Ok(())
    }

    /// Adds this command's entry to the manifest, replacing any earlier one.
    pub fn finish(self, cfg: &RunConfig) -> Result<(), CliError> {
        let path = self.dir.join(MANIFEST);
        let mut manifest: BTreeMap<String, Value> = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
            Err(_) => BTreeMap::new(),
        };
        manifest.insert(
            self.command.to_string(),
            json!({
                "config_hash": self.config_hash,
                "seed": cfg.experiment.seed,
                "config": cfg.experiment,
                "inputs": self.inputs,
                "outputs": self.files,
            }),
        );
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}
