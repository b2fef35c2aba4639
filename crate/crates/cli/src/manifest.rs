//! The record written next to every command's output, sufficient to rerun it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::failure::{CliResult, Failure};
use crate::files;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// A fully resolved command: every default materialised, every path named.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
}

impl Invocation {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Self {
            command: command.into(),
            config: serde_json::to_value(config).expect("config serialises"),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.into(), seed);
        self
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.to_path_buf());
        self
    }

    pub fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.to_path_buf());
        self
    }

    pub fn config_as<T: serde::de::DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(self.config.clone())
            .map_err(|e| Failure::config(format!("{} config: {e}", self.command)))
    }

    pub fn input_path(&self, name: &str) -> CliResult<&Path> {
        self.inputs
            .get(name)
            .map(PathBuf::as_path)
            .ok_or_else(|| Failure::config(format!("{}: missing input {name:?}", self.command)))
    }

    pub fn output_path(&self, name: &str) -> CliResult<&Path> {
        self.outputs
            .get(name)
            .map(PathBuf::as_path)
            .ok_or_else(|| Failure::config(format!("{}: missing output {name:?}", self.command)))
    }

    /// Where the manifest goes: inside the output directory, or beside the
    /// output file for commands that write a single file.
    pub fn manifest_path(&self) -> CliResult<PathBuf> {
        if let Some(dir) = self.outputs.get("dir") {
            return Ok(dir.join(MANIFEST_FILE));
        }
        let file = self.output_path("file")?;
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(file.with_file_name(format!("{stem}.{MANIFEST_FILE}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub invocation: Invocation,
    pub library_version: String,
    pub argv: Vec<String>,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub exit_code: u8,
}

pub fn write(path: &Path, manifest: &RunManifest) -> CliResult<()> {
    files::write_json(path, manifest)
}

pub fn read(path: &Path) -> CliResult<RunManifest> {
    files::load_config(path)
}
