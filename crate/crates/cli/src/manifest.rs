use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::common::write_file;
use crate::error::CliError;

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Arguments after the program name.
    pub command_line: Vec<String>,
    pub config_paths: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command_line: &[String]) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: command_line.to_vec(),
            config_paths: Vec::new(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Writes the manifest into `dir` and returns its path.
    pub fn write(&mut self, dir: &Path, stem: &str) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{stem}_manifest.json"));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&path, &(text + "\n"))?;
        Ok(path)
    }
}

/// `argv` with its `--out` value replaced by `out` (or appended).
pub fn with_out(argv: &[String], out: &Path) -> Vec<String> {
    let out = out.display().to_string();
    let mut result = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--out" {
            result.push(a.clone());
            result.push(out.clone());
            replaced = true;
            i += 2;
            continue;
        }
        if a.starts_with("--out=") {
            result.push(format!("--out={out}"));
            replaced = true;
        } else {
            result.push(a.clone());
        }
        i += 1;
    }
    if !replaced {
        result.push("--out".into());
        result.push(out);
    }
    result
}
