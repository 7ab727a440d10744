use std::fs;
use std::path::{Path, PathBuf};

use ringtrain_core::engine::TrainingConfig;
use ringtrain_core::harness::{ComputeProfile, ThermalPreset};
use ringtrain_core::presets;
use ringtrain_core::transport::NetProfile;

use crate::error::CliError;

pub const SEED_ENV: &str = "RINGTRAIN_SEED";

/// Per-invocation state shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Ctx {
    /// Arguments after the program name, as recorded in manifests.
    pub argv: Vec<String>,
    /// Seed fixed by a manifest; beats flags and the environment.
    pub seed_override: Option<u64>,
}

impl Ctx {
    /// Manifest seed, then `--seed`, then `RINGTRAIN_SEED`, then `fallback`.
    pub fn resolve_seed(&self, flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
        if let Some(s) = self.seed_override.or(flag) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
            Err(_) => Ok(fallback),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Network profile from a preset name or a JSON file. The second value is
/// the file path when one was read.
pub fn load_net(spec: &str) -> Result<(NetProfile, Option<PathBuf>), CliError> {
    if let Some(p) = presets::net_by_name(spec) {
        return Ok((p, None));
    }
    let path = PathBuf::from(spec);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "'{spec}' is neither a network preset ({}) nor a file",
            presets::NET_PRESETS.join(", ")
        )));
    }
    let p = NetProfile::from_json(&read(&path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((p, Some(path)))
}

pub fn load_compute(path: Option<&Path>) -> Result<ComputeProfile, CliError> {
    match path {
        None => Ok(presets::compute_s10()),
        Some(p) => ComputeProfile::from_json(&read(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
    }
}

pub fn load_thermal(path: Option<&Path>) -> Result<ThermalPreset, CliError> {
    match path {
        None => Ok(presets::thermal_s10()),
        Some(p) => ThermalPreset::from_json(&read(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
    }
}

pub fn load_config(path: &Path) -> Result<TrainingConfig, CliError> {
    TrainingConfig::from_json(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
