use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::efficiency;
use super::reference::GPGPU_SPEEDUP_PERCENT;
use crate::model::BYTES_PER_MB;

pub const REPORT_HEADER: &str =
    "experiment,mode,model,K,alg,t_comp_s,t_comm_s,t_total_s,efficiency";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub mode: String,
    pub model: String,
    pub k: usize,
    pub alg: String,
    pub t_comp_s: f64,
    pub t_comm_s: f64,
    pub t_total_s: f64,
    pub efficiency: f64,
}

impl ReportRow {
    pub fn sim(
        experiment: &str,
        model: &str,
        k: usize,
        alg: &str,
        t_comp: f64,
        t_comm: f64,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            mode: "sim".to_string(),
            model: model.to_string(),
            k,
            alg: alg.to_string(),
            t_comp_s: t_comp,
            t_comm_s: t_comm,
            t_total_s: t_comp + t_comm,
            efficiency: efficiency(t_comp, t_comm),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.mode,
            self.model,
            self.k,
            self.alg,
            self.t_comp_s,
            self.t_comm_s,
            self.t_total_s,
            self.efficiency
        )
    }
}

/// A named pass/fail assertion evaluated by a driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub experiment: String,
    pub mode: String,
    pub seed: u64,
    pub version: String,
    pub mb_unit_bytes: usize,
    pub profiles: BTreeMap<String, serde_json::Value>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Scalars computed from the rows, e.g. slowdown ratios.
    pub derived: BTreeMap<String, f64>,
    /// Quoted figures carried for context, never compared against.
    pub reference_constants: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
}

impl ReportMeta {
    pub fn new(experiment: &str, seed: u64) -> Self {
        let mut reference_constants = BTreeMap::new();
        reference_constants.insert(
            "gpgpu_speedup_percent".to_string(),
            serde_json::json!(GPGPU_SPEEDUP_PERCENT),
        );
        Self {
            experiment: experiment.to_string(),
            mode: "sim".to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            mb_unit_bytes: BYTES_PER_MB as usize,
            profiles: BTreeMap::new(),
            parameters: BTreeMap::new(),
            derived: BTreeMap::new(),
            reference_constants,
            checks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
    /// Extra time series as `(header, rows)`, written next to the main CSV.
    pub series: Option<(String, Vec<String>)>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self {
            rows: Vec::new(),
            meta: ReportMeta::new(experiment, seed),
            series: None,
        }
    }

    pub fn profile<T: Serialize>(&mut self, name: &str, value: &T) {
        let v = serde_json::to_value(value).expect("profile serializes");
        self.meta.profiles.insert(name.to_string(), v);
    }

    pub fn parameter<T: Serialize>(&mut self, name: &str, value: T) {
        let v = serde_json::to_value(value).expect("parameter serializes");
        self.meta.parameters.insert(name.to_string(), v);
    }

    pub fn derive(&mut self, name: &str, value: f64) {
        self.meta.derived.insert(name.to_string(), value);
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.meta.checks.push(Check::new(name, passed, detail));
    }

    pub fn all_passed(&self) -> bool {
        self.meta.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.meta.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn find(&self, model: &str, k: usize, alg: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.k == k && r.alg == alg)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }

    pub fn series_csv(&self) -> Option<String> {
        self.series.as_ref().map(|(header, rows)| {
            let mut out = format!("{header}\n");
            for r in rows {
                let _ = writeln!(out, "{r}");
            }
            out
        })
    }

    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("metadata serializes")
    }

    /// Writes `<stem>.csv`, `<stem>.json` and, if present, `<stem>_series.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv())?;
        paths.push(csv);
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, self.meta_json() + "\n")?;
        paths.push(json);
        if let Some(series) = self.series_csv() {
            let p = dir.join(format!("{stem}_series.csv"));
            fs::write(&p, series)?;
            paths.push(p);
        }
        Ok(paths)
    }
}
