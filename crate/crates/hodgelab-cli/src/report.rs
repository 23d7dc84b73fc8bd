//! Run reports: a named check list plus CSV artifacts, written with fixed
//! column order and 17-significant-digit floats so identical configs produce
//! byte-identical outputs.

use std::path::{Path, PathBuf};

pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

pub struct Csv {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Csv {
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub struct Report {
    pub command: String,
    pub manifest: serde_json::Value,
    pub checks: Vec<Check>,
    pub csvs: Vec<Csv>,
    pub extra_json: Vec<(String, serde_json::Value)>,
}

impl Report {
    pub fn new(command: &str, manifest: serde_json::Value) -> Self {
        Report {
            command: command.to_string(),
            manifest,
            checks: Vec::new(),
            csvs: Vec::new(),
            extra_json: Vec::new(),
        }
    }

    /// Record a check of the form `value ≤ threshold`.
    pub fn check_le(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            passed: value <= threshold && value.is_finite(),
            value,
            threshold,
        });
    }

    /// Record a boolean check (value 1 = pass).
    pub fn check_true(&mut self, name: &str, ok: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
        });
    }

    pub fn failed_count(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    /// Write `<command>-report.json` plus all CSVs; returns the report path.
    pub fn write(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(out_dir)?;
        let checks: Vec<serde_json::Value> = self
            .checks
            .iter()
            .map(|c| {
                serde_json::json!({
                    "name": c.name,
                    "passed": c.passed,
                    "value": c.value,
                    "threshold": c.threshold,
                })
            })
            .collect();
        let report = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "manifest": self.manifest,
            "passed": self.failed_count() == 0,
            "num_checks": self.checks.len(),
            "failures": self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect::<Vec<_>>(),
            "checks": checks,
        });
        let path = out_dir.join(format!("{}-report.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        for csv in &self.csvs {
            std::fs::write(out_dir.join(format!("{}.csv", csv.name)), csv.render())?;
        }
        for (name, value) in &self.extra_json {
            std::fs::write(
                out_dir.join(format!("{name}.json")),
                serde_json::to_string_pretty(value)?,
            )?;
        }
        Ok(path)
    }
}
