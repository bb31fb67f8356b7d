//! Structured run reports. No timestamps anywhere: rerunning a config must
//! reproduce the report byte for byte.

use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub details: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub checks: Vec<CheckResult>,
    /// Free-form numeric results keyed by name (gains, RMSEs, traces live in
    /// colocated CSVs instead).
    pub values: Vec<(String, f64)>,
}

impl Report {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            checks: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, lhs: f64, rhs: f64, details: impl Into<String>) {
        self.checks.push(CheckResult { name: name.into(), passed, lhs, rhs, details: details.into() });
    }

    pub fn value(&mut self, name: &str, v: f64) {
        self.values.push((name.into(), v));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} [{}]\n", self.command, self.config_hash));
        for c in &self.checks {
            out.push_str(&format!(
                "  {} {} (lhs {:.6e}, rhs {:.6e}) {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.lhs,
                c.rhs,
                c.details
            ));
        }
        for (k, v) in &self.values {
            out.push_str(&format!("  {k} = {v:.6}\n"));
        }
        out.push_str(if self.all_passed() { "all checks passed\n" } else { "CHECKS FAILED\n" });
        out
    }
}
