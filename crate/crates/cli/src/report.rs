//! Run reports: named checks with values, tolerances, verdicts, timings,
//! and provenance (config hash + tool version).

use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub millis: u128,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config_hash: String,
    pub tool_version: String,
    pub checks: Vec<CheckResult>,
}

impl RunReport {
    pub fn new(config_hash: &str) -> Self {
        RunReport {
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            checks: Vec::new(),
        }
    }

    /// Run a check closure returning (value, tolerance); the verdict is
    /// |value| <= tolerance.
    pub fn check(&mut self, name: &str, f: impl FnOnce() -> anyhow::Result<(f64, f64)>) -> anyhow::Result<()> {
        let start = Instant::now();
        let (value, tolerance) = f()?;
        self.checks.push(CheckResult {
            name: name.to_string(),
            value,
            tolerance,
            pass: value.abs() <= tolerance,
            millis: start.elapsed().as_millis(),
        });
        Ok(())
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tool version: {}", self.tool_version);
        let _ = writeln!(out, "config sha256: {}", self.config_hash);
        let _ = writeln!(
            out,
            "{:<38} {:>24} {:>12} {:>7} {:>8}",
            "check", "value", "tolerance", "result", "time"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<38} {:>24.16e} {:>12.3e} {:>7} {:>6}ms",
                c.name,
                c.value,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" },
                c.millis
            );
        }
        let _ = writeln!(
            out,
            "overall: {} ({}/{} checks pass)",
            if self.all_pass() { "PASS" } else { "FAIL" },
            self.checks.iter().filter(|c| c.pass).count(),
            self.checks.len()
        );
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("check,value,tolerance,pass,millis\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{},{}",
                c.name, c.value, c.tolerance, c.pass, c.millis
            );
        }
        out
    }
}
