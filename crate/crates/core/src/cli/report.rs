//! Verification reports: one entry per suite, one check per verified
//! identity, rendered as text or JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub path: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    /// Passes when `residual ≤ bound` (non-finite residuals fail).
    pub fn bounded(path: impl Into<String>, residual: f64, bound: f64) -> Self {
        Check {
            path: path.into(),
            passed: residual.is_finite() && residual <= bound,
            residual: Some(residual),
            bound: Some(bound),
            error: None,
            detail: None,
        }
    }

    /// Passes when `got == expected`.
    pub fn exact(path: impl Into<String>, got: usize, expected: usize) -> Self {
        let mut c = Check::bounded(path, got.abs_diff(expected) as f64, 0.0);
        c.detail = Some(format!("got {got}, expected {expected}"));
        c
    }

    pub fn flag(path: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { path: path.into(), passed, residual: None, bound: None, error: None, detail: Some(detail.into()) }
    }

    pub fn failure(path: impl Into<String>, err: &Error) -> Self {
        Check {
            path: path.into(),
            passed: false,
            residual: error_residual(err),
            bound: None,
            error: Some(err.name().to_string()),
            detail: Some(err.to_string()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// The residual carried by an error, when it has one.
pub fn error_residual(err: &Error) -> Option<f64> {
    match err {
        Error::NotHermitian { defect }
        | Error::IntertwineViolation { defect }
        | Error::NotAdjointable { defect }
        | Error::NotBimodule { defect }
        | Error::ExpectationMismatch { defect } => Some(*defect),
        Error::NotPsd { min_eigenvalue } => Some(-min_eigenvalue),
        Error::NotInAlgebra { residual }
        | Error::NotInFactor { residual }
        | Error::RangeViolation { residual, .. }
        | Error::NotInTarget { residual } => Some(*residual),
        _ => None,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub dimensions: BTreeMap<String, usize>,
}

impl SuiteReport {
    pub fn new(suite: &str) -> Self {
        SuiteReport { suite: suite.to_string(), passed: true, ..Default::default() }
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn dimension(&mut self, key: impl Into<String>, value: usize) {
        self.dimensions.insert(key.into(), value);
    }

    pub fn worst(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub config: String,
    pub truncation: usize,
    pub abs_eps: f64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
    /// Wall-clock seconds per suite; kept out of the deterministic output.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(config: &str, truncation: usize, abs_eps: f64) -> Self {
        Report {
            format_version: FORMAT_VERSION,
            config: config.to_string(),
            truncation,
            abs_eps,
            passed: true,
            suites: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, suite: SuiteReport, seconds: f64) {
        self.passed &= suite.passed;
        self.timings.insert(suite.suite.clone(), seconds);
        self.suites.push(suite);
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == name)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self, include_timings: bool) -> String {
        let mut value = serde_json::to_value(self).expect("reports serialize");
        if include_timings {
            value["timings"] = serde_json::to_value(&self.timings).expect("timings serialize");
        }
        let mut s = serde_json::to_string_pretty(&value).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config {}  L={}  abs_eps={:e}", self.config, self.truncation, self.abs_eps);
        for s in &self.suites {
            let _ = writeln!(out, "[{}] {}", if s.passed { "pass" } else { "FAIL" }, s.suite);
            for c in &s.checks {
                let mark = if c.passed { "ok  " } else { "FAIL" };
                let mut line = format!("  {mark} {}", c.path);
                if let Some(r) = c.residual {
                    let _ = write!(line, "  residual {r:.3e}");
                }
                if let Some(b) = c.bound {
                    let _ = write!(line, " (bound {b:.1e})");
                }
                if let Some(e) = &c.error {
                    let _ = write!(line, "  {e}");
                }
                if let Some(d) = &c.detail {
                    let _ = write!(line, "  {d}");
                }
                let _ = writeln!(out, "{line}");
            }
        }
        let failed = self.suites.iter().filter(|s| !s.passed).count();
        let _ = writeln!(
            out,
            "{} ({} suites, {} failed)",
            if self.passed { "PASS" } else { "FAIL" },
            self.suites.len(),
            failed
        );
        out
    }
}
