//! Run reports and the exit-code contract.

use super::Scenario;
use crate::assemble::ResidualSummary;
use crate::bundle::ChernResult;
use crate::error::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Construct,
    Obstruct,
    Converge,
}

/// A named scalar check with its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// True when `value` must be at least `tolerance` rather than at most.
    pub at_least: bool,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, at_least: false, pass: value <= tolerance }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, at_least: true, pass: value >= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub fault: String,
    /// Residual with the largest value-to-tolerance ratio under the fault.
    pub residual: String,
    pub ratio: f64,
    pub detected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernProbeReport {
    pub surface: String,
    pub euler_characteristic: i64,
    pub result: ChernResult,
    pub refined: Option<ChernResult>,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BottProbeReport {
    pub integral: f64,
    pub error_estimate: f64,
    pub tolerance: f64,
    pub n: usize,
    /// A vanishing integral is evidence of compatibility, not a proof.
    pub verdict: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub chern: Option<ChernProbeReport>,
    pub bott: Option<BottProbeReport>,
    /// Why a probe was skipped.
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub ds: f64,
    pub h: f64,
    pub radius: f64,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of each residual against `h`.
    pub slopes: BTreeMap<String, f64>,
    /// Residuals already at round-off on the finest level; their slopes are not judged.
    pub at_roundoff: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo { kind: e.kind().into(), message: e.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_sha256: String,
    pub version: String,
    /// Seconds since the Unix epoch. Left out of [`Report::body_json`].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp: Option<u64>,
}

impl Provenance {
    pub fn of(config: &Scenario) -> Self {
        let canonical = serde_json::to_vec(config).expect("scenario serializes");
        let digest = Sha256::digest(&canonical);
        Provenance {
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: RunKind,
    pub scenario: String,
    /// True iff every residual, check and fault probe passed and no error occurred.
    pub pass: bool,
    pub residuals: BTreeMap<String, ResidualSummary>,
    pub checks: Vec<Check>,
    pub faults: Vec<FaultReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub obstruction: Option<ObstructionReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence: Option<ConvergenceTable>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<ErrorInfo>,
    pub config: Scenario,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(kind: RunKind, config: &Scenario) -> Self {
        Report {
            kind,
            scenario: config.display_name(),
            pass: false,
            residuals: BTreeMap::new(),
            checks: Vec::new(),
            faults: Vec::new(),
            obstruction: None,
            convergence: None,
            warnings: Vec::new(),
            error: None,
            config: config.clone(),
            provenance: Provenance::of(config),
        }
    }

    pub fn fail_with(mut self, e: &Error) -> Self {
        self.error = Some(e.into());
        self.pass = false;
        self
    }

    /// Recomputes `pass` from the parts.
    pub fn finish(mut self) -> Self {
        self.pass = self.error.is_none()
            && self.residuals.values().all(|r| r.pass)
            && self.checks.iter().all(|c| c.pass)
            && self.faults.iter().all(|f| f.detected);
        self
    }

    /// Failed residuals and checks by name.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.residuals.iter().filter(|(_, r)| !r.pass).map(|(n, _)| n.clone()).collect();
        out.extend(self.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()));
        out.extend(self.faults.iter().filter(|f| !f.detected).map(|f| format!("fault {}", f.fault)));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report without its timestamp; identical runs give identical bodies.
    pub fn body_json(&self) -> String {
        let mut r = self.clone();
        r.provenance.timestamp = None;
        r.to_json()
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:?} run of {}: {}\n", self.kind, self.scenario, if self.pass { "PASS" } else { "FAIL" });
        if let Some(e) = &self.error {
            s += &format!("  error [{}]: {}\n", e.kind, e.message);
        }
        for (name, r) in &self.residuals {
            let rel = if r.pass { "ok " } else { "BAD" };
            s += &format!("  {rel} {name:<34} {:>10.3e}  tol {:.1e}  (n = {})\n", r.max, r.tolerance, r.count);
        }
        for c in &self.checks {
            let rel = if c.pass { "ok " } else { "BAD" };
            let op = if c.at_least { ">=" } else { "<=" };
            s += &format!("  {rel} {:<34} {:>10.3e}  {op} {:.1e}\n", c.name, c.value, c.tolerance);
        }
        for f in &self.faults {
            let rel = if f.detected { "ok " } else { "BAD" };
            s += &format!("  {rel} fault {:<28} {:>10.3e}x via {}\n", f.fault, f.ratio, f.residual);
        }
        if let Some(o) = &self.obstruction {
            if let Some(c) = &o.chern {
                s += &format!("  chern on {}: {} (real {:.6}); {}\n", c.surface, c.result.number, c.result.real, c.verdict);
            }
            if let Some(b) = &o.bott {
                s += &format!("  bott integral {:.3e} (tol {:.1e}); {}\n", b.integral, b.tolerance, b.verdict);
            }
            for k in &o.skipped {
                s += &format!("  skipped: {k}\n");
            }
        }
        if let Some(t) = &self.convergence {
            for (name, slope) in &t.slopes {
                let note = if t.at_roundoff.contains(name) { " (at round-off)" } else { "" };
                s += &format!("  slope {name:<34} {slope:>6.2}{note}\n");
            }
        }
        for w in &self.warnings {
            s += &format!("  warning: {w}\n");
        }
        s
    }
}

/// 0 on pass, 1 on a tolerance failure, 2 on an error.
pub fn exit_code(r: &Report) -> i32 {
    match (&r.error, r.pass) {
        (Some(_), _) => 2,
        (None, true) => 0,
        (None, false) => 1,
    }
}
