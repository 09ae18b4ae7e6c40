//! Machine-readable verification reports: one record per identity check,
//! with a manifest for CI diffing. Reports serialize deterministically
//! (sorted checks, stable field order); only the wall-time fields vary
//! between identical runs.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    /// Equation tag the check verifies.
    pub paper_anchor: String,
    pub params: serde_json::Value,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub wall_time_ms: f64,
}

impl CheckResult {
    pub fn new(
        suite: &str,
        name: &str,
        anchor: &str,
        params: serde_json::Value,
        max_residual: f64,
        tolerance: f64,
    ) -> Self {
        CheckResult {
            suite: suite.to_string(),
            name: name.to_string(),
            paper_anchor: anchor.to_string(),
            params,
            max_residual,
            tolerance,
            pass: max_residual < tolerance,
            wall_time_ms: 0.0,
        }
    }

    /// Negative control: passes when the residual EXCEEDS the threshold.
    pub fn negative_control(
        suite: &str,
        name: &str,
        anchor: &str,
        params: serde_json::Value,
        residual: f64,
        threshold: f64,
    ) -> Self {
        CheckResult {
            suite: suite.to_string(),
            name: name.to_string(),
            paper_anchor: anchor.to_string(),
            params,
            max_residual: residual,
            tolerance: threshold,
            pass: residual > threshold,
            wall_time_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub spec_version: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub manifest: Manifest,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn new(config_hash: String, mut checks: Vec<CheckResult>) -> Self {
        checks.sort_by_key(|c| (c.suite.clone(), c.name.clone()));
        Report {
            manifest: Manifest {
                spec_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash,
            },
            checks,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Copy with zeroed wall-time fields, for determinism comparisons.
    pub fn without_timings(&self) -> Report {
        let mut out = self.clone();
        for c in out.checks.iter_mut() {
            c.wall_time_ms = 0.0;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// FNV-1a over a byte string; used to fingerprint configurations.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
