//! Report envelopes. Reports carry the resolved scenario and seed and no
//! timings, so equal inputs give byte-identical files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

pub type Checks = BTreeMap<String, Check>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<C, R> {
    pub command: String,
    pub seed: u64,
    pub config: C,
    pub result: R,
    pub checks: Checks,
    pub passed: bool,
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    pub fn new(command: &str, seed: u64, config: C, result: R, checks: Checks) -> Self {
        let passed = checks.values().all(|c| c.passed);
        Self {
            command: command.into(),
            seed,
            config,
            result,
            checks,
            passed,
        }
    }
}

/// A file written next to the report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// What a subcommand produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    /// Pretty-printed JSON report.
    pub report: String,
    pub checks: Checks,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn from_report<C: Serialize, R: Serialize>(
        report: &Report<C, R>,
        artifacts: Vec<Artifact>,
    ) -> Self {
        let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
        text.push('\n');
        Self {
            report: text,
            checks: report.checks.clone(),
            artifacts,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}
