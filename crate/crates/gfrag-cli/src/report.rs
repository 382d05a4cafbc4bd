//! Pass/fail records and their machine-readable summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One assertion of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: u32,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value < threshold`.
    pub fn below(criterion: u32, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { criterion, name: name.into(), value, threshold, pass: value < threshold, detail: String::new() }
    }

    /// Passes when `value > threshold`.
    pub fn above(criterion: u32, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { criterion, name: name.into(), value, threshold, pass: value > threshold, detail: String::new() }
    }

    pub fn flag(criterion: u32, name: impl Into<String>, pass: bool) -> Self {
        Self { criterion, name: name.into(), value: f64::from(u8::from(pass)), threshold: 1.0, pass, detail: String::new() }
    }

    pub fn with(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Criteria not evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl SuiteReport {
    pub fn new(suite: &str, seed: u64) -> Self {
        Self { suite: suite.into(), seed, checks: Vec::new(), skipped: Vec::new() }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn skip(&mut self, what: &str, why: &str) {
        self.skipped.push((what.into(), why.into()));
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Criterion numbers covered, ascending.
    pub fn criteria(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.checks.iter().map(|c| c.criterion).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn criterion_pass(&self, k: u32) -> bool {
        self.checks.iter().filter(|c| c.criterion == k).all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Summary of several suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub criteria: Vec<CriterionStatus>,
    pub suites: Vec<SuiteReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatus {
    pub criterion: u32,
    pub suite: String,
    pub pass: bool,
}

impl Summary {
    pub fn new(suites: Vec<SuiteReport>) -> Self {
        let mut criteria = Vec::new();
        for s in &suites {
            for k in s.criteria() {
                criteria.push(CriterionStatus { criterion: k, suite: s.suite.clone(), pass: s.criterion_pass(k) });
            }
        }
        criteria.sort_by_key(|c| c.criterion);
        let pass = suites.iter().all(SuiteReport::pass);
        Self { pass, criteria, suites }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
