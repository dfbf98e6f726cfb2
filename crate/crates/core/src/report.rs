//! Machine-readable verification reports.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

/// Witnesses kept per check; failures beyond this are only counted.
pub const MAX_WITNESSES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub status: Status,
    pub counts: BTreeMap<String, u64>,
    pub witnesses: Vec<serde_json::Value>,
    /// Wall-clock time; only filled in when timings are requested, so that
    /// reports are reproducible by default.
    pub millis: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip)]
    failures: u64,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            status: Status::Pass,
            counts: BTreeMap::new(),
            witnesses: Vec::new(),
            millis: None,
            notes: Vec::new(),
            failures: 0,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failures(&self) -> u64 {
        self.failures
    }

    pub fn count(&mut self, key: &str, by: u64) {
        *self.counts.entry(key.to_string()).or_insert(0) += by;
    }

    pub fn set(&mut self, key: &str, value: u64) {
        self.counts.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Records a failure with its counterexample.
    pub fn fail(&mut self, witness: serde_json::Value) {
        self.status = Status::Fail;
        self.failures += 1;
        self.count("failures", 1);
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(witness);
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Folds another report for the same check into this one.
    pub fn merge(&mut self, other: CheckReport) {
        if other.status == Status::Fail {
            self.status = Status::Fail;
        }
        self.failures += other.failures;
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        for w in other.witnesses {
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(w);
            }
        }
        self.notes.extend(other.notes);
    }
}

/// Runs `f` and stores its elapsed time on the returned report when `timed`.
pub fn timed(timed: bool, f: impl FnOnce() -> CheckReport) -> CheckReport {
    let start = Instant::now();
    let mut r = f();
    if timed {
        r.millis = Some(start.elapsed().as_millis() as u64);
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub status: Status,
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<C: Serialize> {
    pub config: C,
    pub checks: Vec<CheckReport>,
    pub summary: Summary,
}

impl<C: Serialize> Report<C> {
    pub fn new(config: C, checks: Vec<CheckReport>) -> Self {
        let passed = checks.iter().filter(|c| c.passed()).count();
        let failed = checks.len() - passed;
        Report {
            config,
            summary: Summary {
                status: if failed == 0 { Status::Pass } else { Status::Fail },
                checks: checks.len(),
                passed,
                failed,
            },
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.status == Status::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
