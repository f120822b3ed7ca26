//! Named metrics with tolerances, the common currency of all verify routines.

use serde::Serialize;

/// How a metric is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// pass iff value ≤ tolerance
    AtMost,
    /// pass iff value ≥ tolerance
    AtLeast,
    /// informational only
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub check: Check,
    pub ci: Option<(f64, f64)>,
    /// Which identity the number exercises.
    pub identity: String,
    pub pass: bool,
}

impl Metric {
    pub fn new(name: &str, value: f64, tolerance: f64, check: Check, identity: &str) -> Self {
        let pass = match check {
            Check::AtMost => value <= tolerance,
            Check::AtLeast => value >= tolerance,
            Check::Info => true,
        };
        Self {
            name: name.into(),
            value,
            tolerance,
            check,
            ci: None,
            identity: identity.into(),
            pass,
        }
    }

    pub fn info(name: &str, value: f64, identity: &str) -> Self {
        Self::new(name, value, f64::NAN, Check::Info, identity)
    }

    pub fn with_ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StatReport {
    pub name: String,
    pub metrics: Vec<Metric>,
    pub notes: Vec<String>,
}

impl StatReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |m| m.value)
    }
}
