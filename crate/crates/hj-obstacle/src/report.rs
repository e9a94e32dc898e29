//! Structured experiment reports: measured scalars and series, PASS/FAIL/INFO
//! verdicts with the measured-vs-threshold values they cite, and artifact
//! checksums. Reports are self-contained: the echoed config re-runs the
//! experiment.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub verdict: Verdict,
    pub measured: f64,
    pub threshold: f64,
    pub comparison: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_echo: String,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<[f64; 2]>>,
    pub checks: Vec<CheckResult>,
    pub wall_seconds: f64,
    pub artifacts: Vec<Artifact>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            config_echo: String::new(),
            scalars: BTreeMap::new(),
            series: BTreeMap::new(),
            checks: Vec::new(),
            wall_seconds: 0.0,
            artifacts: Vec::new(),
        }
    }

    pub fn scalar(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.scalars.insert(name.into(), value);
        self
    }

    pub fn series(&mut self, name: impl Into<String>, points: Vec<[f64; 2]>) -> &mut Self {
        self.series.insert(name.into(), points);
        self
    }

    /// measured <= threshold.
    pub fn check_le(
        &mut self,
        id: impl Into<String>,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> &mut Self {
        let verdict = if measured <= threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.checks.push(CheckResult {
            id: id.into(),
            verdict,
            measured,
            threshold,
            comparison: "<=".into(),
            detail: detail.into(),
        });
        self
    }

    /// measured >= threshold.
    pub fn check_ge(
        &mut self,
        id: impl Into<String>,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> &mut Self {
        let verdict = if measured >= threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.checks.push(CheckResult {
            id: id.into(),
            verdict,
            measured,
            threshold,
            comparison: ">=".into(),
            detail: detail.into(),
        });
        self
    }

    pub fn check_bool(
        &mut self,
        id: impl Into<String>,
        ok: bool,
        measured: f64,
        detail: impl Into<String>,
    ) -> &mut Self {
        self.checks.push(CheckResult {
            id: id.into(),
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            measured,
            threshold: f64::NAN,
            comparison: "predicate".into(),
            detail: detail.into(),
        });
        self
    }

    /// Measured quantity without a hard threshold.
    pub fn info(
        &mut self,
        id: impl Into<String>,
        measured: f64,
        detail: impl Into<String>,
    ) -> &mut Self {
        self.checks.push(CheckResult {
            id: id.into(),
            verdict: Verdict::Info,
            measured,
            threshold: f64::NAN,
            comparison: "info".into(),
            detail: detail.into(),
        });
        self
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn merge(&mut self, other: ExperimentReport) {
        let prefix = other.experiment;
        for (k, v) in other.scalars {
            self.scalars.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.series {
            self.series.insert(format!("{prefix}.{k}"), v);
        }
        for mut c in other.checks {
            c.id = format!("{prefix}.{}", c.id);
            self.checks.push(c);
        }
        self.artifacts.extend(other.artifacts);
    }

    pub fn write_json(&self, path: &Path) -> crate::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// One line per check, the human-readable summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Info => "INFO",
            };
            let line = if c.comparison == "info" || c.comparison == "predicate" {
                format!("[{tag}] {}: measured {:.6e} ({})\n", c.id, c.measured, c.detail)
            } else {
                format!(
                    "[{tag}] {}: measured {:.6e} {} {:.6e} ({})\n",
                    c.id, c.measured, c.comparison, c.threshold, c.detail
                )
            };
            out.push_str(&line);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_and_overall() {
        let mut r = ExperimentReport::new("t");
        r.check_le("a", 1.0, 2.0, "ok");
        r.info("b", 3.0, "just telling");
        assert!(r.all_pass());
        r.check_ge("c", 1.0, 2.0, "bad");
        assert!(!r.all_pass());
        let text = r.render_text();
        assert!(text.contains("[PASS] a"));
        assert!(text.contains("[FAIL] c"));
    }
}
