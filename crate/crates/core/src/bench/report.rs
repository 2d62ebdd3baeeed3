//! Comparison of measured quantities against the reference table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::experiment::ExperimentResult;
use crate::bench::reference::{reference_table, ReferenceEntry};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Optional check without a usable measurement.
    Skipped,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub entry: ReferenceEntry,
    pub measured: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// One row per reference entry some result measured, in table order.
    pub checks: Vec<Check>,
}

impl Report {
    /// Builds the comparison. When several results measure the same
    /// quantity, the last one wins.
    pub fn build(results: &[ExperimentResult]) -> Report {
        let mut seen: BTreeMap<&str, f64> = BTreeMap::new();
        for r in results {
            for m in &r.measurements {
                seen.insert(&m.id, m.value);
            }
        }
        let checks = reference_table()
            .into_iter()
            .filter_map(|entry| {
                let measured = *seen.get(entry.id.as_str())?;
                let verdict = if entry.tolerance.accepts(entry.value, measured) {
                    Verdict::Pass
                } else if !measured.is_finite() && !entry.mandatory {
                    Verdict::Skipped
                } else {
                    Verdict::Fail
                };
                Some(Check {
                    entry,
                    measured,
                    verdict,
                })
            })
            .collect();
        Report { checks }
    }

    /// True when no mandatory check failed.
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(|c| c.entry.mandatory && c.verdict == Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.checks.iter().map(|c| c.entry.id.len()).max().unwrap_or(2).max(2);
        let _ = writeln!(
            s,
            "{:<w$}  {:>12}  {:>12}  {:<12}  {:<9}  {:<8}  unit",
            "id", "measured", "reference", "tolerance", "required", "verdict"
        );
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<w$}  {:>12.4}  {:>12.4}  {:<12}  {:<9}  {:<8}  {}",
                c.entry.id,
                c.measured,
                c.entry.value,
                c.entry.tolerance.describe(),
                if c.entry.mandatory { "mandatory" } else { "optional" },
                c.verdict.as_str(),
                c.entry.unit
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(
            s,
            "{} checks, {} failed, overall {}",
            self.checks.len(),
            failed,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| SimError::Config(format!("csv: {e}"));
        w.write_record([
            "id",
            "source",
            "description",
            "unit",
            "measured",
            "reference",
            "tolerance",
            "mandatory",
            "verdict",
        ])
        .map_err(err)?;
        for c in &self.checks {
            w.write_record([
                c.entry.id.clone(),
                c.entry.source.clone(),
                c.entry.description.clone(),
                c.entry.unit.clone(),
                c.measured.to_string(),
                c.entry.value.to_string(),
                c.entry.tolerance.describe(),
                c.entry.mandatory.to_string(),
                c.verdict.as_str().to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::experiment::{ExperimentSpec, Measurement};

    fn result(ms: &[(&str, f64)]) -> ExperimentResult {
        ExperimentResult {
            spec: ExperimentSpec::elink(1),
            columns: vec![],
            rows: vec![],
            measurements: ms
                .iter()
                .map(|(id, v)| Measurement {
                    id: id.to_string(),
                    value: *v,
                })
                .collect(),
        }
    }

    #[test]
    fn verdicts() {
        let r = Report::build(&[result(&[
            ("elink.single_writer", 150.0),
            ("matmul.cannon_2x2_8", f64::NAN),
            ("stencil.halo", 10.0),
            ("not.a.check", 1.0),
        ])]);
        assert_eq!(r.checks.len(), 3);
        let v = |id: &str| r.checks.iter().find(|c| c.entry.id == id).unwrap().verdict;
        assert_eq!(v("elink.single_writer"), Verdict::Pass);
        assert_eq!(v("matmul.cannon_2x2_8"), Verdict::Skipped);
        assert_eq!(v("stencil.halo"), Verdict::Fail);
        assert!(!r.passed());
    }

    #[test]
    fn optional_failures_do_not_fail_the_report() {
        let r = Report::build(&[result(&[("matmul.cannon_2x2_8", 100.0)])]);
        assert_eq!(r.checks[0].verdict, Verdict::Fail);
        assert!(r.passed());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = Report::build(&[result(&[("elink.single_writer", 149.0)])]);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("id,source,"));
        assert!(r.to_text().contains("overall PASS"));
    }
}
