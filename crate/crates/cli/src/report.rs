//! Machine-readable reports.
//!
//! A report is a JSON object with the keys
//!
//! | key            | content                                                      |
//! |----------------|--------------------------------------------------------------|
//! | `command`      | subcommand name                                              |
//! | `tool_version` | crate version                                                |
//! | `domain`       | the parsed domain file, or `null`                            |
//! | `resolution`   | resolution level used, or `null`                             |
//! | `parameters`   | command options (field names, `tmax`, ...)                   |
//! | `results`      | command-specific numbers                                     |
//! | `verdicts`     | list of `{name, value, relation, tolerance, passed}`         |
//! | `warnings`     | list of strings                                              |
//! | `timing_seconds` | wall time, present only with `--timing`                    |
//!
//! Object keys are sorted, so two runs with the same inputs produce the same
//! bytes unless timing is requested.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::spec_file::DomainSpecFile;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every verdict name a command can emit, grouped by command.
pub const COMMAND_VERDICTS: &[(&str, &[&str])] = &[
    (
        "check-reilly",
        &["reilly_residual", "boundary_identity_gradient", "boundary_identity_laplacian"],
    ),
    (
        "solve-neumann",
        &[
            "compatibility",
            "pde_residual",
            "bc_residual",
            "fd_pde_residual",
            "fd_bc_residual",
            "gauge",
            "hypothesis",
            "slack_nonnegative",
            "slack_accounting",
            "holder",
        ],
    ),
    (
        "minkowski",
        &[
            "hypothesis",
            "theorem_inequality",
            "implication_chain",
            "minkowski_formula",
            "equality_detection",
        ],
    ),
    (
        "flow",
        &[
            "concavity",
            "concavity_analytic",
            "variational_first",
            "variational_second",
            "comparison",
            "ball_equality",
            "ball_preservation",
            "riccati_geometric",
            "euclidean_limit",
        ],
    ),
    ("ball-forms", &["closed_form_deficit"]),
];

pub const KNOWN_VERDICTS: &[&str] = &[
    "reilly_residual",
    "boundary_identity_gradient",
    "boundary_identity_laplacian",
    "compatibility",
    "pde_residual",
    "bc_residual",
    "fd_pde_residual",
    "fd_bc_residual",
    "gauge",
    "hypothesis",
    "slack_nonnegative",
    "slack_accounting",
    "holder",
    "theorem_inequality",
    "implication_chain",
    "minkowski_formula",
    "equality_detection",
    "concavity",
    "concavity_analytic",
    "variational_first",
    "variational_second",
    "comparison",
    "ball_equality",
    "ball_preservation",
    "riccati_geometric",
    "euclidean_limit",
    "closed_form_deficit",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "holds")]
    Holds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    /// `None` when the measured value is not finite.
    pub value: Option<f64>,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Verdict {
            name: name.into(),
            value: value.is_finite().then_some(value),
            relation: Relation::AtMost,
            tolerance,
            passed: value <= tolerance,
        }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Verdict {
            name: name.into(),
            value: value.is_finite().then_some(value),
            relation: Relation::AtLeast,
            tolerance: bound,
            passed: value >= bound,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Verdict {
            name: name.into(),
            value: Some(if ok { 1.0 } else { 0.0 }),
            relation: Relation::Holds,
            tolerance: 1.0,
            passed: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub tool_version: String,
    pub domain: Option<DomainSpecFile>,
    pub resolution: Option<usize>,
    pub parameters: Map<String, Value>,
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<f64>,
}

impl Report {
    pub fn new(command: &str, domain: Option<DomainSpecFile>, resolution: Option<usize>) -> Self {
        Report {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            domain,
            resolution,
            parameters: Map::new(),
            results: Value::Object(Map::new()),
            verdicts: Vec::new(),
            warnings: Vec::new(),
            timing_seconds: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Verdict table for standard output.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{}", self.command);
        if let Some(res) = self.resolution {
            let _ = write!(out, " (resolution {res})");
        }
        out.push('\n');
        let width = self.verdicts.iter().map(|v| v.name.len()).max().unwrap_or(7).max(7);
        let _ = writeln!(out, "  {:<width$}  {:>14}  {:<18}  result", "verdict", "value", "criterion");
        for v in &self.verdicts {
            let value = match (v.relation, v.value) {
                (Relation::Holds, _) => if v.passed { "yes" } else { "no" }.to_string(),
                (_, Some(x)) => format!("{x:.6e}"),
                (_, None) => "non-finite".to_string(),
            };
            let crit = match v.relation {
                Relation::AtMost => format!("<= {:.1e}", v.tolerance),
                Relation::AtLeast => format!(">= {:.1e}", v.tolerance),
                Relation::Holds => "holds".to_string(),
            };
            let _ = writeln!(
                out,
                "  {:<width$}  {:>14}  {:<18}  {}",
                v.name,
                value,
                crit,
                if v.passed { "PASS" } else { "FAIL" }
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_names_are_consistent() {
        for (_, names) in COMMAND_VERDICTS {
            for n in *names {
                assert!(KNOWN_VERDICTS.contains(n), "{n}");
            }
        }
        for n in KNOWN_VERDICTS {
            assert!(COMMAND_VERDICTS.iter().any(|(_, names)| names.contains(n)), "{n}");
        }
    }

    #[test]
    fn non_finite_values_fail_and_serialize() {
        let v = Verdict::at_most("pde_residual", f64::NAN, 1e-5);
        assert!(!v.passed && v.value.is_none());
        let mut r = Report::new("solve-neumann", None, Some(64));
        r.verdicts.push(v);
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }
}
