//! `cap check`: compare a summary.json against a threshold file and
//! report pass/fail per threshold.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Le,
    Ge,
    Lt,
    Gt,
}

impl Op {
    fn holds(self, actual: f64, bound: f64) -> bool {
        match self {
            Op::Le => actual <= bound,
            Op::Ge => actual >= bound,
            Op::Lt => actual < bound,
            Op::Gt => actual > bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Op::Le => "<=",
            Op::Ge => ">=",
            Op::Lt => "<",
            Op::Gt => ">",
        }
    }
}

/// One comparison: a dotted path into the summary document (array indices
/// as bare numbers, e.g. `per_episode.0.cost_mean`), an operator, and the
/// bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    pub op: Op,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub checks: Vec<Check>,
}

/// Follows a dotted path through the JSON document to a number.
fn lookup(doc: &serde_json::Value, path: &str) -> Result<f64> {
    let mut node = doc;
    for part in path.split('.') {
        node = match node {
            serde_json::Value::Object(map) => map
                .get(part)
                .with_context(|| format!("no field {part:?} along {path:?}"))?,
            serde_json::Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .with_context(|| format!("{part:?} is not an array index in {path:?}"))?;
                items
                    .get(idx)
                    .with_context(|| format!("index {idx} out of range along {path:?}"))?
            }
            other => bail!("cannot descend into {other} at {part:?} along {path:?}"),
        };
    }
    node.as_f64()
        .with_context(|| format!("{path:?} is not a number"))
}

/// Runs every threshold against the summary, printing one line per check.
/// Returns whether all of them held.
pub fn run_check(summary_path: &Path, thresholds_path: &Path) -> Result<bool> {
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(summary_path)
            .with_context(|| format!("reading {}", summary_path.display()))?,
    )
    .with_context(|| format!("parsing {}", summary_path.display()))?;
    let thresholds: ThresholdFile = serde_json::from_str(
        &std::fs::read_to_string(thresholds_path)
            .with_context(|| format!("reading {}", thresholds_path.display()))?,
    )
    .with_context(|| format!("parsing {}", thresholds_path.display()))?;
    if thresholds.checks.is_empty() {
        bail!("threshold file has no checks");
    }

    let mut all_ok = true;
    for check in &thresholds.checks {
        let actual = lookup(&summary, &check.metric)?;
        let ok = check.op.holds(actual, check.value);
        all_ok &= ok;
        println!(
            "{} {} = {} {} {}",
            if ok { "PASS" } else { "FAIL" },
            check.metric,
            actual,
            check.op.symbol(),
            check.value
        );
    }
    Ok(all_ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_walks_objects_and_arrays() {
        let doc: serde_json::Value =
            serde_json::from_str(r#"{"final_window": {"cost_mean": 0.09}, "per_episode": [{"kappa_mean": 2.0}]}"#)
                .unwrap();
        assert_eq!(lookup(&doc, "final_window.cost_mean").unwrap(), 0.09);
        assert_eq!(lookup(&doc, "per_episode.0.kappa_mean").unwrap(), 2.0);
        assert!(lookup(&doc, "final_window.missing").is_err());
        assert!(lookup(&doc, "per_episode.5.kappa_mean").is_err());
    }

    #[test]
    fn ops_compare_as_named() {
        assert!(Op::Le.holds(0.1, 0.1));
        assert!(!Op::Lt.holds(0.1, 0.1));
        assert!(Op::Ge.holds(3.0, 3.0));
        assert!(Op::Gt.holds(3.1, 3.0));
    }

    #[test]
    fn check_prints_and_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let summary = dir.path().join("summary.json");
        std::fs::write(&summary, r#"{"final_window": {"cost_mean": 0.09, "violations_mean": 2.0}}"#)
            .unwrap();
        let thresholds = dir.path().join("thresholds.json");
        std::fs::write(
            &thresholds,
            r#"{"checks": [
                {"metric": "final_window.cost_mean", "op": "le", "value": 0.105},
                {"metric": "final_window.violations_mean", "op": "le", "value": 1.0}
            ]}"#,
        )
        .unwrap();
        assert!(!run_check(&summary, &thresholds).unwrap());
        std::fs::write(
            &thresholds,
            r#"{"checks": [{"metric": "final_window.cost_mean", "op": "le", "value": 0.105}]}"#,
        )
        .unwrap();
        assert!(run_check(&summary, &thresholds).unwrap());
    }
}
