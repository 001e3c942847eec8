//! Hazard report documents and their canonical JSON form.
//!
//! Canonical output has sorted object keys, two-space indentation and every
//! floating-point value printed with exactly four decimals, so reports for
//! identical inputs are byte-identical. Timings live under their own
//! top-level `timings` key and are the only non-deterministic content.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{BBox, Source};
use crate::error::{Error, Result};
use crate::fusion::{Category, RawLabel};
use crate::hazard::{RuleFacts, RuleId, Severity};
use crate::pipeline::{FrameResult, StageSummary};

pub const SCHEMA: &str = "fallwatch.report/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub schema: String,
    pub frame_id: String,
    pub entries: Vec<ReportEntry>,
    pub warnings: Vec<String>,
    pub summary: StageSummary,
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportEntry {
    pub category: Category,
    pub labels: Vec<RawLabel>,
    pub world_position: [f64; 3],
    pub bbox: BBox,
    pub severity: Severity,
    pub rule_trace: Vec<RuleId>,
    pub facts: RuleFacts,
    pub sources: Vec<Source>,
}

impl ReportDocument {
    pub fn from_result(r: &FrameResult) -> Self {
        let entries = r
            .report
            .entries
            .iter()
            .map(|e| ReportEntry {
                category: e.object.category,
                labels: e.object.raw_labels.clone(),
                world_position: [e.object.position.x, e.object.position.y, e.object.position.z],
                bbox: e.object.bbox,
                severity: e.severity,
                rule_trace: e.rule_trace.clone(),
                facts: e.facts,
                sources: e.object.sources.iter().copied().collect(),
            })
            .collect();
        Self {
            schema: SCHEMA.into(),
            frame_id: r.report.frame_id.clone(),
            entries,
            warnings: r.warnings.clone(),
            summary: r.summary.clone(),
            timings: r.timings.iter().map(|t| (t.stage.clone(), t.ms)).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: ReportDocument =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed report: {e}")))?;
        if doc.schema != SCHEMA {
            return Err(Error::Validation(format!(
                "unsupported report schema `{}` (expected `{SCHEMA}`)",
                doc.schema
            )));
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::load(path, e.to_string()))
    }

    /// Canonical JSON text; `include_timings = false` drops the `timings`
    /// key for golden comparisons.
    pub fn to_canonical_string(&self, include_timings: bool) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if !include_timings {
            if let Value::Object(map) = &mut value {
                map.remove("timings");
            }
        }
        let mut out = String::new();
        write_canonical(&value, 0, &mut out);
        out.push('\n');
        out
    }
}

/// Writes `r` as a canonical report document.
pub fn write_report(r: &FrameResult, path: &Path) -> Result<()> {
    let text = ReportDocument::from_result(r).to_canonical_string(true);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_float(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_canonical(v: &Value, level: usize, out: &mut String) {
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => {
            out.push_str(&serde_json::to_string(v).expect("scalar serializes"));
        }
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(level + 1, out);
                write_canonical(item, level + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(level + 1, out);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_canonical(&map[key.as_str()], level + 1, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push('}');
        }
    }
}

/// Differences between an expected and an actual report, one line each.
/// Positions are compared at the serialized precision; timings are ignored.
pub fn compare_reports(expected: &ReportDocument, actual: &ReportDocument) -> Vec<String> {
    let mut diffs = Vec::new();
    if expected.frame_id != actual.frame_id {
        diffs.push(format!(
            "frame_id: expected `{}`, got `{}`",
            expected.frame_id, actual.frame_id
        ));
    }
    if expected.entries.len() != actual.entries.len() {
        diffs.push(format!(
            "entry count: expected {}, got {}",
            expected.entries.len(),
            actual.entries.len()
        ));
    }
    for (i, (e, a)) in expected.entries.iter().zip(&actual.entries).enumerate() {
        let name = format!(
            "entry {i} ({})",
            e.labels
                .iter()
                .map(|l| l.label.as_str())
                .collect::<Vec<_>>()
                .join("/")
        );
        if e.severity != a.severity {
            diffs.push(format!(
                "{name}: severity expected {}, got {}",
                e.severity.as_str(),
                a.severity.as_str()
            ));
        }
        if e.category != a.category {
            diffs.push(format!(
                "{name}: category expected {}, got {}",
                e.category.as_str(),
                a.category.as_str()
            ));
        }
        if e.sources != a.sources {
            diffs.push(format!("{name}: sources expected {:?}, got {:?}", e.sources, a.sources));
        }
        let labels = |x: &ReportEntry| x.labels.iter().map(|l| l.label.clone()).collect::<Vec<_>>();
        if labels(e) != labels(a) {
            diffs.push(format!("{name}: labels expected {:?}, got {:?}", labels(e), labels(a)));
        }
        if e.rule_trace != a.rule_trace {
            diffs.push(format!("{name}: rule trace differs"));
        }
        let gap = e
            .world_position
            .iter()
            .zip(&a.world_position)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if gap > 1e-3 {
            diffs.push(format!(
                "{name}: position expected {:?}, got {:?}",
                e.world_position, a.world_position
            ));
        }
    }
    if expected.warnings != actual.warnings {
        diffs.push(format!(
            "warnings: expected {:?}, got {:?}",
            expected.warnings, actual.warnings
        ));
    }
    diffs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_doc() -> ReportDocument {
        ReportDocument {
            schema: SCHEMA.into(),
            frame_id: "f".into(),
            entries: vec![],
            warnings: vec![],
            summary: StageSummary::default(),
            timings: BTreeMap::from([("total".to_string(), 1.23456)]),
        }
    }

    #[test]
    fn floats_have_four_decimals() {
        let v: Value = serde_json::json!({"b": 1.0, "a": [-0.00001, 2.123456], "n": 3});
        let mut out = String::new();
        write_canonical(&v, 0, &mut out);
        assert_eq!(out, "{\n  \"a\": [\n    0.0000,\n    2.1235\n  ],\n  \"b\": 1.0000,\n  \"n\": 3\n}");
    }

    #[test]
    fn empty_report_document() {
        let text = empty_doc().to_canonical_string(false);
        assert!(text.contains("\"entries\": []"));
        assert!(!text.contains("timings"));
        let back = ReportDocument::parse(&text).unwrap();
        assert!(back.entries.is_empty());
        assert!(back.timings.is_empty());
        assert!(empty_doc().to_canonical_string(true).contains("\"total\": 1.2346"));
    }

    #[test]
    fn rejects_foreign_schema() {
        let text = empty_doc().to_canonical_string(false).replace(SCHEMA, "other/v9");
        assert!(ReportDocument::parse(&text).is_err());
    }
}
