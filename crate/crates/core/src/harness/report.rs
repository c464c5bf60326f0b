//! Run metadata and plain-text report tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::faith::{FaithfulnessReport, ModuleScore, TextFaithfulnessReport};

use super::commands::PermTestOutput;

/// Echo of the command and every parameter that shaped a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).expect("parameters are plain data");
        self.parameters.insert(key.to_string(), v);
        self
    }
}

fn cells(s: Option<&ModuleScore>) -> String {
    match s {
        Some(s) => format!("{:>7.3}{:>7.3}{:>7.3}{:>6}", s.precision, s.recall, s.f1, s.n),
        None => format!("{:>7}{:>7}{:>7}{:>6}", "-", "-", "-", "-"),
    }
}

/// Precision, recall and F1 per module type, one column group per report.
pub fn render_visual(model: Option<&FaithfulnessReport>, upper_bound: Option<&FaithfulnessReport>) -> String {
    let systems: Vec<(&str, &FaithfulnessReport)> =
        [("model", model), ("upper bound", upper_bound)].into_iter().filter_map(|(n, r)| r.map(|r| (n, r))).collect();
    let mut out = String::new();
    let Some((_, first)) = systems.first() else { return out };
    let _ = writeln!(out, "scheme: {}  examples: {}", first.scheme, first.examples);
    let rows: Vec<&str> = systems
        .iter()
        .flat_map(|(_, r)| r.modules.keys().map(String::as_str))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0).max(7) + 2;
    let _ = write!(out, "{:width$}", "");
    for (name, _) in &systems {
        let _ = write!(out, "  {name:<27}");
    }
    out = out.trim_end().to_string();
    out.push('\n');
    let _ = write!(out, "{:width$}", "module");
    for _ in &systems {
        let _ = write!(out, "  {:>7}{:>7}{:>7}{:>6}", "P", "R", "F1", "n");
    }
    out.push('\n');
    let _ = write!(out, "{:width$}", "overall");
    for (_, r) in &systems {
        let _ = write!(out, "  {}", cells(Some(&r.overall)));
    }
    out.push('\n');
    for m in rows {
        let _ = write!(out, "{m:width$}");
        for (_, r) in &systems {
            let _ = write!(out, "  {}", cells(r.modules.get(m)));
        }
        out.push('\n');
    }
    out
}

/// Mean span cross-entropy per module type (lower is better).
pub fn render_text(report: &TextFaithfulnessReport) -> String {
    let width = report.modules.keys().map(String::len).max().unwrap_or(0).max(7) + 2;
    let mut out = format!("examples: {}\n{:width$}  {:>10}{:>6}\n", report.examples, "module", "xent", "n");
    let _ = writeln!(out, "{:width$}  {:>10.4}{:>6}", "overall", report.overall.mean, report.overall.n);
    for (m, s) in &report.modules {
        let _ = writeln!(out, "{m:width$}  {:>10.4}{:>6}", s.mean, s.n);
    }
    out
}

pub fn render_perm(result: &PermTestOutput) -> String {
    let scope = result.module.as_deref().unwrap_or("overall");
    format!(
        "{} {} over {} paired examples\nA = {:.4}  B = {:.4}  delta = {:+.4}\np = {} ({} of {} trials, seed {})\n",
        scope,
        result.metric,
        result.examples,
        result.score_a,
        result.score_b,
        result.outcome.delta,
        result.outcome.p_value,
        result.outcome.exceed,
        result.outcome.trials,
        result.outcome.seed
    )
}
