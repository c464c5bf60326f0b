//! Span cross-entropy for token-distribution module outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FaithError;
use crate::dsl::NodeId;

/// Lower clamp on a span's probability mass before taking its log.
pub const SPAN_MASS_EPSILON: f64 = 1e-12;

/// A module instance's token distribution and its gold spans (inclusive token indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextAnnotation {
    pub example: String,
    pub node: NodeId,
    pub module: String,
    pub token_dist: Vec<f64>,
    pub spans: Vec<(usize, usize)>,
}

/// `−Σ_spans log max(mass(span), ε)`.
pub fn text_instance_score(token_dist: &[f64], spans: &[(usize, usize)]) -> Result<f64, FaithError> {
    if spans.is_empty() {
        return Err(FaithError::NoSpans);
    }
    if let Some((i, v)) = token_dist.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(FaithError::BadTokenDist { index: i, value: *v });
    }
    let mut total = 0.0;
    for &(start, end) in spans {
        if start > end || end >= token_dist.len() {
            return Err(FaithError::BadSpan { start, end, len: token_dist.len() });
        }
        let mass: f64 = token_dist[start..=end].iter().sum();
        total -= mass.max(SPAN_MASS_EPSILON).ln();
    }
    // a span holding all the mass can round to 1 + ulp
    Ok(total.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextExampleScore {
    pub id: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextFaithfulnessReport {
    pub examples: usize,
    /// Unweighted mean over all instances of all module types.
    pub overall: TextScore,
    pub modules: BTreeMap<String, TextScore>,
    pub per_example: Vec<TextExampleScore>,
}

/// One scored text instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextInstanceScore {
    pub example: String,
    pub node: NodeId,
    pub module: String,
    pub score: f64,
}

pub fn score_text_annotations(annotations: &[TextAnnotation]) -> Result<Vec<TextInstanceScore>, FaithError> {
    annotations
        .iter()
        .map(|a| {
            Ok(TextInstanceScore {
                example: a.example.clone(),
                node: a.node,
                module: a.module.clone(),
                score: text_instance_score(&a.token_dist, &a.spans).map_err(|e| FaithError::Instance {
                    example: a.example.clone(),
                    node: a.node,
                    source: Box::new(e),
                })?,
            })
        })
        .collect()
}

fn mean(xs: &[f64]) -> TextScore {
    TextScore { mean: xs.iter().sum::<f64>() / xs.len() as f64, n: xs.len() }
}

pub fn text_aggregate(instances: &[TextInstanceScore]) -> Result<TextFaithfulnessReport, FaithError> {
    if instances.is_empty() {
        return Err(FaithError::Empty);
    }
    let mut modules: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut examples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for inst in instances {
        modules.entry(inst.module.clone()).or_default().push(inst.score);
        examples.entry(inst.example.clone()).or_default().push(inst.score);
    }
    let all: Vec<f64> = instances.iter().map(|i| i.score).collect();
    Ok(TextFaithfulnessReport {
        examples: examples.len(),
        overall: mean(&all),
        modules: modules.iter().map(|(m, v)| (m.clone(), mean(v))).collect(),
        per_example: examples.iter().map(|(id, v)| TextExampleScore { id: id.clone(), mean: mean(v).mean }).collect(),
    })
}
