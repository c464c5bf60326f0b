use serde::{Deserialize, Serialize};

use super::number::{order_probs, CompareKind};
use super::{ProbError, TruthProb};

/// Finite distribution over real values, e.g. the numbers mentioned in a passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDist {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl ValueDist {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, ProbError> {
        if support.len() != probs.len() {
            return Err(ProbError::BadDist(format!("{} values but {} probabilities", support.len(), probs.len())));
        }
        if support.is_empty() {
            return Err(ProbError::BadDist("empty support".into()));
        }
        if support.iter().any(|v| !v.is_finite()) {
            return Err(ProbError::BadDist("support values must be finite".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(ProbError::BadDist("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(ProbError::BadDist(format!("probabilities sum to {total}")));
        }
        let mut sorted = support.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ProbError::BadDist("support values must be distinct".into()));
        }
        Ok(Self { support, probs })
    }

    pub fn point(value: f64) -> Self {
        Self { support: vec![value], probs: vec![1.0] }
    }

    pub fn uniform(values: &[f64]) -> Result<Self, ProbError> {
        let p = 1.0 / values.len() as f64;
        Self::new(values.to_vec(), vec![p; values.len()])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability assigned to exactly `value` (0 when absent).
    pub fn prob_of(&self, value: f64) -> f64 {
        self.support.iter().zip(&self.probs).filter(|(v, _)| **v == value).map(|(_, p)| *p).sum()
    }

    pub fn expectation(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// Probability that `kind` holds between independent draws from `self` and `other`.
    pub fn compare(&self, kind: CompareKind, other: &ValueDist) -> TruthProb {
        // Project both onto the merged sorted support so the shared kernel applies.
        let mut grid: Vec<f64> = self.support.iter().chain(&other.support).copied().collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let project = |d: &ValueDist| {
            let mut out = vec![0.0; grid.len()];
            for (v, p) in d.support.iter().zip(&d.probs) {
                let i = grid.binary_search_by(|g| g.total_cmp(v)).expect("value on grid");
                out[i] += p;
            }
            out
        };
        let o = order_probs(&project(self), &project(other));
        TruthProb::clamped(match kind {
            CompareKind::Equal => o.equal,
            CompareKind::Less => o.less,
            CompareKind::Greater => o.greater,
            CompareKind::LessEqual => o.less + o.equal,
            CompareKind::GreaterEqual => o.greater + o.equal,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistOp {
    Addition,
    Subtraction,
}

/// Distribution of `X + Y` (or `X - Y`) for independent `X`, `Y`; equal
/// outcomes are merged and the support is returned in ascending order.
pub fn value_dist_arith(op: DistOp, x: &ValueDist, y: &ValueDist) -> ValueDist {
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(x.support.len() * y.support.len());
    for (xv, xp) in x.support.iter().zip(&x.probs) {
        for (yv, yp) in y.support.iter().zip(&y.probs) {
            let z = match op {
                DistOp::Addition => xv + yv,
                DistOp::Subtraction => xv - yv,
            };
            pairs.push((z, xp * yp));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut support: Vec<f64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for (z, p) in pairs {
        // -0.0 and 0.0 are the same outcome
        if support.last().is_some_and(|last| *last == z) {
            *probs.last_mut().unwrap() += p;
        } else {
            support.push(if z == 0.0 { 0.0 } else { z });
            probs.push(p);
        }
    }
    ValueDist { support, probs }
}
