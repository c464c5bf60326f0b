use serde::{Deserialize, Serialize};

use super::{ProbError, TruthProb};

/// Largest count value supported by discretization unless configured otherwise.
pub const DEFAULT_MAX_COUNT: usize = 72;

/// A Normal-distributed number. `var == 0` denotes an exact point value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumberValue {
    pub mean: f64,
    pub var: f64,
}

pub fn make_number(mean: f64, var: f64) -> Result<NumberValue, ProbError> {
    NumberValue::new(mean, var)
}

impl NumberValue {
    pub fn new(mean: f64, var: f64) -> Result<Self, ProbError> {
        if !mean.is_finite() {
            return Err(ProbError::BadMean(mean));
        }
        if !(var.is_finite() && var >= 0.0) {
            return Err(ProbError::BadVariance(var));
        }
        Ok(Self { mean, var })
    }

    pub fn point(value: f64) -> Self {
        Self { mean: value, var: 0.0 }
    }

    pub fn is_point(&self) -> bool {
        self.var == 0.0
    }
}

/// Standard Normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Distribution over the integers `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalCount {
    probs: Vec<f64>,
}

impl CategoricalCount {
    pub fn max_count(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Index of the most probable count (lowest index on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (k, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// Discretize onto `{0..K}`: interior bins take `Φ(k+0.5) - Φ(k-0.5)`, bin 0 takes
/// the whole lower tail `Φ(0.5)` and bin K the upper tail `1 - Φ(K-0.5)`.
///
/// Bins are formed as differences of one shared CDF sequence, so the result
/// telescopes to exactly 1 up to rounding. Point values land on
/// `clamp(round(mean), 0, K)`.
pub fn discretize(n: &NumberValue, max_count: usize) -> Result<CategoricalCount, ProbError> {
    if max_count < 1 {
        return Err(ProbError::BadMaxCount);
    }
    let mut probs = vec![0.0; max_count + 1];
    if n.is_point() {
        let k = n.mean.round().clamp(0.0, max_count as f64) as usize;
        probs[k] = 1.0;
        return Ok(CategoricalCount { probs });
    }
    let sd = n.var.sqrt();
    let mut prev = 0.0;
    for (k, slot) in probs.iter_mut().enumerate().take(max_count) {
        let c = normal_cdf((k as f64 + 0.5 - n.mean) / sd);
        *slot = (c - prev).max(0.0);
        prev = c;
    }
    probs[max_count] = (1.0 - prev).max(0.0);
    Ok(CategoricalCount { probs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareKind {
    Equal,
    Less,
    Greater,
    LessEqual,
    GreaterEqual,
}

impl CompareKind {
    pub fn from_module(name: &str) -> Option<Self> {
        Some(match name {
            "equal" => Self::Equal,
            "less" => Self::Less,
            "greater" => Self::Greater,
            "less-equal" => Self::LessEqual,
            "greater-equal" => Self::GreaterEqual,
            _ => return None,
        })
    }

    /// The same relation on exact integers.
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Self::Equal => a == b,
            Self::Less => a < b,
            Self::Greater => a > b,
            Self::LessEqual => a <= b,
            Self::GreaterEqual => a >= b,
        }
    }
}

pub(crate) struct OrderProbs {
    pub less: f64,
    pub equal: f64,
    pub greater: f64,
}

pub(crate) fn order_probs(a: &[f64], b: &[f64]) -> OrderProbs {
    debug_assert_eq!(a.len(), b.len());
    // below[k] = Pr[b < k], above[k] = Pr[b > k]
    let mut below = vec![0.0; b.len()];
    for k in 1..b.len() {
        below[k] = below[k - 1] + b[k - 1];
    }
    let mut above = vec![0.0; b.len()];
    for k in (0..b.len().saturating_sub(1)).rev() {
        above[k] = above[k + 1] + b[k + 1];
    }
    let (mut less, mut equal, mut greater) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        equal += a[k] * b[k];
        less += a[k] * above[k];
        greater += a[k] * below[k];
    }
    OrderProbs { less, equal, greater }
}

/// Probability that `kind` holds between two independent numbers, computed over
/// their discretizations onto `{0..K}`.
pub fn compare(kind: CompareKind, a: &NumberValue, b: &NumberValue, max_count: usize) -> Result<TruthProb, ProbError> {
    let da = discretize(a, max_count)?;
    let db = discretize(b, max_count)?;
    let o = order_probs(da.probs(), db.probs());
    Ok(TruthProb::clamped(match kind {
        CompareKind::Equal => o.equal,
        CompareKind::Less => o.less,
        CompareKind::Greater => o.greater,
        CompareKind::LessEqual => o.less + o.equal,
        CompareKind::GreaterEqual => o.greater + o.equal,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArithOp {
    Sum,
    Difference,
    Division,
}

/// Arithmetic on independent Normals. Division uses the second-order ratio
/// approximation, which becomes unstable as the denominator mean approaches 0.
pub fn gaussian_arith(op: ArithOp, a: &NumberValue, b: &NumberValue) -> Result<NumberValue, ProbError> {
    match op {
        ArithOp::Sum => NumberValue::new(a.mean + b.mean, a.var + b.var),
        ArithOp::Difference => NumberValue::new(a.mean - b.mean, a.var + b.var),
        ArithOp::Division => {
            if a.mean == 0.0 || b.mean == 0.0 {
                return Err(ProbError::DegenerateOperand { numerator: a.mean, denominator: b.mean });
            }
            let mean = a.mean / b.mean + b.var * a.mean / b.mean.powi(3);
            let ratio_sq = a.mean.powi(2) / b.mean.powi(2);
            let var = ratio_sq * (a.var / a.mean.powi(2) + b.var / b.mean.powi(2));
            NumberValue::new(mean, var)
        }
    }
}
