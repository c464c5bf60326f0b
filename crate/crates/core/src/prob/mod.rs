//! Closed-form probabilistic values used by the executor.
//!
//! Booleans are probabilities, numbers are Normal distributions that are
//! discretized onto `{0, ..., K}` whenever they are compared, and text-domain
//! numbers are finite distributions over values mentioned in a passage.

mod number;
mod value_dist;

pub use number::{
    compare, discretize, gaussian_arith, make_number, normal_cdf, ArithOp, CategoricalCount, CompareKind, NumberValue, DEFAULT_MAX_COUNT,
};
pub use value_dist::{value_dist_arith, DistOp, ValueDist};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbError {
    #[error("probability {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("variance {0} is negative or not finite")]
    BadVariance(f64),
    #[error("mean {0} is not finite")]
    BadMean(f64),
    #[error("division needs nonzero operand means (numerator {numerator}, denominator {denominator})")]
    DegenerateOperand { numerator: f64, denominator: f64 },
    #[error("maximum count must be at least 1")]
    BadMaxCount,
    #[error("value distribution: {0}")]
    BadDist(String),
}

/// Probability that a Boolean denotation is true.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TruthProb(f64);

impl TruthProb {
    pub const TRUE: TruthProb = TruthProb(1.0);
    pub const FALSE: TruthProb = TruthProb(0.0);

    pub fn new(value: f64) -> Result<Self, ProbError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ProbError::OutOfRange(value))
        }
    }

    /// Clamp into [0, 1]; used where rounding can push a sum of probabilities past 1.
    pub(crate) fn clamped(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_true(self) -> bool {
        self.0 > 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoolOp {
    And,
    Or,
}

pub fn bool_combine(op: BoolOp, a: TruthProb, b: TruthProb) -> TruthProb {
    let (a, b) = (a.0, b.0);
    TruthProb::clamped(match op {
        BoolOp::And => a * b,
        BoolOp::Or => a + b - a * b,
    })
}
