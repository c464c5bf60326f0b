use serde::{Deserialize, Serialize};

use super::ExecError;
use crate::geometry::{BoundingBox, ImageSide};

/// Proposals for one two-image example. Every [`BoxAttention`] indexes into this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub proposals: Vec<BoundingBox>,
}

impl Scene {
    pub fn new(id: impl Into<String>, proposals: Vec<BoundingBox>) -> Self {
        Self { id: id.into(), proposals }
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn image_of(&self, idx: usize) -> ImageSide {
        self.proposals[idx].image
    }

    /// Indices of the proposals in `side`.
    pub fn indices_in(&self, side: ImageSide) -> impl Iterator<Item = usize> + '_ {
        self.proposals.iter().enumerate().filter(move |(_, b)| b.image == side).map(|(i, _)| i)
    }
}

/// Per-proposal membership probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxAttention {
    probs: Vec<f64>,
}

impl BoxAttention {
    pub fn new(probs: Vec<f64>) -> Result<Self, ExecError> {
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(ExecError::OutOfRange { index: i, value: *p });
        }
        Ok(Self { probs })
    }

    pub fn zeros(len: usize) -> Self {
        Self { probs: vec![0.0; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self { probs: vec![1.0; len] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Compensated (Neumaier) sum, so e.g. twenty entries of 0.05 sum to exactly 1.
    pub fn sum(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &x in &self.probs {
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    pub fn check_len(&self, expected: usize) -> Result<(), ExecError> {
        if self.probs.len() == expected {
            Ok(())
        } else {
            Err(ExecError::LengthMismatch { expected, got: self.probs.len() })
        }
    }

    pub(crate) fn from_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }
}
