use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BoxAttention, Scene};
use crate::dsl::{NodeId, UtteranceAttention};
use crate::geometry::ImageSide;
use crate::prob::NumberValue;

/// Modules whose per-proposal factor comes from a grounding provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnedKind {
    Find,
    Filter,
    WithRelation,
    Project,
}

impl LearnedKind {
    pub fn from_module(name: &str) -> Option<Self> {
        Some(match name {
            "find" => Self::Find,
            "filter" => Self::Filter,
            "with-relation" => Self::WithRelation,
            "project" | "relocate" => Self::Project,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Find => "find",
            Self::Filter => "filter",
            Self::WithRelation => "with-relation",
            Self::Project => "project",
        }
    }
}

/// What the executor asks of a provider for one learned node.
pub struct GroundingRequest<'a> {
    pub node: NodeId,
    pub kind: LearnedKind,
    pub utterance: Option<&'a UtteranceAttention>,
    /// Input attentions in argument order (empty for `find`).
    pub inputs: &'a [&'a BoxAttention],
    pub scene: &'a Scene,
    /// Set while a macro runs its sub-program on one image; the executor zeroes
    /// the other image's entries of the module output.
    pub image: Option<ImageSide>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("no grounding for node {node}")]
    Missing { node: NodeId },
    #[error("provider does not supply counts")]
    NoCounts,
    #[error("{0}")]
    Other(String),
}

/// Supplies the learned factors of `find`, `filter`, `with-relation` and `project`.
///
/// `scores` returns one value in `[0, 1]` per scene proposal:
///
/// * `find`: the output attention itself,
/// * `filter`: the factor multiplied into the input attention,
/// * `with-relation`: the relation factor multiplied into `max(p2) * p1`,
/// * `project`: the located-target factor (the `find(q)` term times the relation
///   term) scaled by `max(p)`.
///
/// Providers must be deterministic for fixed inputs.
pub trait GroundingProvider {
    fn scores(&self, request: &GroundingRequest<'_>) -> Result<Vec<f64>, ProviderError>;

    /// Count for the `provider` count strategy, standing in for learned counters.
    fn count(
        &self,
        _node: NodeId,
        _attention: &BoxAttention,
        _scene: &Scene,
        _image: Option<ImageSide>,
    ) -> Result<NumberValue, ProviderError> {
        Err(ProviderError::NoCounts)
    }
}

impl<P: GroundingProvider + ?Sized> GroundingProvider for &P {
    fn scores(&self, request: &GroundingRequest<'_>) -> Result<Vec<f64>, ProviderError> {
        (**self).scores(request)
    }

    fn count(&self, node: NodeId, attention: &BoxAttention, scene: &Scene, image: Option<ImageSide>) -> Result<NumberValue, ProviderError> {
        (**self).count(node, attention, scene, image)
    }
}
