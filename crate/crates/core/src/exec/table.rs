//! Precomputed groundings: a lookup-table provider and a recorder that captures
//! another provider's answers.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BoxAttention, GroundingProvider, GroundingRequest, ProviderError, Scene};
use crate::dsl::NodeId;
use crate::geometry::ImageSide;
use crate::prob::NumberValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingPayload {
    Scores(Vec<f64>),
    Number(NumberValue),
}

/// One provider answer. `image` is set for answers given while a macro ran
/// its sub-program on that image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub node: NodeId,
    pub image: Option<ImageSide>,
    pub payload: GroundingPayload,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("duplicate {kind} grounding for node {node}{}", image.map(|s| format!(" ({s} image)")).unwrap_or_default())]
pub struct DuplicateGrounding {
    pub node: NodeId,
    pub image: Option<ImageSide>,
    pub kind: &'static str,
}

type Key = (NodeId, Option<ImageSide>);

/// Answers from a table. An image-specific entry takes precedence over an
/// image-agnostic one for the same node.
#[derive(Debug, Clone, Default)]
pub struct GroundingTable {
    scores: HashMap<Key, Vec<f64>>,
    counts: HashMap<Key, NumberValue>,
}

impl GroundingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_groundings(groundings: impl IntoIterator<Item = Grounding>) -> Result<Self, DuplicateGrounding> {
        let mut t = Self::new();
        for g in groundings {
            t.insert(g)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, g: Grounding) -> Result<(), DuplicateGrounding> {
        let key = (g.node, g.image);
        let dup = |kind| DuplicateGrounding { node: g.node, image: g.image, kind };
        match g.payload {
            GroundingPayload::Scores(s) => {
                if self.scores.insert(key, s).is_some() {
                    return Err(dup("scores"));
                }
            }
            GroundingPayload::Number(n) => {
                if self.counts.insert(key, n).is_some() {
                    return Err(dup("number"));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty() && self.counts.is_empty()
    }

    fn lookup<V>(map: &HashMap<Key, V>, node: NodeId, image: Option<ImageSide>) -> Option<&V> {
        image.and_then(|side| map.get(&(node, Some(side)))).or_else(|| map.get(&(node, None)))
    }
}

impl GroundingProvider for GroundingTable {
    fn scores(&self, request: &GroundingRequest<'_>) -> Result<Vec<f64>, ProviderError> {
        Self::lookup(&self.scores, request.node, request.image).cloned().ok_or(ProviderError::Missing { node: request.node })
    }

    fn count(&self, node: NodeId, _: &BoxAttention, _: &Scene, image: Option<ImageSide>) -> Result<NumberValue, ProviderError> {
        Self::lookup(&self.counts, node, image).copied().ok_or(ProviderError::Missing { node })
    }
}

/// Wraps a provider and keeps every answer it gives, in call order.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<Vec<Grounding>>,
}

impl<P: GroundingProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn into_groundings(self) -> Vec<Grounding> {
        self.log.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    fn push(&self, g: Grounding) {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(g);
    }
}

impl<P: GroundingProvider> GroundingProvider for RecordingProvider<P> {
    fn scores(&self, request: &GroundingRequest<'_>) -> Result<Vec<f64>, ProviderError> {
        let s = self.inner.scores(request)?;
        self.push(Grounding { node: request.node, image: request.image, payload: GroundingPayload::Scores(s.clone()) });
        Ok(s)
    }

    fn count(&self, node: NodeId, attention: &BoxAttention, scene: &Scene, image: Option<ImageSide>) -> Result<NumberValue, ProviderError> {
        let n = self.inner.count(node, attention, scene, image)?;
        self.push(Grounding { node, image, payload: GroundingPayload::Number(n) });
        Ok(n)
    }
}
