//! Grounding provider that answers from the gold world, optionally mixed with noise.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::world::GoldWorld;
use super::SynthError;
use crate::dsl::NodeId;
use crate::exec::{BoxAttention, GroundingProvider, GroundingRequest, LearnedKind, ProviderError, Scene};
use crate::faith::VisualConfig;
use crate::geometry::ImageSide;
use crate::prob::NumberValue;

/// Scores proposals by the gold facts about the object they cover.
///
/// A proposal covers (is owned by) the gold object it overlaps with IOU above
/// the alignment threshold; unowned proposals score 0 everywhere. With noise
/// ε each score becomes `(1 − ε)·s + ε·u`, where `u` is uniform and fixed per
/// `(seed, node, proposal)`.
pub struct OracleProvider<'w> {
    world: &'w GoldWorld,
    owners: Vec<Option<usize>>,
    noise: f64,
    seed: u64,
    prob_threshold: f64,
}

impl<'w> OracleProvider<'w> {
    pub fn new(world: &'w GoldWorld, scene: &Scene, noise: f64, seed: u64) -> Result<Self, SynthError> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(SynthError::BadNoise(noise));
        }
        let cfg = VisualConfig::default();
        let owners = scene.proposals.iter().map(|p| world.owner(p, cfg.iou_threshold)).collect();
        Ok(Self { world, owners, noise, seed, prob_threshold: cfg.prob_threshold })
    }

    pub fn owners(&self) -> &[Option<usize>] {
        &self.owners
    }

    fn uniform(&self, node: NodeId, proposal: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(node.0 as u64);
        rng.set_word_pos(2 * proposal as u128);
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Owners of the proposals an attention selects.
    fn selected_owners(&self, attention: &BoxAttention) -> BTreeSet<usize> {
        attention.probs().iter().zip(&self.owners).filter(|(p, _)| **p > self.prob_threshold).filter_map(|(_, o)| *o).collect()
    }

    fn crisp(&self, request: &GroundingRequest<'_>) -> Vec<f64> {
        let term = request.utterance.map_or("", |u| u.text.as_str());
        let objects = &self.world.objects;
        let holds = |owner: usize| -> bool {
            let o = &objects[owner];
            match request.kind {
                LearnedKind::Find => o.category == term,
                LearnedKind::Filter => o.attributes.contains(term),
                LearnedKind::WithRelation => {
                    let targets = self.selected_owners(request.inputs[1]);
                    targets.iter().any(|t| o.relates_to(term, *t))
                }
                LearnedKind::Project => {
                    let subjects = self.selected_owners(request.inputs[0]);
                    subjects.iter().any(|s| objects[*s].relates_to(term, owner))
                }
            }
        };
        self.owners.iter().map(|o| if o.is_some_and(holds) { 1.0 } else { 0.0 }).collect()
    }
}

impl GroundingProvider for OracleProvider<'_> {
    fn scores(&self, request: &GroundingRequest<'_>) -> Result<Vec<f64>, ProviderError> {
        if request.scene.len() != self.owners.len() {
            return Err(ProviderError::Other(format!(
                "oracle built for {} proposals, scene has {}",
                self.owners.len(),
                request.scene.len()
            )));
        }
        let crisp = self.crisp(request);
        if self.noise == 0.0 {
            return Ok(crisp);
        }
        Ok(crisp
            .iter()
            .enumerate()
            .map(|(i, s)| ((1.0 - self.noise) * s + self.noise * self.uniform(request.node, i)).clamp(0.0, 1.0))
            .collect())
    }

    /// Number of distinct gold objects among the selected proposals of `image`.
    fn count(&self, _: NodeId, attention: &BoxAttention, scene: &Scene, image: Option<ImageSide>) -> Result<NumberValue, ProviderError> {
        let n = attention
            .probs()
            .iter()
            .enumerate()
            .filter(|(i, p)| **p > self.prob_threshold && image.is_none_or(|s| scene.image_of(*i) == s))
            .filter_map(|(i, _)| self.owners[i])
            .collect::<BTreeSet<_>>()
            .len();
        Ok(NumberValue::point(n as f64))
    }
}
