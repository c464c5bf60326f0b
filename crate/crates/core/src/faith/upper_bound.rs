//! Oracle predictor that selects exactly the proposals aligned with some gold box.

use std::collections::HashMap;

use super::aggregate::{aggregate, AggregationScheme, FaithfulnessReport};
use super::visual::{instance_counts, InstanceCounts, VisualAnnotation, VisualConfig};
use super::FaithError;
use crate::exec::{BoxAttention, Scene};
use crate::geometry::iou;

/// Attention with 1.0 on every in-scope proposal aligned (IOU > T) with an
/// annotated box, 0 elsewhere.
pub fn oracle_attention(annotation: &VisualAnnotation, scene: &Scene, iou_threshold: f64) -> BoxAttention {
    let probs = scene
        .proposals
        .iter()
        .map(|p| {
            let in_scope = annotation.image.is_none_or(|side| p.image == side);
            let aligned = annotation.boxes.iter().any(|a| iou(a, p) > iou_threshold);
            if in_scope && aligned {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    BoxAttention::new(probs).expect("0/1 entries")
}

/// Counts the oracle attains on each annotation. The negative threshold is
/// irrelevant here (every selected proposal is aligned), so it is ignored.
pub fn upper_bound_instances(
    annotations: &[VisualAnnotation],
    scenes: &HashMap<String, Scene>,
    config: &VisualConfig,
) -> Result<Vec<InstanceCounts>, FaithError> {
    annotations
        .iter()
        .map(|a| {
            let scene = scenes.get(&a.example).ok_or_else(|| FaithError::UnknownExample(a.example.clone()))?;
            let attention = oracle_attention(a, scene, config.iou_threshold);
            Ok(InstanceCounts {
                example: a.example.clone(),
                node: a.node,
                module: a.module.clone(),
                image: a.image,
                counts: instance_counts(a, &attention, scene, config)?,
            })
        })
        .collect()
}

pub fn upper_bound(
    annotations: &[VisualAnnotation],
    scenes: &HashMap<String, Scene>,
    config: &VisualConfig,
    scheme: AggregationScheme,
) -> Result<FaithfulnessReport, FaithError> {
    aggregate(&upper_bound_instances(annotations, scenes, config)?, scheme)
}
