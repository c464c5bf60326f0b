//! Box-level alignment and matched-box counts for one module instance.

use serde::{Deserialize, Serialize};

use super::FaithError;
use crate::dsl::NodeId;
use crate::exec::{BoxAttention, ExecutionTrace, Scene};
use crate::geometry::{iou, BoundingBox, ImageSide};

/// How predicted boxes whose best IOU falls in `[neg_T, T]` enter the precision denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Left out of the precision denominator entirely.
    #[default]
    Exclude,
    /// Still counted as unmatched predictions.
    Penalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualConfig {
    pub iou_threshold: f64,
    pub prob_threshold: f64,
    pub neg_iou_threshold: Option<f64>,
    pub neg_mode: NegativeMode,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, prob_threshold: 0.5, neg_iou_threshold: None, neg_mode: NegativeMode::Exclude }
    }
}

/// Gold boxes for one module instance. `image` is set for instances inside a
/// macro, where each image is annotated (and scored) separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualAnnotation {
    pub example: String,
    pub node: NodeId,
    pub module: String,
    pub image: Option<ImageSide>,
    pub boxes: Vec<BoundingBox>,
}

/// `(annotated index, proposal index)` pairs whose IOU strictly exceeds `threshold`.
/// Many-to-many: one annotated box may align with several proposals and vice versa.
pub fn align(annotated: &[BoundingBox], proposed: &[BoundingBox], threshold: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (a, ab) in annotated.iter().enumerate() {
        for (p, pb) in proposed.iter().enumerate() {
            if iou(ab, pb) > threshold {
                edges.push((a, p));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matched_proposed: usize,
    pub predicted: usize,
    pub matched_annotated: usize,
    pub annotated: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            matched_proposed: self.matched_proposed + o.matched_proposed,
            predicted: self.predicted + o.predicted,
            matched_annotated: self.matched_annotated + o.matched_annotated,
            annotated: self.annotated + o.annotated,
        }
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// P = matched proposed / predicted, R = matched annotated / annotated.
    /// An empty denominator scores 1 (nothing predicted means no false positives).
    pub fn from_counts(c: &MatchCounts) -> Self {
        let precision = if c.predicted == 0 { 1.0 } else { c.matched_proposed as f64 / c.predicted as f64 };
        let recall = if c.annotated == 0 { 1.0 } else { c.matched_annotated as f64 / c.annotated as f64 };
        Self { precision, recall, f1: harmonic(precision, recall) }
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Count matched boxes for one instance. Only proposals in `image` take part
/// when the annotation is image-specific.
pub fn instance_counts(
    annotation: &VisualAnnotation,
    attention: &BoxAttention,
    scene: &Scene,
    config: &VisualConfig,
) -> Result<MatchCounts, FaithError> {
    if attention.len() != scene.len() {
        return Err(FaithError::Misaligned { example: annotation.example.clone(), expected: scene.len(), got: attention.len() });
    }
    let in_scope = |i: usize| annotation.image.is_none_or(|side| scene.image_of(i) == side);
    let selected = |i: usize| attention.probs()[i] > config.prob_threshold;

    let mut counts = MatchCounts { annotated: annotation.boxes.len(), ..MatchCounts::default() };
    for (i, proposal) in scene.proposals.iter().enumerate() {
        if !in_scope(i) || !selected(i) {
            continue;
        }
        let best = annotation.boxes.iter().map(|a| iou(a, proposal)).fold(0.0, f64::max);
        if best > config.iou_threshold {
            counts.predicted += 1;
            counts.matched_proposed += 1;
        } else {
            match config.neg_iou_threshold {
                Some(neg) if best >= neg && config.neg_mode == NegativeMode::Exclude => {}
                _ => counts.predicted += 1,
            }
        }
    }
    counts.matched_annotated = annotation
        .boxes
        .iter()
        .filter(|a| (0..scene.len()).any(|i| in_scope(i) && selected(i) && iou(a, &scene.proposals[i]) > config.iou_threshold))
        .count();
    Ok(counts)
}

/// Pool the counts of every instance of one module type in one example.
pub fn example_module_score(instances: &[MatchCounts]) -> Prf {
    Prf::from_counts(&instances.iter().copied().sum())
}

/// One scored module instance, the unit every aggregation scheme starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCounts {
    pub example: String,
    pub node: NodeId,
    pub module: String,
    pub image: Option<ImageSide>,
    pub counts: MatchCounts,
}

/// Score every annotation of one example against the module outputs in its trace.
pub fn instances_from_trace(
    annotations: &[VisualAnnotation],
    trace: &ExecutionTrace,
    scene: &Scene,
    config: &VisualConfig,
) -> Result<Vec<InstanceCounts>, FaithError> {
    annotations
        .iter()
        .map(|a| {
            let output = trace.get(a.node).ok_or_else(|| FaithError::UnknownNode { example: a.example.clone(), node: a.node })?;
            let attention = output
                .attention_for(a.image, scene)
                .ok_or_else(|| FaithError::NotAttention { example: a.example.clone(), node: a.node })?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use ImageSide::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2, Left).unwrap()
    }

    fn ann(boxes: Vec<BoundingBox>) -> VisualAnnotation {
        VisualAnnotation { example: "e".into(), node: NodeId(0), module: "find".into(), image: None, boxes }
    }

    /// One annotated box [0,100]² and five proposals that each shave a few pixels off it.
    fn five_aligned() -> (VisualAnnotation, Scene) {
        let gold = bb(0.0, 0.0, 100.0, 100.0);
        let proposals = (0..5).map(|i| bb(i as f64 * 2.0, 0.0, 100.0, 100.0 - i as f64)).collect();
        (ann(vec![gold]), Scene::new("e", proposals))
    }

    #[test]
    fn alignment_is_many_to_many_and_strict() {
        let (a, scene) = five_aligned();
        assert_eq!(align(&a.boxes, &scene.proposals, 0.5).len(), 5);
        let g = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(align(&[g], &[g], 0.5), vec![(0, 0)]);
        // [0,2]x[0,2] vs [0,1]x[0,2]: IOU exactly 0.5
        assert!(align(&[g], &[bb(0.0, 0.0, 1.0, 2.0)], 0.5).is_empty());
    }

    #[test]
    fn one_selected_of_five_aligned_proposals() {
        let (a, scene) = five_aligned();
        let att = BoxAttention::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let c = instance_counts(&a, &att, &scene, &VisualConfig::default()).unwrap();
        assert_eq!(c, MatchCounts { matched_proposed: 1, predicted: 1, matched_annotated: 1, annotated: 1 });
        let all = BoxAttention::new(vec![0.9; 5]).unwrap();
        let c = instance_counts(&a, &all, &scene, &VisualConfig::default()).unwrap();
        // separate numerators: 5 matched proposals, 1 matched annotation
        assert_eq!(c, MatchCounts { matched_proposed: 5, predicted: 5, matched_annotated: 1, annotated: 1 });
        assert_eq!(Prf::from_counts(&c).f1, 1.0);
    }

    #[test]
    fn unaligned_selection() {
        let a = ann(vec![bb(0.0, 0.0, 10.0, 10.0)]);
        let scene = Scene::new("e", vec![bb(50.0, 50.0, 60.0, 60.0)]);
        let c = instance_counts(&a, &BoxAttention::new(vec![0.9]).unwrap(), &scene, &VisualConfig::default()).unwrap();
        assert_eq!(c, MatchCounts { matched_proposed: 0, predicted: 1, matched_annotated: 0, annotated: 1 });
    }

    #[test]
    fn half_recall() {
        let a = ann(vec![bb(0.0, 0.0, 10.0, 10.0), bb(50.0, 50.0, 60.0, 60.0)]);
        let scene = Scene::new("e", vec![bb(0.0, 0.0, 10.0, 9.0), bb(200.0, 0.0, 210.0, 10.0)]);
        let att = BoxAttention::new(vec![1.0, 0.0]).unwrap();
        let p = Prf::from_counts(&instance_counts(&a, &att, &scene, &VisualConfig::default()).unwrap());
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
    }

    #[test]
    fn probability_threshold_is_strict() {
        let a = ann(vec![bb(0.0, 0.0, 10.0, 10.0)]);
        let scene = Scene::new("e", vec![bb(0.0, 0.0, 10.0, 10.0)]);
        let c = instance_counts(&a, &BoxAttention::new(vec![0.5]).unwrap(), &scene, &VisualConfig::default()).unwrap();
        assert_eq!(c.predicted, 0);
    }

    #[test]
    fn negative_threshold_variant() {
        let a = ann(vec![bb(0.0, 0.0, 10.0, 10.0)]);
        // near miss (IOU 0.25), far miss (IOU 0), hit
        let scene =
            Scene::new("e", vec![bb(5.0, 0.0, 15.0, 10.0), bb(0.0, 0.0, 2.5, 10.0), bb(80.0, 80.0, 90.0, 90.0), bb(0.0, 0.0, 10.0, 10.0)]);
        let att = BoxAttention::new(vec![0.0, 0.9, 0.9, 0.9]).unwrap();
        let base = instance_counts(&a, &att, &scene, &VisualConfig::default()).unwrap();
        assert_eq!((base.matched_proposed, base.predicted), (1, 3));
        let neg = VisualConfig { neg_iou_threshold: Some(1e-8), ..VisualConfig::default() };
        let c = instance_counts(&a, &att, &scene, &neg).unwrap();
        assert_eq!((c.matched_proposed, c.predicted, c.matched_annotated), (1, 2, 1));
        let pen = VisualConfig { neg_mode: NegativeMode::Penalize, ..neg };
        assert_eq!(instance_counts(&a, &att, &scene, &pen).unwrap(), base);
    }

    #[test]
    fn image_scoped_annotation() {
        let mut a = ann(vec![bb(0.0, 0.0, 10.0, 10.0)]);
        a.image = Some(Left);
        let right = BoundingBox::new(0.0, 0.0, 10.0, 10.0, Right).unwrap();
        let scene = Scene::new("e", vec![bb(0.0, 0.0, 10.0, 10.0), right]);
        let att = BoxAttention::new(vec![1.0, 1.0]).unwrap();
        let c = instance_counts(&a, &att, &scene, &VisualConfig::default()).unwrap();
        assert_eq!(c, MatchCounts { matched_proposed: 1, predicted: 1, matched_annotated: 1, annotated: 1 });
        a.image = None;
        assert_eq!(instance_counts(&a, &att, &scene, &VisualConfig::default()).unwrap().predicted, 2);
    }

    #[test]
    fn pooled_example_scores() {
        let c = |mp, pr, ma, an| MatchCounts { matched_proposed: mp, predicted: pr, matched_annotated: ma, annotated: an };
        assert_eq!(example_module_score(&[c(1, 1, 1, 1)]), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(example_module_score(&[c(0, 1, 0, 1)]), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        let p = example_module_score(&[c(1, 1, 1, 2), c(1, 2, 1, 1)]);
        for v in [p.precision, p.recall, p.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(example_module_score(&[c(0, 0, 0, 0)]), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(example_module_score(&[c(0, 0, 0, 2)]).f1, 0.0);
    }

    #[test]
    fn rejects_misaligned_attention() {
        let (a, scene) = five_aligned();
        let err = instance_counts(&a, &BoxAttention::zeros(2), &scene, &VisualConfig::default()).unwrap_err();
        assert!(matches!(err, FaithError::Misaligned { expected: 5, got: 2, .. }));
    }
}
