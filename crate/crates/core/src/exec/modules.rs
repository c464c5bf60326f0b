//! Closed-form box and count modules.

use super::{BoxAttention, ExecError, LearnedKind, Scene};
use crate::geometry::{iou, ImageSide};
use crate::prob::{compare, CompareKind, NumberValue, TruthProb};

fn check_scores(scores: &[f64], len: usize) -> Result<(), ExecError> {
    if scores.len() != len {
        return Err(ExecError::LengthMismatch { expected: len, got: scores.len() });
    }
    if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
        return Err(ExecError::OutOfRange { index: i, value: *s });
    }
    Ok(())
}

/// Combine a provider factor with the module's inputs:
/// `find = s`, `filter = p ⊙ s`, `with-relation = max(p2) · p1 ⊙ s`, `project = max(p) · s`.
pub fn apply_learned(kind: LearnedKind, inputs: &[&BoxAttention], scores: &[f64]) -> Result<BoxAttention, ExecError> {
    let expected_inputs = match kind {
        LearnedKind::Find => 0,
        LearnedKind::Filter | LearnedKind::Project => 1,
        LearnedKind::WithRelation => 2,
    };
    if inputs.len() != expected_inputs {
        return Err(ExecError::Arity { module: kind.name(), expected: expected_inputs, got: inputs.len() });
    }
    let len = inputs.first().map_or(scores.len(), |p| p.len());
    for p in inputs {
        p.check_len(len)?;
    }
    check_scores(scores, len)?;
    let out = match kind {
        LearnedKind::Find => scores.to_vec(),
        LearnedKind::Filter => inputs[0].probs().iter().zip(scores).map(|(p, s)| p * s).collect(),
        LearnedKind::WithRelation => {
            let scale = inputs[1].max();
            inputs[0].probs().iter().zip(scores).map(|(p, s)| scale * p * s).collect()
        }
        LearnedKind::Project => {
            let scale = inputs[0].max();
            scores.iter().map(|s| scale * s).collect()
        }
    };
    Ok(BoxAttention::from_unchecked(out))
}

pub fn intersect(a: &BoxAttention, b: &BoxAttention) -> Result<BoxAttention, ExecError> {
    b.check_len(a.len())?;
    Ok(BoxAttention::from_unchecked(a.probs().iter().zip(b.probs()).map(|(x, y)| x * y).collect()))
}

pub fn discard(a: &BoxAttention, b: &BoxAttention) -> Result<BoxAttention, ExecError> {
    b.check_len(a.len())?;
    Ok(BoxAttention::from_unchecked(a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).max(0.0)).collect()))
}

/// Zero every proposal outside `side`.
pub fn restrict_to_image(p: &BoxAttention, scene: &Scene, side: ImageSide) -> Result<BoxAttention, ExecError> {
    p.check_len(scene.len())?;
    Ok(BoxAttention::from_unchecked(p.probs().iter().zip(&scene.proposals).map(|(v, b)| if b.image == side { *v } else { 0.0 }).collect()))
}

/// Sum-count: `Normal(Σ p, σ²)`.
pub fn count_sum(p: &BoxAttention, sigma_sq: f64) -> Result<NumberValue, ExecError> {
    NumberValue::new(p.sum(), sigma_sq).map_err(ExecError::Config)
}

/// Cluster proposals by single-link IOU (`> cluster_iou`) and count each cluster once,
/// at the largest probability it contains.
pub fn count_overlap_aware(p: &BoxAttention, scene: &Scene, cluster_iou: f64, sigma_sq: f64) -> Result<NumberValue, ExecError> {
    p.check_len(scene.len())?;
    let n = scene.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if iou(&scene.proposals[i], &scene.proposals[j]) > cluster_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut best = vec![0.0f64; n];
    for (i, v) in p.probs().iter().enumerate() {
        let r = find(&mut parent, i);
        best[r] = best[r].max(*v);
    }
    NumberValue::new(BoxAttention::from_unchecked(best).sum(), sigma_sq).map_err(ExecError::Config)
}

/// `greater-equal(count, 1)` with the constant 1 as an exact point value.
pub fn exist_from_count(count: &NumberValue, max_count: usize) -> Result<TruthProb, ExecError> {
    compare(CompareKind::GreaterEqual, count, &NumberValue::point(1.0), max_count).map_err(ExecError::Config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn att(v: &[f64]) -> BoxAttention {
        BoxAttention::new(v.to_vec()).unwrap()
    }

    fn bb(x: f64, side: ImageSide) -> BoundingBox {
        BoundingBox::new(x, 0.0, x + 10.0, 10.0, side).unwrap()
    }

    #[test]
    fn learned_compositions() {
        let f = apply_learned(LearnedKind::Filter, &[&att(&[1.0, 0.5])], &[0.8, 0.8]).unwrap();
        assert_eq!(f.probs(), &[0.8, 0.4]);
        let w = apply_learned(LearnedKind::WithRelation, &[&att(&[1.0, 0.5]), &att(&[0.0, 0.0])], &[1.0, 1.0]).unwrap();
        assert_eq!(w.probs(), &[0.0, 0.0]);
        let w = apply_learned(LearnedKind::WithRelation, &[&att(&[1.0, 0.5]), &att(&[0.5, 0.2])], &[1.0, 0.5]).unwrap();
        assert_eq!(w.probs(), &[0.5, 0.125]);
        let s = [0.3, 0.7, 0.0];
        assert_eq!(apply_learned(LearnedKind::Find, &[], &s).unwrap().probs(), &s);
        let p = apply_learned(LearnedKind::Project, &[&att(&[0.5, 0.0, 0.25])], &s).unwrap();
        assert_eq!(p.probs(), &[0.15, 0.35, 0.0]);
    }

    #[test]
    fn learned_errors() {
        let e = apply_learned(LearnedKind::Filter, &[&att(&[1.0, 0.5])], &[0.8]).unwrap_err();
        assert!(matches!(e, ExecError::LengthMismatch { expected: 2, got: 1 }));
        let e = apply_learned(LearnedKind::Filter, &[&att(&[1.0, 0.5])], &[0.8, 1.2]).unwrap_err();
        assert!(matches!(e, ExecError::OutOfRange { index: 1, .. }));
        assert!(apply_learned(LearnedKind::Find, &[], &[f64::NAN]).is_err());
    }

    #[test]
    fn set_operations() {
        let p = att(&[0.5, 0.8]);
        assert_eq!(intersect(&p, &BoxAttention::ones(2)).unwrap(), p);
        assert_eq!(discard(&p, &p).unwrap().probs(), &[0.0, 0.0]);
        assert_eq!(intersect(&p, &att(&[0.5, 0.5])).unwrap().probs(), &[0.25, 0.4]);
        assert_eq!(intersect(&p, &BoxAttention::zeros(2)).unwrap(), BoxAttention::zeros(2));
        assert!(intersect(&p, &BoxAttention::zeros(3)).is_err());
    }

    #[test]
    fn image_restriction() {
        use ImageSide::*;
        let scene = Scene::new("s", vec![bb(0.0, Left), bb(20.0, Left), bb(0.0, Right)]);
        let left_only = att(&[0.3, 0.9, 0.0]);
        assert_eq!(restrict_to_image(&left_only, &scene, Left).unwrap(), left_only);
        let mixed = att(&[0.3, 0.9, 0.6]);
        let r = restrict_to_image(&mixed, &scene, Right).unwrap();
        assert_eq!(r.probs(), &[0.0, 0.0, 0.6]);
        let both = restrict_to_image(&restrict_to_image(&mixed, &scene, Left).unwrap(), &scene, Right).unwrap();
        assert_eq!(both, BoxAttention::zeros(3));
    }

    #[test]
    fn sum_count() {
        assert!((count_sum(&att(&[0.9, 0.8, 0.9]), 0.25).unwrap().mean - 2.6).abs() < 1e-12);
        let twenty = att(&[0.05; 20]);
        assert_eq!(count_sum(&twenty, 0.25).unwrap().mean, 1.0);
        assert_eq!(count_sum(&BoxAttention::zeros(4), 0.25).unwrap().mean, 0.0);
    }

    #[test]
    fn overlap_count() {
        use ImageSide::*;
        // [0,10]x[0,10] vs [0,9]x[0,10]: IOU 0.9
        let near = Scene::new("s", vec![bb(0.0, Left), BoundingBox::new(0.0, 0.0, 9.0, 10.0, Left).unwrap()]);
        let c = count_overlap_aware(&att(&[0.9, 0.8]), &near, 0.5, 0.25).unwrap();
        assert!((c.mean - 0.9).abs() < 1e-12);

        let disjoint = Scene::new("s", vec![bb(0.0, Left), bb(20.0, Left), bb(0.0, Right)]);
        let p = att(&[0.2, 0.7, 0.4]);
        assert_eq!(count_overlap_aware(&p, &disjoint, 0.5, 0.25).unwrap(), count_sum(&p, 0.25).unwrap());

        let dup = Scene::new("s", vec![bb(0.0, Left); 3]);
        assert_eq!(count_overlap_aware(&att(&[1.0; 3]), &dup, 0.5, 0.25).unwrap().mean, 1.0);
        let dup20 = Scene::new("s", vec![bb(0.0, Left); 20]);
        assert!((count_overlap_aware(&att(&[0.05; 20]), &dup20, 0.5, 0.25).unwrap().mean - 0.05).abs() < 1e-15);
    }

    #[test]
    fn exist_values() {
        let k = 72;
        let ones = count_sum(&att(&[1.0; 3]), 0.25).unwrap();
        // 1 - Φ(-5)
        assert!((exist_from_count(&ones, k).unwrap().value() - (1.0 - 2.866_515_718_791_939e-7)).abs() < 1e-12);
        let zeros = count_sum(&BoxAttention::zeros(3), 0.25).unwrap();
        // 1 - Φ(1) = 0.15865525393145707
        assert!((exist_from_count(&zeros, k).unwrap().value() - 0.158_655_253_931_457_07).abs() < 1e-12);
        let exact = count_sum(&BoxAttention::zeros(3), 0.0).unwrap();
        assert_eq!(exist_from_count(&exact, k).unwrap().value(), 0.0);
    }
}
