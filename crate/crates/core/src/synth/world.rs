//! Synthetic two-image worlds and jittered proposals.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::exec::Scene;
use crate::geometry::{iou, BoundingBox, ImageSide};

const PLACEMENT_ATTEMPTS: usize = 1_000;
const JITTER_ATTEMPTS: usize = 64;
const JITTER_TOLERANCE: f64 = 1e-9;
/// Distractor proposals overlap every gold box at most this much.
pub const DISTRACTOR_MAX_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub image_width: f64,
    pub image_height: f64,
    /// Inclusive range of objects placed in each image.
    pub objects_per_image: (usize, usize),
    /// Box side length as a fraction of the image side.
    pub box_size: (f64, f64),
    pub categories: Vec<String>,
    pub attributes: Vec<String>,
    pub relations: Vec<String>,
    /// Chance that an object carries each attribute.
    pub attribute_prob: f64,
    /// Chance that each ordered pair of objects in one image is linked by a
    /// (uniformly drawn) relation.
    pub relation_prob: f64,
    /// Each proposal's IOU with its gold box is drawn uniformly from this range.
    pub jitter_iou: (f64, f64),
    pub proposals_per_object: (usize, usize),
    /// Background proposals per image.
    pub distractors: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        Self {
            image_width: 640.0,
            image_height: 480.0,
            objects_per_image: (1, 4),
            box_size: (0.1, 0.3),
            categories: words(&["dogs", "cats", "balls", "cars"]),
            attributes: words(&["black", "white", "small"]),
            relations: words(&["next to", "chasing", "holding"]),
            attribute_prob: 0.4,
            relation_prob: 0.25,
            jitter_iou: (0.6, 0.95),
            proposals_per_object: (1, 3),
            distractors: 2,
        }
    }
}

impl SceneSpec {
    /// Spec whose proposals are exactly the gold boxes, one per object, with no distractors.
    pub fn perfect_proposals(self) -> Self {
        Self { jitter_iou: (1.0, 1.0), proposals_per_object: (1, 1), distractors: 0, ..self }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |what: &str| Err(SynthError::InvalidSpec(what.to_string()));
        if !(self.image_width > 0.0 && self.image_height > 0.0 && self.image_width.is_finite() && self.image_height.is_finite()) {
            return bad("image size must be positive");
        }
        if self.objects_per_image.0 > self.objects_per_image.1 {
            return bad("objects_per_image range is empty");
        }
        if !(self.box_size.0 > 0.0 && self.box_size.0 <= self.box_size.1 && self.box_size.1 <= 1.0) {
            return bad("box_size must satisfy 0 < lo <= hi <= 1");
        }
        if !(self.jitter_iou.0 > 0.0 && self.jitter_iou.0 <= self.jitter_iou.1 && self.jitter_iou.1 <= 1.0) {
            return bad("jitter_iou must satisfy 0 < lo <= hi <= 1");
        }
        if self.proposals_per_object.0 > self.proposals_per_object.1 {
            return bad("proposals_per_object range is empty");
        }
        if !(0.0..=1.0).contains(&self.attribute_prob) || !(0.0..=1.0).contains(&self.relation_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.categories.is_empty() {
            return bad("at least one category is required");
        }
        for w in self.categories.iter().chain(&self.attributes).chain(&self.relations) {
            if w.is_empty() || w.contains(']') {
                return bad("vocabulary entries must be nonempty and free of ']'");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObject {
    pub id: usize,
    pub category: String,
    pub attributes: BTreeSet<String>,
    #[serde(rename = "box")]
    pub gold_box: BoundingBox,
    /// Relations with this object as subject. Targets are in the same image.
    pub relations: Vec<Relation>,
}

impl SyntheticObject {
    pub fn image(&self) -> ImageSide {
        self.gold_box.image
    }

    pub fn relates_to(&self, relation: &str, target: usize) -> bool {
        self.relations.iter().any(|r| r.name == relation && r.target == target)
    }
}

/// Ground truth behind a synthetic scene. Object ids index `objects`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldWorld {
    pub objects: Vec<SyntheticObject>,
}

impl GoldWorld {
    /// The object whose gold box a proposal overlaps with IOU above `threshold`,
    /// taking the best one. Gold boxes never overlap, so for thresholds of at
    /// least 0.5 there is at most one candidate.
    pub fn owner(&self, proposal: &BoundingBox, threshold: f64) -> Option<usize> {
        self.objects
            .iter()
            .map(|o| (o.id, iou(&o.gold_box, proposal)))
            .filter(|(_, v)| *v > threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(id, _)| id)
    }
}

fn uniform_usize(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn uniform_f64(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn random_box(rng: &mut ChaCha8Rng, spec: &SceneSpec, side: ImageSide) -> BoundingBox {
    let w = uniform_f64(rng, spec.box_size) * spec.image_width;
    let h = uniform_f64(rng, spec.box_size) * spec.image_height;
    let x = rng.random_range(0.0..=(spec.image_width - w).max(0.0));
    let y = rng.random_range(0.0..=(spec.image_height - h).max(0.0));
    BoundingBox::new(x, y, (x + w).min(spec.image_width), (y + h).min(spec.image_height), side).expect("positive size")
}

fn place_objects(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Result<Vec<SyntheticObject>, SynthError> {
    let mut objects = Vec::new();
    for side in ImageSide::BOTH {
        let n = uniform_usize(rng, spec.objects_per_image);
        let first = objects.len();
        for _ in 0..n {
            let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
                let b = random_box(rng, spec, side);
                objects[first..].iter().all(|o: &SyntheticObject| o.gold_box.intersection_area(&b) == 0.0).then_some(b)
            });
            let gold_box =
                placed.ok_or(SynthError::Unsatisfiable("cannot place non-overlapping gold boxes; reduce box_size or objects_per_image"))?;
            let category = spec.categories.choose(rng).expect("nonempty").clone();
            let attributes = spec.attributes.iter().filter(|_| rng.random_bool(spec.attribute_prob)).cloned().collect();
            objects.push(SyntheticObject { id: objects.len(), category, attributes, gold_box, relations: Vec::new() });
        }
        if spec.relations.is_empty() {
            continue;
        }
        for s in first..objects.len() {
            for t in first..objects.len() {
                if s != t && rng.random_bool(spec.relation_prob) {
                    let name = spec.relations.choose(rng).expect("nonempty").clone();
                    objects[s].relations.push(Relation { name, target: t });
                }
            }
        }
    }
    Ok(objects)
}

fn clamp_box(c: [f64; 4], spec: &SceneSpec, side: ImageSide) -> Option<BoundingBox> {
    let x1 = c[0].clamp(0.0, spec.image_width);
    let x2 = c[2].clamp(0.0, spec.image_width);
    let y1 = c[1].clamp(0.0, spec.image_height);
    let y2 = c[3].clamp(0.0, spec.image_height);
    BoundingBox::new(x1, y1, x2, y2, side).ok()
}

/// A box whose IOU with `gold` is `target`: the corners are moved along a
/// random direction by a scale found by bisection. Falls back to shrinking
/// the box about its centre, which reaches any target exactly.
pub fn jitter_box(rng: &mut ChaCha8Rng, gold: &BoundingBox, target: f64, spec: &SceneSpec) -> BoundingBox {
    if target >= 1.0 {
        return *gold;
    }
    let (w, h) = (gold.width(), gold.height());
    let g = gold.coords();
    for _ in 0..JITTER_ATTEMPTS {
        let dir: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let at = |s: f64| {
            let c = [g[0] + s * dir[0] * w, g[1] + s * dir[1] * h, g[2] + s * dir[2] * w, g[3] + s * dir[3] * h];
            clamp_box(c, spec, gold.image)
        };
        let score = |s: f64| at(s).map_or(0.0, |b| iou(gold, &b));
        let (mut lo, mut hi) = (0.0, 1.0);
        while score(hi) > target && hi < 64.0 {
            hi *= 2.0;
        }
        if score(hi) > target {
            continue;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if score(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if let Some(b) = at(lo) {
            if (iou(gold, &b) - target).abs() < JITTER_TOLERANCE {
                return b;
            }
        }
    }
    // the shrunken box lies inside gold, so IOU = area ratio = f²
    let f = target.sqrt();
    let (cx, cy) = ((g[0] + g[2]) / 2.0, (g[1] + g[3]) / 2.0);
    BoundingBox::new(cx - f * w / 2.0, cy - f * h / 2.0, cx + f * w / 2.0, cy + f * h / 2.0, gold.image).expect("inside gold")
}

/// Proposals for `objects` plus distractors, shuffled.
fn make_proposals(rng: &mut ChaCha8Rng, spec: &SceneSpec, objects: &[SyntheticObject]) -> Result<Vec<BoundingBox>, SynthError> {
    let mut proposals = Vec::new();
    for o in objects {
        for _ in 0..uniform_usize(rng, spec.proposals_per_object) {
            let target = uniform_f64(rng, spec.jitter_iou);
            proposals.push(jitter_box(rng, &o.gold_box, target, spec));
        }
    }
    for side in ImageSide::BOTH {
        for _ in 0..spec.distractors {
            let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
                let b = random_box(rng, spec, side);
                objects.iter().all(|o| iou(&o.gold_box, &b) <= DISTRACTOR_MAX_IOU).then_some(b)
            });
            proposals.push(placed.ok_or(SynthError::Unsatisfiable("no room for distractor proposals; reduce distractors or box_size"))?);
        }
    }
    proposals.shuffle(rng);
    Ok(proposals)
}

/// Deterministic for a fixed `(spec, seed)`.
pub fn generate_scene(spec: &SceneSpec, id: impl Into<String>, seed: u64) -> Result<(Scene, GoldWorld), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = place_objects(&mut rng, spec)?;
    let proposals = make_proposals(&mut rng, spec, &objects)?;
    Ok((Scene::new(id, proposals), GoldWorld { objects }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SceneSpec::default();
        assert_eq!(generate_scene(&spec, "a", 9).unwrap(), generate_scene(&spec, "a", 9).unwrap());
        assert_ne!(generate_scene(&spec, "a", 9).unwrap().1, generate_scene(&spec, "a", 10).unwrap().1);
    }

    #[test]
    fn perfect_proposals_copy_gold_boxes() {
        let spec = SceneSpec::default().perfect_proposals();
        let (scene, world) = generate_scene(&spec, "a", 1).unwrap();
        assert_eq!(scene.len(), world.objects.len());
        for o in &world.objects {
            assert!(scene.proposals.contains(&o.gold_box));
        }
    }

    #[test]
    fn world_invariants() {
        let spec = SceneSpec::default();
        for seed in 0..50 {
            let (scene, world) = generate_scene(&spec, "a", seed).unwrap();
            for o in &world.objects {
                let b = o.gold_box;
                assert!(b.x2 <= spec.image_width && b.y2 <= spec.image_height);
                for r in &o.relations {
                    assert_eq!(world.objects[r.target].image(), o.image());
                }
                for p in &world.objects {
                    if p.id != o.id && p.image() == o.image() {
                        assert_eq!(p.gold_box.intersection_area(&b), 0.0);
                    }
                }
            }
            let n: usize = ImageSide::BOTH.iter().map(|s| scene.indices_in(*s).count()).sum();
            assert_eq!(n, scene.len());
            for p in &scene.proposals {
                assert!(p.x2 <= spec.image_width && p.y2 <= spec.image_height);
            }
        }
    }

    #[test]
    fn jitter_hits_targets() {
        let spec = SceneSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gold = BoundingBox::new(600.0, 10.0, 640.0, 100.0, ImageSide::Right).unwrap();
        for target in [0.05, 0.3, 0.5, 0.77, 0.999] {
            for _ in 0..20 {
                let b = jitter_box(&mut rng, &gold, target, &spec);
                assert!((iou(&gold, &b) - target).abs() < 1e-9, "target {target}");
                assert_eq!(b.image, ImageSide::Right);
            }
        }
        assert_eq!(jitter_box(&mut rng, &gold, 1.0, &spec), gold);
    }

    #[test]
    fn low_jitter_target_never_aligns() {
        let spec = SceneSpec { jitter_iou: (0.3, 0.3), ..SceneSpec::default() };
        let (scene, world) = generate_scene(&spec, "a", 2).unwrap();
        for p in &scene.proposals {
            assert_eq!(world.owner(p, 0.5), None);
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SceneSpec { jitter_iou: (0.0, 0.5), ..SceneSpec::default() },
            SceneSpec { objects_per_image: (3, 2), ..SceneSpec::default() },
            SceneSpec { categories: vec![], ..SceneSpec::default() },
            SceneSpec { box_size: (0.5, 1.5), ..SceneSpec::default() },
        ];
        for s in bad {
            assert!(matches!(generate_scene(&s, "a", 0), Err(SynthError::InvalidSpec(_))));
        }
        let crowded = SceneSpec { objects_per_image: (30, 30), box_size: (0.5, 0.5), ..SceneSpec::default() };
        assert!(matches!(generate_scene(&crowded, "a", 0), Err(SynthError::Unsatisfiable(_))));
    }
}
