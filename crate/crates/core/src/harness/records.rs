//! Line-delimited JSON record schemas and their conversion to domain types.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dsl::{linearize, NodeId, TypedProgram};
use crate::exec::{BoxAttention, ExecutionTrace, Grounding, GroundingPayload, NodeOutput, Scene, Value};
use crate::faith::{TextAnnotation, VisualAnnotation};
use crate::geometry::{BoundingBox, ImageSide};
use crate::prob::{NumberValue, TruthProb};
use crate::synth::{GoldWorld, SetValue};

/// `{id, utterance, program}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    pub program: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub idx: usize,
    pub image: ImageSide,
    #[serde(rename = "box")]
    pub coords: [f64; 4],
}

/// `{id, proposals: [{idx, image, box: [x1, y1, x2, y2]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub id: String,
    pub proposals: Vec<ProposalRecord>,
}

fn make_box(c: [f64; 4], image: ImageSide, context: impl FnOnce() -> String) -> Result<BoundingBox, HarnessError> {
    BoundingBox::new(c[0], c[1], c[2], c[3], image).map_err(|e| HarnessError::Validation(format!("{}: {e}", context())))
}

impl SceneRecord {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            id: scene.id.clone(),
            proposals: scene
                .proposals
                .iter()
                .enumerate()
                .map(|(idx, b)| ProposalRecord { idx, image: b.image, coords: b.coords() })
                .collect(),
        }
    }

    /// Proposals must be listed in index order `0..n`.
    pub fn to_scene(&self) -> Result<Scene, HarnessError> {
        let proposals = self
            .proposals
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.idx != i {
                    return Err(HarnessError::Validation(format!("scene {}: proposal at position {i} has idx {}", self.id, p.idx)));
                }
                make_box(p.coords, p.image, || format!("scene {}, proposal {i}", self.id))
            })
            .collect::<Result<_, _>>()?;
        Ok(Scene::new(self.id.clone(), proposals))
    }
}

/// `{id, node, image?, scores: [...]}` or `{id, node, image?, number: {mean, var}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingRecord {
    pub id: String,
    pub node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSide>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<NumberValue>,
}

impl GroundingRecord {
    pub fn from_grounding(id: &str, g: &Grounding) -> Self {
        let (scores, number) = match &g.payload {
            GroundingPayload::Scores(s) => (Some(s.clone()), None),
            GroundingPayload::Number(n) => (None, Some(*n)),
        };
        Self { id: id.to_string(), node: g.node, image: g.image, scores, number }
    }

    pub fn to_grounding(&self) -> Result<Grounding, HarnessError> {
        let payload = match (&self.scores, &self.number) {
            (Some(s), None) => GroundingPayload::Scores(s.clone()),
            (None, Some(n)) => GroundingPayload::Number(
                NumberValue::new(n.mean, n.var)
                    .map_err(|e| HarnessError::Validation(format!("example {}, node {}: {e}", self.id, self.node)))?,
            ),
            _ => {
                return Err(HarnessError::Validation(format!(
                    "example {}, node {}: a grounding needs exactly one of `scores` or `number`",
                    self.id, self.node
                )))
            }
        };
        Ok(Grounding { node: self.node, image: self.image, payload })
    }
}

/// An annotated box: `[x1, y1, x2, y2]` when the record names an image, or
/// `{image, box}` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnnotatedBox {
    Plain([f64; 4]),
    Tagged {
        image: ImageSide,
        #[serde(rename = "box")]
        coords: [f64; 4],
    },
}

/// `{id, node, module, image, boxes: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualAnnotationRecord {
    pub id: String,
    pub node: NodeId,
    pub module: String,
    #[serde(default)]
    pub image: Option<ImageSide>,
    pub boxes: Vec<AnnotatedBox>,
}

impl VisualAnnotationRecord {
    pub fn from_annotation(a: &VisualAnnotation) -> Self {
        let boxes = a
            .boxes
            .iter()
            .map(|b| match a.image {
                Some(_) => AnnotatedBox::Plain(b.coords()),
                None => AnnotatedBox::Tagged { image: b.image, coords: b.coords() },
            })
            .collect();
        Self { id: a.example.clone(), node: a.node, module: a.module.clone(), image: a.image, boxes }
    }

    pub fn to_annotation(&self) -> Result<VisualAnnotation, HarnessError> {
        let ctx = || format!("annotation {}/{}", self.id, self.node);
        let boxes = self
            .boxes
            .iter()
            .map(|b| match (b, self.image) {
                (AnnotatedBox::Plain(c), Some(side)) => make_box(*c, side, ctx),
                (AnnotatedBox::Plain(_), None) => {
                    Err(HarnessError::Validation(format!("{}: plain [x1, y1, x2, y2] boxes need a record-level image", ctx())))
                }
                (AnnotatedBox::Tagged { image, coords }, rec) => {
                    if rec.is_some_and(|r| r != *image) {
                        return Err(HarnessError::Validation(format!("{}: box image differs from the record image", ctx())));
                    }
                    make_box(*coords, *image, ctx)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(VisualAnnotation { example: self.id.clone(), node: self.node, module: self.module.clone(), image: self.image, boxes })
    }
}

/// `{id, node, module, token_dist, spans: [[s, e], ...]}`; `token_dist` may
/// instead come from a separate module-outputs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextAnnotationRecord {
    pub id: String,
    pub node: NodeId,
    pub module: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_dist: Option<Vec<f64>>,
    pub spans: Vec<[usize; 2]>,
}

/// `{id, node, token_dist}`: a text module's output distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextOutputRecord {
    pub id: String,
    pub node: NodeId,
    pub token_dist: Vec<f64>,
}

impl TextAnnotationRecord {
    pub fn to_annotation(&self, outputs: &BTreeMap<(String, NodeId), Vec<f64>>) -> Result<TextAnnotation, HarnessError> {
        let ctx = format!("text annotation {}/{}", self.id, self.node);
        let token_dist = match &self.token_dist {
            Some(d) => d.clone(),
            None => outputs
                .get(&(self.id.clone(), self.node))
                .cloned()
                .ok_or_else(|| HarnessError::Validation(format!("{ctx}: no token distribution")))?,
        };
        let spans: Vec<(usize, usize)> = self.spans.iter().map(|[s, e]| (*s, *e)).collect();
        if spans.is_empty() {
            return Err(HarnessError::Validation(format!("{ctx}: no gold spans")));
        }
        for &(s, e) in &spans {
            if s > e || e >= token_dist.len() {
                return Err(HarnessError::Validation(format!("{ctx}: span [{s}, {e}] is invalid for {} tokens", token_dist.len())));
            }
        }
        Ok(TextAnnotation { example: self.id.clone(), node: self.node, module: self.module.clone(), token_dist, spans })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceOutput {
    PerImage { left: Value, right: Value },
    Single { value: Value },
}

/// serde cannot deny unknown fields next to a flattened enum, so this one record is lenient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNodeRecord {
    pub node: NodeId,
    pub module: String,
    #[serde(flatten)]
    pub output: TraceOutput,
}

/// One executed example: `{id, program, denotation, nodes: [{node, module, value | left, right}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub id: String,
    pub program: String,
    pub denotation: Value,
    pub nodes: Vec<TraceNodeRecord>,
}

/// Deserialized values bypass their constructors; re-check their ranges.
fn check_value(v: &Value) -> Result<(), String> {
    match v {
        Value::Truth(t) => TruthProb::new(t.value()).map(|_| ()).map_err(|e| e.to_string()),
        Value::Number(n) => NumberValue::new(n.mean, n.var).map(|_| ()).map_err(|e| e.to_string()),
        Value::Attention(a) => BoxAttention::new(a.probs().to_vec()).map(|_| ()).map_err(|e| e.to_string()),
    }
}

impl TraceRecord {
    /// Record of one execution, with canonical module names per node.
    pub fn from_trace(id: &str, typed: &TypedProgram, trace: ExecutionTrace) -> Self {
        let nodes = trace
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, out)| TraceNodeRecord {
                node: NodeId(i),
                module: typed.canonical_module(NodeId(i)).to_string(),
                output: match out {
                    NodeOutput::Single(value) => TraceOutput::Single { value },
                    NodeOutput::PerImage { left, right } => TraceOutput::PerImage { left, right },
                },
            })
            .collect();
        Self { id: id.to_string(), program: linearize(typed.program()), denotation: trace.denotation, nodes }
    }

    pub fn to_trace(&self) -> Result<ExecutionTrace, HarnessError> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if n.node.0 != i {
                    return Err(HarnessError::Validation(format!("trace {}: node at position {i} has id {}", self.id, n.node)));
                }
                for v in match &n.output {
                    TraceOutput::Single { value } => vec![value],
                    TraceOutput::PerImage { left, right } => vec![left, right],
                } {
                    check_value(v).map_err(|e| HarnessError::Validation(format!("trace {}, node {}: {e}", self.id, n.node)))?;
                }
                Ok(match &n.output {
                    TraceOutput::Single { value } => NodeOutput::Single(value.clone()),
                    TraceOutput::PerImage { left, right } => NodeOutput::PerImage { left: left.clone(), right: right.clone() },
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(ExecutionTrace { nodes, denotation: self.denotation.clone() })
    }
}

/// Brute-force answer for a synthetic example, with the world it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRecord {
    pub id: String,
    pub expected: SetValue,
    pub world: GoldWorld,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_round_trip_and_validation() {
        let line = r#"{"id":"e","proposals":[{"idx":0,"image":"left","box":[0,0,10,10]},{"idx":1,"image":"right","box":[1,2,3,4]}]}"#;
        let rec: SceneRecord = serde_json::from_str(line).unwrap();
        let scene = rec.to_scene().unwrap();
        assert_eq!(scene.image_of(1), ImageSide::Right);
        assert_eq!(SceneRecord::from_scene(&scene), rec);
        let swapped: SceneRecord = serde_json::from_str(&line.replace(r#""idx":1"#, r#""idx":3"#)).unwrap();
        assert!(swapped.to_scene().is_err());
        let bad: SceneRecord = serde_json::from_str(&line.replace("[1,2,3,4]", "[3,2,1,4]")).unwrap();
        assert!(bad.to_scene().is_err());
        assert!(serde_json::from_str::<SceneRecord>(r#"{"id":"e","proposals":[],"extra":1}"#).is_err());
    }

    #[test]
    fn grounding_needs_one_payload() {
        let g: GroundingRecord = serde_json::from_str(r#"{"id":"e","node":3,"scores":[0.5]}"#).unwrap();
        assert_eq!(g.to_grounding().unwrap().payload, GroundingPayload::Scores(vec![0.5]));
        let n: GroundingRecord = serde_json::from_str(r#"{"id":"e","node":3,"image":"left","number":{"mean":2,"var":0}}"#).unwrap();
        assert_eq!(n.to_grounding().unwrap().image, Some(ImageSide::Left));
        let neither: GroundingRecord = serde_json::from_str(r#"{"id":"e","node":3}"#).unwrap();
        assert!(neither.to_grounding().is_err());
    }

    #[test]
    fn annotation_box_forms() {
        let tagged: VisualAnnotationRecord =
            serde_json::from_str(r#"{"id":"e","node":1,"module":"find","image":null,"boxes":[{"image":"right","box":[0,0,5,5]}]}"#)
                .unwrap();
        let a = tagged.to_annotation().unwrap();
        assert_eq!(a.boxes[0].image, ImageSide::Right);
        assert_eq!(VisualAnnotationRecord::from_annotation(&a), tagged);
        let plain: VisualAnnotationRecord =
            serde_json::from_str(r#"{"id":"e","node":1,"module":"find","image":"left","boxes":[[0,0,5,5]]}"#).unwrap();
        assert_eq!(plain.to_annotation().unwrap().boxes[0].image, ImageSide::Left);
        let orphan: VisualAnnotationRecord = serde_json::from_str(r#"{"id":"e","node":1,"module":"find","boxes":[[0,0,5,5]]}"#).unwrap();
        assert!(orphan.to_annotation().is_err());
    }

    #[test]
    fn text_annotation_validation() {
        let ok: TextAnnotationRecord =
            serde_json::from_str(r#"{"id":"e","node":2,"module":"find","token_dist":[0.5,0.5],"spans":[[0,1]]}"#).unwrap();
        assert_eq!(ok.to_annotation(&BTreeMap::new()).unwrap().spans, vec![(0, 1)]);
        let reversed = TextAnnotationRecord { spans: vec![[1, 0]], ..ok.clone() };
        assert!(reversed.to_annotation(&BTreeMap::new()).is_err());
        let external = TextAnnotationRecord { token_dist: None, ..ok };
        assert!(external.to_annotation(&BTreeMap::new()).is_err());
        let outputs = BTreeMap::from([(("e".to_string(), NodeId(2)), vec![1.0, 0.0])]);
        assert_eq!(external.to_annotation(&outputs).unwrap().token_dist, vec![1.0, 0.0]);
    }

    #[test]
    fn trace_values_are_range_checked() {
        let line = r#"{"id":"e","program":"exist(find[x])","denotation":{"truth":0.5},"nodes":[{"node":0,"module":"exist","value":{"truth":0.5}},{"node":1,"module":"find","value":{"attention":[0.2,1.5]}}]}"#;
        let rec: TraceRecord = serde_json::from_str(line).unwrap();
        assert!(rec.to_trace().unwrap_err().to_string().contains("node 1"));
        let ok: TraceRecord = serde_json::from_str(&line.replace("1.5", "1.0")).unwrap();
        let trace = ok.to_trace().unwrap();
        assert_eq!(trace.len(), 2);
        let round = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<TraceRecord>(&round).unwrap(), ok);
    }
}
