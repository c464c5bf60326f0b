//! Program execution over a two-image scene.
//!
//! Deterministic modules are computed in closed form; learned modules combine a
//! provider-supplied factor with their inputs (see [`GroundingProvider`]). Every
//! node's output is kept in an [`ExecutionTrace`] so that faithfulness can be
//! scored afterwards.
//!
//! Macros (`in-at-least-one-image`, `in-each-image`, `in-one-other-image`) run
//! their sub-programs once per image. Instead of slicing the scene, the other
//! image's proposals are zeroed at every learned-module output, so node ids and
//! proposal indices stay the same in both runs.

mod modules;
mod provider;
mod scene;
mod table;

pub use modules::{apply_learned, count_overlap_aware, count_sum, discard, exist_from_count, intersect, restrict_to_image};
pub use provider::{GroundingProvider, GroundingRequest, LearnedKind, ProviderError};
pub use scene::{BoxAttention, Scene};
pub use table::{DuplicateGrounding, Grounding, GroundingPayload, GroundingTable, RecordingProvider};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{NodeId, TypedProgram, ValueType};
use crate::geometry::ImageSide;
use crate::prob::{
    bool_combine, compare, gaussian_arith, ArithOp, BoolOp, CompareKind, NumberValue, ProbError, TruthProb, DEFAULT_MAX_COUNT,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("entry {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("{module} takes {expected} inputs, got {got}")]
    Arity { module: &'static str, expected: usize, got: usize },
    #[error("node {node}: {source}")]
    Provider { node: NodeId, source: ProviderError },
    #[error("node {node}: provider scores rejected: {source}")]
    BadScores { node: NodeId, source: Box<ExecError> },
    #[error("node {node}: {source}")]
    Number { node: NodeId, source: ProbError },
    #[error("node {node}: module {module:?} is not executable over scenes")]
    Unsupported { node: NodeId, module: String },
    #[error("invalid configuration: {0}")]
    Config(ProbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountStrategy {
    /// Normal(Σ p, σ²).
    Sum,
    /// Single-link IOU clustering, one contribution per cluster. Not a learned counter.
    Overlap,
    /// Counts supplied by the grounding provider.
    Provider,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub max_count: usize,
    pub sigma_sq: f64,
    pub count_strategy: CountStrategy,
    pub cluster_iou: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { max_count: DEFAULT_MAX_COUNT, sigma_sq: 0.25, count_strategy: CountStrategy::Sum, cluster_iou: 0.5 }
    }
}

/// A runtime value; the variant always matches the node's checked type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Truth(TruthProb),
    Number(NumberValue),
    Attention(BoxAttention),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Truth(_) => ValueType::Boolean,
            Value::Number(_) => ValueType::Number,
            Value::Attention(_) => ValueType::BoxAttention,
        }
    }

    pub fn as_truth(&self) -> Option<TruthProb> {
        match self {
            Value::Truth(t) => Some(*t),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<NumberValue> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_attention(&self) -> Option<&BoxAttention> {
        match self {
            Value::Attention(a) => Some(a),
            _ => None,
        }
    }
}

/// Output of one node: a single value, or one value per image for nodes inside a macro.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutput {
    Single(Value),
    PerImage { left: Value, right: Value },
}

impl NodeOutput {
    pub fn values(&self) -> Vec<&Value> {
        match self {
            NodeOutput::Single(v) => vec![v],
            NodeOutput::PerImage { left, right } => vec![left, right],
        }
    }

    /// The attention relevant to `image`. Per-image outputs without an image are
    /// merged: left entries from the left run, right entries from the right run.
    pub fn attention_for(&self, image: Option<ImageSide>, scene: &Scene) -> Option<BoxAttention> {
        match (self, image) {
            (NodeOutput::Single(v), _) => v.as_attention().cloned(),
            (NodeOutput::PerImage { left, .. }, Some(ImageSide::Left)) => left.as_attention().cloned(),
            (NodeOutput::PerImage { right, .. }, Some(ImageSide::Right)) => right.as_attention().cloned(),
            (NodeOutput::PerImage { left, right }, None) => {
                let (l, r) = (left.as_attention()?, right.as_attention()?);
                Some(BoxAttention::from_unchecked(
                    (0..scene.len())
                        .map(|i| match scene.image_of(i) {
                            ImageSide::Left => l.probs()[i],
                            ImageSide::Right => r.probs()[i],
                        })
                        .collect(),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    /// Indexed by node id.
    pub nodes: Vec<NodeOutput>,
    pub denotation: Value,
}

impl ExecutionTrace {
    pub fn get(&self, node: NodeId) -> Option<&NodeOutput> {
        self.nodes.get(node.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacroKind {
    InAtLeastOneImage,
    InEachImage,
    InOneOtherImage,
}

impl MacroKind {
    pub fn from_module(name: &str) -> Option<Self> {
        Some(match name {
            "in-at-least-one-image" => Self::InAtLeastOneImage,
            "in-each-image" => Self::InEachImage,
            "in-one-other-image" => Self::InOneOtherImage,
            _ => return None,
        })
    }
}

/// Combine per-image truth values of macro sub-programs.
/// `runs[i]` holds `(left, right)` for sub-program `i`.
pub fn combine_macro(kind: MacroKind, runs: &[(TruthProb, TruthProb)]) -> TruthProb {
    use BoolOp::*;
    match kind {
        MacroKind::InAtLeastOneImage => bool_combine(Or, runs[0].0, runs[0].1),
        MacroKind::InEachImage => bool_combine(And, runs[0].0, runs[0].1),
        MacroKind::InOneOtherImage => {
            let ((p1l, p1r), (p2l, p2r)) = (runs[0], runs[1]);
            bool_combine(Or, bool_combine(And, p1l, p2r), bool_combine(And, p1r, p2l))
        }
    }
}

/// Denotation and full trace of one program run.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub denotation: Value,
    pub trace: ExecutionTrace,
}

struct Evaluator<'a, P: GroundingProvider + ?Sized> {
    program: &'a TypedProgram,
    scene: &'a Scene,
    provider: &'a P,
    config: &'a ExecConfig,
    single: Vec<Option<Value>>,
    per_image: Vec<[Option<Value>; 2]>,
}

fn side_index(side: ImageSide) -> usize {
    match side {
        ImageSide::Left => 0,
        ImageSide::Right => 1,
    }
}

impl<P: GroundingProvider + ?Sized> Evaluator<'_, P> {
    fn attention(&mut self, id: NodeId, mask: Option<ImageSide>) -> Result<BoxAttention, ExecError> {
        match self.eval(id, mask)? {
            Value::Attention(a) => Ok(a),
            other => unreachable!("typechecked BOX_ATTENTION node produced {other:?}"),
        }
    }

    fn number(&mut self, id: NodeId, mask: Option<ImageSide>) -> Result<NumberValue, ExecError> {
        match self.eval(id, mask)? {
            Value::Number(n) => Ok(n),
            other => unreachable!("typechecked NUMBER node produced {other:?}"),
        }
    }

    fn truth(&mut self, id: NodeId, mask: Option<ImageSide>) -> Result<TruthProb, ExecError> {
        match self.eval(id, mask)? {
            Value::Truth(t) => Ok(t),
            other => unreachable!("typechecked BOOLEAN node produced {other:?}"),
        }
    }

    fn count(&self, id: NodeId, p: &BoxAttention, mask: Option<ImageSide>) -> Result<NumberValue, ExecError> {
        match self.config.count_strategy {
            CountStrategy::Sum => count_sum(p, self.config.sigma_sq),
            CountStrategy::Overlap => count_overlap_aware(p, self.scene, self.config.cluster_iou, self.config.sigma_sq),
            CountStrategy::Provider => {
                self.provider.count(id, p, self.scene, mask).map_err(|source| ExecError::Provider { node: id, source })
            }
        }
    }

    fn eval(&mut self, id: NodeId, mask: Option<ImageSide>) -> Result<Value, ExecError> {
        let node = self.program.program().node(id);
        let children = node.children.clone();
        let module = self.program.canonical_module(id).to_string();
        let k = self.config.max_count;
        let num_err = |source| ExecError::Number { node: id, source };

        let value = if let Some(kind) = LearnedKind::from_module(&module) {
            let inputs = children.iter().map(|c| self.attention(*c, mask)).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&BoxAttention> = inputs.iter().collect();
            let request =
                GroundingRequest { node: id, kind, utterance: node.utterance.as_ref(), inputs: &refs, scene: self.scene, image: mask };
            let scores = self.provider.scores(&request).map_err(|source| ExecError::Provider { node: id, source })?;
            if scores.len() != self.scene.len() {
                let source = Box::new(ExecError::LengthMismatch { expected: self.scene.len(), got: scores.len() });
                return Err(ExecError::BadScores { node: id, source });
            }
            let out = apply_learned(kind, &refs, &scores).map_err(|e| ExecError::BadScores { node: id, source: Box::new(e) })?;
            Value::Attention(match mask {
                Some(side) => restrict_to_image(&out, self.scene, side)?,
                None => out,
            })
        } else if let Some(kind) = CompareKind::from_module(&module) {
            let a = self.number(children[0], mask)?;
            let b = self.number(children[1], mask)?;
            Value::Truth(compare(kind, &a, &b, k).map_err(num_err)?)
        } else if let Some(kind) = MacroKind::from_module(&module) {
            let mut runs = Vec::with_capacity(children.len());
            for c in &children {
                let l = self.truth(*c, Some(ImageSide::Left))?;
                let r = self.truth(*c, Some(ImageSide::Right))?;
                runs.push((l, r));
            }
            Value::Truth(combine_macro(kind, &runs))
        } else {
            match module.as_str() {
                "count" => {
                    let p = self.attention(children[0], mask)?;
                    Value::Number(self.count(id, &p, mask)?)
                }
                "exist" => {
                    let p = self.attention(children[0], mask)?;
                    let c = self.count(id, &p, mask)?;
                    Value::Truth(exist_from_count(&c, k)?)
                }
                "and" | "or" => {
                    let a = self.truth(children[0], mask)?;
                    let b = self.truth(children[1], mask)?;
                    let op = if module == "and" { BoolOp::And } else { BoolOp::Or };
                    Value::Truth(bool_combine(op, a, b))
                }
                "sum" | "difference" | "division" => {
                    let a = self.number(children[0], mask)?;
                    let b = self.number(children[1], mask)?;
                    let op = match module.as_str() {
                        "sum" => ArithOp::Sum,
                        "difference" => ArithOp::Difference,
                        _ => ArithOp::Division,
                    };
                    Value::Number(gaussian_arith(op, &a, &b).map_err(num_err)?)
                }
                "intersect" | "discard" => {
                    let a = self.attention(children[0], mask)?;
                    let b = self.attention(children[1], mask)?;
                    Value::Attention(if module == "intersect" { intersect(&a, &b)? } else { discard(&a, &b)? })
                }
                "in-left-image" | "in-right-image" => {
                    let p = self.attention(children[0], mask)?;
                    let side = if module == "in-left-image" { ImageSide::Left } else { ImageSide::Right };
                    Value::Attention(restrict_to_image(&p, self.scene, side)?)
                }
                _ => return Err(ExecError::Unsupported { node: id, module }),
            }
        };

        debug_assert_eq!(value.value_type(), self.program.node_type(id));
        match mask {
            None => self.single[id.0] = Some(value.clone()),
            Some(side) => self.per_image[id.0][side_index(side)] = Some(value.clone()),
        }
        Ok(value)
    }
}

/// Run a typed program. Children are evaluated before their parent and every
/// node's output is recorded; the denotation is the root's output.
pub fn execute<P: GroundingProvider + ?Sized>(
    program: &TypedProgram,
    scene: &Scene,
    provider: &P,
    config: &ExecConfig,
) -> Result<Execution, ExecError> {
    if config.max_count < 1 {
        return Err(ExecError::Config(ProbError::BadMaxCount));
    }
    if !(config.sigma_sq.is_finite() && config.sigma_sq >= 0.0) {
        return Err(ExecError::Config(ProbError::BadVariance(config.sigma_sq)));
    }
    let n = program.len();
    let mut ev = Evaluator { program, scene, provider, config, single: vec![None; n], per_image: vec![[None, None]; n] };
    let denotation = ev.eval(program.program().root(), None)?;
    let nodes = (0..n)
        .map(|i| {
            if program.is_under_macro(NodeId(i)) {
                let [l, r] = std::mem::take(&mut ev.per_image[i]);
                NodeOutput::PerImage { left: l.expect("left run recorded"), right: r.expect("right run recorded") }
            } else {
                NodeOutput::Single(ev.single[i].take().expect("node evaluated"))
            }
        })
        .collect();
    Ok(Execution { denotation: denotation.clone(), trace: ExecutionTrace { nodes, denotation } })
}
