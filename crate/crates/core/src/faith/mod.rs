//! Module-wise faithfulness metrics.
//!
//! Visual modules are scored by aligning gold boxes with proposals (IOU above a
//! threshold) and counting matches among the proposals a module selects
//! (probability above a threshold). Precision and recall have separate
//! numerators: matched proposals and matched gold boxes. Text modules are
//! scored by the cross-entropy of their token distribution against gold spans.

mod aggregate;
mod permutation;
mod text;
mod upper_bound;
mod visual;

pub use aggregate::{aggregate, AggregationScheme, ExampleScores, FaithfulnessReport, ModuleScore};
pub use permutation::{permutation_test, Aggregator, Alternative, PermutationOutcome, DEFAULT_TRIALS};
pub use text::{
    score_text_annotations, text_aggregate, text_instance_score, TextAnnotation, TextExampleScore, TextFaithfulnessReport,
    TextInstanceScore, TextScore, SPAN_MASS_EPSILON,
};
pub use upper_bound::{oracle_attention, upper_bound, upper_bound_instances};
pub use visual::{
    align, example_module_score, harmonic, instance_counts, instances_from_trace, InstanceCounts, MatchCounts, NegativeMode, Prf,
    VisualAnnotation, VisualConfig,
};

use thiserror::Error;

use crate::dsl::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaithError {
    #[error("example {example}: attention has {got} entries but the scene has {expected} proposals")]
    Misaligned { example: String, expected: usize, got: usize },
    #[error("example {example}: annotation references unknown node {node}")]
    UnknownNode { example: String, node: NodeId },
    #[error("example {example}: node {node} does not output a box attention")]
    NotAttention { example: String, node: NodeId },
    #[error("no scene for example {0:?}")]
    UnknownExample(String),
    #[error("unknown aggregation scheme {0:?} (expected examplewise, cumulative or occurrence)")]
    UnknownScheme(String),
    #[error("nothing to aggregate")]
    Empty,
    #[error("instance has no gold spans")]
    NoSpans,
    #[error("span [{start}, {end}] is invalid for {len} tokens")]
    BadSpan { start: usize, end: usize, len: usize },
    #[error("token distribution entry {index} = {value} is not a finite non-negative number")]
    BadTokenDist { index: usize, value: f64 },
    #[error("example {example}, node {node}: {source}")]
    Instance { example: String, node: NodeId, source: Box<FaithError> },
    #[error("paired score lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("at least one trial is required")]
    NoTrials,
}
