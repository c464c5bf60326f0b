//! Synthetic scenes and oracle groundings.
//!
//! A [`GoldWorld`] holds objects with categories, attributes and binary
//! relations; proposals are jittered copies of their gold boxes with a
//! controlled IOU, plus background distractors. [`OracleProvider`] answers
//! learned modules from the gold facts, and [`brute_force`] computes the exact
//! set-semantics answer the executor should agree with.

mod brute;
mod example;
mod oracle;
mod program_gen;
mod world;

pub use brute::{brute_force, BruteForce, SetOutput, SetValue};
pub use example::{check_vocabulary, generate_example, SyntheticExample};
pub use oracle::OracleProvider;
pub use program_gen::{random_program, MAX_PROGRAM_MODULES};
pub use world::{generate_scene, jitter_box, GoldWorld, Relation, SceneSpec, SyntheticObject, DISTRACTOR_MAX_IOU};

use thiserror::Error;

use crate::dsl::NodeId;
use crate::exec::ExecError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("spec cannot be satisfied: {0}")]
    Unsatisfiable(&'static str),
    #[error("noise must lie in [0, 1], got {0}")]
    BadNoise(f64),
    #[error("node {node}: {module}[{term}] uses a term outside the spec vocabulary")]
    Vocabulary { node: NodeId, module: String, term: String },
    #[error("node {node}: module {module:?} has no set semantics")]
    Unsupported { node: NodeId, module: String },
    #[error("execution failed: {0}")]
    Exec(ExecError),
}
