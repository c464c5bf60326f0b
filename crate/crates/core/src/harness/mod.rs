//! File formats and command implementations behind the `nmnfaith` CLI.
//!
//! Every input is line-delimited JSON, one record per line, keyed by example
//! id. The command functions take parsed records and return serializable
//! outputs sorted by example id, so the binary is a thin wrapper around them.

mod commands;
mod io;
mod records;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{
    eval_text, eval_visual, paired_scores, perm_test, random_programs, run_exec, synthesize, PairedScores, PermMetric, PermTestOutput,
    SynthBundle, TextEvaluation, VisualEvaluation,
};
pub use io::{parse_jsonl, read_json, read_jsonl, write_json, write_jsonl};
pub use records::{
    AnnotatedBox, ExpectedRecord, GroundingRecord, ProgramRecord, ProposalRecord, SceneRecord, TextAnnotationRecord, TextOutputRecord,
    TraceNodeRecord, TraceOutput, TraceRecord, VisualAnnotationRecord,
};
pub use report::{render_perm, render_text, render_visual, Metadata};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    /// Process exit status: 2 for bad input, 3 for failures on our side.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Read { .. } | HarnessError::Parse { .. } | HarnessError::Validation(_) => 2,
            HarnessError::Write { .. } | HarnessError::Internal(_) => 3,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}
