//! Execution and module-wise faithfulness evaluation for neural module network programs.
//!
//! * [`dsl`] parses, prints and type-checks linearized module programs.
//! * [`prob`] holds the probabilistic value algebra (truth values, Normal numbers,
//!   discretized counts, mentioned-value distributions).
//! * [`exec`] runs typed programs over a two-image scene, resolving learned modules
//!   through a [`exec::GroundingProvider`].
//! * [`faith`] scores intermediate module outputs against gold annotations.
//! * [`synth`] generates synthetic scenes, oracle providers and brute-force answers.
//! * [`harness`] reads and writes the line-delimited JSON files used by the CLI.

pub mod dsl;
pub mod exec;
pub mod faith;
pub mod geometry;
pub mod harness;
pub mod prob;
pub mod synth;
