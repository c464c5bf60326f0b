//! Linearized module programs: syntax tree, parser, canonical printer,
//! signature tables and the type checker.

mod ast;
mod parser;
mod signature;
mod typecheck;

pub use ast::{Node, NodeId, Program, UtteranceAttention};
pub use parser::{linearize, parse, ParseError, ParseErrorKind};
pub use signature::{ModuleSignature, SignatureError, SignatureFile, SignatureTable, ValueType};
pub use typecheck::{typecheck, TypeError, TypeErrorKind, TypeErrors, TypedProgram};
