use std::fmt;

use thiserror::Error;

use super::ast::{NodeId, Program};
use super::signature::{SignatureTable, ValueType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeErrorKind {
    #[error("unknown module {0:?}")]
    UnknownModule(String),
    #[error("{module} takes {expected} argument(s), got {got}")]
    Arity { module: String, expected: usize, got: usize },
    #[error("{module} expects {expected} for argument {position}, got {got}")]
    ArgType { module: String, position: usize, expected: ValueType, got: ValueType },
    #[error("{0} does not take an utterance attention argument")]
    UnexpectedUtterance(String),
    #[error("program root must be BOOLEAN, NUMBER or TOKEN_DIST, got {0}")]
    BadRoot(ValueType),
    #[error("macro {0} may not appear inside another macro's sub-program")]
    NestedMacro(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("node {node}: {kind}")]
pub struct TypeError {
    pub node: NodeId,
    pub kind: TypeErrorKind,
}

/// All errors found while checking one program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeErrors(pub Vec<TypeError>);

impl fmt::Display for TypeErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for TypeErrors {}

/// A program whose every node has a resolved module and a type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedProgram {
    program: Program,
    types: Vec<ValueType>,
    canonical: Vec<String>,
    under_macro: Vec<bool>,
}

impl TypedProgram {
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn node_type(&self, id: NodeId) -> ValueType {
        self.types[id.0]
    }

    pub fn root_type(&self) -> ValueType {
        self.types[0]
    }

    /// Module name after alias resolution (`relocate` → `project`).
    pub fn canonical_module(&self, id: NodeId) -> &str {
        &self.canonical[id.0]
    }

    /// True when the node sits inside a macro sub-program and is therefore run once per image.
    pub fn is_under_macro(&self, id: NodeId) -> bool {
        self.under_macro[id.0]
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

pub fn typecheck(program: &Program, table: &SignatureTable) -> Result<TypedProgram, TypeErrors> {
    let n = program.len();
    let mut types: Vec<Option<ValueType>> = vec![None; n];
    let mut canonical = vec![String::new(); n];
    let mut under_macro = vec![false; n];
    let mut errors = Vec::new();

    for (id, node) in program.nodes() {
        if table.get(&node.module).is_some_and(|s| s.is_macro()) {
            for i in program.subtree(id).skip(1) {
                under_macro[i] = true;
            }
        }
    }

    // Reverse pre-order visits children before parents.
    for i in (0..n).rev() {
        let id = NodeId(i);
        let node = program.node(id);
        let Some(sig) = table.get(&node.module) else {
            errors.push(TypeError { node: id, kind: TypeErrorKind::UnknownModule(node.module.clone()) });
            continue;
        };
        canonical[i] = sig.name.clone();
        let mut ok = true;
        if sig.is_macro() && under_macro[i] {
            errors.push(TypeError { node: id, kind: TypeErrorKind::NestedMacro(sig.name.clone()) });
            ok = false;
        }
        if node.utterance.is_some() && !sig.takes_utterance_attention {
            errors.push(TypeError { node: id, kind: TypeErrorKind::UnexpectedUtterance(sig.name.clone()) });
            ok = false;
        }
        if sig.arg_types.len() != node.children.len() {
            errors.push(TypeError {
                node: id,
                kind: TypeErrorKind::Arity { module: sig.name.clone(), expected: sig.arg_types.len(), got: node.children.len() },
            });
            ok = false;
        } else {
            for (pos, (want, child)) in sig.arg_types.iter().zip(&node.children).enumerate() {
                let Some(got) = types[child.0] else {
                    ok = false;
                    continue;
                };
                let accepted = match want {
                    ValueType::Program => got == ValueType::Boolean,
                    other => got == *other,
                };
                if !accepted {
                    let expected = if *want == ValueType::Program { ValueType::Boolean } else { *want };
                    errors.push(TypeError {
                        node: id,
                        kind: TypeErrorKind::ArgType { module: sig.name.clone(), position: pos, expected, got },
                    });
                    ok = false;
                }
            }
        }
        if ok {
            types[i] = Some(sig.return_type);
        }
    }

    if let Some(root) = types[0] {
        if !matches!(root, ValueType::Boolean | ValueType::Number | ValueType::TokenDist) {
            errors.push(TypeError { node: NodeId(0), kind: TypeErrorKind::BadRoot(root) });
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.node);
        return Err(TypeErrors(errors));
    }
    Ok(TypedProgram {
        program: program.clone(),
        types: types.into_iter().map(|t| t.expect("every node typed")).collect(),
        canonical,
        under_macro,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn check(s: &str) -> Result<TypedProgram, TypeErrors> {
        typecheck(&parse(s).unwrap(), &SignatureTable::visual())
    }

    #[test]
    fn figure_one_is_boolean() {
        let t = check("equal(count(find[dogs]), count(filter[black](find[dogs])))").unwrap();
        assert_eq!(t.root_type(), ValueType::Boolean);
        assert_eq!(t.node_type(NodeId(1)), ValueType::Number);
        assert_eq!(t.node_type(NodeId(5)), ValueType::BoxAttention);
    }

    #[test]
    fn filter_on_number_is_rejected() {
        let e = check("filter[black](count(find[dogs]))").unwrap_err();
        assert_eq!(
            e.0[0],
            TypeError {
                node: NodeId(0),
                kind: TypeErrorKind::ArgType {
                    module: "filter".into(),
                    position: 0,
                    expected: ValueType::BoxAttention,
                    got: ValueType::Number
                }
            }
        );
    }

    #[test]
    fn and_on_attention_is_rejected() {
        let e = check("and(find[dog], find[cat])").unwrap_err();
        assert!(e
            .0
            .iter()
            .all(|e| matches!(&e.kind, TypeErrorKind::ArgType { expected: ValueType::Boolean, got: ValueType::BoxAttention, .. })));
        assert_eq!(e.0.len(), 2);
    }

    #[test]
    fn unknown_and_arity() {
        let e = check("exist(llama[x])").unwrap_err();
        assert_eq!(e.0[0].node, NodeId(1));
        assert!(matches!(e.0[0].kind, TypeErrorKind::UnknownModule(_)));
        let e = check("exist(find[a], find[b])").unwrap_err();
        assert!(matches!(e.0[0].kind, TypeErrorKind::Arity { expected: 1, got: 2, .. }));
        let e = check("count[x](find[a])").unwrap_err();
        assert!(matches!(e.0[0].kind, TypeErrorKind::UnexpectedUtterance(_)));
    }

    #[test]
    fn roots_and_macros() {
        assert!(matches!(check("find[a]").unwrap_err().0[0].kind, TypeErrorKind::BadRoot(ValueType::BoxAttention)));
        assert_eq!(check("count(find[dogs])").unwrap().root_type(), ValueType::Number);

        let t = check("in-one-other-image(exist(find[dog]), exist(find[cat]))").unwrap();
        assert!(!t.is_under_macro(NodeId(0)));
        assert!((1..5).all(|i| t.is_under_macro(NodeId(i))));
        // Macro parameters must be Boolean programs.
        let e = check("in-each-image(count(find[dog]))").unwrap_err();
        assert!(matches!(e.0[0].kind, TypeErrorKind::ArgType { expected: ValueType::Boolean, .. }));
        let e = check("in-each-image(in-each-image(exist(find[dog])))").unwrap_err();
        assert!(matches!(e.0[0].kind, TypeErrorKind::NestedMacro(_)));
    }

    #[test]
    fn relocate_alias_resolves() {
        let t = check("exist(relocate[on](find[table]))").unwrap();
        assert_eq!(t.canonical_module(NodeId(1)), "project");
        assert_eq!(t.program().node(NodeId(1)).module, "relocate");
    }

    #[test]
    fn text_signatures_from_config() {
        let text = r#"{"modules": [
            {"name": "find", "args": [], "utterance": true, "returns": "TOKEN_DIST"},
            {"name": "find-num", "args": ["TOKEN_DIST"], "returns": "NUMBER"},
            {"name": "addition", "args": ["NUMBER", "NUMBER"], "returns": "NUMBER"}
        ]}"#;
        let table = SignatureTable::from_json(text).unwrap();
        let p = parse("addition(find-num(find[q]), find-num(find[r]))").unwrap();
        assert_eq!(typecheck(&p, &table).unwrap().root_type(), ValueType::Number);
        assert_eq!(typecheck(&parse("find[q]").unwrap(), &table).unwrap().root_type(), ValueType::TokenDist);
    }
}
