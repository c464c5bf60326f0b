//! Recursive-descent parser for linearized module programs.
//!
//! ```text
//! call := name ('[' freetext ']')? ('(' call (',' call)* ')')?
//! name := [a-z][a-z0-9-]*
//! ```
//!
//! Whitespace between tokens is ignored. Bracket text is kept verbatim apart
//! from trimming surrounding whitespace.

use thiserror::Error;

use super::ast::{Node, NodeId, Program, UtteranceAttention};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty program")]
    Empty,
    #[error("expected a module name")]
    ExpectedName,
    #[error("unclosed '['")]
    UnclosedBracket,
    #[error("unclosed '('")]
    UnclosedParen,
    #[error("empty argument list")]
    EmptyArguments,
    #[error("unexpected character {0:?}")]
    Unexpected(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("trailing input")]
    Trailing,
}

/// A parse failure located at a character offset into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    nodes: Vec<Node>,
}

impl Parser {
    fn err(&self, kind: ParseErrorKind, offset: usize) -> ParseError {
        ParseError { kind, offset }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn name(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_lowercase() => self.pos += 1,
            Some(c) => return Err(self.err(ParseErrorKind::Unexpected(c), start)),
            None => return Err(self.err(ParseErrorKind::ExpectedName, start)),
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn call(&mut self) -> Result<NodeId, ParseError> {
        self.skip_ws();
        let module = self.name()?;
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { module, utterance: None, children: Vec::new() });

        self.skip_ws();
        if self.peek() == Some('[') {
            let open = self.pos;
            self.pos += 1;
            let start = self.pos;
            while self.peek().is_some_and(|c| c != ']') {
                self.pos += 1;
            }
            if self.peek().is_none() {
                return Err(self.err(ParseErrorKind::UnclosedBracket, open));
            }
            let text: String = self.chars[start..self.pos].iter().collect();
            self.pos += 1;
            self.nodes[id.0].utterance = Some(UtteranceAttention::new(text.trim()));
            self.skip_ws();
        }

        if self.peek() == Some('(') {
            let open = self.pos;
            self.pos += 1;
            self.skip_ws();
            if self.peek() == Some(')') {
                return Err(self.err(ParseErrorKind::EmptyArguments, open));
            }
            let mut children = Vec::new();
            loop {
                let child = self.call().map_err(|e| match e.kind {
                    ParseErrorKind::ExpectedName | ParseErrorKind::UnexpectedEnd => self.err(ParseErrorKind::UnclosedParen, open),
                    _ => e,
                })?;
                children.push(child);
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => return Err(self.err(ParseErrorKind::Unexpected(c), self.pos)),
                    None => return Err(self.err(ParseErrorKind::UnclosedParen, open)),
                }
            }
            self.nodes[id.0].children = children;
        }
        Ok(id)
    }
}

/// Parse a linearized program such as `exist(filter[black](find[dog]))`.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0, nodes: Vec::new() };
    p.skip_ws();
    if p.peek().is_none() {
        return Err(p.err(ParseErrorKind::Empty, 0));
    }
    p.call()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        let kind = match p.chars[p.pos] {
            ')' | ']' => ParseErrorKind::Unexpected(p.chars[p.pos]),
            _ => ParseErrorKind::Trailing,
        };
        return Err(p.err(kind, p.pos));
    }
    Ok(Program::from_nodes(p.nodes).expect("parser emits pre-order nodes"))
}

/// Canonical text: no whitespace except a single space after each comma.
pub fn linearize(program: &Program) -> String {
    fn go(program: &Program, id: NodeId, out: &mut String) {
        let node = program.node(id);
        out.push_str(&node.module);
        if let Some(u) = &node.utterance {
            out.push('[');
            out.push_str(&u.text);
            out.push(']');
        }
        if !node.children.is_empty() {
            out.push('(');
            for (i, c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                go(program, *c, out);
            }
            out.push(')');
        }
    }
    let mut out = String::new();
    go(program, program.root(), &mut out);
    out
}
