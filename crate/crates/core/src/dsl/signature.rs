use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValueType {
    Boolean,
    Number,
    BoxAttention,
    TokenDist,
    /// Only legal as a macro parameter; the argument must be a Boolean program.
    Program,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Boolean => "BOOLEAN",
            ValueType::Number => "NUMBER",
            ValueType::BoxAttention => "BOX_ATTENTION",
            ValueType::TokenDist => "TOKEN_DIST",
            ValueType::Program => "PROGRAM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSignature {
    pub name: String,
    #[serde(rename = "args")]
    pub arg_types: Vec<ValueType>,
    #[serde(rename = "utterance", default)]
    pub takes_utterance_attention: bool,
    #[serde(rename = "returns")]
    pub return_type: ValueType,
}

impl ModuleSignature {
    pub fn new(name: &str, args: &[ValueType], utterance: bool, ret: ValueType) -> Self {
        Self { name: name.to_string(), arg_types: args.to_vec(), takes_utterance_attention: utterance, return_type: ret }
    }

    pub fn is_macro(&self) -> bool {
        self.arg_types.contains(&ValueType::Program)
    }
}

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("duplicate module signature {0:?}")]
    Duplicate(String),
    #[error("alias {alias:?} targets unknown module {target:?}")]
    DanglingAlias { alias: String, target: String },
    #[error("module {0:?}: PROGRAM may only appear as a parameter type")]
    ProgramReturn(String),
    #[error("module {0:?}: macros may not mix PROGRAM and value parameters")]
    MixedMacro(String),
    #[error("invalid module name {0:?}")]
    BadName(String),
    #[error("reading signature file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing signature file: {0}")]
    Json(#[from] serde_json::Error),
}

/// On-disk form of a signature table.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SignatureFile {
    #[serde(default)]
    pub modules: Vec<ModuleSignature>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

/// Module signatures keyed by name, plus name aliases (`relocate` → `project`).
#[derive(Debug, Clone, Default)]
pub struct SignatureTable {
    modules: BTreeMap<String, ModuleSignature>,
    aliases: BTreeMap<String, String>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase()) && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

impl SignatureTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The visual module set: learned box modules, count, quantifiers, number
    /// comparisons and arithmetic, set operations, image restriction and the three macros.
    pub fn visual() -> Self {
        use ValueType::*;
        let mut t = Self::empty();
        let sigs = [
            ModuleSignature::new("find", &[], true, BoxAttention),
            ModuleSignature::new("filter", &[BoxAttention], true, BoxAttention),
            ModuleSignature::new("with-relation", &[BoxAttention, BoxAttention], true, BoxAttention),
            ModuleSignature::new("project", &[BoxAttention], true, BoxAttention),
            ModuleSignature::new("count", &[BoxAttention], false, Number),
            ModuleSignature::new("exist", &[BoxAttention], false, Boolean),
            ModuleSignature::new("equal", &[Number, Number], false, Boolean),
            ModuleSignature::new("less", &[Number, Number], false, Boolean),
            ModuleSignature::new("greater", &[Number, Number], false, Boolean),
            ModuleSignature::new("less-equal", &[Number, Number], false, Boolean),
            ModuleSignature::new("greater-equal", &[Number, Number], false, Boolean),
            ModuleSignature::new("and", &[Boolean, Boolean], false, Boolean),
            ModuleSignature::new("or", &[Boolean, Boolean], false, Boolean),
            ModuleSignature::new("sum", &[Number, Number], false, Number),
            ModuleSignature::new("difference", &[Number, Number], false, Number),
            ModuleSignature::new("division", &[Number, Number], false, Number),
            ModuleSignature::new("intersect", &[BoxAttention, BoxAttention], false, BoxAttention),
            ModuleSignature::new("discard", &[BoxAttention, BoxAttention], false, BoxAttention),
            ModuleSignature::new("in-left-image", &[BoxAttention], false, BoxAttention),
            ModuleSignature::new("in-right-image", &[BoxAttention], false, BoxAttention),
            ModuleSignature::new("in-at-least-one-image", &[Program], false, Boolean),
            ModuleSignature::new("in-each-image", &[Program], false, Boolean),
            ModuleSignature::new("in-one-other-image", &[Program, Program], false, Boolean),
        ];
        for s in sigs {
            t.insert(s).expect("builtin table is consistent");
        }
        t.add_alias("relocate", "project").expect("builtin alias");
        t
    }

    pub fn insert(&mut self, sig: ModuleSignature) -> Result<(), SignatureError> {
        if !valid_name(&sig.name) {
            return Err(SignatureError::BadName(sig.name));
        }
        if sig.return_type == ValueType::Program {
            return Err(SignatureError::ProgramReturn(sig.name));
        }
        if sig.is_macro() && sig.arg_types.iter().any(|t| *t != ValueType::Program) {
            return Err(SignatureError::MixedMacro(sig.name));
        }
        if self.modules.contains_key(&sig.name) || self.aliases.contains_key(&sig.name) {
            return Err(SignatureError::Duplicate(sig.name));
        }
        self.modules.insert(sig.name.clone(), sig);
        Ok(())
    }

    pub fn add_alias(&mut self, alias: &str, target: &str) -> Result<(), SignatureError> {
        if !valid_name(alias) {
            return Err(SignatureError::BadName(alias.to_string()));
        }
        if !self.modules.contains_key(target) {
            return Err(SignatureError::DanglingAlias { alias: alias.into(), target: target.into() });
        }
        if self.modules.contains_key(alias) || self.aliases.contains_key(alias) {
            return Err(SignatureError::Duplicate(alias.to_string()));
        }
        self.aliases.insert(alias.to_string(), target.to_string());
        Ok(())
    }

    /// Merge a signature file into this table (duplicates are rejected).
    pub fn extend_from(&mut self, file: SignatureFile) -> Result<(), SignatureError> {
        for m in file.modules {
            self.insert(m)?;
        }
        for (alias, target) in file.aliases {
            self.add_alias(&alias, &target)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SignatureError> {
        let mut t = Self::empty();
        t.extend_from(serde_json::from_str(text)?)?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, SignatureError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Canonical module name for `name`, resolving aliases.
    pub fn canonical<'a>(&'a self, name: &'a str) -> Option<&'a str> {
        if self.modules.contains_key(name) {
            Some(name)
        } else {
            self.aliases.get(name).map(String::as_str)
        }
    }

    pub fn get(&self, name: &str) -> Option<&ModuleSignature> {
        self.canonical(name).and_then(|c| self.modules.get(c))
    }

    pub fn signatures(&self) -> impl Iterator<Item = &ModuleSignature> {
        self.modules.values()
    }

    pub fn to_file(&self) -> SignatureFile {
        SignatureFile { modules: self.modules.values().cloned().collect(), aliases: self.aliases.clone() }
    }
}
