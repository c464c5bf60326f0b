//! Random well-typed programs for fuzzing the executor.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::world::SceneSpec;
use crate::dsl::{parse, typecheck, SignatureTable, TypedProgram, ValueType};

/// Programs generated for fuzzing have at most this many modules.
pub const MAX_PROGRAM_MODULES: usize = 13;

struct Choice {
    module: &'static str,
    args: &'static [ValueType],
    /// Vocabulary the utterance argument is drawn from, if any.
    term: Option<Term>,
}

#[derive(Clone, Copy)]
enum Term {
    Category,
    Attribute,
    Relation,
}

fn choices(ty: ValueType) -> Vec<Choice> {
    use ValueType::*;
    let c = |module, args, term| Choice { module, args, term };
    match ty {
        Boolean => vec![
            c("exist", &[BoxAttention], None),
            c("equal", &[Number, Number], None),
            c("less", &[Number, Number], None),
            c("greater", &[Number, Number], None),
            c("less-equal", &[Number, Number], None),
            c("greater-equal", &[Number, Number], None),
            c("and", &[Boolean, Boolean], None),
            c("or", &[Boolean, Boolean], None),
            c("in-at-least-one-image", &[Boolean], None),
            c("in-each-image", &[Boolean], None),
            c("in-one-other-image", &[Boolean, Boolean], None),
        ],
        Number => vec![c("count", &[BoxAttention], None), c("sum", &[Number, Number], None), c("difference", &[Number, Number], None)],
        BoxAttention => vec![
            c("find", &[], Some(Term::Category)),
            c("filter", &[BoxAttention], Some(Term::Attribute)),
            c("with-relation", &[BoxAttention, BoxAttention], Some(Term::Relation)),
            c("project", &[BoxAttention], Some(Term::Relation)),
            c("intersect", &[BoxAttention, BoxAttention], None),
            c("discard", &[BoxAttention, BoxAttention], None),
            c("in-left-image", &[BoxAttention], None),
            c("in-right-image", &[BoxAttention], None),
        ],
        TokenDist | Program => vec![],
    }
}

fn is_macro(module: &str) -> bool {
    module.starts_with("in-") && module.ends_with("-image") && !matches!(module, "in-left-image" | "in-right-image")
}

/// Fewest modules in any program of type `ty` (macros excluded).
fn min_size(ty: ValueType) -> usize {
    match ty {
        ValueType::BoxAttention => 1,
        _ => 2,
    }
}

fn choice_min(c: &Choice) -> usize {
    1 + c.args.iter().map(|t| min_size(*t)).sum::<usize>()
}

struct Gen<'a, R> {
    rng: &'a mut R,
    spec: &'a SceneSpec,
}

impl<R: Rng> Gen<'_, R> {
    fn term(&mut self, t: Term) -> Option<String> {
        let vocab = match t {
            Term::Category => &self.spec.categories,
            Term::Attribute => &self.spec.attributes,
            Term::Relation => &self.spec.relations,
        };
        vocab.choose(self.rng).cloned()
    }

    /// A program of type `ty` with at most `budget` modules, as source text.
    fn program(&mut self, ty: ValueType, budget: usize, under_macro: bool) -> (String, usize) {
        let options: Vec<Choice> = choices(ty)
            .into_iter()
            .filter(|c| choice_min(c) <= budget && !(under_macro && is_macro(c.module)))
            .filter(|c| c.term.is_none_or(|t| self.term_available(t)))
            .collect();
        let choice = options.choose(self.rng).expect("a minimal program always fits");
        let mut text = choice.module.to_string();
        if let Some(t) = choice.term {
            text.push_str(&format!("[{}]", self.term(t).expect("checked available")));
        }
        let mut used = 1;
        let child_macro = under_macro || is_macro(choice.module);
        let mut slack = budget - choice_min(choice);
        let mut args = Vec::new();
        for (i, ty) in choice.args.iter().enumerate() {
            let extra = if i + 1 == choice.args.len() { slack } else { self.rng.random_range(0..=slack) };
            let child_budget = min_size(*ty) + extra;
            let (arg, n) = self.program(*ty, child_budget, child_macro);
            // whatever the child left unused goes back to its siblings
            slack = slack - extra + (child_budget - n);
            used += n;
            args.push(arg);
        }
        if !args.is_empty() {
            text.push('(');
            text.push_str(&args.join(", "));
            text.push(')');
        }
        (text, used)
    }

    fn term_available(&self, t: Term) -> bool {
        match t {
            Term::Category => !self.spec.categories.is_empty(),
            Term::Attribute => !self.spec.attributes.is_empty(),
            Term::Relation => !self.spec.relations.is_empty(),
        }
    }
}

/// A Boolean-rooted program with at most `max_modules` modules, no division
/// and no nested macros, using the spec's vocabulary. Requires `max_modules >= 2`.
pub fn random_program<R: Rng>(rng: &mut R, spec: &SceneSpec, max_modules: usize) -> TypedProgram {
    assert!(max_modules >= 2, "a Boolean program needs at least two modules");
    let (text, _) = Gen { rng, spec }.program(ValueType::Boolean, max_modules, false);
    let program = parse(&text).expect("generated text parses");
    typecheck(&program, &SignatureTable::visual()).expect("generated program typechecks")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn programs_respect_limits() {
        let spec = SceneSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sizes = std::collections::BTreeSet::new();
        let mut macros = 0;
        for _ in 0..500 {
            let p = random_program(&mut rng, &spec, MAX_PROGRAM_MODULES);
            assert!(p.len() <= MAX_PROGRAM_MODULES, "{}", p.program());
            assert_eq!(p.root_type(), ValueType::Boolean);
            sizes.insert(p.len());
            let src = p.program().to_string();
            assert!(!src.contains("division"));
            if (0..p.len()).any(|i| p.is_under_macro(crate::dsl::NodeId(i))) {
                macros += 1;
            }
        }
        assert!(sizes.len() > 6, "{sizes:?}");
        assert!(macros > 50);
    }

    #[test]
    fn smallest_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(random_program(&mut rng, &SceneSpec::default(), 2).len(), 2);
        }
    }
}
