//! Exact set semantics over a gold world: box attentions become object sets,
//! numbers are exact integers and truth values are Booleans.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::world::GoldWorld;
use super::SynthError;
use crate::dsl::{NodeId, TypedProgram};
use crate::exec::{LearnedKind, MacroKind};
use crate::geometry::ImageSide;
use crate::prob::CompareKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetValue {
    Objects(BTreeSet<usize>),
    Number(i64),
    Boolean(bool),
}

/// Per-node results: one value, or one per image under a macro.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetOutput {
    Single(SetValue),
    PerImage { left: SetValue, right: SetValue },
}

pub struct BruteForce {
    pub denotation: SetValue,
    pub nodes: Vec<SetOutput>,
}

struct Eval<'a> {
    program: &'a TypedProgram,
    world: &'a GoldWorld,
    max_count: i64,
    single: Vec<Option<SetValue>>,
    per_image: Vec<[Option<SetValue>; 2]>,
}

impl Eval<'_> {
    fn objects(&mut self, id: NodeId, image: Option<ImageSide>) -> Result<BTreeSet<usize>, SynthError> {
        match self.eval(id, image)? {
            SetValue::Objects(s) => Ok(s),
            v => unreachable!("typechecked node produced {v:?}"),
        }
    }

    fn number(&mut self, id: NodeId, image: Option<ImageSide>) -> Result<i64, SynthError> {
        match self.eval(id, image)? {
            SetValue::Number(n) => Ok(n),
            v => unreachable!("typechecked node produced {v:?}"),
        }
    }

    fn truth(&mut self, id: NodeId, image: Option<ImageSide>) -> Result<bool, SynthError> {
        match self.eval(id, image)? {
            SetValue::Boolean(b) => Ok(b),
            v => unreachable!("typechecked node produced {v:?}"),
        }
    }

    fn eval(&mut self, id: NodeId, image: Option<ImageSide>) -> Result<SetValue, SynthError> {
        let node = self.program.program().node(id);
        let children = node.children.clone();
        let module = self.program.canonical_module(id).to_string();
        let term = node.utterance.as_ref().map_or(String::new(), |u| u.text.clone());
        let world = self.world;
        let objs = &world.objects;
        let in_image = |o: usize, side: ImageSide| objs[o].image() == side;

        let value = if let Some(kind) = LearnedKind::from_module(&module) {
            let inputs = children.iter().map(|c| self.objects(*c, image)).collect::<Result<Vec<_>, _>>()?;
            let out: BTreeSet<usize> = match kind {
                LearnedKind::Find => objs.iter().filter(|o| o.category == term).map(|o| o.id).collect(),
                LearnedKind::Filter => inputs[0].iter().copied().filter(|o| objs[*o].attributes.contains(&term)).collect(),
                LearnedKind::WithRelation => {
                    inputs[0].iter().copied().filter(|o| inputs[1].iter().any(|t| objs[*o].relates_to(&term, *t))).collect()
                }
                LearnedKind::Project => {
                    objs.iter().map(|o| o.id).filter(|t| inputs[0].iter().any(|s| objs[*s].relates_to(&term, *t))).collect()
                }
            };
            SetValue::Objects(match image {
                Some(side) => out.into_iter().filter(|o| in_image(*o, side)).collect(),
                None => out,
            })
        } else if let Some(kind) = CompareKind::from_module(&module) {
            let max = self.max_count;
            let clamp = |v: i64| v.clamp(0, max);
            let a = self.number(children[0], image)?;
            let b = self.number(children[1], image)?;
            SetValue::Boolean(kind.holds(clamp(a), clamp(b)))
        } else if let Some(kind) = MacroKind::from_module(&module) {
            let mut runs = Vec::new();
            for c in &children {
                runs.push((self.truth(*c, Some(ImageSide::Left))?, self.truth(*c, Some(ImageSide::Right))?));
            }
            SetValue::Boolean(match kind {
                MacroKind::InAtLeastOneImage => runs[0].0 || runs[0].1,
                MacroKind::InEachImage => runs[0].0 && runs[0].1,
                MacroKind::InOneOtherImage => (runs[0].0 && runs[1].1) || (runs[0].1 && runs[1].0),
            })
        } else {
            match module.as_str() {
                "count" => SetValue::Number(self.objects(children[0], image)?.len() as i64),
                "exist" => SetValue::Boolean(!self.objects(children[0], image)?.is_empty()),
                "and" => {
                    let (a, b) = (self.truth(children[0], image)?, self.truth(children[1], image)?);
                    SetValue::Boolean(a && b)
                }
                "or" => {
                    let (a, b) = (self.truth(children[0], image)?, self.truth(children[1], image)?);
                    SetValue::Boolean(a || b)
                }
                "sum" => SetValue::Number(self.number(children[0], image)? + self.number(children[1], image)?),
                "difference" => SetValue::Number(self.number(children[0], image)? - self.number(children[1], image)?),
                "intersect" => {
                    let (a, b) = (self.objects(children[0], image)?, self.objects(children[1], image)?);
                    SetValue::Objects(a.intersection(&b).copied().collect())
                }
                "discard" => {
                    let (a, b) = (self.objects(children[0], image)?, self.objects(children[1], image)?);
                    SetValue::Objects(a.difference(&b).copied().collect())
                }
                "in-left-image" | "in-right-image" => {
                    let side = if module == "in-left-image" { ImageSide::Left } else { ImageSide::Right };
                    SetValue::Objects(self.objects(children[0], image)?.into_iter().filter(|o| in_image(*o, side)).collect())
                }
                _ => return Err(SynthError::Unsupported { node: id, module }),
            }
        };
        match image {
            None => self.single[id.0] = Some(value.clone()),
            Some(ImageSide::Left) => self.per_image[id.0][0] = Some(value.clone()),
            Some(ImageSide::Right) => self.per_image[id.0][1] = Some(value.clone()),
        }
        Ok(value)
    }
}

/// Evaluate `program` on the gold world. Numbers are clamped to `[0, max_count]`
/// only where they are compared, matching the executor's discretization.
pub fn brute_force(program: &TypedProgram, world: &GoldWorld, max_count: usize) -> Result<BruteForce, SynthError> {
    let n = program.len();
    let mut ev = Eval { program, world, max_count: max_count as i64, single: vec![None; n], per_image: vec![[None, None]; n] };
    let denotation = ev.eval(program.program().root(), None)?;
    let nodes = (0..n)
        .map(|i| {
            if program.is_under_macro(NodeId(i)) {
                let [l, r] = std::mem::take(&mut ev.per_image[i]);
                SetOutput::PerImage { left: l.expect("left run"), right: r.expect("right run") }
            } else {
                SetOutput::Single(ev.single[i].take().expect("evaluated"))
            }
        })
        .collect();
    Ok(BruteForce { denotation, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, typecheck, SignatureTable};
    use crate::geometry::BoundingBox;
    use crate::synth::world::{Relation, SyntheticObject};

    fn obj(id: usize, category: &str, attrs: &[&str], side: ImageSide) -> SyntheticObject {
        let x = 20.0 * id as f64;
        SyntheticObject {
            id,
            category: category.into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            gold_box: BoundingBox::new(x, 0.0, x + 10.0, 10.0, side).unwrap(),
            relations: vec![],
        }
    }

    fn run(src: &str, world: &GoldWorld) -> SetValue {
        let t = typecheck(&parse(src).unwrap(), &SignatureTable::visual()).unwrap();
        brute_force(&t, world, 72).unwrap().denotation
    }

    const FIGURE1: &str = "equal(count(find[dogs]), count(filter[black](find[dogs])))";

    #[test]
    fn figure_one() {
        use ImageSide::*;
        let world =
            GoldWorld { objects: vec![obj(0, "dogs", &["black"], Left), obj(1, "dogs", &[], Left), obj(2, "cats", &["black"], Right)] };
        assert_eq!(run(FIGURE1, &world), SetValue::Boolean(false));
        let all_black = GoldWorld { objects: vec![obj(0, "dogs", &["black"], Left), obj(1, "dogs", &["black"], Right)] };
        assert_eq!(run(FIGURE1, &all_black), SetValue::Boolean(true));
        let three = GoldWorld { objects: (0..3).map(|i| obj(i, "dogs", &[], Left)).collect() };
        assert_eq!(run("count(find[dogs])", &three), SetValue::Number(3));
    }

    #[test]
    fn relations_and_macros() {
        use ImageSide::*;
        let mut dog = obj(0, "dogs", &[], Left);
        dog.relations.push(Relation { name: "holding".into(), target: 1 });
        let world = GoldWorld { objects: vec![dog, obj(1, "balls", &[], Left), obj(2, "dogs", &[], Right), obj(3, "balls", &[], Right)] };
        assert_eq!(run("count(with-relation[holding](find[dogs], find[balls]))", &world), SetValue::Number(1));
        assert_eq!(run("count(project[holding](find[dogs]))", &world), SetValue::Number(1));
        assert_eq!(run("in-each-image(exist(with-relation[holding](find[dogs], find[balls])))", &world), SetValue::Boolean(false));
        assert_eq!(run("in-at-least-one-image(exist(with-relation[holding](find[dogs], find[balls])))", &world), SetValue::Boolean(true));
        assert_eq!(run("in-each-image(equal(count(find[dogs]), count(find[balls])))", &world), SetValue::Boolean(true));
        // two dogs overall, but per image the count is 1
        assert_eq!(run("in-at-least-one-image(greater(count(find[dogs]), count(find[balls])))", &world), SetValue::Boolean(false));
        assert_eq!(run("greater(count(find[dogs]), count(in-right-image(find[balls])))", &world), SetValue::Boolean(true));
        assert_eq!(
            run("in-one-other-image(exist(with-relation[holding](find[dogs], find[balls])), exist(find[dogs]))", &world),
            SetValue::Boolean(true)
        );
        assert_eq!(
            run("less(difference(count(find[balls]), count(find[dogs])), count(discard(find[dogs], find[dogs])))", &world),
            SetValue::Boolean(false)
        );
    }

    #[test]
    fn division_is_not_brute_forced() {
        let world = GoldWorld { objects: vec![] };
        let t = typecheck(&parse("equal(division(count(find[a]), count(find[b])), count(find[c]))").unwrap(), &SignatureTable::visual())
            .unwrap();
        assert!(matches!(brute_force(&t, &world, 72), Err(SynthError::Unsupported { .. })));
    }
}
