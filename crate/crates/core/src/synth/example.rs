//! Complete synthetic examples: scene, recorded groundings, gold annotations
//! and the brute-force expected denotation.

use serde::{Deserialize, Serialize};

use super::brute::{brute_force, SetOutput, SetValue};
use super::oracle::OracleProvider;
use super::world::{generate_scene, GoldWorld, SceneSpec};
use super::SynthError;
use crate::dsl::{NodeId, TypedProgram};
use crate::exec::{execute, CountStrategy, ExecConfig, Grounding, LearnedKind, RecordingProvider, Scene};
use crate::faith::VisualAnnotation;
use crate::geometry::ImageSide;
use crate::prob::DEFAULT_MAX_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub id: String,
    pub scene: Scene,
    pub world: GoldWorld,
    pub groundings: Vec<Grounding>,
    pub annotations: Vec<VisualAnnotation>,
    pub expected: SetValue,
}

/// Check every learned module's argument against the spec's vocabulary.
pub fn check_vocabulary(program: &TypedProgram, spec: &SceneSpec) -> Result<(), SynthError> {
    for (id, node) in program.program().nodes() {
        let Some(kind) = LearnedKind::from_module(program.canonical_module(id)) else { continue };
        let vocab = match kind {
            LearnedKind::Find => &spec.categories,
            LearnedKind::Filter => &spec.attributes,
            LearnedKind::WithRelation | LearnedKind::Project => &spec.relations,
        };
        let term = node.utterance.as_ref().map_or("", |u| u.text.as_str());
        if !vocab.iter().any(|v| v == term) {
            return Err(SynthError::Vocabulary { node: id, module: node.module.clone(), term: term.to_string() });
        }
    }
    Ok(())
}

fn gold_annotations(id: &str, program: &TypedProgram, world: &GoldWorld, nodes: &[SetOutput]) -> Vec<VisualAnnotation> {
    let boxes = |v: &SetValue| match v {
        SetValue::Objects(s) => s.iter().map(|o| world.objects[*o].gold_box).collect(),
        other => unreachable!("learned module produced {other:?}"),
    };
    let mut out = Vec::new();
    for (i, output) in nodes.iter().enumerate() {
        let module = program.canonical_module(NodeId(i));
        if LearnedKind::from_module(module).is_none() {
            continue;
        }
        let ann =
            |image, v| VisualAnnotation { example: id.to_string(), node: NodeId(i), module: module.to_string(), image, boxes: boxes(v) };
        match output {
            SetOutput::Single(v) => out.push(ann(None, v)),
            SetOutput::PerImage { left, right } => {
                out.push(ann(Some(ImageSide::Left), left));
                out.push(ann(Some(ImageSide::Right), right));
            }
        }
    }
    out
}

/// Build one example. The grounding scores come from an oracle on the gold
/// world with noise `noise`; counts are recorded too, so the groundings also
/// serve the `provider` count strategy.
pub fn generate_example(id: &str, program: &TypedProgram, spec: &SceneSpec, seed: u64, noise: f64) -> Result<SyntheticExample, SynthError> {
    check_vocabulary(program, spec)?;
    let (scene, world) = generate_scene(spec, id, seed)?;
    let expected = brute_force(program, &world, DEFAULT_MAX_COUNT)?;
    let oracle = OracleProvider::new(&world, &scene, noise, seed.rotate_left(32) ^ 0x6f72_6163_6c65)?;
    let recorder = RecordingProvider::new(oracle);
    let config = ExecConfig { count_strategy: CountStrategy::Provider, ..ExecConfig::default() };
    execute(program, &scene, &recorder, &config).map_err(SynthError::Exec)?;
    let groundings = recorder.into_groundings();
    let annotations = gold_annotations(id, program, &world, &expected.nodes);
    Ok(SyntheticExample { id: id.to_string(), scene, world, groundings, annotations, expected: expected.denotation })
}
