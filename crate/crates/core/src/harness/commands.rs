//! The CLI's subcommands as library functions over parsed records.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::records::{
    ExpectedRecord, GroundingRecord, ProgramRecord, SceneRecord, TextAnnotationRecord, TextOutputRecord, TraceRecord,
    VisualAnnotationRecord,
};
use super::{invalid, HarnessError};
use crate::dsl::{linearize, parse, typecheck, SignatureTable, TypedProgram};
use crate::exec::{execute, ExecConfig, GroundingTable, Scene};
use crate::faith::{
    aggregate, instances_from_trace, permutation_test, score_text_annotations, text_aggregate, upper_bound_instances, AggregationScheme,
    Aggregator, Alternative, FaithfulnessReport, PermutationOutcome, TextFaithfulnessReport, VisualAnnotation, VisualConfig,
};
use crate::synth::{generate_example, random_program, SceneSpec, SynthError, MAX_PROGRAM_MODULES};

fn index_unique<'a, T>(kind: &str, items: &'a [T], id: impl Fn(&T) -> &str) -> Result<BTreeMap<&'a str, &'a T>, HarnessError> {
    let mut map = BTreeMap::new();
    for item in items {
        if map.insert(id(item), item).is_some() {
            return Err(invalid(format!("duplicate {kind} for example {:?}", id(item))));
        }
    }
    Ok(map)
}

fn scene_map(scenes: &[SceneRecord]) -> Result<HashMap<String, Scene>, HarnessError> {
    index_unique("scene", scenes, |s| &s.id)?;
    scenes.iter().map(|s| Ok((s.id.clone(), s.to_scene()?))).collect()
}

fn compile(record: &ProgramRecord, signatures: &SignatureTable) -> Result<TypedProgram, HarnessError> {
    let program = parse(&record.program).map_err(|e| invalid(format!("example {}: {e}", record.id)))?;
    typecheck(&program, signatures).map_err(|e| invalid(format!("example {}: {e}", record.id)))
}

/// Execute every program on its scene with the recorded groundings. Output is
/// sorted by example id; any missing scene or grounding is a validation error
/// naming the example and node.
pub fn run_exec(
    programs: &[ProgramRecord],
    scenes: &[SceneRecord],
    groundings: &[GroundingRecord],
    signatures: &SignatureTable,
    config: &ExecConfig,
) -> Result<Vec<TraceRecord>, HarnessError> {
    let programs = index_unique("program", programs, |p| &p.id)?;
    let scenes = scene_map(scenes)?;
    let mut tables: HashMap<&str, GroundingTable> = HashMap::new();
    for g in groundings {
        let program = programs.get(g.id.as_str()).ok_or_else(|| invalid(format!("grounding for unknown example {:?}", g.id)))?;
        tables.entry(g.id.as_str()).or_default().insert(g.to_grounding()?).map_err(|e| invalid(format!("example {}: {e}", program.id)))?;
    }
    let programs: Vec<&ProgramRecord> = programs.into_values().collect();
    programs
        .par_iter()
        .map(|record| {
            let typed = compile(record, signatures)?;
            let scene = scenes.get(&record.id).ok_or_else(|| invalid(format!("example {}: no scene", record.id)))?;
            let empty = GroundingTable::new();
            let table = tables.get(record.id.as_str()).unwrap_or(&empty);
            let exec = execute(&typed, scene, table, config).map_err(|e| invalid(format!("example {}: {e}", record.id)))?;
            Ok(TraceRecord::from_trace(&record.id, &typed, exec.trace))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualEvaluation {
    pub model: Option<FaithfulnessReport>,
    pub upper_bound: Option<FaithfulnessReport>,
}

fn check_visual_config(config: &VisualConfig) -> Result<(), HarnessError> {
    let unit = |name: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
        }
    };
    unit("IOU threshold", config.iou_threshold)?;
    unit("probability threshold", config.prob_threshold)?;
    if let Some(neg) = config.neg_iou_threshold {
        unit("negative IOU threshold", neg)?;
        if neg > config.iou_threshold {
            return Err(invalid(format!("negative IOU threshold {neg} exceeds the IOU threshold {}", config.iou_threshold)));
        }
    }
    Ok(())
}

/// Score module outputs in `traces` against gold box annotations, and
/// optionally the proposal-limited upper bound. At least one of the two must
/// be requested.
pub fn eval_visual(
    traces: Option<&[TraceRecord]>,
    annotations: &[VisualAnnotationRecord],
    scenes: &[SceneRecord],
    signatures: &SignatureTable,
    config: &VisualConfig,
    scheme: AggregationScheme,
    with_upper_bound: bool,
) -> Result<VisualEvaluation, HarnessError> {
    check_visual_config(config)?;
    if annotations.is_empty() {
        return Err(invalid("no visual annotations"));
    }
    if traces.is_none() && !with_upper_bound {
        return Err(invalid("nothing to evaluate: give module outputs or request the upper bound"));
    }
    let scenes = scene_map(scenes)?;
    let mut by_example: BTreeMap<String, Vec<VisualAnnotation>> = BTreeMap::new();
    for rec in annotations {
        let mut a = rec.to_annotation()?;
        if let Some(canonical) = signatures.canonical(&a.module) {
            a.module = canonical.to_string();
        }
        if !scenes.contains_key(&a.example) {
            return Err(invalid(format!("annotation {}/{}: no scene for example", a.example, a.node)));
        }
        by_example.entry(a.example.clone()).or_default().push(a);
    }
    let all: Vec<VisualAnnotation> = by_example.values().flatten().cloned().collect();
    let faith = |e: crate::faith::FaithError| invalid(e.to_string());

    let model = match traces {
        None => None,
        Some(traces) => {
            let traces = index_unique("trace", traces, |t| &t.id)?;
            let mut instances = Vec::new();
            for (id, anns) in &by_example {
                let record =
                    traces.get(id.as_str()).ok_or_else(|| invalid(format!("annotation for example {id:?} has no module outputs")))?;
                for a in anns {
                    let node = record
                        .nodes
                        .get(a.node.0)
                        .ok_or_else(|| invalid(format!("annotation {id}/{}: program has {} nodes", a.node, record.nodes.len())))?;
                    if node.module != a.module {
                        return Err(invalid(format!(
                            "annotation {id}/{}: module {:?} but the program has {:?}",
                            a.node, a.module, node.module
                        )));
                    }
                }
                let trace = record.to_trace()?;
                instances.extend(instances_from_trace(anns, &trace, &scenes[id], config).map_err(faith)?);
            }
            Some(aggregate(&instances, scheme).map_err(faith)?)
        }
    };
    let upper_bound = if with_upper_bound {
        Some(aggregate(&upper_bound_instances(&all, &scenes, config).map_err(faith)?, scheme).map_err(faith)?)
    } else {
        None
    };
    Ok(VisualEvaluation { model, upper_bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEvaluation {
    pub model: TextFaithfulnessReport,
}

/// Span cross-entropy of text module outputs. Token distributions come from
/// the annotation records or, when absent there, from `outputs`.
pub fn eval_text(annotations: &[TextAnnotationRecord], outputs: &[TextOutputRecord]) -> Result<TextEvaluation, HarnessError> {
    if annotations.is_empty() {
        return Err(invalid("no text annotations"));
    }
    let mut dists = BTreeMap::new();
    for o in outputs {
        if dists.insert((o.id.clone(), o.node), o.token_dist.clone()).is_some() {
            return Err(invalid(format!("duplicate module output {}/{}", o.id, o.node)));
        }
    }
    let anns = annotations.iter().map(|a| a.to_annotation(&dists)).collect::<Result<Vec<_>, _>>()?;
    let scores = score_text_annotations(&anns).map_err(|e| invalid(e.to_string()))?;
    Ok(TextEvaluation { model: text_aggregate(&scores).map_err(|e| invalid(e.to_string()))? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermMetric {
    Precision,
    Recall,
    #[default]
    F1,
}

impl PermMetric {
    fn key(self) -> &'static str {
        match self {
            PermMetric::Precision => "precision",
            PermMetric::Recall => "recall",
            PermMetric::F1 => "f1",
        }
    }
}

/// Per-example scores of two systems, aligned by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    pub ids: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Per-example scores from a report written by `eval-visual` or `eval-text`.
/// Examples without `module` are left out (`None`).
fn per_example(report: &Json, metric: PermMetric, module: Option<&str>) -> Result<BTreeMap<String, Option<f64>>, HarnessError> {
    let rows = report
        .get("model")
        .unwrap_or(report)
        .get("per_example")
        .and_then(Json::as_array)
        .ok_or_else(|| invalid("report has no per-example scores"))?;
    let mut out = BTreeMap::new();
    for row in rows {
        let id = row.get("id").and_then(Json::as_str).ok_or_else(|| invalid("per-example entry without an id"))?;
        let score = if let Some(mean) = row.get("mean") {
            if module.is_some() {
                return Err(invalid("text reports have no per-module per-example scores"));
            }
            Some(mean.as_f64().ok_or_else(|| invalid(format!("example {id}: mean is not a number")))?)
        } else {
            let prf = match module {
                None => row.get("overall"),
                Some(m) => row.get("modules").and_then(|ms| ms.get(m)),
            };
            match prf {
                None if module.is_some() => None,
                None => return Err(invalid(format!("example {id}: no overall score"))),
                Some(p) => {
                    Some(p.get(metric.key()).and_then(Json::as_f64).ok_or_else(|| invalid(format!("example {id}: no {}", metric.key())))?)
                }
            }
        };
        if out.insert(id.to_string(), score).is_some() {
            return Err(invalid(format!("duplicate per-example entry {id:?}")));
        }
    }
    Ok(out)
}

pub fn paired_scores(a: &Json, b: &Json, metric: PermMetric, module: Option<&str>) -> Result<PairedScores, HarnessError> {
    let (sa, sb) = (per_example(a, metric, module)?, per_example(b, metric, module)?);
    if let Some(id) = sa.keys().find(|k| !sb.contains_key(*k)).or_else(|| sb.keys().find(|k| !sa.contains_key(*k))) {
        return Err(invalid(format!("example {id:?} is scored by only one system")));
    }
    let mut paired = PairedScores { ids: vec![], a: vec![], b: vec![] };
    for (id, x) in sa {
        match (x, sb[&id]) {
            (Some(x), Some(y)) => {
                paired.ids.push(id);
                paired.a.push(x);
                paired.b.push(y);
            }
            (None, None) => {}
            _ => return Err(invalid(format!("example {id:?} has module {:?} in only one system", module.unwrap_or("")))),
        }
    }
    if paired.ids.is_empty() {
        return Err(invalid("no paired examples"));
    }
    Ok(paired)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestOutput {
    pub examples: usize,
    pub metric: String,
    pub module: Option<String>,
    pub alternative: Alternative,
    pub score_a: f64,
    pub score_b: f64,
    #[serde(flatten)]
    pub outcome: PermutationOutcome,
}

/// Paired permutation test on the mean per-example score of two reports.
pub fn perm_test(
    a: &Json,
    b: &Json,
    metric: PermMetric,
    module: Option<&str>,
    trials: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<PermTestOutput, HarnessError> {
    let paired = paired_scores(a, b, metric, module)?;
    let outcome =
        permutation_test(&paired.a, &paired.b, trials, seed, Aggregator::Mean, alternative).map_err(|e| invalid(e.to_string()))?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let text = a.get("model").unwrap_or(a).get("per_example").and_then(|r| r.get(0)).is_some_and(|r| r.get("mean").is_some());
    Ok(PermTestOutput {
        examples: paired.ids.len(),
        metric: if text { "cross-entropy".into() } else { metric.key().into() },
        module: module.map(str::to_string),
        alternative,
        score_a: mean(&paired.a),
        score_b: mean(&paired.b),
        outcome,
    })
}

/// A synthetic dataset ready for `exec` and `eval-visual`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthBundle {
    pub programs: Vec<ProgramRecord>,
    pub scenes: Vec<SceneRecord>,
    pub groundings: Vec<GroundingRecord>,
    pub annotations: Vec<VisualAnnotationRecord>,
    pub expected: Vec<ExpectedRecord>,
}

/// SplitMix64 finalizer over the run seed and the example index.
fn example_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `count` random programs over the spec's vocabulary, ids `synth-00000`, ...
pub fn random_programs(count: usize, spec: &SceneSpec, seed: u64) -> Vec<ProgramRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..count)
        .map(|i| ProgramRecord {
            id: format!("synth-{i:05}"),
            utterance: None,
            program: linearize(random_program(&mut rng, spec, MAX_PROGRAM_MODULES).program()),
        })
        .collect()
}

/// Generate a scene, oracle groundings, gold annotations and the brute-force
/// answer for every program. Example `i` (in id order) uses a seed derived
/// from `seed` and `i`.
pub fn synthesize(
    programs: &[ProgramRecord],
    spec: &SceneSpec,
    signatures: &SignatureTable,
    seed: u64,
    noise: f64,
) -> Result<SynthBundle, HarnessError> {
    spec.validate().map_err(|e| invalid(e.to_string()))?;
    let programs: Vec<&ProgramRecord> = index_unique("program", programs, |p| &p.id)?.into_values().collect();
    let examples = programs
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let typed = compile(record, signatures)?;
            generate_example(&record.id, &typed, spec, example_seed(seed, i), noise).map_err(|e| match e {
                SynthError::Exec(e) => HarnessError::Internal(format!("example {}: {e}", record.id)),
                e => invalid(format!("example {}: {e}", record.id)),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut bundle = SynthBundle { programs: programs.into_iter().cloned().collect(), ..Default::default() };
    for ex in examples {
        bundle.scenes.push(SceneRecord::from_scene(&ex.scene));
        bundle.groundings.extend(ex.groundings.iter().map(|g| GroundingRecord::from_grounding(&ex.id, g)));
        bundle.annotations.extend(ex.annotations.iter().map(VisualAnnotationRecord::from_annotation));
        bundle.expected.push(ExpectedRecord { id: ex.id, expected: ex.expected, world: ex.world });
    }
    Ok(bundle)
}
