//! Python bindings for `nmnfaith`.
//!
//! Programs and Normal numbers are native classes; the algebra, IOU, text
//! scoring and the permutation test are plain functions. Execution,
//! evaluation and synthesis speak the CLI's JSON record formats as strings,
//! so Python callers use `json.loads` / `json.dumps` on either side.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use nmnfaith::dsl::{linearize, parse, typecheck, NodeId, SignatureTable, TypedProgram};
use nmnfaith::exec::{execute as run, ExecConfig, GroundingTable};
use nmnfaith::faith::{self, AggregationScheme, Aggregator, Alternative, VisualConfig};
use nmnfaith::geometry::{self, BoundingBox, ImageSide};
use nmnfaith::harness::{self, GroundingRecord, ProgramRecord, SceneRecord, TraceRecord};
use nmnfaith::prob::{self, ArithOp, CompareKind, NumberValue, DEFAULT_MAX_COUNT};
use nmnfaith::synth::SceneSpec;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(err)
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(err)
}

fn jsonl<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> PyResult<Vec<T>> {
    harness::parse_jsonl(text, Path::new(what)).map_err(err)
}

fn to_jsonl<T: Serialize>(records: &[T]) -> PyResult<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_json(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn signature_table(signatures: Option<&str>) -> PyResult<SignatureTable> {
    match signatures {
        None => Ok(SignatureTable::visual()),
        Some(text) => SignatureTable::from_json(text).map_err(err),
    }
}

fn parse_serde<T: serde::de::DeserializeOwned>(value: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown value {value:?}")))
}

/// `(id, module, type, utterance, children)`.
type NodeInfo = (usize, String, String, Option<String>, Vec<usize>);

/// A parsed and type-checked module program.
#[pyclass(name = "Program", module = "nmnfaith", frozen)]
struct PyProgram {
    typed: TypedProgram,
}

#[pymethods]
impl PyProgram {
    /// Parse `text` and type-check it against the visual modules, or against
    /// the signature table given as a JSON string.
    #[new]
    #[pyo3(signature = (text, signatures = None))]
    fn new(text: &str, signatures: Option<&str>) -> PyResult<Self> {
        let table = signature_table(signatures)?;
        let program = parse(text).map_err(err)?;
        Ok(Self { typed: typecheck(&program, &table).map_err(err)? })
    }

    /// Canonical program string.
    fn linearize(&self) -> String {
        linearize(self.typed.program())
    }

    #[getter]
    fn root_type(&self) -> String {
        self.typed.root_type().to_string()
    }

    /// `(id, module, type, utterance, children)` per node, in pre-order.
    fn nodes(&self) -> Vec<NodeInfo> {
        self.typed
            .program()
            .nodes()
            .map(|(id, n)| {
                (
                    id.0,
                    self.typed.canonical_module(id).to_string(),
                    self.typed.node_type(id).to_string(),
                    n.utterance.as_ref().map(|u| u.text.clone()),
                    n.children.iter().map(|c| c.0).collect(),
                )
            })
            .collect()
    }

    fn is_under_macro(&self, node: usize) -> PyResult<bool> {
        if node >= self.typed.len() {
            return Err(PyValueError::new_err(format!("no node {node}")));
        }
        Ok(self.typed.is_under_macro(NodeId(node)))
    }

    fn __len__(&self) -> usize {
        self.typed.len()
    }

    fn __repr__(&self) -> String {
        format!("Program({:?})", self.linearize())
    }
}

/// A Normal-distributed number `N(mean, var)`.
#[pyclass(name = "Number", module = "nmnfaith", frozen)]
struct PyNumber {
    value: NumberValue,
}

#[pymethods]
impl PyNumber {
    #[new]
    #[pyo3(signature = (mean, var = 0.0))]
    fn new(mean: f64, var: f64) -> PyResult<Self> {
        Ok(Self { value: NumberValue::new(mean, var).map_err(err)? })
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.value.mean
    }

    #[getter]
    fn var(&self) -> f64 {
        self.value.var
    }

    /// Categorical probabilities over `0..=max_count`.
    #[pyo3(signature = (max_count = DEFAULT_MAX_COUNT))]
    fn discretize(&self, max_count: usize) -> PyResult<Vec<f64>> {
        Ok(prob::discretize(&self.value, max_count).map_err(err)?.probs().to_vec())
    }

    fn __add__(&self, other: &PyNumber) -> PyResult<PyNumber> {
        arith("sum", self, other)
    }

    fn __sub__(&self, other: &PyNumber) -> PyResult<PyNumber> {
        arith("difference", self, other)
    }

    fn __truediv__(&self, other: &PyNumber) -> PyResult<PyNumber> {
        arith("division", self, other)
    }

    fn __repr__(&self) -> String {
        format!("Number(mean={}, var={})", self.value.mean, self.value.var)
    }
}

/// `sum`, `difference` or `division` of two independent Normals.
#[pyfunction]
fn arith(op: &str, a: &PyNumber, b: &PyNumber) -> PyResult<PyNumber> {
    let op: ArithOp = parse_serde(op)?;
    Ok(PyNumber { value: prob::gaussian_arith(op, &a.value, &b.value).map_err(err)? })
}

/// Probability that `kind(a, b)` holds (`equal`, `less`, `greater`, `less-equal`, `greater-equal`).
#[pyfunction]
#[pyo3(signature = (kind, a, b, max_count = DEFAULT_MAX_COUNT))]
fn compare(kind: &str, a: &PyNumber, b: &PyNumber, max_count: usize) -> PyResult<f64> {
    let kind = CompareKind::from_module(kind).ok_or_else(|| PyValueError::new_err(format!("unknown comparison {kind:?}")))?;
    Ok(prob::compare(kind, &a.value, &b.value, max_count).map_err(err)?.value())
}

/// IOU of two `[x1, y1, x2, y2]` boxes in the same image.
#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    let make = |c: [f64; 4]| BoundingBox::new(c[0], c[1], c[2], c[3], ImageSide::Left).map_err(err);
    Ok(geometry::iou(&make(a)?, &make(b)?))
}

/// Span cross-entropy of one token distribution against inclusive gold spans.
#[pyfunction]
fn text_instance_score(token_dist: Vec<f64>, spans: Vec<(usize, usize)>) -> PyResult<f64> {
    faith::text_instance_score(&token_dist, &spans).map_err(err)
}

/// Paired permutation test on the mean difference of `a` and `b`.
#[pyfunction]
#[pyo3(signature = (a, b, trials = faith::DEFAULT_TRIALS, seed = 0, alternative = "two-sided"))]
fn permutation_test<'py>(
    py: Python<'py>,
    a: Vec<f64>,
    b: Vec<f64>,
    trials: usize,
    seed: u64,
    alternative: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let alternative: Alternative = parse_serde(alternative)?;
    let r = py.detach(|| faith::permutation_test(&a, &b, trials, seed, Aggregator::Mean, alternative)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p_value", r.p_value)?;
    d.set_item("delta", r.delta)?;
    d.set_item("exceed", r.exceed)?;
    d.set_item("trials", r.trials)?;
    d.set_item("seed", r.seed)?;
    Ok(d)
}

/// Execute `program` over a scene record (JSON) with grounding records
/// (JSONL); returns the trace record as JSON.
#[pyfunction]
#[pyo3(signature = (program, scene, groundings, config = None))]
fn execute(program: &PyProgram, scene: &str, groundings: &str, config: Option<&str>) -> PyResult<String> {
    let scene: SceneRecord = from_json(scene)?;
    let config: ExecConfig = config.map_or(Ok(ExecConfig::default()), from_json)?;
    let records: Vec<GroundingRecord> = jsonl(groundings, "<groundings>")?;
    let mut table = GroundingTable::new();
    for g in &records {
        table.insert(g.to_grounding().map_err(err)?).map_err(err)?;
    }
    let exec = run(&program.typed, &scene.to_scene().map_err(err)?, &table, &config).map_err(err)?;
    to_json(&TraceRecord::from_trace(&scene.id, &program.typed, exec.trace))
}

/// Visual faithfulness of traces (JSONL, or `None` for the upper bound only)
/// against annotations and scenes (JSONL); returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (annotations, scenes, traces = None, config = None, aggregation = "examplewise", upper_bound = false))]
fn eval_visual(
    annotations: &str,
    scenes: &str,
    traces: Option<&str>,
    config: Option<&str>,
    aggregation: &str,
    upper_bound: bool,
) -> PyResult<String> {
    let config: VisualConfig = config.map_or(Ok(VisualConfig::default()), from_json)?;
    let scheme: AggregationScheme = aggregation.parse().map_err(err)?;
    let traces = traces.map(|t| jsonl(t, "<traces>")).transpose()?;
    let eval = harness::eval_visual(
        traces.as_deref(),
        &jsonl(annotations, "<annotations>")?,
        &jsonl(scenes, "<scenes>")?,
        &SignatureTable::visual(),
        &config,
        scheme,
        upper_bound,
    )
    .map_err(err)?;
    to_json(&eval)
}

/// Text faithfulness of annotation records (JSONL) carrying token distributions.
#[pyfunction]
fn eval_text(annotations: &str) -> PyResult<String> {
    to_json(&harness::eval_text(&jsonl(annotations, "<annotations>")?, &[]).map_err(err)?)
}

/// Synthesize a dataset for program records (JSONL). Returns a dict of JSONL
/// strings keyed `programs`, `scenes`, `groundings`, `annotations`, `expected`.
#[pyfunction]
#[pyo3(signature = (programs, seed = 0, noise = 0.0, spec = None))]
fn synthesize<'py>(py: Python<'py>, programs: &str, seed: u64, noise: f64, spec: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let spec: SceneSpec = spec.map_or(Ok(SceneSpec::default()), from_json)?;
    let programs: Vec<ProgramRecord> = jsonl(programs, "<programs>")?;
    let bundle = py.detach(|| harness::synthesize(&programs, &spec, &SignatureTable::visual(), seed, noise)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("programs", to_jsonl(&bundle.programs)?)?;
    d.set_item("scenes", to_jsonl(&bundle.scenes)?)?;
    d.set_item("groundings", to_jsonl(&bundle.groundings)?)?;
    d.set_item("annotations", to_jsonl(&bundle.annotations)?)?;
    d.set_item("expected", to_jsonl(&bundle.expected)?)?;
    Ok(d)
}

/// `count` random program records over the (JSON) spec's vocabulary.
#[pyfunction]
#[pyo3(signature = (count, seed = 0, spec = None))]
fn random_programs(count: usize, seed: u64, spec: Option<&str>) -> PyResult<String> {
    let spec: SceneSpec = spec.map_or(Ok(SceneSpec::default()), from_json)?;
    to_jsonl(&harness::random_programs(count, &spec, seed))
}

#[pymodule]
#[pyo3(name = "nmnfaith")]
fn nmnfaith_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProgram>()?;
    m.add_class::<PyNumber>()?;
    m.add_function(wrap_pyfunction!(arith, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(text_instance_score, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_test, m)?)?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(eval_visual, m)?)?;
    m.add_function(wrap_pyfunction!(eval_text, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(random_programs, m)?)?;
    m.add("DEFAULT_MAX_COUNT", DEFAULT_MAX_COUNT)?;
    Ok(())
}
