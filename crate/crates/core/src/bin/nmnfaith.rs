//! `nmnfaith`: execute module programs and score module-wise faithfulness.
//!
//! Exit status is 0 on success, 2 for invalid input (bad flags, malformed or
//! inconsistent files) and 3 for internal failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value as Json};

use nmnfaith::dsl::SignatureTable;
use nmnfaith::exec::{CountStrategy, ExecConfig};
use nmnfaith::faith::{AggregationScheme, Alternative, NegativeMode, VisualConfig, DEFAULT_TRIALS};
use nmnfaith::harness::{self, HarnessError, Metadata, PermMetric, ProgramRecord, TraceRecord};
use nmnfaith::synth::SceneSpec;

#[derive(Parser)]
#[command(name = "nmnfaith", version, about = "Execute NMN module programs and evaluate module-wise faithfulness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run programs over scenes with recorded groundings and write traces.
    Exec(ExecCmd),
    /// Score box-attention module outputs against gold box annotations.
    EvalVisual(EvalVisualCmd),
    /// Score token-distribution module outputs against gold spans.
    EvalText(EvalTextCmd),
    /// Paired permutation test between two evaluation reports.
    PermTest(PermTestCmd),
    /// Generate a synthetic dataset with oracle groundings and gold annotations.
    Synth(SynthCmd),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Json::String(s.to_string())).map_err(|_| format!("unknown value {s:?}"))
}

#[derive(Args)]
struct Signatures {
    /// Module signature table (JSON) used instead of the built-in visual modules.
    #[arg(long)]
    signatures: Option<PathBuf>,
}

impl Signatures {
    fn load(&self) -> Result<SignatureTable, HarnessError> {
        match &self.signatures {
            None => Ok(SignatureTable::visual()),
            Some(path) => SignatureTable::load(path).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display()))),
        }
    }
}

#[derive(Args)]
struct ExecFlags {
    /// Counting strategy: sum, overlap or provider.
    #[arg(long, default_value = "sum", value_parser = parse_serde::<CountStrategy>)]
    count_strategy: CountStrategy,
    /// Variance of counts produced by the count module.
    #[arg(long, default_value_t = 0.25)]
    sigma_sq: f64,
    /// Largest count value K; counts are categorical over 0..=K.
    #[arg(long, default_value_t = 72)]
    max_count: usize,
    /// IOU linking proposals into one cluster for overlap counting.
    #[arg(long, default_value_t = 0.5)]
    cluster_iou: f64,
}

impl ExecFlags {
    fn config(&self) -> ExecConfig {
        ExecConfig {
            max_count: self.max_count,
            sigma_sq: self.sigma_sq,
            count_strategy: self.count_strategy,
            cluster_iou: self.cluster_iou,
        }
    }

    fn echo(&self, m: Metadata) -> Metadata {
        m.with("count_strategy", self.count_strategy)
            .with("sigma_sq", self.sigma_sq)
            .with("max_count", self.max_count)
            .with("cluster_iou", self.cluster_iou)
    }
}

#[derive(Args)]
struct ExecCmd {
    #[arg(long)]
    programs: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    groundings: PathBuf,
    #[command(flatten)]
    signatures: Signatures,
    #[command(flatten)]
    exec: ExecFlags,
    /// Trace output (JSONL); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalVisualCmd {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
    /// Execution traces from `exec`.
    #[arg(long, conflicts_with_all = ["programs", "groundings"])]
    traces: Option<PathBuf>,
    /// Programs to execute first (with --groundings) instead of --traces.
    #[arg(long, requires = "groundings")]
    programs: Option<PathBuf>,
    #[arg(long, requires = "programs")]
    groundings: Option<PathBuf>,
    /// Also report the proposal-limited upper bound.
    #[arg(long)]
    upper_bound: bool,
    /// Gold box / proposal alignment needs IOU strictly above this.
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
    /// Predicted proposals whose best IOU lies in [this, iou-threshold] are ambiguous.
    #[arg(long)]
    neg_iou_threshold: Option<f64>,
    /// How ambiguous proposals affect precision: exclude or penalize.
    #[arg(long, default_value = "exclude", value_parser = parse_serde::<NegativeMode>)]
    neg_mode: NegativeMode,
    /// A proposal is selected when its probability is strictly above this.
    #[arg(long, default_value_t = 0.5)]
    prob_threshold: f64,
    /// examplewise, cumulative or occurrence.
    #[arg(long, default_value = "examplewise", value_parser = parse_serde::<AggregationScheme>)]
    aggregation: AggregationScheme,
    #[command(flatten)]
    signatures: Signatures,
    #[command(flatten)]
    exec: ExecFlags,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalTextCmd {
    /// Text annotations: {id, node, module, token_dist?, spans}.
    #[arg(long)]
    annotations: PathBuf,
    /// Module outputs {id, node, token_dist} for annotations without token_dist.
    #[arg(long)]
    outputs: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PermTestCmd {
    /// Report of system A.
    #[arg(long)]
    a: PathBuf,
    /// Report of system B.
    #[arg(long)]
    b: PathBuf,
    /// precision, recall or f1 (visual reports).
    #[arg(long, default_value = "f1", value_parser = parse_serde::<PermMetric>)]
    metric: PermMetric,
    /// Compare one module type instead of the overall score.
    #[arg(long)]
    module: Option<String>,
    #[arg(long, default_value = "two-sided", value_parser = parse_serde::<Alternative>)]
    alternative: Alternative,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    /// Scene-generation spec (JSON); defaults apply to omitted fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Programs to instantiate.
    #[arg(long, conflicts_with = "random")]
    programs: Option<PathBuf>,
    /// Generate this many random programs instead.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Oracle noise ε: scores become (1 - ε)·s + ε·u.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    signatures: Signatures,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn emit<T: Serialize>(value: &T, table: impl FnOnce() -> String, format: Format, out: Option<&Path>) -> Result<(), HarnessError> {
    if let Some(path) = out {
        harness::write_json(path, value)?;
    }
    match (format, out) {
        (Format::Table, _) => print!("{}", table()),
        (Format::Json, None) => println!("{}", serde_json::to_string_pretty(value).map_err(|e| HarnessError::Internal(e.to_string()))?),
        (Format::Json, Some(_)) => {}
    }
    Ok(())
}

fn exec(cmd: &ExecCmd) -> Result<(), HarnessError> {
    let traces = harness::run_exec(
        &harness::read_jsonl::<ProgramRecord>(&cmd.programs)?,
        &harness::read_jsonl(&cmd.scenes)?,
        &harness::read_jsonl(&cmd.groundings)?,
        &cmd.signatures.load()?,
        &cmd.exec.config(),
    )?;
    match &cmd.out {
        Some(path) => harness::write_jsonl(path, &traces),
        None => {
            for t in &traces {
                println!("{}", serde_json::to_string(t).map_err(|e| HarnessError::Internal(e.to_string()))?);
            }
            Ok(())
        }
    }
}

fn eval_visual(cmd: &EvalVisualCmd) -> Result<(), HarnessError> {
    let signatures = cmd.signatures.load()?;
    let scenes = harness::read_jsonl(&cmd.scenes)?;
    let mut meta = Metadata::new("eval-visual")
        .with("iou_threshold", cmd.iou_threshold)
        .with("neg_iou_threshold", cmd.neg_iou_threshold)
        .with("neg_mode", cmd.neg_mode)
        .with("prob_threshold", cmd.prob_threshold)
        .with("aggregation", cmd.aggregation)
        .with("upper_bound", cmd.upper_bound);
    let traces: Option<Vec<TraceRecord>> = match (&cmd.traces, &cmd.programs, &cmd.groundings) {
        (Some(t), _, _) => Some(harness::read_jsonl(t)?),
        (None, Some(p), Some(g)) => {
            meta = cmd.exec.echo(meta);
            Some(harness::run_exec(&harness::read_jsonl(p)?, &scenes, &harness::read_jsonl(g)?, &signatures, &cmd.exec.config())?)
        }
        _ => None,
    };
    let config = VisualConfig {
        iou_threshold: cmd.iou_threshold,
        prob_threshold: cmd.prob_threshold,
        neg_iou_threshold: cmd.neg_iou_threshold,
        neg_mode: cmd.neg_mode,
    };
    let annotations = harness::read_jsonl(&cmd.annotations)?;
    let eval = harness::eval_visual(traces.as_deref(), &annotations, &scenes, &signatures, &config, cmd.aggregation, cmd.upper_bound)?;
    let doc = json!({ "metadata": meta, "model": eval.model, "upper_bound": eval.upper_bound });
    emit(&doc, || harness::render_visual(eval.model.as_ref(), eval.upper_bound.as_ref()), cmd.format, cmd.out.as_deref())
}

fn eval_text(cmd: &EvalTextCmd) -> Result<(), HarnessError> {
    let outputs = match &cmd.outputs {
        Some(p) => harness::read_jsonl(p)?,
        None => vec![],
    };
    let eval = harness::eval_text(&harness::read_jsonl(&cmd.annotations)?, &outputs)?;
    let doc = json!({ "metadata": Metadata::new("eval-text"), "model": eval.model });
    emit(&doc, || harness::render_text(&eval.model), cmd.format, cmd.out.as_deref())
}

fn perm_test(cmd: &PermTestCmd) -> Result<(), HarnessError> {
    let (a, b): (Json, Json) = (harness::read_json(&cmd.a)?, harness::read_json(&cmd.b)?);
    let result = harness::perm_test(&a, &b, cmd.metric, cmd.module.as_deref(), cmd.trials, cmd.seed, cmd.alternative)?;
    let meta = Metadata::new("perm-test")
        .with("metric", cmd.metric)
        .with("module", &cmd.module)
        .with("alternative", cmd.alternative)
        .with("trials", cmd.trials)
        .with("seed", cmd.seed);
    let doc = json!({ "metadata": meta, "result": result });
    emit(&doc, || harness::render_perm(&result), cmd.format, cmd.out.as_deref())
}

fn synth(cmd: &SynthCmd) -> Result<(), HarnessError> {
    let spec: SceneSpec = match &cmd.spec {
        Some(p) => harness::read_json(p)?,
        None => SceneSpec::default(),
    };
    let programs = match (&cmd.programs, cmd.random) {
        (Some(p), _) => harness::read_jsonl(p)?,
        (None, Some(n)) => harness::random_programs(n, &spec, cmd.seed),
        (None, None) => return Err(HarnessError::Validation("give --programs or --random".into())),
    };
    let bundle = harness::synthesize(&programs, &spec, &cmd.signatures.load()?, cmd.seed, cmd.noise)?;
    let dir = &cmd.out;
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write { path: dir.clone(), source })?;
    harness::write_jsonl(&dir.join("programs.jsonl"), &bundle.programs)?;
    harness::write_jsonl(&dir.join("scenes.jsonl"), &bundle.scenes)?;
    harness::write_jsonl(&dir.join("groundings.jsonl"), &bundle.groundings)?;
    harness::write_jsonl(&dir.join("annotations.jsonl"), &bundle.annotations)?;
    harness::write_jsonl(&dir.join("expected.jsonl"), &bundle.expected)?;
    let meta = Metadata::new("synth").with("seed", cmd.seed).with("noise", cmd.noise).with("random", cmd.random).with("spec", &spec);
    harness::write_json(&dir.join("metadata.json"), &meta)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Exec(c) => exec(c),
        Command::EvalVisual(c) => eval_visual(c),
        Command::EvalText(c) => eval_text(c),
        Command::PermTest(c) => perm_test(c),
        Command::Synth(c) => synth(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nmnfaith: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
