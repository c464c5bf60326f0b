//! End-to-end runs of the `nmnfaith` binary: exit codes, validation messages
//! and byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nmnfaith(args: &[&str]) -> Output {
    nmnfaith_with_threads(args, None)
}

fn nmnfaith_with_threads(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nmnfaith"));
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// synth → exec → eval-visual (model and upper bound) → perm-test, all files in `dir`.
fn pipeline(dir: &Path, threads: usize) -> Vec<PathBuf> {
    let s = |x: &str| dir.join(x);
    let run = |args: &[&str]| {
        let out = nmnfaith_with_threads(args, Some(threads));
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    };
    run(&["synth", "--random", "40", "--seed", "17", "--noise", "0.8", "--out", p(dir)]);
    run(&["synth", "--random", "40", "--seed", "17", "--noise", "0.0", "--out", p(&s("clean"))]);
    run(&[
        "exec",
        "--programs",
        p(&s("programs.jsonl")),
        "--scenes",
        p(&s("scenes.jsonl")),
        "--groundings",
        p(&s("groundings.jsonl")),
        "--out",
        p(&s("traces.jsonl")),
    ]);
    let anns = s("annotations.jsonl");
    let scenes = s("scenes.jsonl");
    run(&[
        "eval-visual",
        "--annotations",
        p(&anns),
        "--scenes",
        p(&scenes),
        "--traces",
        p(&s("traces.jsonl")),
        "--upper-bound",
        "--format",
        "json",
        "--out",
        p(&s("noisy.json")),
    ]);
    run(&[
        "eval-visual",
        "--annotations",
        p(&s("clean/annotations.jsonl")),
        "--scenes",
        p(&s("clean/scenes.jsonl")),
        "--programs",
        p(&s("clean/programs.jsonl")),
        "--groundings",
        p(&s("clean/groundings.jsonl")),
        "--format",
        "json",
        "--out",
        p(&s("clean.json")),
    ]);
    run(&[
        "perm-test",
        "--a",
        p(&s("clean.json")),
        "--b",
        p(&s("noisy.json")),
        "--trials",
        "5000",
        "--seed",
        "3",
        "--format",
        "json",
        "--out",
        p(&s("perm.json")),
    ]);
    [
        "programs.jsonl",
        "scenes.jsonl",
        "groundings.jsonl",
        "annotations.jsonl",
        "expected.jsonl",
        "metadata.json",
        "traces.jsonl",
        "noisy.json",
        "clean.json",
        "perm.json",
    ]
    .iter()
    .map(|f| s(f))
    .collect()
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_worker_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = pipeline(a.path(), 1);
    let files_b = pipeline(b.path(), 4);
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{} differs", fa.display());
    }
    let perm: Value = serde_json::from_slice(&fs::read(a.path().join("perm.json")).unwrap()).unwrap();
    assert!(perm["result"]["p_value"].as_f64().unwrap() < 0.05, "{perm}");
    assert!(perm["result"]["delta"].as_f64().unwrap() > 0.0);
    let clean: Value = serde_json::from_slice(&fs::read(a.path().join("clean.json")).unwrap()).unwrap();
    assert_eq!(clean["metadata"]["parameters"]["sigma_sq"], 0.25);
    assert_eq!(clean["metadata"]["parameters"]["iou_threshold"], 0.5);
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SCENE: &str = r#"{"id":"e1","proposals":[{"idx":0,"image":"left","box":[0,0,10,10]},{"idx":1,"image":"left","box":[20,0,30,10]},{"idx":2,"image":"right","box":[0,0,10,10]}]}"#;

#[test]
fn missing_grounding_exits_2_and_cites_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // nodes: 0 exist, 1 with-relation, 2 find[dogs], 3 find[balls]
    let programs = write(d, "p.jsonl", r#"{"id":"e1","program":"exist(with-relation[holding](find[dogs], find[balls]))"}"#);
    let scenes = write(d, "s.jsonl", SCENE);
    let full = write(
        d,
        "g.jsonl",
        &[
            r#"{"id":"e1","node":1,"scores":[1,0,0]}"#,
            r#"{"id":"e1","node":2,"scores":[1,0,0]}"#,
            r#"{"id":"e1","node":3,"scores":[0,1,0]}"#,
        ]
        .join("\n"),
    );
    let ok = nmnfaith(&["exec", "--programs", p(&programs), "--scenes", p(&scenes), "--groundings", p(&full)]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let partial =
        write(d, "g2.jsonl", &[r#"{"id":"e1","node":1,"scores":[1,0,0]}"#, r#"{"id":"e1","node":2,"scores":[1,0,0]}"#].join("\n"));
    let bad = nmnfaith(&["exec", "--programs", p(&programs), "--scenes", p(&scenes), "--groundings", p(&partial)]);
    assert_eq!(code(&bad), 2);
    let msg = stderr(&bad);
    assert!(msg.contains("node 3") && msg.contains("e1"), "{msg}");
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenes = write(d, "s.jsonl", SCENE);
    let empty = write(d, "empty.jsonl", "");
    let out = nmnfaith(&["eval-visual", "--annotations", p(&empty), "--scenes", p(&scenes), "--upper-bound"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let span = write(d, "t.jsonl", r#"{"id":"e1","node":0,"module":"find","token_dist":[0.5,0.5],"spans":[[1,0]]}"#);
    assert_eq!(code(&nmnfaith(&["eval-text", "--annotations", p(&span)])), 2);

    let malformed = write(d, "bad.jsonl", "{\"id\": \"e1\", \"proposals\": [\n");
    let out = nmnfaith(&["eval-visual", "--annotations", p(&malformed), "--scenes", p(&scenes), "--upper-bound"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.jsonl:1"), "{}", stderr(&out));

    let unknown = write(d, "p.jsonl", r#"{"id":"x","program":"exist(find[unicorns])"}"#);
    assert_eq!(code(&nmnfaith(&["synth", "--programs", p(&unknown), "--out", p(&d.join("bundle"))])), 2);

    let untyped = write(d, "p2.jsonl", r#"{"id":"x","program":"count(exist(find[dogs]))"}"#);
    assert_eq!(code(&nmnfaith(&["synth", "--programs", p(&untyped), "--out", p(&d.join("bundle"))])), 2);

    assert_eq!(code(&nmnfaith(&["eval-visual", "--annotations", p(&empty), "--scenes", p(&scenes), "--aggregation", "median"])), 2);
    assert_eq!(code(&nmnfaith(&["exec", "--programs", p(&d.join("missing.jsonl")), "--scenes", p(&scenes), "--groundings", p(&empty)])), 2);
    assert_eq!(code(&nmnfaith(&["frobnicate"])), 2);
}

#[test]
fn perm_test_requires_matching_example_sets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let row = |id: &str, f1: f64| format!(r#"{{"id":"{id}","overall":{{"precision":{f1},"recall":{f1},"f1":{f1}}},"modules":{{}}}}"#);
    let a = write(d, "a.json", &format!(r#"{{"model":{{"per_example":[{},{}]}}}}"#, row("x", 1.0), row("y", 0.5)));
    let b = write(d, "b.json", &format!(r#"{{"model":{{"per_example":[{},{}]}}}}"#, row("x", 1.0), row("z", 0.5)));
    let out = nmnfaith(&["perm-test", "--a", p(&a), "--b", p(&b), "--trials", "100"]);
    assert_eq!(code(&out), 2);
    let same = nmnfaith(&["perm-test", "--a", p(&a), "--b", p(&a), "--trials", "100", "--format", "json"]);
    assert_eq!(code(&same), 0);
    let v: Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(v["result"]["p_value"], 1.0);
    assert_eq!(v["result"]["examples"], 2);
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let anns = write(d, "t.jsonl", r#"{"id":"e1","node":0,"module":"find","token_dist":[0.5,0.5],"spans":[[0,0]]}"#);
    let out = nmnfaith(&["eval-text", "--annotations", p(&anns), "--out", p(&d.join("no/such/dir/r.json"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn eval_text_reports_span_cross_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let anns = write(
        d,
        "t.jsonl",
        &[
            r#"{"id":"q1","node":0,"module":"find","token_dist":[0.5,0.25,0.25],"spans":[[0,0]]}"#,
            r#"{"id":"q1","node":1,"module":"filter","spans":[[1,2]]}"#,
        ]
        .join("\n"),
    );
    let outputs = write(d, "o.jsonl", r#"{"id":"q1","node":1,"token_dist":[0.5,0.25,0.25]}"#);
    let out = nmnfaith(&["eval-text", "--annotations", p(&anns), "--outputs", p(&outputs), "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // both instances capture mass 1/2
    let expected = std::f64::consts::LN_2;
    assert!((v["model"]["overall"]["mean"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!((v["model"]["modules"]["filter"]["mean"].as_f64().unwrap() - expected).abs() < 1e-12);
    let table = nmnfaith(&["eval-text", "--annotations", p(&anns), "--outputs", p(&outputs)]);
    assert!(String::from_utf8(table.stdout).unwrap().contains("0.6931"));
}

#[test]
fn text_signature_table_typechecks_but_does_not_execute() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let programs = write(
        d,
        "p.jsonl",
        r#"{"id":"e1","program":"subtraction(find-num(find[touchdowns]), find-num(filter[second half](find[field goals])))"}"#,
    );
    let scenes = write(d, "s.jsonl", SCENE);
    let empty = write(d, "g.jsonl", "");
    let sig = config("text_modules.json");
    let out = nmnfaith(&["exec", "--signatures", p(&sig), "--programs", p(&programs), "--scenes", p(&scenes), "--groundings", p(&empty)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not executable"), "{}", stderr(&out));
    let visual = nmnfaith(&["exec", "--programs", p(&programs), "--scenes", p(&scenes), "--groundings", p(&empty)]);
    assert!(stderr(&visual).contains("unknown module"), "{}", stderr(&visual));
}
