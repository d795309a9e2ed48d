use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use visbias_core::classimg::read_trials;
use visbias_core::featspace::GrayImage;
use visbias_core::io::{read_vectors_file, write_jsonl, VectorRecord};

fn visbias(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visbias"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = visbias(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn error(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = visbias(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    (out.status.code().unwrap(), v["error"].clone())
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn first(path: PathBuf) -> VectorRecord {
    read_vectors_file(path).unwrap().remove(0)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

#[test]
fn one_trial_gives_one_line_and_a_sidecar() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["--seed", "1", "--out", "one.jsonl", "simulate", "--space", "ext:4", "--trials", "1"]);
    let text = fs::read_to_string(d.path().join("one.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let meta = json(d.path().join("one.jsonl.meta.json"));
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["config"]["trials"], 1);
    assert!(meta["tool"].as_str().unwrap().starts_with("visbias "));
}

#[test]
fn simulate_then_estimate_recovers_the_observer() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--seed", "9", "--out", "log.jsonl", "simulate", "--space", "ext:64", "--trials", "200000",
            "--template-out", "truth.jsonl"]);
    ok(p, &["--out", "est.jsonl", "estimate", "--log", "log.jsonl", "--space", "ext:64"]);
    let truth = first(p.join("truth.jsonl"));
    let est = first(p.join("est.jsonl"));
    assert_eq!(est.meta["trials_used"], 200000);
    let cos = cosine(&truth.values, &est.values);
    assert!(cos >= 0.9, "cosine {cos}");
}

#[test]
fn catch_trials_and_cohorts() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--seed", "2", "--out", "a.jsonl", "simulate", "--space", "raw:6x6", "--trials", "3000",
            "--catch-every", "10", "--cohort", "alpha"]);
    let log = read_trials(fs::read(p.join("a.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(log.iter().filter(|t| t.is_catch).count(), 300);
    let noise: Vec<_> = log.iter().filter(|t| !t.is_catch).cloned().collect();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &noise).unwrap();
    fs::write(p.join("noise.jsonl"), buf).unwrap();

    ok(p, &["--out", "with.jsonl", "estimate", "--log", "a.jsonl", "--space", "raw:6x6",
            "--cohort-key", "cohort", "--cohort-dir", "cohorts"]);
    ok(p, &["--out", "without.jsonl", "estimate", "--log", "noise.jsonl", "--space", "raw:6x6"]);
    let with = first(p.join("with.jsonl"));
    assert_eq!(with.values, first(p.join("without.jsonl")).values);
    // One cohort: its template is the pooled one.
    let alpha = first(p.join("cohorts/alpha.jsonl"));
    assert_eq!(alpha.values, with.values);
    assert_eq!(alpha.id, "alpha");
    let meta = json(p.join("with.jsonl.meta.json"));
    assert_eq!(meta["cohort_files"].as_object().unwrap().len(), 1);
}

#[test]
fn empty_cells_are_named() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--out", "one.jsonl", "simulate", "--space", "ext:4", "--trials", "1"]);
    let (code, err) = error(p, &["estimate", "--log", "one.jsonl", "--space", "ext:4"]);
    assert_eq!(code, 1);
    assert_eq!(err["kind"], "empty_cells");
    assert_eq!(err["cells"].as_array().unwrap().len(), 1);
    let (_, err) = error(p, &["estimate", "--log", "one.jsonl", "--space", "ext:4", "--mode", "classic"]);
    assert_eq!(err["kind"], "usage");
}

#[test]
fn bad_flags_report_usage() {
    let d = tempfile::tempdir().unwrap();
    let (code, err) = error(d.path(), &["simulate", "--space", "ext:4"]);
    assert_eq!(code, 2);
    assert_eq!(err["kind"], "usage");
    assert!(err["message"].as_str().unwrap().contains("--trials"));
    assert!(err["usage"].as_str().unwrap().contains("Usage:"));
    let (code, _) = error(d.path(), &["simulate", "--space", "bogus", "--trials", "3"]);
    assert_eq!(code, 1);
    let (code, _) = error(d.path(), &["--format", "csv", "fit", "--train", "x"]);
    assert_eq!(code, 2);
    let (code, _) = error(d.path(), &["fit", "--train", "x", "--theta", "0.5"]);
    assert_eq!(code, 2);
    let (code, err) = error(d.path(), &["eval", "--test", "missing.jsonl", "--template", "missing.jsonl"]);
    assert_eq!((code, err["kind"].as_str()), (1, Some("io")));
}

#[test]
fn fit_with_slack_aligned_prior_matches_plain_fit() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--seed", "4", "--out", "train.jsonl", "synth", "--d", "8", "--n-pos", "30", "--n-neg", "60"]);
    ok(p, &["--out", "plain.json", "fit", "--train", "train.jsonl", "--lambda", "0.5"]);
    let plain = json(p.join("plain.json"));
    let w: Vec<f64> = serde_json::from_value(plain["model"]["w"].clone()).unwrap();
    let mut prior = VectorRecord::new("prior", &visbias_core::featspace::FeatureVector::new("ext:8", w).unwrap());
    prior.kind = Some("prior".into());
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &[prior]).unwrap();
    fs::write(p.join("prior.jsonl"), buf).unwrap();
    ok(p, &["--out", "cone.json", "fit", "--train", "train.jsonl", "--lambda", "0.5",
            "--prior", "prior.jsonl", "--theta", "0.01"]);
    let cone = json(p.join("cone.json"));
    let (a, b) = (plain["model"]["objective"].as_f64().unwrap(), cone["model"]["objective"].as_f64().unwrap());
    assert!((a - b).abs() <= 0.01 * a, "{a} vs {b}");
    assert_eq!(cone["config"]["theta"], 0.01);
    assert!(cone["model"]["axis"].is_array());
}

#[test]
fn separable_data_scores_perfectly() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--seed", "5", "--out", "train.jsonl", "synth", "--d", "4", "--separation", "40"]);
    ok(p, &["--seed", "6", "--out", "test.jsonl", "synth", "--d", "4", "--separation", "40"]);
    ok(p, &["--out", "m.json", "fit", "--train", "train.jsonl"]);
    ok(p, &["--out", "ap.json", "eval", "--model", "m.json", "--test", "test.jsonl"]);
    assert_eq!(json(p.join("ap.json"))["result"]["ap"], 1.0);
    ok(p, &["--format", "csv", "--out", "ap.csv", "eval", "--model", "m.json", "--test", "test.jsonl"]);
    assert_eq!(fs::read_to_string(p.join("ap.csv")).unwrap(), "ap,chance,n,n_pos\n1,0.5,100,50\n");
    // A model fit elsewhere is refused.
    ok(p, &["--seed", "6", "--out", "other.jsonl", "synth", "--d", "5"]);
    let (_, err) = error(p, &["eval", "--model", "m.json", "--test", "other.jsonl"]);
    assert!(err["message"].as_str().unwrap().contains("space"));
}

#[test]
fn low_data_experiment_favours_the_prior_at_one_positive() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--out", "r.json", "experiment", "--recipe", "low-data"]);
    let r = json(p.join("r.json"));
    let mean = |cond: &str| {
        r["report"]["results"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["condition"] == cond && c["size"] == 1)
            .unwrap()["mean_ap"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(r["config"]["recipe"], "low-data");
    assert!(mean("svm+prior") >= mean("svm"));

    fs::write(p.join("bad.json"), r#"{"repeats": 2, "typo": 1}"#).unwrap();
    let (code, _) = error(p, &["experiment", "--recipe", "low-data", "--config", "bad.json"]);
    assert_eq!(code, 1);
}

#[test]
fn render_writes_decodable_png() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["--seed", "3", "--out", "log.jsonl", "simulate", "--space", "hog:3x2x9/8", "--trials", "400"]);
    ok(p, &["--out", "t.jsonl", "estimate", "--log", "log.jsonl", "--space", "hog:3x2x9/8"]);
    ok(p, &["--out", "t.png", "render", "--template", "t.jsonl", "--space", "hog:3x2x9/8", "--scale", "12"]);
    let img = GrayImage::from_png(&fs::read(p.join("t.png")).unwrap()).unwrap();
    assert_eq!((img.width(), img.height()), (36, 24));
    assert!(img.pixels().iter().any(|v| *v > 0.0));
    let (_, err) = error(p, &["render", "--template", "t.jsonl", "--space", "raw:6x9"]);
    assert_eq!(err["kind"], "space_mismatch");
}
