use std::path::{Path, PathBuf};

use tkgqa_cli::commands::synthetic_files;
use tkgqa_core::synthetic::{TWO_HOP_ANSWER, TWO_HOP_QUESTION};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = tkgqa_cli::run(std::iter::once("tkgqa").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Trains on the case-study graph and builds its store.
fn case_artifacts(dir: &Path) -> (PathBuf, PathBuf) {
    let ckpt = dir.join("p.ckpt");
    let store = dir.join("s.tks");
    let (code, _, err) = run(&["train", "--kg", p(&data("case_study.tsv")), "--pairs", p(&data("case_study_pairs.jsonl")), "--out", p(&ckpt)]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = run(&["build-store", "--kg", p(&data("case_study.tsv")), "--params", p(&ckpt), "--out", p(&store)]);
    assert_eq!(code, 0, "{err}");
    (ckpt, store)
}

#[test]
fn bundled_data_is_current() {
    for (name, bytes) in synthetic_files(0, 50) {
        let on_disk = std::fs::read(data(&name)).unwrap_or_default();
        assert!(on_disk == bytes, "data/{name} is stale; regenerate with `tkgqa synth --out-dir crates/cli/data`");
    }
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = run(&["ask", "--bogus"]);
    assert_eq!(code, 1);
    assert!(err.contains("--bogus"));
    assert!(err.contains("Usage"));
    assert_eq!(run(&["ask", "--question", "q"]).0, 1);
    assert_eq!(run(&["eval", "--dataset", "x", "--k", "0"]).0, 1);
    assert_eq!(run(&[]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("build-store"));
}

#[test]
fn plan_with_rule_planner() {
    let (code, out, _) = run(&["plan", "--question", "Who visited B at 2010?", "--backend", "rule_planner"]);
    assert_eq!(code, 0);
    assert_eq!(out, "1. Retrieve: Who visited B at 2010?\n");
}

#[test]
fn ask_answers_and_flags_ablations() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, store) = case_artifacts(dir.path());
    let backend = data("case_study_backend.toml");
    let base = ["--store", p(&store), "--params", p(&ckpt), "--backend", p(&backend)];
    let mut args = vec!["ask", "--question", TWO_HOP_QUESTION];
    args.extend(base);
    let (code, out, _) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(out, format!("{TWO_HOP_ANSWER}\n"));

    args.extend(["--no-plan", "--no-rerank"]);
    let (code, out, _) = run(&args);
    assert_eq!(code, 0);
    assert!(out.starts_with("# ablation: no-plan, no-rerank\n"));
}

#[test]
fn pipeline_errors_exit_two_and_name_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, store) = case_artifacts(dir.path());
    let script = dir.path().join("script.json");
    let plan_prompt = tkgqa_core::plan::render_plan_prompt("q");
    let entries = serde_json::json!([
        {"match": "exact", "key": plan_prompt, "response": "Retrieve: Who visited Cambodia?; Reason: Who?"},
        {"match": "regex", "key": "^Based on", "response": "['open"}
    ]);
    std::fs::write(&script, entries.to_string()).unwrap();
    let backend = dir.path().join("backend.toml");
    std::fs::write(&backend, "kind = \"scripted\"\nscript = \"script.json\"\n").unwrap();
    let trace = dir.path().join("trace.json");
    let (code, _, err) = run(&["ask", "--question", "q", "--store", p(&store), "--params", p(&ckpt), "--backend", p(&backend), "--trace", p(&trace)]);
    assert_eq!(code, 2);
    assert!(err.contains("failed at step 2 (Reason: Who?)"), "{err}");
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(saved["steps"].as_array().unwrap().len(), 2);

    let (code, _, _) = run(&["ask", "--question", "q", "--store", p(&dir.path().join("missing")), "--params", p(&ckpt), "--backend", p(&backend)]);
    assert_eq!(code, 2);
}

#[test]
fn traces_replay_through_a_scripted_backend() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, store) = case_artifacts(dir.path());
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let backend = data("case_study_backend.toml");
    let ask = |backend: &Path, trace: &Path| {
        run(&["ask", "--question", TWO_HOP_QUESTION, "--store", p(&store), "--params", p(&ckpt), "--backend", p(backend), "--trace", p(trace)])
    };
    assert_eq!(ask(&backend, &first).0, 0);
    let script = dir.path().join("replay.json");
    assert_eq!(run(&["replay-script", "--trace", p(&first), "--out", p(&script)]).0, 0);
    let replay_backend = dir.path().join("replay.toml");
    std::fs::write(&replay_backend, "kind = \"scripted\"\nscript = \"replay.json\"\n").unwrap();
    assert_eq!(ask(&replay_backend, &second).0, 0);
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, store) = case_artifacts(dir.path());
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "store = \"s.tks\"\nparams = \"p.ckpt\"\nbackend = \"{}\"\ntop_n = 3\nno-plan = true\n",
            p(&data("case_study_backend.toml"))
        ),
    )
    .unwrap();
    assert!(ckpt.exists() && store.exists());
    let (code, out, err) = run(&["--config", p(&config), "ask", "--question", "Who did Hun Sen wish to visit on 2009-10-04?"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, "# ablation: no-plan\nJapan\n");

    let (code, _, err) = run(&["--config", p(&config), "ask", "--question", "q", "--mu", "1.5"]);
    assert_eq!(code, 1);
    assert!(err.contains("--mu"));
    std::fs::write(&config, "top_n = \"many\"\n").unwrap();
    assert_eq!(run(&["--config", p(&config), "ask", "--question", "q"]).0, 1);
}

#[test]
fn eval_sweep_writes_one_report_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("p.ckpt");
    let store = dir.path().join("s.tks");
    let loss = dir.path().join("loss.csv");
    let (code, out, _) = run(&["train", "--kg", p(&data("suite.tsv")), "--pairs", p(&data("suite_pairs.jsonl")), "--out", p(&ckpt), "--loss-log", p(&loss)]);
    assert_eq!(code, 0);
    assert!(out.contains("epoch 2 loss"));
    assert_eq!(std::fs::read_to_string(&loss).unwrap().lines().count(), 3);
    assert_eq!(run(&["build-store", "--kg", p(&data("suite.tsv")), "--params", p(&ckpt), "--out", p(&store)]).0, 0);
    let report = dir.path().join("sweep.json");
    let (code, out, _) = run(&[
        "eval", "--dataset", p(&data("suite.jsonl")), "--store", p(&store), "--params", p(&ckpt),
        "--backend", p(&data("suite_backend.toml")), "--sweep-n", "5,10,15,20,25", "--report", p(&report), "--jobs", "3",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 6);
    let reports: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ns: Vec<u64> = reports.iter().map(|r| r["settings"]["top_n"].as_u64().unwrap()).collect();
    assert_eq!(ns, [5, 10, 15, 20, 25]);
}
