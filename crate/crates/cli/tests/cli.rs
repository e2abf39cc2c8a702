use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_statetrack"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn compile_then_run_parity() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["compile", "--target", "parity", "--out", "m.json"]);
    let stdout = ok(dir.path(), &["run", "--model", "m.json", "--word", "0110"]);
    assert_eq!(stdout.trim(), r#"{"labels":[0,1,0,0]}"#);
}

#[test]
fn run_under_a_cast_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["compile", "--target", "parity", "--out", "m.json"]);
    let grid = r#"{"kind":"explicit","values":[-1,0,1]}"#;
    let stdout = ok(dir.path(), &["run", "--model", "m.json", "--word", "1101", "--grid", grid]);
    assert_eq!(stdout.trim(), r#"{"labels":[1,0,0,1]}"#);
}

#[test]
fn gen_is_deterministic_and_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["gen", "--task", "parity", "--count", "10", "--seed", "7"]);
    let b = ok(dir.path(), &["gen", "--task", "parity", "--count", "10", "--seed", "7"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 10);
    std::fs::write(dir.path().join("d.jsonl"), &a).unwrap();
    ok(dir.path(), &["compile", "--target", "parity", "--out", "m.json"]);
    let preds = ok(dir.path(), &["run", "--model", "m.json", "--input", "d.jsonl"]);
    for (sample, pred) in a.lines().zip(preds.lines()) {
        let s: serde_json::Value = serde_json::from_str(sample).unwrap();
        let p: serde_json::Value = serde_json::from_str(pred).unwrap();
        assert_eq!(s["labels"], p["labels"]);
    }
}

#[test]
fn gen_covers_every_task_family() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--task", "modarith:5"],
        vec!["--task", "modarith-brackets:3"],
        vec!["--task", "group:S5", "--variant", "swaps_only"],
        vec!["--task", "group:Z60", "--variant", "k_tokens:3"],
        vec!["--task", "group:S4", "--variant", "up_to_3"],
    ] {
        let mut a = vec!["gen", "--count", "3", "--len-max", "12"];
        a.extend(args.iter().copied());
        assert_eq!(ok(dir.path(), &a).lines().count(), 3, "{args:?}");
    }
}

#[test]
fn compile_outputs_are_deterministic_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gens.json"), "[[1,0,2],[0,2,1]]").unwrap();
    std::fs::write(
        dir.path().join("fsa.json"),
        r#"{"alphabet_size":2,"num_states":3,"start":0,"delta":[[0,1],[1,2],[2,0]]}"#,
    )
    .unwrap();
    for target in ["parity", "cyclic:5", "symmetric:3", "perm:gens.json", "modrefl:5", "cascade:no00", "fsa:fsa.json"] {
        let a = ok(dir.path(), &["compile", "--target", target]);
        let b = ok(dir.path(), &["compile", "--target", target]);
        assert_eq!(a, b, "{target}");
        std::fs::write(dir.path().join("m.json"), &a).unwrap();
        ok(dir.path(), &["run", "--model", "m.json", "--word", "0,1,1,0"]);
    }
}

#[test]
fn demo_reports_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["demo", "--kind", "rotation:4", "--kmax", "5000"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["period"], 4);
    assert_eq!(v["verdict"], "pass");
    let out = ok(dir.path(), &["demo", "--kind", "negative", "--mode", "power-cast", "--kmax", "5000", "--dim", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdict"], "pass");
}

#[test]
fn verify_prop1_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["verify", "--suite", "prop1"]);
    assert_eq!(out.matches("PASS").count(), 3);
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["compile", "--bogus"]).status.code(), Some(2));
    let missing = run_in(dir.path(), &["run", "--model", "absent.json", "--word", "01"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());
    assert_eq!(run_in(dir.path(), &["compile", "--target", "cyclic:1"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["verify", "--suite", "nope"]).status.code(), Some(1));
}

#[test]
fn train_is_deterministic_and_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"lr":0.003,"batch_size":16,"steps":30,"warmup_steps":3,"eval_lengths":[8,16],"eval_samples":20,"eval_every":10}"#,
    )
    .unwrap();
    let args = |out: &'static str, csv: &'static str| {
        vec![
            "train", "--task", "parity", "--layer", "diag", "--range", "sym", "--config", "cfg.json", "--d-model", "8", "--threads", "1",
            "--seed", "3", "--out", out, "--metrics", csv,
        ]
    };
    ok(dir.path(), &args("a.json", "a.csv"));
    ok(dir.path(), &args("b.json", "b.csv"));
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("a.csv"), read("b.csv"));
    let csv = String::from_utf8(read("a.csv")).unwrap();
    assert!(csv.starts_with("step,loss,train_acc,len_8,len_16"));
    assert_eq!(csv.lines().count(), 4);
    let eval = ok(dir.path(), &["eval", "--model", "a.json", "--task", "parity", "--lengths", "8,16", "--samples", "20"]);
    assert_eq!(eval.lines().count(), 3);
    let run = ok(dir.path(), &["run", "--model", "a.json", "--word", "0110"]);
    assert!(run.starts_with(r#"{"labels":["#));
}

#[test]
fn train_full_and_delta_layers() {
    let dir = tempfile::tempdir().unwrap();
    for layer in ["delta", "full"] {
        ok(
            dir.path(),
            &[
                "train", "--task", "group:S3", "--layer", layer, "--range", "01", "--d-model", "6", "--num-layers", "1", "--steps", "3",
                "--head", "linear",
            ],
        );
    }
}
