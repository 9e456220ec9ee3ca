use std::path::Path;
use std::process::{Command, Output};

fn psgrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psgrank"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const CORPUS: &str = r#"{"id": "d1", "title": "Ocean", "text": "The tide rolls over the reef."}
{"id": "d2", "text": "Coral reef fish hide in the reef."}
{"id": "d3", "text": ""}
"#;

#[test]
fn index_reports_counts_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.jsonl", CORPUS);
    let first = psgrank(
        dir.path(),
        &["index", "--corpus", "c.jsonl", "--out", "store"],
    );
    assert!(first.status.success(), "{}", stderr(&first));
    let out = stdout(&first);
    assert!(out.contains("documents\t3"), "{out}");
    assert!(out.contains("empty_documents\t1"), "{out}");
    let path = out
        .lines()
        .find_map(|l| l.strip_prefix("manifest\t"))
        .unwrap()
        .to_string();
    let manifest = std::fs::read(&path).unwrap();

    let second = psgrank(
        dir.path(),
        &["index", "--corpus", "c.jsonl", "--out", "store"],
    );
    assert!(second.status.success());
    assert_eq!(manifest, std::fs::read(&path).unwrap());
}

#[test]
fn missing_input_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = psgrank(
        dir.path(),
        &["index", "--corpus", "absent.jsonl", "--out", "store"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.jsonl"), "{}", stderr(&o));
}

#[test]
fn unknown_method_is_a_validation_error_naming_the_choices() {
    let dir = tempfile::tempdir().unwrap();
    let o = psgrank(
        dir.path(),
        &[
            "synth",
            "--out",
            "s",
            "--docs",
            "60",
            "--queries",
            "4",
            "--methods",
            "LM,Bogus",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(
        err.contains("Bogus") && err.contains("JPDs") && err.contains("PsgLTR"),
        "{err}"
    );
}

#[test]
fn eval_of_perfect_and_empty_runs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "qrels.txt", "q1 0 d1 1\nq1 0 d2 0\nq2 0 d3 2\n");
    write(
        dir.path(),
        "perfect.run",
        "q1 Q0 d1 1 2.0 t\nq1 Q0 d2 2 1.0 t\nq2 Q0 d3 1 1.0 t\n",
    );
    write(dir.path(), "empty.run", "");

    let o = psgrank(
        dir.path(),
        &["eval", "--run", "perfect.run", "--qrels", "qrels.txt"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("MAP\tall\t1.0000"), "{out}");
    assert!(out.contains("NDCG@10\tall\t1.0000"), "{out}");

    let o = psgrank(
        dir.path(),
        &["eval", "--run", "empty.run", "--qrels", "qrels.txt"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for m in ["MAP", "P@10", "NDCG@10"] {
        assert!(out.contains(&format!("{m}\tall\t0.0000")), "{out}");
    }
}

#[test]
fn synth_then_run_writes_runs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = psgrank(
        dir.path(),
        &[
            "synth",
            "--out",
            "s",
            "--docs",
            "60",
            "--queries",
            "4",
            "--methods",
            "LM,RRF",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = psgrank(
        dir.path(),
        &["run", "--config", "s/experiment.toml", "--out", "out"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("RRF\t"), "{}", stdout(&o));
    let out = dir.path().join("out");
    for f in [
        "runs/LM.run",
        "runs/RRF.run",
        "report.json",
        "per_query.tsv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let o = psgrank(
        dir.path(),
        &[
            "eval",
            "--run",
            "out/runs/LM.run",
            "--qrels",
            "s/qrels.txt",
            "--json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["per_query"].as_object().unwrap().len(), 4);
}
