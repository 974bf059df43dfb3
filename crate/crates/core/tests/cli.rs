//! Runs the `histocr` binary end to end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_histocr"))
}

fn demo(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn normalize_reads_stdin() {
    let mut child = bin().arg("normalize").stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all("  pre\u{200B}ſent\u{00A0}\u{00A0}conduct \u{2014} end \n".as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "preſent conduct - end\n");
}

#[test]
fn lexicon_build_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.txt");
    fs::write(&corpus, "the preſent ſtate, the\nof futurity\n").unwrap();
    let outs: Vec<PathBuf> = ["a.lex", "b.lex"].iter().map(|n| tmp.path().join(n)).collect();
    for out in &outs {
        let o = bin()
            .env("SOURCE_DATE_EPOCH", "1000")
            .args(["lexicon", "build", "--corpus", p(&corpus), "--out", p(out), "--min-freq", "1"])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&outs[0]).unwrap(), fs::read(&outs[1]).unwrap());
    let lex = histocr::lexicon::load_lexicon(&outs[0]).unwrap();
    assert!(lex.contains("ſtate") && lex.contains("Futurity"));
    // each ſ word is also stored with s
    assert_eq!(lex.len(), 7);
}

#[test]
fn evaluate_is_byte_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (dir, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = tmp.path().join(dir);
        let o = run(&[
            "evaluate",
            "--manifest",
            &demo("manifest.jsonl"),
            "--resamples",
            "2000",
            "--workers",
            workers,
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(fs::read(out.join("evaluation.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn compare_with_missing_hypothesis_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.jsonl");
    fs::write(
        &manifest,
        concat!(
            r#"{"id":"L1","ref":"the ſtate","hyp":{"a":"the ſtate","b":"the ftate"}}"#,
            "\n",
            r#"{"id":"L2","ref":"of futurity","hyp":{"a":"of futurity"}}"#,
            "\n"
        ),
    )
    .unwrap();
    let o = run(&["compare", "--manifest", p(&manifest), "--models", "a", "b", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("L2"), "{}", stderr(&o));
}

#[test]
fn compare_writes_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--manifest",
        &demo("manifest.jsonl"),
        "--models",
        "cascade",
        "normalizer",
        "--resamples",
        "500",
        "--out",
        p(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(v["model_a"], "cascade");
    assert_eq!(v["deltas"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_without_lexicon_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--manifest", &demo("manifest.jsonl"), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lexicon build"), "{}", stderr(&o));
}

#[test]
fn missing_manifest_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["evaluate", "--manifest", p(&tmp.path().join("nope.jsonl")), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_manifest_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.jsonl");
    fs::write(&manifest, "{\"id\":\"L1\",\"ref\":\"x\",\"hyp\":{\"a\":\"x\"},\"extra\":1}\n").unwrap();
    let o = run(&["evaluate", "--manifest", p(&manifest), "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));

    let o = run(&["evaluate", "--manifest", p(&manifest), "--skip-bad-records", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(1), "no usable records remain");
}

#[test]
fn bad_flag_values_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = demo("manifest.jsonl");
    for extra in [["--level", "1.5"], ["--bins", "0"], ["--resamples", "0"]] {
        let mut args = vec!["evaluate", "--manifest", &manifest, "--out", p(tmp.path())];
        args.extend(extra);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{extra:?}: {}", stderr(&o));
    }
    assert_eq!(run(&["evaluate", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn flags_override_config_and_echo_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, format!("manifest = {:?}\nseed = 5\nresamples = 300\n", demo("manifest.jsonl"))).unwrap();
    let first = tmp.path().join("first");
    let o = run(&["evaluate", "--config", p(&cfg), "--seed", "6", "--out", p(&first)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(first.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 6);
    assert_eq!(report["config"]["resamples"], 300);

    // the echoed configuration reproduces the run on its own
    let echoed = tmp.path().join("echo.toml");
    fs::write(&echoed, toml::to_string(&report["config"]).unwrap()).unwrap();
    let second = tmp.path().join("second");
    let o = run(&["evaluate", "--config", p(&echoed), "--out", p(&second)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(first.join("evaluation.json")).unwrap(), fs::read(second.join("evaluation.json")).unwrap());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "sede = 5\n").unwrap();
    let o = run(&["evaluate", "--config", p(&cfg), "--manifest", &demo("manifest.jsonl")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sede"), "{}", stderr(&o));
}

#[test]
fn analyze_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "analyze",
        "--manifest",
        &demo("manifest.jsonl"),
        "--lexicon",
        &demo("historical.lex"),
        "--modern-lexicon",
        &demo("modern.lex"),
        "--resamples",
        "300",
        "--formats",
        "json,csv",
        "--out",
        p(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> =
        fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"report.json".to_owned()));
    assert!(names.contains(&"confusions_cascade.csv".to_owned()));
    assert!(names.iter().all(|n| !n.ends_with(".jsonl")), "{names:?}");
    let csv = fs::read_to_string(tmp.path().join("confusions_normalizer.csv")).unwrap();
    assert!(csv.starts_with("rank,from,to,count,share_of_substitutions\n"));
}
