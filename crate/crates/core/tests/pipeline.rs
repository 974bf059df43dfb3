//! Report purity, worker invariance and the bundled demo data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use histocr::analysis::{aggregate_model, build_report, AnalysisOptions, LineAnalysis};
use histocr::ingest::{write_report, OutputFormat};
use histocr::metrics::BootstrapConfig;
use histocr::synth::{demo_corpus, write_demo_files};
use histocr::taxonomy::{default_confusion_table, Resources};

fn options(workers: usize) -> AnalysisOptions {
    AnalysisOptions {
        bootstrap: BootstrapConfig { resamples: 400, ..Default::default() },
        workers,
        ..Default::default()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn report_rebuilds_from_line_records() {
    let demo = demo_corpus();
    let table = default_confusion_table();
    let res = Resources { historical: &demo.historical, modern: Some(&demo.modern), table: &table };
    let opts = options(0);
    let report = build_report(&demo.records, &res, &opts, serde_json::Value::Null).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_report(&report, tmp.path(), &[OutputFormat::Json, OutputFormat::Lines]).unwrap();
    for model in &report.models {
        let text = fs::read_to_string(tmp.path().join(format!("lines_{}.jsonl", model.model))).unwrap();
        let lines: Vec<LineAnalysis> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let rebuilt = aggregate_model(&model.model, lines, report.lexical_detection, &opts).unwrap();
        assert_eq!(serde_json::to_value(&rebuilt).unwrap(), serde_json::to_value(model).unwrap(), "{}", model.model);
    }
}

#[test]
fn written_reports_do_not_depend_on_workers() {
    let demo = demo_corpus();
    let table = default_confusion_table();
    let res = Resources { historical: &demo.historical, modern: Some(&demo.modern), table: &table };
    let tmp = tempfile::tempdir().unwrap();
    let formats = [OutputFormat::Json, OutputFormat::Csv, OutputFormat::Lines];
    let mut outputs = Vec::new();
    for workers in [1, 4] {
        let report = build_report(&demo.records, &res, &options(workers), serde_json::Value::Null).unwrap();
        let dir = tmp.path().join(workers.to_string());
        write_report(&report, &dir, &formats).unwrap();
        outputs.push(files(&dir));
    }
    assert!(outputs[0].len() > 10);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bundled_demo_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    write_demo_files(&demo_corpus(), tmp.path()).unwrap();
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo");
    assert_eq!(files(tmp.path()), files(&bundled), "regenerate with `cargo run -p histocr --example make_demo`");
}
