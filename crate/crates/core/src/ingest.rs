//! Manifest and corpus input, report output.
//!
//! A manifest is JSON-lines, one record per line:
//!
//! ```text
//! {"id": "L1", "ref": "the cat", "hyp": {"m1": "thecat"}, "modality": "bw", "source": "p. 12"}
//! ```
//!
//! `modality` and `source` are optional. Blank lines are skipped. Reference
//! and hypothesis text is normalized on the way in, exactly once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analysis::{AnalysisReport, Distribution, ModelReport};
use crate::textnorm::{normalize, NormalizedText};

pub const DEFAULT_MODALITIES: [&str; 2] = ["color", "bw"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: line {line}: {message}")]
    Decode { path: String, line: usize, message: String },
    #[error("line {line}: key '{key}': {message}")]
    Schema { line: usize, key: String, message: String },
    #[error("line {line}: duplicate id '{id}' (first seen on line {first_line})")]
    DuplicateId { line: usize, id: String, first_line: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io { path: path.display().to_string(), source }
    }
}

/// A note about a record or line that did not abort the run.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub message: String,
}

/// One evaluation unit: a reference line and one hypothesis per model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRecord {
    pub id: String,
    pub reference: NormalizedText,
    pub hypotheses: BTreeMap<String, NormalizedText>,
    pub modality: Option<String>,
    pub source: Option<String>,
}

impl LineRecord {
    /// Builds a record from raw text, normalizing every line.
    pub fn new<'a>(id: &str, reference: &str, hypotheses: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            id: id.to_owned(),
            reference: normalize(reference),
            hypotheses: hypotheses.into_iter().map(|(m, h)| (m.to_owned(), normalize(h))).collect(),
            modality: None,
            source: None,
        }
    }

    pub fn with_modality(mut self, modality: &str) -> Self {
        self.modality = Some(modality.to_owned());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestOptions {
    /// Downgrade invalid records to diagnostics instead of failing.
    pub skip_bad_records: bool,
    /// Accepted values of the `modality` key.
    pub modalities: BTreeSet<String>,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        Self { skip_bad_records: false, modalities: DEFAULT_MODALITIES.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<LineRecord>,
    /// Records skipped under `skip_bad_records`.
    pub skipped: Vec<Diagnostic>,
}

impl Manifest {
    /// Model ids present in any record, sorted.
    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.records.iter().flat_map(|r| r.hypotheses.keys()).collect();
        set.into_iter().cloned().collect()
    }
}

const KEYS: [&str; 5] = ["id", "ref", "hyp", "modality", "source"];

fn parse_record(line: usize, text: &str, options: &ManifestOptions) -> Result<LineRecord, IngestError> {
    let schema =
        |key: &str, message: &str| IngestError::Schema { line, key: key.to_owned(), message: message.to_owned() };
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::Decode {
        path: "manifest".into(),
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(schema("<record>", "record must be a JSON object"));
    };
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(schema(k, "unknown key"));
    }
    let string = |obj: &Map<String, Value>, key: &str, required: bool| -> Result<Option<String>, IngestError> {
        match obj.get(key) {
            None | Some(Value::Null) if !required => Ok(None),
            None | Some(Value::Null) => Err(schema(key, "missing required key")),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(schema(key, "expected a string")),
        }
    };
    let id = string(&obj, "id", true)?.unwrap_or_default();
    if id.is_empty() {
        return Err(schema("id", "must not be empty"));
    }
    let reference = string(&obj, "ref", true)?.unwrap_or_default();
    let hyp = match obj.get("hyp") {
        None | Some(Value::Null) => return Err(schema("hyp", "missing required key")),
        Some(Value::Object(h)) => h,
        Some(_) => return Err(schema("hyp", "expected an object of model id to text")),
    };
    if hyp.is_empty() {
        return Err(schema("hyp", "needs at least one hypothesis"));
    }
    let mut hypotheses = BTreeMap::new();
    for (model, text) in hyp {
        let key = format!("hyp.{model}");
        if model.is_empty() {
            return Err(schema(&key, "model id must not be empty"));
        }
        let Value::String(text) = text else {
            return Err(schema(&key, "expected a string"));
        };
        hypotheses.insert(model.clone(), normalize(text));
    }
    let modality = string(&obj, "modality", false)?;
    if let Some(m) = &modality {
        if !options.modalities.contains(m) {
            let allowed: Vec<&str> = options.modalities.iter().map(String::as_str).collect();
            return Err(schema("modality", &format!("'{m}' is not one of {}", allowed.join(", "))));
        }
    }
    Ok(LineRecord {
        id,
        reference: normalize(&reference),
        hypotheses,
        modality,
        source: string(&obj, "source", false)?,
    })
}

/// Parses a manifest stream. Record order is preserved.
pub fn read_manifest<R: BufRead>(input: R, options: &ManifestOptions) -> Result<Manifest, IngestError> {
    let mut manifest = Manifest::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in input.split(b'\n').enumerate() {
        let n = i + 1;
        let bytes = line.map_err(|e| IngestError::Io { path: "manifest".into(), source: e })?;
        let parsed = match String::from_utf8(bytes) {
            Err(e) => Err(IngestError::Decode { path: "manifest".into(), line: n, message: e.to_string() }),
            Ok(text) if text.trim().is_empty() => continue,
            Ok(text) => parse_record(n, &text, options).and_then(|rec| match seen.get(&rec.id) {
                Some(&first_line) => Err(IngestError::DuplicateId { line: n, id: rec.id, first_line }),
                None => Ok(rec),
            }),
        };
        match parsed {
            Ok(rec) => {
                seen.insert(rec.id.clone(), n);
                manifest.records.push(rec);
            }
            Err(e) if options.skip_bad_records => {
                manifest.skipped.push(Diagnostic { line_id: None, model: None, message: format!("skipped: {e}") })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(manifest)
}

pub fn load_manifest(path: &Path, options: &ManifestOptions) -> Result<Manifest, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_manifest(BufReader::new(file), options).map_err(|e| match e {
        IngestError::Decode { line, message, .. } => {
            IngestError::Decode { path: path.display().to_string(), line, message }
        }
        IngestError::Io { source, .. } => IngestError::io(path, source),
        other => other,
    })
}

/// Writes records as a manifest that [`read_manifest`] reads back.
pub fn write_manifest<W: Write>(records: &[LineRecord], mut out: W) -> io::Result<()> {
    for rec in records {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(rec.id.clone()));
        obj.insert("ref".into(), Value::String(rec.reference.as_str().to_owned()));
        let hyp: Map<String, Value> =
            rec.hypotheses.iter().map(|(m, h)| (m.clone(), Value::String(h.as_str().to_owned()))).collect();
        obj.insert("hyp".into(), Value::Object(hyp));
        if let Some(m) = &rec.modality {
            obj.insert("modality".into(), Value::String(m.clone()));
        }
        if let Some(s) = &rec.source {
            obj.insert("source".into(), Value::String(s.clone()));
        }
        serde_json::to_writer(&mut out, &Value::Object(obj))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Streams text lines from a list of files, one transcription per line.
pub struct CorpusLines {
    paths: std::vec::IntoIter<PathBuf>,
    current: Option<(PathBuf, BufReader<File>, usize)>,
    buf: Vec<u8>,
}

pub fn read_corpus<P: AsRef<Path>>(paths: &[P]) -> CorpusLines {
    CorpusLines {
        paths: paths.iter().map(|p| p.as_ref().to_path_buf()).collect::<Vec<_>>().into_iter(),
        current: None,
        buf: Vec::new(),
    }
}

impl Iterator for CorpusLines {
    type Item = Result<String, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.current.is_none() {
                let path = self.paths.next()?;
                match File::open(&path) {
                    Ok(f) => self.current = Some((path, BufReader::new(f), 0)),
                    Err(e) => return Some(Err(IngestError::io(&path, e))),
                }
            }
            let (path, reader, line) = self.current.as_mut().expect("file is open");
            self.buf.clear();
            match reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.current = None;
                    continue;
                }
                Ok(_) => {
                    *line += 1;
                    if self.buf.ends_with(b"\n") {
                        self.buf.pop();
                        if self.buf.ends_with(b"\r") {
                            self.buf.pop();
                        }
                    }
                    let decoded = String::from_utf8(std::mem::take(&mut self.buf)).map_err(|e| IngestError::Decode {
                        path: path.display().to_string(),
                        line: *line,
                        message: e.to_string(),
                    });
                    return Some(decoded);
                }
                Err(e) => {
                    let err = IngestError::io(path, e);
                    self.current = None;
                    return Some(Err(err));
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// `report.json`.
    Json,
    /// Plot-ready CSV tables per model.
    Csv,
    /// Per-line analysis records, `lines_<model>.jsonl`.
    Lines,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "lines" => Ok(OutputFormat::Lines),
            other => Err(format!("unknown output format '{other}' (expected json, csv or lines)")),
        }
    }
}

/// File-name-safe form of a model id.
pub fn sanitize_model_name(model: &str) -> String {
    let s: String =
        model.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Distinct file stems for every model, in report order.
fn file_stems(models: &[ModelReport]) -> Vec<String> {
    let mut used = BTreeSet::new();
    models
        .iter()
        .map(|m| {
            let base = sanitize_model_name(&m.model);
            let mut stem = base.clone();
            let mut k = 2;
            while !used.insert(stem.clone()) {
                stem = format!("{base}-{k}");
                k += 1;
            }
            stem
        })
        .collect()
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| IngestError::io(path, io::Error::other(e)))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| IngestError::io(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IngestError::io(path, e.into()))?;
    let wrap = |e: csv::Error| IngestError::io(path, e.into());
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

fn fmt_f64(x: f64) -> String {
    // shortest round-trip representation, same as the JSON output
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

fn distribution_rows(d: &Distribution, cumulative: bool) -> Vec<Vec<String>> {
    let mut acc = 0usize;
    d.buckets
        .iter()
        .map(|b| {
            acc += b.count;
            let mut row = vec![b.label.clone(), b.count.to_string(), fmt_f64(b.share)];
            if cumulative {
                let c = if d.total > 0 { acc as f64 / d.total as f64 } else { 0.0 };
                row.push(fmt_f64(c));
            }
            row
        })
        .collect()
}

fn write_model_csvs(m: &ModelReport, stem: &str, dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), IngestError> {
    let mut emit = |name: String, header: &[&str], rows: Vec<Vec<String>>| {
        let path = dir.join(name);
        write_csv(&path, header, rows)?;
        files.push(path);
        Ok::<_, IngestError>(())
    };

    let total_subs = m.total_substitutions.max(1) as f64;
    emit(
        format!("confusions_{stem}.csv"),
        &["rank", "from", "to", "count", "share_of_substitutions"],
        m.confusions
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    (i + 1).to_string(),
                    c.from.clone(),
                    c.to.clone(),
                    c.count.to_string(),
                    fmt_f64(c.count as f64 / total_subs),
                ]
            })
            .collect(),
    )?;

    emit(
        format!("edit_hist_{stem}.csv"),
        &["distance", "lines", "share", "cumulative_share"],
        distribution_rows(&m.edit_distance, true),
    )?;

    for (category, profile) in &m.positional {
        let bins = profile.distribution.buckets.len().max(1) as f64;
        let rows = profile
            .distribution
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| {
                vec![
                    b.label.clone(),
                    fmt_f64(i as f64 / bins),
                    fmt_f64((i + 1) as f64 / bins),
                    b.count.to_string(),
                    fmt_f64(b.share),
                ]
            })
            .collect();
        emit(format!("positional_{stem}_{category}.csv"), &["bin", "start", "end", "errors", "share"], rows)?;
    }

    let mut share_rows = Vec::new();
    for (tally, d) in [("raw", &m.word_shares), ("exclusive", &m.word_shares_exclusive)] {
        for b in &d.buckets {
            share_rows.push(vec![tally.to_owned(), b.label.clone(), b.count.to_string(), fmt_f64(b.share)]);
        }
    }
    emit(format!("shares_{stem}.csv"), &["tally", "kind", "count", "share"], share_rows)?;

    let b = &m.boundary;
    emit(
        format!("boundary_{stem}.csv"),
        &["kind", "punctuation_related", "plain", "total"],
        vec![
            vec![
                "split".into(),
                b.split_punctuation.to_string(),
                b.split_plain.to_string(),
                (b.split_punctuation + b.split_plain).to_string(),
            ],
            vec![
                "merge".into(),
                b.merge_punctuation.to_string(),
                b.merge_plain.to_string(),
                (b.merge_punctuation + b.merge_plain).to_string(),
            ],
        ],
    )?;

    let span_rows = match &m.spans {
        Some(s) => vec![
            ("mean_span_length", fmt_f64(s.mean_span_length)),
            ("max_span_length", s.max_span_length.to_string()),
            ("spans_per_errored_line", fmt_f64(s.spans_per_errored_line)),
            ("share_of_errors_in_longest_span", fmt_f64(s.share_of_errors_in_longest_span)),
            ("errored_lines", s.errored_lines.to_string()),
            ("span_count", s.span_count.to_string()),
        ],
        None => [
            "mean_span_length",
            "max_span_length",
            "spans_per_errored_line",
            "share_of_errors_in_longest_span",
            "errored_lines",
            "span_count",
        ]
        .into_iter()
        .map(|k| (k, String::new()))
        .collect(),
    };
    emit(
        format!("spans_{stem}.csv"),
        &["statistic", "value"],
        span_rows.into_iter().map(|(k, v)| vec![k.to_owned(), v]).collect(),
    )
}

/// Writes the requested formats into `out_dir` (created if missing) and
/// returns the written paths in a stable order. Output bytes depend only on
/// the report.
pub fn write_report(
    report: &AnalysisReport,
    out_dir: &Path,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>, IngestError> {
    fs::create_dir_all(out_dir).map_err(|e| IngestError::io(out_dir, e))?;
    let formats: BTreeSet<OutputFormat> = formats.iter().copied().collect();
    let stems = file_stems(&report.models);
    let mut files = Vec::new();
    if formats.contains(&OutputFormat::Json) {
        let path = out_dir.join("report.json");
        write_json(report, &path)?;
        files.push(path);
    }
    if formats.contains(&OutputFormat::Csv) {
        for (m, stem) in report.models.iter().zip(&stems) {
            write_model_csvs(m, stem, out_dir, &mut files)?;
        }
    }
    if formats.contains(&OutputFormat::Lines) {
        for (m, stem) in report.models.iter().zip(&stems) {
            let path = out_dir.join(format!("lines_{stem}.jsonl"));
            let file = File::create(&path).map_err(|e| IngestError::io(&path, e))?;
            let mut out = BufWriter::new(file);
            for line in &m.line_records {
                serde_json::to_writer(&mut out, line).map_err(|e| IngestError::io(&path, io::Error::other(e)))?;
                out.write_all(b"\n").map_err(|e| IngestError::io(&path, e))?;
            }
            out.flush().map_err(|e| IngestError::io(&path, e))?;
            files.push(path);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Manifest, IngestError> {
        read_manifest(text.as_bytes(), &ManifestOptions::default())
    }

    #[test]
    fn parses_a_record() {
        let m = read("{\"id\":\"L1\",\"ref\":\"the cat\",\"hyp\":{\"m1\":\"thecat\"}}\n").unwrap();
        assert_eq!(m.records.len(), 1);
        let r = &m.records[0];
        assert_eq!(r.id, "L1");
        assert_eq!(r.reference.as_str(), "the cat");
        assert_eq!(r.hypotheses["m1"].as_str(), "thecat");
        assert_eq!(m.models(), vec!["m1".to_string()]);
    }

    #[test]
    fn normalizes_on_read() {
        let m = read("{\"id\":\"a\",\"ref\":\" x\\u2014\\u2014 \",\"hyp\":{\"m\":\"x\\u00a0 y\"}}").unwrap();
        assert_eq!(m.records[0].reference.as_str(), "x-");
        assert_eq!(m.records[0].hypotheses["m"].as_str(), "x y");
    }

    #[test]
    fn duplicate_id_names_second_line() {
        let text = "{\"id\":\"L1\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"}}\n{\"id\":\"L1\",\"ref\":\"b\",\"hyp\":{\"m\":\"b\"}}\n";
        match read(text).unwrap_err() {
            IngestError::DuplicateId { line, id, first_line } => {
                assert_eq!((line, id.as_str(), first_line), (2, "L1", 1));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_ref_names_the_key() {
        match read("{\"id\":\"L1\",\"hyp\":{\"m\":\"a\"}}").unwrap_err() {
            IngestError::Schema { line, key, .. } => assert_eq!((line, key.as_str()), (1, "ref")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_violations() {
        let cases = [
            ("[1,2]", "<record>"),
            ("{\"id\":\"\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"}}", "id"),
            ("{\"id\":\"x\",\"ref\":\"a\",\"hyp\":{}}", "hyp"),
            ("{\"id\":\"x\",\"ref\":\"a\",\"hyp\":{\"m\":3}}", "hyp.m"),
            ("{\"id\":\"x\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"},\"modality\":\"sepia\"}", "modality"),
            ("{\"id\":\"x\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"},\"extra\":1}", "extra"),
            ("{\"id\":7,\"ref\":\"a\",\"hyp\":{\"m\":\"a\"}}", "id"),
        ];
        for (text, expected) in cases {
            match read(text).unwrap_err() {
                IngestError::Schema { key, .. } => assert_eq!(key, expected, "{text}"),
                e => panic!("{text}: unexpected {e}"),
            }
        }
    }

    #[test]
    fn decode_errors_carry_line_numbers() {
        let mut bytes = b"{\"id\":\"a\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"}}\n\n".to_vec();
        bytes.extend_from_slice(b"{\"id\":\"b\",\"ref\":\"\xff\",\"hyp\":{\"m\":\"a\"}}\n");
        match read_manifest(&bytes[..], &ManifestOptions::default()).unwrap_err() {
            IngestError::Decode { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(read("{not json").unwrap_err(), IngestError::Decode { line: 1, .. }));
    }

    #[test]
    fn skip_bad_records_collects_diagnostics() {
        let text = "{\"id\":\"a\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"}}\n{\"id\":\"b\"}\n{\"id\":\"a\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"}}\n";
        let opts = ManifestOptions { skip_bad_records: true, ..Default::default() };
        let m = read_manifest(text.as_bytes(), &opts).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.skipped.len(), 2);
    }

    #[test]
    fn custom_modalities() {
        let opts = ManifestOptions { modalities: ["sepia".to_string()].into(), ..Default::default() };
        let text = "{\"id\":\"a\",\"ref\":\"a\",\"hyp\":{\"m\":\"a\"},\"modality\":\"sepia\"}";
        assert!(read_manifest(text.as_bytes(), &opts).is_ok());
    }

    #[test]
    fn sanitized_names() {
        assert_eq!(sanitize_model_name("qwen-2.5"), "qwen-2.5");
        assert_eq!(sanitize_model_name("a/b c"), "a_b_c");
        assert_eq!(sanitize_model_name(".."), "_..");
        assert_eq!(sanitize_model_name(""), "_");
    }

    #[test]
    fn output_format_parsing() {
        assert_eq!("csv".parse::<OutputFormat>(), Ok(OutputFormat::Csv));
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
