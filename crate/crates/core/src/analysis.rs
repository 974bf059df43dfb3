//! Corpus-level views over per-line alignments and proxy events.
//!
//! Work is split in two stages. [`analyze_line`] turns one (reference,
//! hypothesis) pair into a self-contained [`LineAnalysis`]; [`aggregate_model`]
//! folds a list of those into a [`ModelReport`]. The second stage reads
//! nothing else, so a report can be rebuilt from persisted line records.
//!
//! The edit-distance histogram counts errored lines by their distance (lines
//! with distance 0 are left out of the total).

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{char_align, error_spans, token_align, tokenize, CharAlignment, EditOp, ErrorSpan};
use crate::ingest::{Diagnostic, LineRecord};
use crate::metrics::{
    bootstrap_cer_wer, length_category, paired_bootstrap_delta, run_pool, BootstrapConfig, LengthCategory,
    LengthThresholds, LineMetrics, MetricEstimate, MetricsError, Statistic,
};
use crate::taxonomy::{classify_line, LineInput, ProxyEvent, ProxyKind, Resources};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_TOP_K: usize = 25;
pub const DEFAULT_HISTOGRAM_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no records to analyze")]
    NoRecords,
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("line '{line_id}' has no hypothesis for model '{model}'")]
    MissingHypothesis { line_id: String, model: String },
    #[error("model '{0}' does not occur in the manifest")]
    UnknownModel(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    pub share: f64,
}

/// Labelled counts with their shares of the total.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub buckets: Vec<Bucket>,
    pub total: usize,
}

impl Distribution {
    /// Keeps the given bucket order. With a zero total every share is 0.
    pub fn from_counts<L: Into<String>>(counts: impl IntoIterator<Item = (L, usize)>) -> Self {
        let pairs: Vec<(String, usize)> = counts.into_iter().map(|(l, c)| (l.into(), c)).collect();
        let total: usize = pairs.iter().map(|(_, c)| c).sum();
        let buckets = pairs
            .into_iter()
            .map(|(label, count)| Bucket {
                share: if total > 0 { count as f64 / total as f64 } else { 0.0 },
                label,
                count,
            })
            .collect();
        Self { buckets, total }
    }

    pub fn share_of(&self, label: &str) -> Option<f64> {
        self.buckets.iter().find(|b| b.label == label).map(|b| b.share)
    }

    pub fn count_of(&self, label: &str) -> usize {
        self.buckets.iter().find(|b| b.label == label).map_or(0, |b| b.count)
    }

    pub fn share_sum(&self) -> f64 {
        self.buckets.iter().map(|b| b.share).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairCount {
    pub from: String,
    pub to: String,
    pub count: usize,
}

/// Descending by count, ties by `(from, to)`; at most `k` entries.
pub fn rank_pairs(counts: BTreeMap<(String, String), usize>, k: usize) -> Vec<PairCount> {
    let mut v: Vec<PairCount> = counts.into_iter().map(|((from, to), count)| PairCount { from, to, count }).collect();
    v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to))));
    v.truncate(k);
    v
}

pub fn substitutions(alignment: &CharAlignment) -> impl Iterator<Item = (char, char)> + '_ {
    alignment.ops.iter().filter_map(|op| match *op {
        EditOp::Substitute { ref_scalar, hyp_scalar, .. } => Some((ref_scalar, hyp_scalar)),
        _ => None,
    })
}

fn count_substitutions<I: IntoIterator<Item = (char, char)>>(pairs: I) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for (a, b) in pairs {
        *counts.entry((a.to_string(), b.to_string())).or_insert(0) += 1;
    }
    counts
}

/// Most frequent scalar substitutions over a set of alignments.
pub fn confusion_top_k<'a>(alignments: impl IntoIterator<Item = &'a CharAlignment>, k: usize) -> Vec<PairCount> {
    rank_pairs(count_substitutions(alignments.into_iter().flat_map(substitutions)), k)
}

/// Errored lines by char distance; distances at or above `cap` share one
/// bucket labelled `>=cap`. Only non-empty buckets are listed.
pub fn edit_distance_histogram(distances: impl IntoIterator<Item = usize>, cap: usize) -> Distribution {
    let cap = cap.max(1);
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in distances.into_iter().filter(|&d| d > 0) {
        *counts.entry(d.min(cap)).or_insert(0) += 1;
    }
    Distribution::from_counts(counts.into_iter().map(|(d, c)| {
        let label = if d >= cap { format!(">={cap}") } else { d.to_string() };
        (label, c)
    }))
}

/// Reference position of each non-Match op; an insertion takes the position
/// of the reference scalar before it (0 at line start).
pub fn error_positions(alignment: &CharAlignment) -> Vec<usize> {
    let mut out = Vec::new();
    let mut consumed = 0usize;
    for op in &alignment.ops {
        match op.ref_index() {
            Some(i) => {
                if !op.is_match() {
                    out.push(i);
                }
                consumed += 1;
            }
            None => out.push(consumed.saturating_sub(1)),
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionalProfile {
    /// Equal-width bins over relative reference position, labelled from 1.
    pub distribution: Distribution,
    /// Lines with an empty reference, which have no relative position.
    pub skipped_lines: usize,
}

/// Bins error positions by `position / ref_length`. Each item is a line's
/// reference length and its error positions.
pub fn positional_profile<'a>(lines: impl IntoIterator<Item = (usize, &'a [usize])>, bins: usize) -> PositionalProfile {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    let mut skipped = 0;
    for (len, positions) in lines {
        if len == 0 {
            skipped += 1;
            continue;
        }
        for &p in positions {
            counts[(p * bins / len).min(bins - 1)] += 1;
        }
    }
    PositionalProfile {
        distribution: Distribution::from_counts(counts.into_iter().enumerate().map(|(i, c)| ((i + 1).to_string(), c))),
        skipped_lines: skipped,
    }
}

/// Real-word versus non-word shares; empty when there are no word events.
pub fn word_nonword_shares<'a>(events: impl IntoIterator<Item = &'a ProxyEvent>) -> Distribution {
    let (mut real, mut non) = (0, 0);
    for e in events {
        match e.kind {
            ProxyKind::RealWord => real += 1,
            ProxyKind::NonWord => non += 1,
            _ => {}
        }
    }
    if real + non == 0 {
        return Distribution::default();
    }
    Distribution::from_counts([("real_word", real), ("non_word", non)])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryBreakdown {
    pub split_punctuation: usize,
    pub split_plain: usize,
    pub merge_punctuation: usize,
    pub merge_plain: usize,
}

impl BoundaryBreakdown {
    pub fn splits(&self) -> usize {
        self.split_punctuation + self.split_plain
    }

    pub fn merges(&self) -> usize {
        self.merge_punctuation + self.merge_plain
    }
}

pub fn boundary_breakdown<'a>(events: impl IntoIterator<Item = &'a ProxyEvent>) -> BoundaryBreakdown {
    let mut b = BoundaryBreakdown::default();
    for e in events {
        let punct = e.punctuation_related == Some(true);
        match (e.kind, punct) {
            (ProxyKind::BoundarySplit, true) => b.split_punctuation += 1,
            (ProxyKind::BoundarySplit, false) => b.split_plain += 1,
            (ProxyKind::BoundaryMerge, true) => b.merge_punctuation += 1,
            (ProxyKind::BoundaryMerge, false) => b.merge_plain += 1,
            _ => {}
        }
    }
    b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanStatistics {
    pub mean_span_length: f64,
    pub max_span_length: usize,
    pub spans_per_errored_line: f64,
    /// Ops in each errored line's longest span, over all ops in spans.
    pub share_of_errors_in_longest_span: f64,
    pub errored_lines: usize,
    pub span_count: usize,
}

/// `None` when no line has a span.
pub fn span_statistics<'a>(spans_per_line: impl IntoIterator<Item = &'a [ErrorSpan]>) -> Option<SpanStatistics> {
    let (mut lines, mut spans, mut ops, mut longest_ops, mut max) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for line in spans_per_line {
        if line.is_empty() {
            continue;
        }
        lines += 1;
        spans += line.len();
        let line_max = line.iter().map(|s| s.op_count).max().unwrap_or(0);
        ops += line.iter().map(|s| s.op_count).sum::<usize>();
        longest_ops += line_max;
        max = max.max(line_max);
    }
    (lines > 0).then(|| SpanStatistics {
        mean_span_length: ops as f64 / spans as f64,
        max_span_length: max,
        spans_per_errored_line: spans as f64 / lines as f64,
        share_of_errors_in_longest_span: longest_ops as f64 / ops as f64,
        errored_lines: lines,
        span_count: spans,
    })
}

/// Everything the aggregation stage needs from one line of one model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineAnalysis {
    pub line_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<String>,
    pub metrics: LineMetrics,
    pub substitutions: Vec<(char, char)>,
    pub error_positions: Vec<usize>,
    pub spans: Vec<ErrorSpan>,
    pub events: Vec<ProxyEvent>,
}

/// Aligns and classifies one hypothesis against its reference.
pub fn analyze_line(
    record: &LineRecord,
    hypothesis: &crate::textnorm::NormalizedText,
    resources: &Resources<'_>,
    thresholds: &LengthThresholds,
) -> Result<LineAnalysis, MetricsError> {
    let ca = char_align(&record.reference, hypothesis);
    let (rt, ht) = (tokenize(&record.reference), tokenize(hypothesis));
    let ta = token_align(&rt, &ht);
    let metrics = LineMetrics {
        char_distance: ca.distance,
        ref_chars: ca.ref_length,
        word_distance: ta.word_distance,
        ref_words: rt.len(),
        length_category: length_category(ca.ref_length, thresholds)?,
    };
    let events = classify_line(
        &LineInput {
            line_id: &record.id,
            reference: &record.reference,
            hypothesis,
            char_alignment: &ca,
            ref_tokens: &rt,
            hyp_tokens: &ht,
            token_alignment: &ta,
        },
        resources,
    )
    .events;
    Ok(LineAnalysis {
        line_id: record.id.clone(),
        modality: record.modality.clone(),
        metrics,
        substitutions: substitutions(&ca).collect(),
        error_positions: error_positions(&ca),
        spans: error_spans(&ca),
        events,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub thresholds: LengthThresholds,
    pub bootstrap: BootstrapConfig,
    pub bins: usize,
    pub top_k: usize,
    pub histogram_cap: usize,
    /// 0 uses the ambient rayon pool. Never affects results.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            thresholds: LengthThresholds::default(),
            bootstrap: BootstrapConfig::default(),
            bins: DEFAULT_BINS,
            top_k: DEFAULT_TOP_K,
            histogram_cap: DEFAULT_HISTOGRAM_CAP,
            workers: 0,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        self.thresholds.validate()?;
        self.bootstrap.validate()?;
        if self.bins < 2 {
            return Err(AnalysisError::InvalidOption(format!("bins must be at least 2, got {}", self.bins)));
        }
        if self.top_k < 1 {
            return Err(AnalysisError::InvalidOption("top_k must be at least 1".into()));
        }
        if self.histogram_cap < 1 {
            return Err(AnalysisError::InvalidOption("histogram_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// CER and WER estimate for one slice of a model's lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub statistic: Statistic,
    /// `all`, `modality:<name>` or `length:<category>`.
    pub scope: String,
    pub lines: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<MetricEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn scope_estimates(
    scope: String,
    lines: &[LineMetrics],
    cfg: &BootstrapConfig,
) -> Result<[EstimateRow; 2], MetricsError> {
    let (cer, wer, note) = match bootstrap_cer_wer(lines, cfg, 0) {
        Ok((c, w)) => (Some(c), Some(w), None),
        Err(MetricsError::NoLines) => (None, None, Some("no lines with a non-empty reference".to_owned())),
        Err(e) => return Err(e),
    };
    let row = |statistic, estimate| EstimateRow {
        statistic,
        scope: scope.clone(),
        lines: lines.len(),
        estimate,
        note: note.clone(),
    };
    Ok([row(Statistic::Cer, cer), row(Statistic::Wer, wer)])
}

/// Estimates over all lines, each modality present, and each length category.
pub fn estimate_rows(
    lines: &[(Option<&str>, LineMetrics)],
    cfg: &BootstrapConfig,
) -> Result<Vec<EstimateRow>, MetricsError> {
    let mut scopes: Vec<(String, Vec<LineMetrics>)> = vec![("all".into(), lines.iter().map(|l| l.1).collect())];
    let modalities: BTreeSet<&str> = lines.iter().filter_map(|l| l.0).collect();
    for m in modalities {
        scopes.push((format!("modality:{m}"), lines.iter().filter(|l| l.0 == Some(m)).map(|l| l.1).collect()));
    }
    for c in LengthCategory::ALL {
        scopes.push((
            format!("length:{}", c.as_str()),
            lines.iter().filter(|l| l.1.length_category == c).map(|l| l.1).collect(),
        ));
    }
    let mut rows = Vec::new();
    for (scope, ls) in scopes {
        rows.extend(scope_estimates(scope, &ls, cfg)?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationComposition {
    pub lexical: usize,
    pub graphemic: usize,
    /// False when no modern lexicon was supplied; `lexical` is then 0.
    pub lexical_enabled: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyTallies {
    pub raw: BTreeMap<ProxyKind, usize>,
    /// Word-level events that also carry a character-level event are removed.
    pub exclusive: BTreeMap<ProxyKind, usize>,
    pub overlapping_word_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub lines: usize,
    pub errored_lines: usize,
    pub estimates: Vec<EstimateRow>,
    pub total_substitutions: usize,
    pub confusions: Vec<PairCount>,
    pub edit_distance: Distribution,
    /// Keyed by `all` and each length category.
    pub positional: BTreeMap<String, PositionalProfile>,
    pub word_shares: Distribution,
    pub word_shares_exclusive: Distribution,
    pub boundary: BoundaryBreakdown,
    pub spans: Option<SpanStatistics>,
    pub normalization: NormalizationComposition,
    pub glyph_pairs: Vec<PairCount>,
    pub real_word_substitutions: Vec<PairCount>,
    pub tallies: ProxyTallies,
    /// Per-line inputs to this report; written separately, not in the JSON.
    #[serde(skip)]
    pub line_records: Vec<LineAnalysis>,
}

/// Pure aggregation of per-line records into a model report.
pub fn aggregate_model(
    model: &str,
    lines: Vec<LineAnalysis>,
    lexical_enabled: bool,
    options: &AnalysisOptions,
) -> Result<ModelReport, AnalysisError> {
    options.validate()?;
    let metrics: Vec<(Option<&str>, LineMetrics)> = lines.iter().map(|l| (l.modality.as_deref(), l.metrics)).collect();
    let estimates = estimate_rows(&metrics, &options.bootstrap)?;

    let subs = count_substitutions(lines.iter().flat_map(|l| l.substitutions.iter().copied()));
    let total_substitutions = subs.values().sum();

    let mut positional = BTreeMap::new();
    positional.insert(
        "all".to_owned(),
        positional_profile(lines.iter().map(|l| (l.metrics.ref_chars, &l.error_positions[..])), options.bins),
    );
    for c in LengthCategory::ALL {
        let profile = positional_profile(
            lines
                .iter()
                .filter(|l| l.metrics.length_category == c)
                .map(|l| (l.metrics.ref_chars, &l.error_positions[..])),
            options.bins,
        );
        positional.insert(c.as_str().to_owned(), profile);
    }

    let events = || lines.iter().flat_map(|l| l.events.iter());
    let mut raw: BTreeMap<ProxyKind, usize> = ProxyKind::ALL.iter().map(|&k| (k, 0)).collect();
    let mut exclusive = raw.clone();
    let mut overlapping = 0;
    let mut glyphs = BTreeMap::new();
    let mut real_words = BTreeMap::new();
    for e in events() {
        *raw.entry(e.kind).or_insert(0) += 1;
        if e.overlaps_char_event {
            overlapping += 1;
        } else {
            *exclusive.entry(e.kind).or_insert(0) += 1;
        }
        match e.kind {
            ProxyKind::GlyphConfusion => {
                if let Some(p) = &e.pattern {
                    *glyphs.entry(p.clone()).or_insert(0) += 1;
                }
            }
            ProxyKind::RealWord if !e.ref_surface.is_empty() => {
                *real_words.entry((e.ref_surface.clone(), e.hyp_surface.clone())).or_insert(0) += 1;
            }
            _ => {}
        }
    }

    Ok(ModelReport {
        model: model.to_owned(),
        lines: lines.len(),
        errored_lines: lines.iter().filter(|l| l.metrics.char_distance > 0).count(),
        estimates,
        total_substitutions,
        confusions: rank_pairs(subs, options.top_k),
        edit_distance: edit_distance_histogram(lines.iter().map(|l| l.metrics.char_distance), options.histogram_cap),
        positional,
        word_shares: word_nonword_shares(events()),
        word_shares_exclusive: word_nonword_shares(events().filter(|e| !e.overlaps_char_event)),
        boundary: boundary_breakdown(events()),
        spans: span_statistics(lines.iter().map(|l| &l.spans[..])),
        normalization: NormalizationComposition {
            lexical: raw[&ProxyKind::NormalizationLexical],
            graphemic: raw[&ProxyKind::NormalizationGraphemic],
            lexical_enabled,
        },
        glyph_pairs: rank_pairs(glyphs, usize::MAX),
        real_word_substitutions: rank_pairs(real_words, usize::MAX),
        tallies: ProxyTallies { raw, exclusive, overlapping_word_events: overlapping },
        line_records: lines,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub command: String,
    /// Effective run configuration, supplied by the caller.
    pub config: serde_json::Value,
    pub lexical_detection: bool,
    pub models: Vec<ModelReport>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Model ids across all records, sorted.
pub fn model_ids(records: &[LineRecord]) -> Vec<String> {
    let set: BTreeSet<&String> = records.iter().flat_map(|r| r.hypotheses.keys()).collect();
    set.into_iter().cloned().collect()
}

fn line_diagnostics(records: &[LineRecord], models: &[String]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for r in records {
        if r.reference.is_empty() {
            out.push(Diagnostic {
                line_id: Some(r.id.clone()),
                model: None,
                message: "empty reference; excluded from rate estimates and positional profiles".into(),
            });
        }
        for m in models.iter().filter(|m| !r.hypotheses.contains_key(*m)) {
            out.push(Diagnostic {
                line_id: Some(r.id.clone()),
                model: Some(m.clone()),
                message: "no hypothesis for this model; line skipped".into(),
            });
        }
    }
    out
}

/// Per-line stage for one model. Lines without a hypothesis for the model
/// are skipped. Order follows `records`.
pub fn analyze_model_lines(
    records: &[LineRecord],
    model: &str,
    resources: &Resources<'_>,
    thresholds: &LengthThresholds,
) -> Result<Vec<LineAnalysis>, MetricsError> {
    records
        .par_iter()
        .filter_map(|r| r.hypotheses.get(model).map(|h| analyze_line(r, h, resources, thresholds)))
        .collect()
}

/// Full pipeline: per-line alignment and classification, then aggregation,
/// for every model. Deterministic for any worker count.
pub fn build_report(
    records: &[LineRecord],
    resources: &Resources<'_>,
    options: &AnalysisOptions,
    config: serde_json::Value,
) -> Result<AnalysisReport, AnalysisError> {
    options.validate()?;
    if records.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    let models = model_ids(records);
    let lexical = resources.modern.is_some();
    let reports = run_pool(options.workers, || {
        models
            .iter()
            .map(|m| {
                let lines = analyze_model_lines(records, m, resources, &options.thresholds)?;
                aggregate_model(m, lines, lexical, options)
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        command: "analyze".into(),
        config,
        lexical_detection: lexical,
        models: reports,
        diagnostics: line_diagnostics(records, &models),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub lines: usize,
    pub estimates: Vec<EstimateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub models: Vec<ModelMetrics>,
    pub diagnostics: Vec<Diagnostic>,
}

fn metrics_only(
    records: &[LineRecord],
    model: &str,
    thresholds: &LengthThresholds,
) -> Result<Vec<(Option<String>, LineMetrics)>, MetricsError> {
    records
        .par_iter()
        .filter_map(|r| {
            r.hypotheses
                .get(model)
                .map(|h| crate::metrics::line_metrics(&r.reference, h, thresholds).map(|m| (r.modality.clone(), m)))
        })
        .collect()
}

/// Rate estimates only, per model and slice.
pub fn build_evaluation(
    records: &[LineRecord],
    options: &AnalysisOptions,
    config: serde_json::Value,
) -> Result<EvaluationReport, AnalysisError> {
    options.validate()?;
    if records.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    let models = model_ids(records);
    let out = run_pool(options.workers, || {
        models
            .iter()
            .map(|m| {
                let lines = metrics_only(records, m, &options.thresholds)?;
                let borrowed: Vec<(Option<&str>, LineMetrics)> =
                    lines.iter().map(|(md, l)| (md.as_deref(), *l)).collect();
                Ok(ModelMetrics {
                    model: m.clone(),
                    lines: lines.len(),
                    estimates: estimate_rows(&borrowed, &options.bootstrap)?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()
    })??;
    Ok(EvaluationReport {
        schema_version: SCHEMA_VERSION,
        command: "evaluate".into(),
        config,
        models: out,
        diagnostics: line_diagnostics(records, &models),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub statistic: Statistic,
    pub point_a: f64,
    pub point_b: f64,
    /// Estimate of `rate(model_a) - rate(model_b)`.
    pub delta: MetricEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub model_a: String,
    pub model_b: String,
    pub lines: usize,
    pub deltas: Vec<DeltaRow>,
}

/// Paired bootstrap deltas between two models. Every line must carry both
/// hypotheses.
pub fn build_comparison(
    records: &[LineRecord],
    model_a: &str,
    model_b: &str,
    options: &AnalysisOptions,
    config: serde_json::Value,
) -> Result<ComparisonReport, AnalysisError> {
    options.validate()?;
    if records.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    let known = model_ids(records);
    for m in [model_a, model_b] {
        if !known.iter().any(|k| k == m) {
            return Err(AnalysisError::UnknownModel(m.to_owned()));
        }
    }
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let get = |m: &str| {
            r.hypotheses
                .get(m)
                .ok_or_else(|| AnalysisError::MissingHypothesis { line_id: r.id.clone(), model: m.to_owned() })
        };
        pairs.push((r, get(model_a)?, get(model_b)?));
    }
    let th = &options.thresholds;
    let deltas = run_pool(options.workers, || {
        let metrics: Vec<(LineMetrics, LineMetrics)> = pairs
            .par_iter()
            .map(|(r, a, b)| {
                Ok((
                    crate::metrics::line_metrics(&r.reference, a, th)?,
                    crate::metrics::line_metrics(&r.reference, b, th)?,
                ))
            })
            .collect::<Result<_, MetricsError>>()?;
        [Statistic::Cer, Statistic::Wer]
            .into_iter()
            .map(|s| {
                let delta = paired_bootstrap_delta(&metrics, s, &options.bootstrap, 0)?;
                let point = |pick: fn(&(LineMetrics, LineMetrics)) -> &LineMetrics| {
                    let ls: Vec<LineMetrics> = metrics.iter().map(|p| *pick(p)).collect();
                    match s {
                        Statistic::Cer => crate::metrics::corpus_cer(&ls),
                        Statistic::Wer => crate::metrics::corpus_wer(&ls),
                    }
                };
                Ok(DeltaRow { statistic: s, point_a: point(|p| &p.0)?, point_b: point(|p| &p.1)?, delta })
            })
            .collect::<Result<Vec<_>, MetricsError>>()
    })??;
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        command: "compare".into(),
        config,
        model_a: model_a.to_owned(),
        model_b: model_b.to_owned(),
        lines: records.len(),
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::align_scalars;
    use crate::lexicon::{KeyFolding, Lexicon};
    use crate::taxonomy::default_confusion_table;
    use proptest::prelude::*;

    fn al(r: &str, h: &str) -> CharAlignment {
        let r: Vec<char> = r.chars().collect();
        let h: Vec<char> = h.chars().collect();
        align_scalars(&r, &h)
    }

    #[test]
    fn confusion_ranking() {
        let a = [al("ſaſ", "sas"), al("ſe", "sc")];
        let top = confusion_top_k(&a, 25);
        let got: Vec<(&str, &str, usize)> = top.iter().map(|p| (p.from.as_str(), p.to.as_str(), p.count)).collect();
        assert_eq!(got, vec![("ſ", "s", 3), ("e", "c", 1)]);
        assert!(confusion_top_k(&[al("abc", "abc")], 25).is_empty());
        let tie = [al("aabb", "bbaa")];
        let top = confusion_top_k(&tie, 25);
        assert_eq!((top[0].from.as_str(), top[0].to.as_str()), ("a", "b"));
        assert_eq!((top[1].from.as_str(), top[1].to.as_str()), ("b", "a"));
        assert_eq!(confusion_top_k(&tie, 1).len(), 1);
    }

    #[test]
    fn histogram_examples() {
        let d = edit_distance_histogram([1, 1, 2, 5], 10);
        assert_eq!(d.total, 4);
        assert_eq!(d.share_of("1"), Some(0.5));
        assert_eq!(d.share_of("2"), Some(0.25));
        assert_eq!(d.share_of("5"), Some(0.25));
        assert_eq!(edit_distance_histogram([0, 0], 10).total, 0);
        let capped = edit_distance_histogram([12, 10, 3, 0], 10);
        assert_eq!(capped.count_of(">=10"), 2);
        assert_eq!(capped.buckets.last().unwrap().label, ">=10");
        let planted = edit_distance_histogram([1, 2, 1, 2, 1, 2, 1, 2, 3, 4, 0, 0], 10);
        assert!((planted.share_of("1").unwrap() + planted.share_of("2").unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn positional_examples() {
        let p = positional_profile([(10usize, &[0usize][..])], 10);
        assert_eq!(p.distribution.count_of("1"), 1);
        assert_eq!(p.distribution.share_of("1"), Some(1.0));
        let all: Vec<usize> = (0..10).collect();
        let p = positional_profile([(10usize, &all[..])], 10);
        assert!(p.distribution.buckets.iter().all(|b| (b.share - 0.1).abs() < 1e-12));
        let (short, long) = ([0usize, 1, 3, 19], [0usize, 20, 39]);
        let p = positional_profile([(100usize, &short[..]), (200, &long[..])], 10);
        assert_eq!(p.distribution.count_of("1") + p.distribution.count_of("2"), p.distribution.total);
        let p = positional_profile([(0usize, &[][..]), (5, &[4][..])], 10);
        assert_eq!(p.skipped_lines, 1);
        assert_eq!(p.distribution.count_of("9"), 1);
    }

    #[test]
    fn insert_positions_use_preceding_reference_index() {
        assert_eq!(error_positions(&al("ab", "xab")), vec![0]);
        assert_eq!(error_positions(&al("ab", "abx")), vec![1]);
        assert_eq!(error_positions(&al("abc", "axc")), vec![1]);
    }

    fn ev(kind: ProxyKind, punct: Option<bool>) -> ProxyEvent {
        ProxyEvent {
            kind,
            line_id: "L".into(),
            ref_surface: String::new(),
            hyp_surface: String::new(),
            ref_offset: 0,
            hyp_offset: 0,
            hyp_len: 0,
            punctuation_related: punct,
            pattern: None,
            overlaps_char_event: false,
            ref_attested: None,
        }
    }

    #[test]
    fn word_share_examples() {
        let e: Vec<ProxyEvent> =
            [ProxyKind::RealWord; 3].into_iter().chain([ProxyKind::NonWord]).map(|k| ev(k, None)).collect();
        let d = word_nonword_shares(&e);
        assert_eq!((d.share_of("real_word"), d.share_of("non_word")), (Some(0.75), Some(0.25)));
        assert_eq!(word_nonword_shares(&[]).total, 0);
        assert!(word_nonword_shares(&[]).buckets.is_empty());
        let d = word_nonword_shares(&[ev(ProxyKind::RealWord, None)]);
        assert_eq!(d.share_of("real_word"), Some(1.0));
    }

    #[test]
    fn boundary_example() {
        let e = [
            ev(ProxyKind::BoundaryMerge, Some(true)),
            ev(ProxyKind::BoundaryMerge, Some(false)),
            ev(ProxyKind::BoundarySplit, Some(true)),
        ];
        let b = boundary_breakdown(&e);
        assert_eq!(b, BoundaryBreakdown { split_punctuation: 1, split_plain: 0, merge_punctuation: 1, merge_plain: 1 });
        assert_eq!(boundary_breakdown(&[]), BoundaryBreakdown::default());
    }

    fn span(n: usize) -> ErrorSpan {
        ErrorSpan { start_ref: 0, end_ref: 0, op_count: n }
    }

    #[test]
    fn span_examples() {
        let line = [span(3), span(1)];
        let s = span_statistics([&line[..]]).unwrap();
        assert_eq!(s.mean_span_length, 2.0);
        assert_eq!(s.max_span_length, 3);
        assert_eq!(s.spans_per_errored_line, 2.0);
        assert_eq!(s.share_of_errors_in_longest_span, 0.75);
        assert!(span_statistics([&[][..], &[][..]]).is_none());
        let ones = [[span(1)], [span(1)]];
        let s = span_statistics(ones.iter().map(|l| &l[..])).unwrap();
        assert_eq!((s.mean_span_length, s.max_span_length, s.spans_per_errored_line), (1.0, 1, 1.0));
    }

    fn small_records() -> Vec<LineRecord> {
        vec![
            LineRecord::new("a", "the cat ſat", [("m1", "thecat fat"), ("m2", "the cat ſat")]).with_modality("bw"),
            LineRecord::new("b", "of futurity,", [("m1", "of ſuturity,"), ("m2", "of futurity")])
                .with_modality("color"),
            LineRecord::new("c", "", [("m1", "x"), ("m2", "")]),
        ]
    }

    fn opts(resamples: usize) -> AnalysisOptions {
        AnalysisOptions { bootstrap: BootstrapConfig { resamples, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn report_is_a_pure_aggregation() {
        let lex = Lexicon::from_words(["the", "cat", "sat", "fat", "of", "futurity"], KeyFolding::Lower);
        let table = default_confusion_table();
        let res = Resources { historical: &lex, modern: None, table: &table };
        let report = build_report(&small_records(), &res, &opts(200), serde_json::Value::Null).unwrap();
        assert_eq!(report.models.len(), 2);
        for m in &report.models {
            let json: Vec<String> = m.line_records.iter().map(|l| serde_json::to_string(l).unwrap()).collect();
            let back: Vec<LineAnalysis> = json.iter().map(|s| serde_json::from_str(s).unwrap()).collect();
            let rebuilt = aggregate_model(&m.model, back, false, &opts(200)).unwrap();
            assert_eq!(&rebuilt, m);
        }
        assert_eq!(report.diagnostics.len(), 1);
        let m1 = &report.models[0];
        assert_eq!(m1.boundary.merges(), 1);
        assert_eq!(m1.positional["all"].skipped_lines, 1);
        assert!(m1.estimates.iter().any(|r| r.scope == "modality:bw"));
    }

    #[test]
    fn comparison_requires_both_hypotheses() {
        let mut recs = small_records();
        recs.push(LineRecord::new("d", "x", [("m1", "x")]));
        match build_comparison(&recs, "m1", "m2", &opts(50), serde_json::Value::Null) {
            Err(AnalysisError::MissingHypothesis { line_id, model }) => {
                assert_eq!((line_id.as_str(), model.as_str()), ("d", "m2"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            build_comparison(&recs, "m1", "zz", &opts(50), serde_json::Value::Null),
            Err(AnalysisError::UnknownModel(_))
        ));
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let recs = small_records();
        let c = build_comparison(&recs, "m1", "m1", &opts(300), serde_json::Value::Null).unwrap();
        for d in &c.deltas {
            assert_eq!((d.delta.ci_low, d.delta.ci_high, d.delta.point), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn evaluation_matches_analysis_estimates() {
        let lex = Lexicon::from_words(["the"], KeyFolding::Lower);
        let table = default_confusion_table();
        let res = Resources { historical: &lex, modern: None, table: &table };
        let recs = small_records();
        let a = build_report(&recs, &res, &opts(100), serde_json::Value::Null).unwrap();
        let e = build_evaluation(&recs, &opts(100), serde_json::Value::Null).unwrap();
        for (am, em) in a.models.iter().zip(&e.models) {
            assert_eq!(am.estimates, em.estimates);
        }
    }

    proptest! {
        #[test]
        fn distribution_shares_sum_to_one(counts in prop::collection::vec(0usize..1000, 1..30)) {
            let d = Distribution::from_counts(counts.iter().enumerate().map(|(i, c)| (i.to_string(), *c)));
            prop_assert_eq!(d.total, counts.iter().sum::<usize>());
            if d.total > 0 {
                prop_assert!((d.share_sum() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn conservation(pairs in prop::collection::vec(("[abſ ]{0,8}", "[abſ ]{0,8}"), 1..20), bins in 2usize..12) {
            let aligns: Vec<CharAlignment> = pairs.iter().map(|(r, h)| al(r, h)).collect();
            let subs: usize = aligns.iter().map(|a| substitutions(a).count()).sum();
            let top: usize = confusion_top_k(&aligns, usize::MAX).iter().map(|p| p.count).sum();
            prop_assert_eq!(subs, top);
            let positions: Vec<Vec<usize>> = aligns.iter().map(error_positions).collect();
            let p = positional_profile(aligns.iter().zip(&positions).map(|(a, p)| (a.ref_length, &p[..])), bins);
            let expected: usize = aligns
                .iter()
                .filter(|a| a.ref_length > 0)
                .map(|a| a.ops.iter().filter(|o| !o.is_match()).count())
                .sum();
            prop_assert_eq!(p.distribution.total, expected);
        }
    }
}
