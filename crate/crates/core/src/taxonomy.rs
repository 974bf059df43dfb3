//! Error proxy classification.
//!
//! Word-level proxies (real-word and non-word errors) come from the token
//! alignment and hypothesis-side attestation. Character-level proxies come
//! from the scalar alignment: boundary splits and merges are exactly the edit
//! operations that create or remove a space, and glyph confusions are short
//! non-Match windows whose two sides form a pair in the [`ConfusionTable`].
//!
//! One mutation can surface at both levels (a merge also produces an
//! unattested token). Both events are kept; word-level events that touch a
//! character-level event are flagged with `overlaps_char_event` so that
//! tallies can be reported with and without the overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{CharAlignment, EditOp, OpKind, Token, TokenAlignment};
use crate::lexicon::{strip_punctuation, Lexicon};
use crate::textnorm::{is_punctuation, NormalizedText};

/// Longest op window considered for a glyph confusion.
pub const GLYPH_WINDOW: usize = 3;
/// Largest token edit distance accepted as a lexical normalization.
pub const LEXICAL_MAX_DISTANCE: usize = 2;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("confusion table line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    RealWord,
    NonWord,
    BoundarySplit,
    BoundaryMerge,
    GlyphConfusion,
    NormalizationLexical,
    NormalizationGraphemic,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 7] = [
        ProxyKind::RealWord,
        ProxyKind::NonWord,
        ProxyKind::BoundarySplit,
        ProxyKind::BoundaryMerge,
        ProxyKind::GlyphConfusion,
        ProxyKind::NormalizationLexical,
        ProxyKind::NormalizationGraphemic,
    ];

    pub fn is_word_level(self) -> bool {
        matches!(self, ProxyKind::RealWord | ProxyKind::NonWord)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyKind::RealWord => "real_word",
            ProxyKind::NonWord => "non_word",
            ProxyKind::BoundarySplit => "boundary_split",
            ProxyKind::BoundaryMerge => "boundary_merge",
            ProxyKind::GlyphConfusion => "glyph_confusion",
            ProxyKind::NormalizationLexical => "normalization_lexical",
            ProxyKind::NormalizationGraphemic => "normalization_graphemic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyEvent {
    pub kind: ProxyKind,
    pub line_id: String,
    pub ref_surface: String,
    pub hyp_surface: String,
    /// Scalar offset into the reference line.
    pub ref_offset: usize,
    /// Scalar offset into the hypothesis line.
    pub hyp_offset: usize,
    /// Number of hypothesis scalars covered (0 for a pure deletion).
    pub hyp_len: usize,
    /// Boundary kinds only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub punctuation_related: Option<bool>,
    /// Glyph and normalization kinds only: `(from, to)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<(String, String)>,
    /// Word-level kinds only: the token also carries a character-level event.
    #[serde(default)]
    pub overlaps_char_event: bool,
    /// Word-level kinds only: whether the reference token is attested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_attested: Option<bool>,
}

impl ProxyEvent {
    fn new(kind: ProxyKind, line_id: &str) -> Self {
        Self {
            kind,
            line_id: line_id.to_owned(),
            ref_surface: String::new(),
            hyp_surface: String::new(),
            ref_offset: 0,
            hyp_offset: 0,
            hyp_len: 0,
            punctuation_related: None,
            pattern: None,
            overlaps_char_event: false,
            ref_attested: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionCategory {
    Glyph,
    NormalizationGraphemic,
    NormalizationLexical,
}

impl ConfusionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfusionCategory::Glyph => "glyph",
            ConfusionCategory::NormalizationGraphemic => "normalization_graphemic",
            ConfusionCategory::NormalizationLexical => "normalization_lexical",
        }
    }
}

impl FromStr for ConfusionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "glyph" => Ok(ConfusionCategory::Glyph),
            "normalization_graphemic" | "graphemic" => Ok(ConfusionCategory::NormalizationGraphemic),
            "normalization_lexical" | "lexical" => Ok(ConfusionCategory::NormalizationLexical),
            other => Err(format!("unknown category '{other}'")),
        }
    }
}

/// Pattern pairs keyed by `(from, to)`; a pair may carry several categories.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionTable {
    pairs: BTreeMap<(String, String), BTreeSet<ConfusionCategory>>,
}

impl ConfusionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair. Both sides must be 1 to 3 scalars and differ.
    pub fn insert(&mut self, from: &str, to: &str, category: ConfusionCategory) -> Result<(), String> {
        let (lf, lt) = (from.chars().count(), to.chars().count());
        if from == to {
            return Err("from and to are identical".into());
        }
        if !(1..=GLYPH_WINDOW).contains(&lf) || !(1..=GLYPH_WINDOW).contains(&lt) {
            return Err(format!("pattern sides must be 1..={GLYPH_WINDOW} scalars"));
        }
        self.pairs.entry((from.to_owned(), to.to_owned())).or_default().insert(category);
        Ok(())
    }

    pub fn categories(&self, from: &str, to: &str) -> Option<&BTreeSet<ConfusionCategory>> {
        self.pairs
            .range((from.to_owned(), to.to_owned())..)
            .next()
            .filter(|((f, t), _)| f == from && t == to)
            .map(|(_, c)| c)
    }

    pub fn contains(&self, from: &str, to: &str) -> bool {
        self.categories(from, to).is_some()
    }

    pub fn has_category(&self, from: &str, to: &str, category: ConfusionCategory) -> bool {
        self.categories(from, to).is_some_and(|c| c.contains(&category))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, ConfusionCategory)> {
        self.pairs.iter().flat_map(|((f, t), cats)| cats.iter().map(move |c| (f.as_str(), t.as_str(), *c)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses `from<TAB>to<TAB>category` lines. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self, TableError> {
        let mut table = ConfusionTable::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |message: String| TableError::Format { line: n, message };
            let [from, to, category] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let category = category.trim().parse().map_err(err)?;
            table.insert(from, to, category).map_err(err)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        Self::read_from(io::BufReader::new(fs::File::open(path)?))
    }

    /// Adds every pair of `other` to this table.
    pub fn extend_from(&mut self, other: &ConfusionTable) {
        for ((f, t), cats) in &other.pairs {
            self.pairs.entry((f.clone(), t.clone())).or_default().extend(cats);
        }
    }
}

/// Built-in long-s and ligature pairs.
pub fn default_confusion_table() -> ConfusionTable {
    use ConfusionCategory::*;
    let mut t = ConfusionTable::new();
    for (f, to) in [("ſ", "s"), ("ſ", "f"), ("f", "ſ"), ("s", "ſ")] {
        t.insert(f, to, Glyph).expect("valid built-in pair");
    }
    for (f, to) in [
        ("ſ", "s"),
        ("æ", "ae"),
        ("Æ", "Ae"),
        ("Æ", "AE"),
        ("œ", "oe"),
        ("Œ", "Oe"),
        ("ﬀ", "ff"),
        ("ﬁ", "fi"),
        ("ﬂ", "fl"),
        ("ﬃ", "ffi"),
        ("ﬄ", "ffl"),
        ("ﬅ", "st"),
        ("ﬆ", "st"),
    ] {
        t.insert(f, to, NormalizationGraphemic).expect("valid built-in pair");
    }
    t
}

/// Real-word / non-word events for substituted and inserted tokens.
pub fn classify_word_errors(
    line_id: &str,
    ref_tokens: &[Token],
    hyp_tokens: &[Token],
    alignment: &TokenAlignment,
    lexicon: &Lexicon,
    ref_length: usize,
) -> Vec<ProxyEvent> {
    let mut events = Vec::new();
    let mut next_ref = 0usize;
    for link in &alignment.links {
        if let Some(r) = link.ref_token {
            next_ref = r + 1;
        }
        if !matches!(link.kind, OpKind::Substitute | OpKind::Insert) {
            continue;
        }
        let Some(h) = link.hyp_token else { continue };
        let hyp = &hyp_tokens[h];
        let attested = lexicon.contains(&hyp.text);
        let mut ev = ProxyEvent::new(if attested { ProxyKind::RealWord } else { ProxyKind::NonWord }, line_id);
        ev.hyp_surface = hyp.text.clone();
        ev.hyp_offset = hyp.start;
        ev.hyp_len = hyp.end - hyp.start;
        match link.ref_token {
            Some(r) => {
                let rt = &ref_tokens[r];
                ev.ref_surface = rt.text.clone();
                ev.ref_offset = rt.start;
                ev.ref_attested = Some(lexicon.contains(&rt.text));
            }
            None => {
                ev.ref_offset = ref_tokens.get(next_ref).map_or(ref_length, |t| t.start);
            }
        }
        events.push(ev);
    }
    events
}

fn punct_near(seq: &[char], positions: &[Option<usize>]) -> bool {
    positions.iter().flatten().any(|&p| seq.get(p).copied().is_some_and(is_punctuation))
}

/// Boundary splits and merges from space-involving edit operations.
pub fn detect_boundary_errors(
    line_id: &str,
    reference: &[char],
    hypothesis: &[char],
    alignment: &CharAlignment,
) -> Vec<ProxyEvent> {
    let mut events = Vec::new();
    for (op, (r, h)) in alignment.ops.iter().zip(alignment.cursors()) {
        let kind = match *op {
            EditOp::Insert { hyp_scalar: ' ', .. } => ProxyKind::BoundarySplit,
            EditOp::Delete { ref_scalar: ' ', .. } => ProxyKind::BoundaryMerge,
            EditOp::Substitute { ref_scalar, hyp_scalar, .. } if (ref_scalar == ' ') != (hyp_scalar == ' ') => {
                if hyp_scalar == ' ' {
                    ProxyKind::BoundarySplit
                } else {
                    ProxyKind::BoundaryMerge
                }
            }
            _ => continue,
        };
        // Neighbourhood of radius 1 on each side. An op that consumes a
        // scalar includes it; a pure insertion/deletion point looks at the
        // scalars on either side of the gap.
        let ref_near: Vec<Option<usize>> = match op.ref_index() {
            Some(i) => vec![i.checked_sub(1), Some(i), Some(i + 1)],
            None => vec![r.checked_sub(1), Some(r)],
        };
        let hyp_near: Vec<Option<usize>> = match op.hyp_index() {
            Some(j) => vec![j.checked_sub(1), Some(j), Some(j + 1)],
            None => vec![h.checked_sub(1), Some(h)],
        };
        let mut ev = ProxyEvent::new(kind, line_id);
        ev.punctuation_related = Some(punct_near(reference, &ref_near) || punct_near(hypothesis, &hyp_near));
        ev.ref_surface = op.ref_scalar().map(String::from).unwrap_or_default();
        ev.hyp_surface = op.hyp_scalar().map(String::from).unwrap_or_default();
        ev.ref_offset = op.ref_index().unwrap_or(r);
        ev.hyp_offset = op.hyp_index().unwrap_or(h);
        ev.hyp_len = usize::from(op.hyp_index().is_some());
        events.push(ev);
    }
    events
}

/// A matched glyph window over the op sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlyphWindow {
    pub from: String,
    pub to: String,
    pub ref_offset: usize,
    pub hyp_offset: usize,
    pub hyp_len: usize,
}

/// Greedy left-to-right scan of each maximal non-Match run. At each position
/// the longest window (up to [`GLYPH_WINDOW`] ops) whose two sides form a
/// table pair is taken; windows never overlap.
pub fn glyph_windows(alignment: &CharAlignment, table: &ConfusionTable) -> Vec<GlyphWindow> {
    let ops = &alignment.ops;
    let cursors = alignment.cursors();
    let mut out = Vec::new();
    let mut k = 0;
    while k < ops.len() {
        if ops[k].is_match() {
            k += 1;
            continue;
        }
        let run_end = ops[k..].iter().position(EditOp::is_match).map_or(ops.len(), |p| k + p);
        let mut p = k;
        while p < run_end {
            let max = GLYPH_WINDOW.min(run_end - p);
            let hit = (1..=max).rev().find_map(|w| {
                let window = &ops[p..p + w];
                let from: String = window.iter().filter_map(EditOp::ref_scalar).collect();
                let to: String = window.iter().filter_map(EditOp::hyp_scalar).collect();
                (!from.is_empty() && !to.is_empty() && table.contains(&from, &to)).then_some((w, from, to))
            });
            match hit {
                Some((w, from, to)) => {
                    let (r, h) = cursors[p];
                    out.push(GlyphWindow { hyp_len: to.chars().count(), from, to, ref_offset: r, hyp_offset: h });
                    p += w;
                }
                None => p += 1,
            }
        }
        k = run_end;
    }
    out
}

pub fn detect_glyph_confusions(line_id: &str, alignment: &CharAlignment, table: &ConfusionTable) -> Vec<ProxyEvent> {
    glyph_windows(alignment, table).into_iter().map(|w| window_event(ProxyKind::GlyphConfusion, line_id, w)).collect()
}

fn window_event(kind: ProxyKind, line_id: &str, w: GlyphWindow) -> ProxyEvent {
    let mut ev = ProxyEvent::new(kind, line_id);
    ev.ref_surface = w.from.clone();
    ev.hyp_surface = w.to.clone();
    ev.ref_offset = w.ref_offset;
    ev.hyp_offset = w.hyp_offset;
    ev.hyp_len = w.hyp_len;
    ev.pattern = Some((w.from, w.to));
    ev
}

/// Outcome of normalization detection for one line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NormalizationEvents {
    pub events: Vec<ProxyEvent>,
    /// False when no modern lexicon was supplied.
    pub lexical_enabled: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn detect_normalizations(
    line_id: &str,
    ref_tokens: &[Token],
    hyp_tokens: &[Token],
    token_alignment: &TokenAlignment,
    char_alignment: &CharAlignment,
    table: &ConfusionTable,
    historical: &Lexicon,
    modern: Option<&Lexicon>,
) -> NormalizationEvents {
    let mut events: Vec<ProxyEvent> = glyph_windows(char_alignment, table)
        .into_iter()
        .filter(|w| table.has_category(&w.from, &w.to, ConfusionCategory::NormalizationGraphemic))
        .map(|w| window_event(ProxyKind::NormalizationGraphemic, line_id, w))
        .collect();

    if let Some(modern) = modern {
        for link in &token_alignment.links {
            if link.kind != OpKind::Substitute {
                continue;
            }
            let (Some(r), Some(h)) = (link.ref_token, link.hyp_token) else {
                continue;
            };
            let (rt, ht) = (&ref_tokens[r], &hyp_tokens[h]);
            if !(historical.contains(&rt.text) && !modern.contains(&rt.text) && modern.contains(&ht.text)) {
                continue;
            }
            let rk = historical.fold(strip_punctuation(&rt.text));
            let hk = historical.fold(strip_punctuation(&ht.text));
            if rk == hk || crate::alignment::edit_distance(&rk, &hk) > LEXICAL_MAX_DISTANCE {
                continue;
            }
            let mut ev = ProxyEvent::new(ProxyKind::NormalizationLexical, line_id);
            ev.ref_surface = rt.text.clone();
            ev.hyp_surface = ht.text.clone();
            ev.ref_offset = rt.start;
            ev.hyp_offset = ht.start;
            ev.hyp_len = ht.end - ht.start;
            ev.pattern = Some((rk, hk));
            events.push(ev);
        }
    }
    NormalizationEvents { events, lexical_enabled: modern.is_some() }
}

/// Hypothesis scalar extent `[start, end)` of each maximal run of non-Match
/// token links that contains at least one hypothesis token.
pub fn token_error_runs(hyp_tokens: &[Token], alignment: &TokenAlignment) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for link in &alignment.links {
        if link.kind == OpKind::Match {
            runs.extend(current.take());
            continue;
        }
        if let Some(h) = link.hyp_token {
            let t = &hyp_tokens[h];
            current = Some(current.map_or((t.start, t.end), |(s, _)| (s, t.end)));
        }
    }
    runs.extend(current);
    runs
}

/// Marks word-level events that meet a boundary or glyph event. A word
/// event covers its whole run of consecutive token errors (see
/// [`token_error_runs`]), widened by one scalar on each side to reach
/// adjacent spaces; a tie in the token alignment can shift a split or merge
/// onto neighbouring words of the same run.
pub fn flag_overlaps(events: &mut [ProxyEvent], runs: &[(usize, usize)]) {
    let char_ranges: Vec<(usize, usize)> = events
        .iter()
        .filter(|e| matches!(e.kind, ProxyKind::BoundarySplit | ProxyKind::BoundaryMerge | ProxyKind::GlyphConfusion))
        .map(|e| (e.hyp_offset, e.hyp_offset + e.hyp_len.max(1)))
        .collect();
    for ev in events.iter_mut().filter(|e| e.kind.is_word_level()) {
        let (start, end) = runs
            .iter()
            .copied()
            .find(|&(s, e)| s <= ev.hyp_offset && ev.hyp_offset < e)
            .unwrap_or((ev.hyp_offset, ev.hyp_offset + ev.hyp_len));
        let lo = start.saturating_sub(1);
        let hi = end.max(ev.hyp_offset + ev.hyp_len) + 1;
        ev.overlaps_char_event = char_ranges.iter().any(|&(s, e)| s < hi && e > lo);
    }
}

/// Everything the classifier needs for one line.
pub struct LineInput<'a> {
    pub line_id: &'a str,
    pub reference: &'a NormalizedText,
    pub hypothesis: &'a NormalizedText,
    pub char_alignment: &'a CharAlignment,
    pub ref_tokens: &'a [Token],
    pub hyp_tokens: &'a [Token],
    pub token_alignment: &'a TokenAlignment,
}

pub struct Resources<'a> {
    pub historical: &'a Lexicon,
    pub modern: Option<&'a Lexicon>,
    pub table: &'a ConfusionTable,
}

/// Runs every detector on one line and flags overlaps. Events are ordered by
/// proxy kind, then by position.
pub fn classify_line(input: &LineInput<'_>, res: &Resources<'_>) -> NormalizationEvents {
    let ref_scalars = input.reference.scalars();
    let hyp_scalars = input.hypothesis.scalars();
    let mut events = classify_word_errors(
        input.line_id,
        input.ref_tokens,
        input.hyp_tokens,
        input.token_alignment,
        res.historical,
        ref_scalars.len(),
    );
    events.extend(detect_boundary_errors(input.line_id, &ref_scalars, &hyp_scalars, input.char_alignment));
    events.extend(detect_glyph_confusions(input.line_id, input.char_alignment, res.table));
    let norm = detect_normalizations(
        input.line_id,
        input.ref_tokens,
        input.hyp_tokens,
        input.token_alignment,
        input.char_alignment,
        res.table,
        res.historical,
        res.modern,
    );
    events.extend(norm.events);
    flag_overlaps(&mut events, &token_error_runs(input.hyp_tokens, input.token_alignment));
    events.sort_by_key(|e| (e.kind, e.ref_offset, e.hyp_offset));
    NormalizationEvents { events, lexical_enabled: norm.lexical_enabled }
}
