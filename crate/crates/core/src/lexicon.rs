//! Historical attestation lexicon.
//!
//! Keys are normalized, punctuation-trimmed tokens, case-folded unless the
//! lexicon was built case-sensitive. Long-s and ligature scalars stay
//! distinct; any key that contains them is additionally stored in its fully
//! decomposed spelling (`preſent` also attests `present`).
//!
//! On-disk format, UTF-8, one item per line:
//!
//! ```text
//! #histocr-lexicon 1
//! #folding lower+graphemic-expansion
//! #min-frequency 1
//! #built 1700000000
//! #source corpus/a.txt
//! #entries 3
//! ---
//! cat
//! dog
//! the
//! ```
//!
//! Keys are sorted by code point so identical lexicons serialize to identical
//! bytes.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::tokenize;
use crate::textnorm::{is_punctuation, normalize};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "#histocr-lexicon";

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("corpus line {line}: invalid UTF-8")]
    Decode { line: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no token reaches min_frequency {min_frequency}; the lexicon would be empty")]
    EmptyLexicon { min_frequency: u64 },
    #[error("lexicon file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported lexicon format version {found} (this build reads version {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How tokens become lookup keys.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyFolding {
    /// Lowercase, with graphemic expansion of entries.
    #[default]
    Lower,
    /// Case preserved, with graphemic expansion of entries.
    Exact,
}

impl KeyFolding {
    pub fn id(self) -> &'static str {
        match self {
            KeyFolding::Lower => "lower+graphemic-expansion",
            KeyFolding::Exact => "exact+graphemic-expansion",
        }
    }

    fn from_id(id: &str) -> Option<Self> {
        match id {
            "lower+graphemic-expansion" => Some(KeyFolding::Lower),
            "exact+graphemic-expansion" => Some(KeyFolding::Exact),
            _ => None,
        }
    }

    pub fn fold(self, token: &str) -> String {
        match self {
            KeyFolding::Lower => token.to_lowercase(),
            KeyFolding::Exact => token.to_owned(),
        }
    }
}

/// Graphemic decomposition applied when expanding entries. Uppercase forms
/// are listed for case-sensitive lexicons.
pub fn decompose_grapheme(c: char) -> Option<&'static str> {
    Some(match c {
        'ſ' => "s",
        'æ' => "ae",
        'Æ' => "Ae",
        'œ' => "oe",
        'Œ' => "Oe",
        'ﬀ' => "ff",
        'ﬁ' => "fi",
        'ﬂ' => "fl",
        'ﬃ' => "ffi",
        'ﬄ' => "ffl",
        'ﬅ' | 'ﬆ' => "st",
        _ => return None,
    })
}

/// Fully decomposed spelling, or `None` if the key has nothing to decompose.
pub fn decomposed_variant(key: &str) -> Option<String> {
    if !key.chars().any(|c| decompose_grapheme(c).is_some()) {
        return None;
    }
    let mut out = String::with_capacity(key.len() + 4);
    for c in key.chars() {
        match decompose_grapheme(c) {
            Some(s) => out.push_str(s),
            None => out.push(c),
        }
    }
    Some(out)
}

/// Removes leading and trailing Unicode punctuation.
pub fn strip_punctuation(token: &str) -> &str {
    token.trim_matches(is_punctuation)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconMetadata {
    pub sources: Vec<String>,
    pub entry_count: usize,
    /// Seconds since the Unix epoch.
    pub built_at: u64,
    pub folding: KeyFolding,
    pub min_frequency: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeSet<String>,
    metadata: LexiconMetadata,
}

impl Lexicon {
    pub fn metadata(&self) -> &LexiconMetadata {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn fold(&self, token: &str) -> String {
        self.metadata.folding.fold(token)
    }

    /// Whether a token is attested. The token is folded first; if the folded
    /// form is absent, the lookup is retried with leading and trailing
    /// punctuation removed.
    pub fn contains(&self, token: &str) -> bool {
        if token.is_empty() {
            return false;
        }
        let key = self.fold(token);
        if self.entries.contains(&key) {
            return true;
        }
        let bare = strip_punctuation(&key);
        !bare.is_empty() && bare.len() != key.len() && self.entries.contains(bare)
    }

    /// Builds a lexicon directly from a key set. Keys are folded and expanded
    /// the same way as corpus tokens.
    pub fn from_words<I, S>(words: I, folding: KeyFolding) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries = BTreeSet::new();
        for w in words {
            let key = folding.fold(strip_punctuation(w.as_ref()));
            if key.is_empty() {
                continue;
            }
            if let Some(v) = decomposed_variant(&key) {
                entries.insert(v);
            }
            entries.insert(key);
        }
        Lexicon {
            metadata: LexiconMetadata {
                sources: Vec::new(),
                entry_count: entries.len(),
                built_at: 0,
                folding,
                min_frequency: 1,
            },
            entries,
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = &self.metadata;
        writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
        writeln!(out, "#folding {}", m.folding.id())?;
        writeln!(out, "#min-frequency {}", m.min_frequency)?;
        writeln!(out, "#built {}", m.built_at)?;
        for s in &m.sources {
            writeln!(out, "#source {s}")?;
        }
        writeln!(out, "#entries {}", self.entries.len())?;
        writeln!(out, "---")?;
        for e in &self.entries {
            writeln!(out, "{e}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, LexiconError> {
        let fmt_err = |line: usize, message: &str| LexiconError::Format { line, message: message.to_owned() };
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (n, first) = lines.next().ok_or_else(|| fmt_err(1, "empty file"))?;
        let first = first?;
        let version = first.strip_prefix(MAGIC).map(str::trim).ok_or_else(|| fmt_err(n, "missing lexicon header"))?;
        let version: u32 = version.parse().map_err(|_| fmt_err(n, "unreadable format version"))?;
        if version != FORMAT_VERSION {
            return Err(LexiconError::Version { found: version });
        }

        let mut folding = None;
        let mut min_frequency = None;
        let mut built_at = None;
        let mut expected = None;
        let mut sources = Vec::new();
        let mut header_closed = false;
        let mut last_line = n;
        for (n, line) in lines.by_ref() {
            let line = line?;
            last_line = n;
            if line == "---" {
                header_closed = true;
                break;
            }
            let (key, value) = line
                .strip_prefix('#')
                .and_then(|l| l.split_once(' '))
                .ok_or_else(|| fmt_err(n, "malformed header line"))?;
            match key {
                "folding" => {
                    folding = Some(KeyFolding::from_id(value).ok_or_else(|| fmt_err(n, "unknown folding policy"))?)
                }
                "min-frequency" => min_frequency = Some(value.parse().map_err(|_| fmt_err(n, "bad min-frequency"))?),
                "built" => built_at = Some(value.parse().map_err(|_| fmt_err(n, "bad timestamp"))?),
                "source" => sources.push(value.to_owned()),
                "entries" => expected = Some(value.parse::<usize>().map_err(|_| fmt_err(n, "bad entry count"))?),
                _ => return Err(fmt_err(n, "unknown header key")),
            }
        }
        if !header_closed {
            return Err(fmt_err(last_line, "truncated header"));
        }
        let missing = |what: &str| fmt_err(last_line, &format!("header lacks {what}"));
        let folding = folding.ok_or_else(|| missing("#folding"))?;
        let min_frequency = min_frequency.ok_or_else(|| missing("#min-frequency"))?;
        let built_at = built_at.ok_or_else(|| missing("#built"))?;
        let expected = expected.ok_or_else(|| missing("#entries"))?;

        let mut entries = BTreeSet::new();
        for (n, line) in lines {
            let line = line?;
            last_line = n;
            if line.is_empty() || line.contains(' ') {
                return Err(fmt_err(n, "invalid entry"));
            }
            if !entries.insert(line) {
                return Err(fmt_err(n, "duplicate entry"));
            }
        }
        if entries.len() != expected {
            return Err(fmt_err(
                last_line,
                &format!("expected {expected} entries, found {} (truncated file?)", entries.len()),
            ));
        }
        Ok(Lexicon {
            metadata: LexiconMetadata { sources, entry_count: entries.len(), built_at, folding, min_frequency },
            entries,
        })
    }
}

pub fn save_lexicon(lexicon: &Lexicon, path: &Path) -> Result<(), LexiconError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    lexicon.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, LexiconError> {
    Lexicon::read_from(io::BufReader::new(fs::File::open(path)?))
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub min_frequency: u64,
    pub folding: KeyFolding,
    pub sources: Vec<String>,
    /// Build time to record; `None` uses the current clock.
    pub timestamp: Option<u64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { min_frequency: 1, folding: KeyFolding::Lower, sources: Vec::new(), timestamp: None }
    }
}

/// Incremental lexicon construction: feed corpus lines, then [`finish`].
///
/// [`finish`]: LexiconBuilder::finish
#[derive(Debug)]
pub struct LexiconBuilder {
    options: BuildOptions,
    counts: HashMap<String, u64>,
    lines: usize,
}

impl LexiconBuilder {
    pub fn new(options: BuildOptions) -> Self {
        Self { options, counts: HashMap::new(), lines: 0 }
    }

    pub fn add_line(&mut self, raw: &str) {
        self.lines += 1;
        let text = normalize(raw);
        for token in tokenize(&text) {
            let key = self.options.folding.fold(strip_punctuation(&token.text));
            if key.is_empty() {
                continue;
            }
            *self.counts.entry(key).or_insert(0) += 1;
        }
    }

    pub fn finish(self) -> Result<Lexicon, LexiconError> {
        if self.lines == 0 {
            return Err(LexiconError::EmptyCorpus);
        }
        let min = self.options.min_frequency;
        let mut entries = BTreeSet::new();
        for (key, count) in self.counts {
            if count < min {
                continue;
            }
            if let Some(v) = decomposed_variant(&key) {
                entries.insert(v);
            }
            entries.insert(key);
        }
        if entries.is_empty() {
            return Err(LexiconError::EmptyLexicon { min_frequency: min });
        }
        let built_at = self
            .options
            .timestamp
            .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Ok(Lexicon {
            metadata: LexiconMetadata {
                sources: self.options.sources,
                entry_count: entries.len(),
                built_at,
                folding: self.options.folding,
                min_frequency: min,
            },
            entries,
        })
    }
}

pub fn build_lexicon<I, S>(lines: I, options: BuildOptions) -> Result<Lexicon, LexiconError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut builder = LexiconBuilder::new(options);
    for line in lines {
        builder.add_line(line.as_ref());
    }
    builder.finish()
}

/// Builds from a byte stream, reporting undecodable lines by number.
pub fn build_lexicon_from_reader<R: BufRead>(mut input: R, options: BuildOptions) -> Result<Lexicon, LexiconError> {
    let mut builder = LexiconBuilder::new(options);
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| LexiconError::Decode { line: line_no })?;
        builder.add_line(line.trim_end_matches(['\n', '\r']));
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts(min_frequency: u64) -> BuildOptions {
        BuildOptions { min_frequency, timestamp: Some(1_700_000_000), ..BuildOptions::default() }
    }

    fn keys(lex: &Lexicon) -> Vec<&str> {
        lex.entries().collect()
    }

    #[test]
    fn builds_from_small_corpus() {
        let lex = build_lexicon(["the cat", "the dog"], opts(1)).unwrap();
        assert_eq!(keys(&lex), vec!["cat", "dog", "the"]);

        let lex = build_lexicon(["preſent preſent"], opts(2)).unwrap();
        assert_eq!(keys(&lex), vec!["present", "preſent"]);

        let err = build_lexicon(["preſent preſent"], opts(3)).unwrap_err();
        assert!(matches!(err, LexiconError::EmptyLexicon { min_frequency: 3 }));

        let err = build_lexicon(Vec::<&str>::new(), opts(1)).unwrap_err();
        assert!(matches!(err, LexiconError::EmptyCorpus));
    }

    #[test]
    fn folds_case_and_strips_punctuation_at_build() {
        let lex = build_lexicon(["The CAT, said \u{201C}Cæſar\u{201D} -- ."], opts(1)).unwrap();
        assert_eq!(keys(&lex), vec!["caesar", "cat", "cæſar", "said", "the"]);
    }

    #[test]
    fn membership() {
        let lex = Lexicon::from_words(["futurity"], KeyFolding::Lower);
        assert!(lex.contains("futurity,"));
        assert!(lex.contains("Futurity"));
        assert!(!lex.contains("ſuturity"));
        assert!(!lex.contains(""));
        assert!(!lex.contains(",,"));
    }

    #[test]
    fn exact_folding_is_case_sensitive() {
        let lex = build_lexicon(["Cæſar"], BuildOptions { folding: KeyFolding::Exact, ..opts(1) }).unwrap();
        assert_eq!(keys(&lex), vec!["Caesar", "Cæſar"]);
        assert!(!lex.contains("cæſar"));
    }

    #[test]
    fn persistence_round_trip() {
        let lex =
            build_lexicon(["a b ſo"], BuildOptions { sources: vec!["x.txt".into(), "y z.txt".into()], ..opts(1) })
                .unwrap();
        let mut buf = Vec::new();
        lex.write_to(&mut buf).unwrap();
        let back = Lexicon::read_from(&buf[..]).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let lex = Lexicon::from_words(["alpha", "beta", "gamma"], KeyFolding::Lower);
        let mut buf = Vec::new();
        lex.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - "gamma\n".len()];
        assert!(matches!(Lexicon::read_from(cut.as_bytes()), Err(LexiconError::Format { .. })));
        let header_only = &text[..text.find("#entries").unwrap()];
        assert!(matches!(Lexicon::read_from(header_only.as_bytes()), Err(LexiconError::Format { .. })));
        assert!(matches!(Lexicon::read_from(&b""[..]), Err(LexiconError::Format { .. })));
    }

    #[test]
    fn future_version_is_rejected() {
        let text = "#histocr-lexicon 2\n#folding lower+graphemic-expansion\n---\n";
        assert!(matches!(Lexicon::read_from(text.as_bytes()), Err(LexiconError::Version { found: 2 })));
    }

    #[test]
    fn reader_reports_bad_utf8_line() {
        let bytes = b"good line\nbad \xff line\n";
        let err = build_lexicon_from_reader(&bytes[..], opts(1)).unwrap_err();
        assert!(matches!(err, LexiconError::Decode { line: 2 }));
    }

    #[test]
    fn build_is_deterministic() {
        let corpus = ["ſome words here", "and ſome more words", "Words!"];
        let a = build_lexicon(corpus, opts(1)).unwrap();
        let b = build_lexicon(corpus, opts(1)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn fold_consistency(lines in prop::collection::vec("[a-cA-Cſæ ,.]{1,12}", 1..6), probe in "[a-cA-Cſæ,.]{0,6}") {
            if let Ok(lex) = build_lexicon(&lines, opts(1)) {
                prop_assert_eq!(lex.contains(&probe), lex.contains(&lex.fold(&probe)));
            }
        }

        #[test]
        fn lowering_min_frequency_never_removes(lines in prop::collection::vec("[a-dſ ]{1,16}", 1..8), hi in 2u64..5) {
            let high = build_lexicon(&lines, opts(hi));
            let low = build_lexicon(&lines, opts(hi - 1));
            if let (Ok(high), Ok(low)) = (high, low) {
                for e in high.entries() {
                    prop_assert!(low.contains(e));
                }
            }
        }
    }
}
