//! Seeded synthetic corpora for tests, demos and benchmarks.
//!
//! * [`planted_corpus`]: clean lines with an exact number of planted
//!   mutations of each proxy kind, for checking classifier tallies.
//! * [`demo_corpus`]: two synthetic systems with contrasting error styles.
//!   `cascade` garbles contiguous runs; `normalizer` makes single-scalar
//!   slips and modernizes spellings.
//! * [`throughput_corpus`]: the demo generator at scale with ~60-scalar lines.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{write_manifest, LineRecord};
use crate::lexicon::{build_lexicon, save_lexicon, BuildOptions, KeyFolding, Lexicon};
use crate::textnorm::is_punctuation;

/// Words that carry long-s, f or round s, for glyph mutations.
const GLYPH_WORDS: &[&str] = &[
    "preſent", "ſuch", "firſt", "moſt", "itſelf", "himſelf", "faſhion", "houſe", "ſome", "ſaid", "ſhall", "fame",
    "fair", "life", "of", "from", "for", "after", "is", "his", "was", "as", "thoſe", "theſe", "ſpirit", "uſe",
    "reaſon", "ſenſe", "ſtate", "force", "yet", "laws",
];

/// Equal-length partners with no long-s, f, s, ligature or punctuation.
const SWAP_PAIRS: &[(&str, &str)] = &[
    ("the", "and"),
    ("him", "her"),
    ("king", "lord"),
    ("town", "land"),
    ("might", "would"),
    ("great", "noble"),
    ("power", "order"),
    ("people", "nation"),
    ("manner", "temper"),
    ("every", "other"),
    ("church", "palace"),
    ("but", "not"),
];

const PLAIN_WORDS: &[&str] = &[
    "which",
    "that",
    "with",
    "their",
    "there",
    "general",
    "country",
    "before",
    "public",
    "hand",
    "many",
    "called",
    "upon",
    "during",
    "whole",
    "author",
    "manual",
    "labour",
    "covenant",
    "minority",
    "enforced",
    "rigorouſly",
    "merely",
    "tending",
    "ancient",
    "empire",
];

const PUNCT_WORDS: &[&str] = &["futurity,", "time;", "world.", "nation,", "again:", "order,", "reign;", "end."];

/// Historical spellings and their modern forms.
const NORMALIZATION_PAIRS: &[(&str, &str)] = &[
    ("Antient", "Ancient"),
    ("imploy", "employ"),
    ("phænomena", "phaenomena"),
    ("publick", "public"),
    ("compleat", "complete"),
    ("croud", "crowd"),
    ("ſtile", "style"),
    ("ſhew", "show"),
    ("muſick", "music"),
    ("Cæſar", "Caesar"),
    ("ſhewn", "shown"),
    ("encreaſe", "increase"),
];

fn all_clean_words() -> Vec<&'static str> {
    let mut v: Vec<&str> = GLYPH_WORDS.iter().chain(PLAIN_WORDS).chain(PUNCT_WORDS).copied().collect();
    for (a, b) in SWAP_PAIRS {
        v.push(a);
        v.push(b);
    }
    v
}

fn fixed_build(folding: KeyFolding, source: &str) -> BuildOptions {
    BuildOptions { min_frequency: 1, folding, sources: vec![source.to_owned()], timestamp: Some(0) }
}

/// Mutation counts for [`planted_corpus`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantSpec {
    pub splits: usize,
    pub merges: usize,
    /// How many of `merges` follow a punctuation-final token.
    pub punctuation_merges: usize,
    pub glyph_confusions: usize,
    pub swaps: usize,
    pub non_words: usize,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self { splits: 20, merges: 15, punctuation_merges: 5, glyph_confusions: 30, swaps: 25, non_words: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct PlantedCorpus {
    pub records: Vec<LineRecord>,
    pub lexicon: Lexicon,
    pub spec: PlantSpec,
}

pub const PLANTED_MODEL: &str = "planted";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mutation {
    Split,
    Merge,
    PunctMerge,
    Glyph,
    Swap,
    NonWord,
}

fn alphabetic(w: &str) -> bool {
    w.chars().all(char::is_alphabetic)
}

fn ends_with_punct(w: &str) -> bool {
    w.chars().last().is_some_and(is_punctuation) && w.chars().next().is_some_and(char::is_alphabetic)
}

fn swap_partner(w: &str) -> Option<&'static str> {
    SWAP_PAIRS.iter().find_map(|&(a, b)| {
        if a == w {
            Some(b)
        } else if b == w {
            Some(a)
        } else {
            None
        }
    })
}

fn eligible(m: Mutation, line: &[String], i: usize) -> bool {
    let w = line[i].as_str();
    let next_ok = || line.get(i + 1).is_some_and(|n| alphabetic(n));
    match m {
        Mutation::Split => alphabetic(w) && w.chars().count() >= 4,
        Mutation::Merge => alphabetic(w) && next_ok(),
        Mutation::PunctMerge => ends_with_punct(w) && next_ok(),
        Mutation::Glyph => w.chars().any(|c| matches!(c, 'ſ' | 'f' | 's')),
        Mutation::Swap => swap_partner(w).is_some(),
        Mutation::NonWord => alphabetic(w) && w.chars().count() >= 3 && !w.contains('q'),
    }
}

fn apply(m: Mutation, line: &mut Vec<String>, i: usize, rng: &mut ChaCha8Rng) {
    let chars: Vec<char> = line[i].chars().collect();
    match m {
        Mutation::Split => {
            let at = rng.random_range(2..=chars.len() - 2);
            let (a, b): (String, String) = (chars[..at].iter().collect(), chars[at..].iter().collect());
            line[i] = format!("{a} {b}");
        }
        Mutation::Merge | Mutation::PunctMerge => {
            let right = line.remove(i + 1);
            line[i].push_str(&right);
        }
        Mutation::Glyph => {
            let sites: Vec<usize> = (0..chars.len()).filter(|&k| matches!(chars[k], 'ſ' | 'f' | 's')).collect();
            let k = *sites.choose(rng).expect("eligible word has a site");
            let mut out = chars.clone();
            out[k] = match chars[k] {
                'ſ' => *['f', 's'].choose(rng).expect("non-empty"),
                _ => 'ſ',
            };
            line[i] = out.into_iter().collect();
        }
        Mutation::Swap => line[i] = swap_partner(&line[i]).expect("eligible").to_owned(),
        Mutation::NonWord => {
            let k = rng.random_range(1..chars.len());
            let mut out = chars.clone();
            out[k] = 'q';
            line[i] = out.into_iter().collect();
        }
    }
}

fn random_line(rng: &mut ChaCha8Rng, vocab: &[&str], min_scalars: usize) -> Vec<String> {
    let mut line: Vec<String> = Vec::new();
    let mut len = 0;
    while len < min_scalars {
        let w = *vocab.choose(rng).expect("vocabulary is non-empty");
        len += w.chars().count() + usize::from(!line.is_empty());
        line.push(w.to_owned());
    }
    line
}

/// Clean lines with exactly the mutation counts in `spec`. Mutated tokens are
/// never adjacent, so any two mutations are at least three scalars apart.
pub fn planted_corpus(lines: usize, spec: &PlantSpec, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = all_clean_words();
    let clean: Vec<Vec<String>> = (0..lines).map(|_| random_line(&mut rng, &vocab, 45)).collect();
    let lexicon =
        build_lexicon(&vocab, fixed_build(KeyFolding::Lower, "planted-vocabulary")).expect("vocabulary is non-empty");

    let mut plan: Vec<Mutation> = Vec::new();
    plan.extend(std::iter::repeat_n(Mutation::PunctMerge, spec.punctuation_merges));
    plan.extend(std::iter::repeat_n(Mutation::Merge, spec.merges - spec.punctuation_merges));
    plan.extend(std::iter::repeat_n(Mutation::Split, spec.splits));
    plan.extend(std::iter::repeat_n(Mutation::Glyph, spec.glyph_confusions));
    plan.extend(std::iter::repeat_n(Mutation::Swap, spec.swaps));
    plan.extend(std::iter::repeat_n(Mutation::NonWord, spec.non_words));

    // Choose (line, token) sites on the clean text first; a merge claims
    // its right neighbour too. A site needs unclaimed neighbours on both
    // sides.
    let mut claimed: Vec<Vec<bool>> = clean.iter().map(|l| vec![false; l.len()]).collect();
    let mut chosen: Vec<(usize, usize, Mutation)> = Vec::new();
    for &m in &plan {
        let width = if matches!(m, Mutation::Merge | Mutation::PunctMerge) { 2 } else { 1 };
        let mut attempts = 0;
        loop {
            attempts += 1;
            assert!(attempts < 100_000, "cannot place mutation {m:?}; corpus too small");
            let li = rng.random_range(0..lines);
            let line = &clean[li];
            let ti = rng.random_range(0..line.len());
            if ti + width > line.len() || !eligible(m, line, ti) {
                continue;
            }
            let lo = ti.saturating_sub(1);
            let hi = (ti + width).min(line.len() - 1);
            if claimed[li][lo..=hi].iter().any(|&c| c) {
                continue;
            }
            claimed[li][ti..ti + width].iter_mut().for_each(|c| *c = true);
            chosen.push((li, ti, m));
            break;
        }
    }

    // Apply right to left within each line so token indices stay valid.
    chosen.sort_by_key(|&(li, ti, _)| (li, std::cmp::Reverse(ti)));
    let mut noisy = clean.clone();
    for &(li, ti, m) in &chosen {
        apply(m, &mut noisy[li], ti, &mut rng);
    }

    let records = clean
        .iter()
        .zip(&noisy)
        .enumerate()
        .map(|(i, (c, n))| {
            let mut r =
                LineRecord::new(&format!("P{:04}", i + 1), &c.join(" "), [(PLANTED_MODEL, n.join(" ").as_str())]);
            r.modality = Some(if i % 2 == 0 { "bw" } else { "color" }.to_owned());
            r
        })
        .collect();
    PlantedCorpus { records, lexicon, spec: *spec }
}

/// Two-system corpus plus the lexica needed to analyze it.
#[derive(Clone, Debug)]
pub struct DemoCorpus {
    pub records: Vec<LineRecord>,
    pub historical_text: Vec<String>,
    pub modern_text: Vec<String>,
    pub historical: Lexicon,
    pub modern: Lexicon,
}

pub const CASCADE_MODEL: &str = "cascade";
pub const NORMALIZER_MODEL: &str = "normalizer";

fn modernize(word: &str) -> String {
    if let Some((_, m)) = NORMALIZATION_PAIRS.iter().find(|(h, _)| *h == word) {
        return (*m).to_owned();
    }
    word.replace('ſ', "s").replace('æ', "ae")
}

const GARBAGE: &[char] = &['a', 'c', 'e', 'i', 'l', 'm', 'n', 'o', 'r', 'u', 'v', 'w', 'x', 'z', '.', '\''];

/// A run of 4 to 8 scalars replaced by look-alike garbage.
fn cascade(reference: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = reference.chars().collect();
    if chars.len() < 10 || rng.random_bool(0.15) {
        return reference.to_owned();
    }
    let run = rng.random_range(4..=8).min(chars.len() - 1);
    // skew toward the start of the line
    let start = rng.random_range(0..=(chars.len() - run) / 2);
    let mut out: String = chars[..start].iter().collect();
    for _ in 0..run {
        out.push(*GARBAGE.choose(rng).expect("non-empty"));
    }
    out.extend(&chars[start + run..]);
    out
}

const NEIGHBOURS: &[(char, char)] =
    &[('e', 'c'), ('c', 'e'), ('n', 'u'), ('u', 'n'), ('h', 'b'), ('l', 'i'), ('r', 't'), ('o', 'a')];

/// Modernized historical words plus at most one single-scalar slip.
fn normalizer(tokens: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut out: Vec<String> = tokens
        .iter()
        .map(|t| {
            let historical = NORMALIZATION_PAIRS.iter().any(|(h, _)| h == t);
            if historical && rng.random_bool(0.8) {
                modernize(t)
            } else {
                t.clone()
            }
        })
        .collect();
    if rng.random_bool(0.5) {
        let ti = rng.random_range(0..out.len());
        let chars: Vec<char> = out[ti].chars().collect();
        let sites: Vec<(usize, char)> = chars
            .iter()
            .enumerate()
            .filter_map(|(k, c)| NEIGHBOURS.iter().find(|(a, _)| a == c).map(|(_, b)| (k, *b)))
            .collect();
        if let Some(&(k, b)) = sites.choose(rng) {
            let mut cs = chars.clone();
            cs[k] = b;
            out[ti] = cs.into_iter().collect();
        }
    }
    out.join(" ")
}

fn demo_line(rng: &mut ChaCha8Rng, vocab: &[&str], min_scalars: usize) -> Vec<String> {
    let mut line = random_line(rng, vocab, min_scalars.saturating_sub(10));
    let n = rng.random_range(1..=2);
    for _ in 0..n {
        let (h, _) = NORMALIZATION_PAIRS.choose(rng).expect("non-empty");
        let at = rng.random_range(0..=line.len());
        line.insert(at, (*h).to_owned());
    }
    line
}

/// Demo corpus with `lines` lines of at least `min_scalars` scalars.
pub fn demo_corpus_sized(lines: usize, min_scalars: usize, seed: u64) -> DemoCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = all_clean_words();
    let mut records = Vec::with_capacity(lines);
    let mut historical_text = Vec::with_capacity(lines);
    for i in 0..lines {
        let tokens = demo_line(&mut rng, &vocab, min_scalars);
        let reference = tokens.join(" ");
        let c = cascade(&reference, &mut rng);
        let n = normalizer(&tokens, &mut rng);
        let mut r = LineRecord::new(
            &format!("D{:05}", i + 1),
            &reference,
            [(CASCADE_MODEL, c.as_str()), (NORMALIZER_MODEL, n.as_str())],
        );
        r.modality = Some(if i % 3 == 0 { "color" } else { "bw" }.to_owned());
        r.source = Some("synthetic".to_owned());
        records.push(r);
        historical_text.push(reference);
    }
    let mut modern_text: Vec<String> =
        vocab.iter().map(|w| modernize(w)).chain(NORMALIZATION_PAIRS.iter().map(|(_, m)| (*m).to_owned())).collect();
    modern_text.sort();
    modern_text.dedup();
    let historical = build_lexicon(&historical_text, fixed_build(KeyFolding::Lower, "historical_corpus.txt"))
        .expect("non-empty corpus");
    let modern =
        build_lexicon(&modern_text, fixed_build(KeyFolding::Lower, "modern_corpus.txt")).expect("non-empty corpus");
    DemoCorpus { records, historical_text, modern_text, historical, modern }
}

pub const DEMO_LINES: usize = 120;
pub const DEMO_SEED: u64 = 1750;

/// The bundled demo corpus.
pub fn demo_corpus() -> DemoCorpus {
    demo_corpus_sized(DEMO_LINES, 30, DEMO_SEED)
}

/// Benchmark corpus: `lines` lines of roughly 60 scalars.
pub fn throughput_corpus(lines: usize, seed: u64) -> DemoCorpus {
    demo_corpus_sized(lines, 58, seed)
}

/// Writes manifest, corpus texts and lexica for a demo corpus into `dir`.
pub fn write_demo_files(corpus: &DemoCorpus, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&corpus.records, io::BufWriter::new(fs::File::create(&manifest)?))?;
    files.push(manifest);
    for (name, text) in [("historical_corpus.txt", &corpus.historical_text), ("modern_corpus.txt", &corpus.modern_text)]
    {
        let path = dir.join(name);
        let mut body = text.join("\n");
        body.push('\n');
        fs::write(&path, body)?;
        files.push(path);
    }
    for (name, lex) in [("historical.lex", &corpus.historical), ("modern.lex", &corpus.modern)] {
        let path = dir.join(name);
        save_lexicon(lex, &path).map_err(io::Error::other)?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize;

    #[test]
    fn planted_is_deterministic() {
        let a = planted_corpus(200, &PlantSpec::default(), 11);
        let b = planted_corpus(200, &PlantSpec::default(), 11);
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 200);
    }

    #[test]
    fn swap_pairs_are_attested_and_plain() {
        for (a, b) in SWAP_PAIRS {
            assert_eq!(a.chars().count(), b.chars().count());
            for w in [a, b] {
                assert!(alphabetic(w) && !w.contains(['ſ', 's', 'f']), "{w}");
            }
        }
    }

    #[test]
    fn demo_is_deterministic() {
        let a = demo_corpus_sized(30, 30, 5);
        let b = demo_corpus_sized(30, 30, 5);
        assert_eq!(a.records, b.records);
        for r in &a.records {
            assert_eq!(normalize(r.reference.as_str()).as_str(), r.reference.as_str());
        }
        assert!(a.records.iter().any(|r| r.reference.as_str().contains('ſ')));
    }

    #[test]
    fn historical_forms_are_not_modern() {
        let d = demo_corpus_sized(40, 30, 9);
        for (h, m) in NORMALIZATION_PAIRS {
            assert!(!d.modern.contains(h), "{h}");
            assert!(d.modern.contains(m), "{m}");
        }
    }
}
