//! Minimal technical normalization for diplomatic transcriptions.
//!
//! The policy only stabilizes encoding-level variation. Whitespace runs
//! collapse to a single ASCII space, leading and trailing whitespace is
//! removed, every dash or hyphen variant becomes `-`, and runs of hyphens
//! collapse to one. Long-s, ligatures, diacritics, punctuation and case are
//! left exactly as they are.
//!
//! Pipeline order: zero-width removal, NFC, whitespace mapping, dash
//! mapping, run collapsing, trimming.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Text that has passed through [`normalize`].
///
/// The only way to obtain one is through normalization (or deserializing
/// text that is re-normalized on the way in), so downstream code can rely on
/// the invariants without re-checking them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NormalizedText {
    content: String,
    original_length: usize,
}

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.content
    }

    /// Number of Unicode scalars before normalization.
    pub fn original_length(&self) -> usize {
        self.original_length
    }

    /// Number of Unicode scalars in the normalized content.
    pub fn scalar_len(&self) -> usize {
        self.content.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }

    pub fn scalars(&self) -> Vec<char> {
        self.content.chars().collect()
    }

    pub fn into_string(self) -> String {
        self.content
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.content)
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.content
    }
}

impl<'de> Deserialize<'de> for NormalizedText {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            content: String,
            original_length: usize,
        }
        let raw = Raw::deserialize(deserializer)?;
        let mut text = normalize(&raw.content);
        text.original_length = raw.original_length;
        Ok(text)
    }
}

/// Characters mapped to an ASCII space: everything with the Unicode
/// `White_Space` property.
pub fn is_whitespace_variant(c: char) -> bool {
    c.is_whitespace()
}

/// Zero-width space characters. They carry no visible content and are
/// removed outright; mapping them to a space would split words.
pub fn is_zero_width_space(c: char) -> bool {
    matches!(c, '\u{200B}' | '\u{2060}' | '\u{FEFF}')
}

/// Dash punctuation (general category `Pd`) plus U+2212 MINUS SIGN.
pub fn is_dash_variant(c: char) -> bool {
    c == '\u{2212}' || get_general_category(c) == GeneralCategory::DashPunctuation
}

/// Unicode punctuation (any `P*` general category).
pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Applies the normalization policy. Total: every input, including the
/// empty string, produces a valid [`NormalizedText`].
pub fn normalize(raw: &str) -> NormalizedText {
    let original_length = raw.chars().count();
    let mut content = String::with_capacity(raw.len());
    let mut prev: Option<char> = None;

    // Zero-width spaces go before composition so that removing one can never
    // leave a composable pair behind.
    for c in raw.chars().filter(|&c| !is_zero_width_space(c)).nfc() {
        let mapped = if is_whitespace_variant(c) {
            ' '
        } else if is_dash_variant(c) {
            '-'
        } else {
            c
        };
        match (prev, mapped) {
            (Some(' '), ' ') | (Some('-'), '-') => continue,
            // leading whitespace
            (None, ' ') => continue,
            _ => {}
        }
        content.push(mapped);
        prev = Some(mapped);
    }
    if content.ends_with(' ') {
        content.pop();
    }

    NormalizedText { content, original_length }
}
