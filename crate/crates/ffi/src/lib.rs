//! C ABI over the `histocr` library.
//!
//! Every fallible function returns a [`HistocrStatus`] and writes results
//! through out-pointers. On failure a message is kept per thread and can be
//! read with [`histocr_last_error_message`]. Strings returned to the caller
//! are owned by the caller and must be released with [`histocr_string_free`].
//! Lexicon handles are opaque and released with [`histocr_lexicon_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use histocr::analysis::{build_evaluation, build_report, AnalysisOptions};
use histocr::ingest::{load_manifest, ManifestOptions};
use histocr::lexicon::{load_lexicon, save_lexicon, KeyFolding, Lexicon, LexiconError};
use histocr::metrics::{line_metrics, BootstrapConfig, LengthCategory, LengthThresholds};
use histocr::taxonomy::{default_confusion_table, Resources};
use histocr::textnorm::normalize;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistocrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Input was readable but rejected (bad manifest record, bad option).
    InvalidInput = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// Per-line error counts.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HistocrLineMetrics {
    pub char_distance: usize,
    pub ref_chars: usize,
    pub word_distance: usize,
    pub ref_words: usize,
    /// 0 short, 1 medium, 2 long.
    pub length_category: u32,
}

/// Opaque lexicon handle.
pub struct HistocrLexicon(Lexicon);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HistocrStatus, String);

impl Failure {
    fn new(status: HistocrStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

impl From<LexiconError> for Failure {
    fn from(e: LexiconError) -> Self {
        let status = match e {
            LexiconError::Io(_) => HistocrStatus::Io,
            _ => HistocrStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records any failure and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HistocrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HistocrStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error".into());
            HistocrStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(HistocrStatus::NullArgument, format!("{name} is null")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(HistocrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(HistocrStatus::NullArgument, format!("{name} is null")))
}

fn lexicon_arg<'a>(p: *const HistocrLexicon, name: &str) -> Result<&'a Lexicon, Failure> {
    unsafe { p.as_ref() }
        .map(|h| &h.0)
        .ok_or_else(|| Failure::new(HistocrStatus::NullArgument, format!("{name} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

fn options(resamples: u64, seed: u64) -> AnalysisOptions {
    AnalysisOptions {
        bootstrap: BootstrapConfig { resamples: resamples as usize, seed, ..Default::default() },
        ..Default::default()
    }
}

fn manifest(path: &str) -> Result<Vec<histocr::ingest::LineRecord>, Failure> {
    load_manifest(Path::new(path), &ManifestOptions::default()).map(|m| m.records).map_err(|e| {
        let status = match e {
            histocr::ingest::IngestError::Io { .. } => HistocrStatus::Io,
            _ => HistocrStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    })
}

fn json(result: serde_json::Result<String>) -> Result<String, Failure> {
    result.map_err(|e| Failure::new(HistocrStatus::Internal, e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[unsafe(no_mangle)]
pub extern "C" fn histocr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent call on this thread if it failed, otherwise
/// null. Valid until the next call into the library on the same thread.
#[unsafe(no_mangle)]
pub extern "C" fn histocr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Normalizes `text`; `*out` receives a new string.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_normalize(text: *const c_char, out: *mut *mut c_char) -> HistocrStatus {
    guard(|| {
        let text = unsafe { str_arg(text, "text") }?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(normalize(text).into_string());
        Ok(())
    })
}

/// Character edit distance between the normalized forms of `a` and `b`.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_char_distance(a: *const c_char, b: *const c_char, out: *mut usize) -> HistocrStatus {
    guard(|| {
        let (a, b) = unsafe { (str_arg(a, "a")?, str_arg(b, "b")?) };
        let out = out_arg(out, "out")?;
        *out = histocr::alignment::char_align(&normalize(a), &normalize(b)).distance;
        Ok(())
    })
}

/// Per-line counts with the default length thresholds.
///
/// # Safety
/// `reference` and `hypothesis` must be NUL-terminated strings; `out` must
/// be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_line_metrics(
    reference: *const c_char,
    hypothesis: *const c_char,
    out: *mut HistocrLineMetrics,
) -> HistocrStatus {
    guard(|| {
        let (r, h) = unsafe { (str_arg(reference, "reference")?, str_arg(hypothesis, "hypothesis")?) };
        let out = out_arg(out, "out")?;
        let m = line_metrics(&normalize(r), &normalize(h), &LengthThresholds::default())
            .map_err(|e| Failure::new(HistocrStatus::InvalidInput, e.to_string()))?;
        *out = HistocrLineMetrics {
            char_distance: m.char_distance,
            ref_chars: m.ref_chars,
            word_distance: m.word_distance,
            ref_words: m.ref_words,
            length_category: match m.length_category {
                LengthCategory::Short => 0,
                LengthCategory::Medium => 1,
                LengthCategory::Long => 2,
            },
        };
        Ok(())
    })
}

/// Builds a lexicon from `count` words.
///
/// # Safety
/// `words` must point to `count` NUL-terminated strings; `out` must be
/// writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_lexicon_from_words(
    words: *const *const c_char,
    count: usize,
    case_sensitive: bool,
    out: *mut *mut HistocrLexicon,
) -> HistocrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if words.is_null() && count > 0 {
            return Err(Failure::new(HistocrStatus::NullArgument, "words is null"));
        }
        let ptrs = if count == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(words, count) } };
        let words = ptrs
            .iter()
            .enumerate()
            .map(|(i, &p)| unsafe { str_arg(p, &format!("words[{i}]")) })
            .collect::<Result<Vec<_>, _>>()?;
        let folding = if case_sensitive { KeyFolding::Exact } else { KeyFolding::Lower };
        *out = Box::into_raw(Box::new(HistocrLexicon(Lexicon::from_words(words, folding))));
        Ok(())
    })
}

/// Loads a lexicon file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_lexicon_load(path: *const c_char, out: *mut *mut HistocrLexicon) -> HistocrStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(HistocrLexicon(load_lexicon(Path::new(path))?)));
        Ok(())
    })
}

/// Writes a lexicon file.
///
/// # Safety
/// `lexicon` must be a live handle; `path` a NUL-terminated string.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_lexicon_save(lexicon: *const HistocrLexicon, path: *const c_char) -> HistocrStatus {
    guard(|| {
        let lex = lexicon_arg(lexicon, "lexicon")?;
        let path = unsafe { str_arg(path, "path") }?;
        save_lexicon(lex, Path::new(path))?;
        Ok(())
    })
}

/// Whether `token` is attested (after the lexicon's folding).
///
/// # Safety
/// `lexicon` must be a live handle; `token` a NUL-terminated string; `out`
/// writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_lexicon_contains(
    lexicon: *const HistocrLexicon,
    token: *const c_char,
    out: *mut bool,
) -> HistocrStatus {
    guard(|| {
        let lex = lexicon_arg(lexicon, "lexicon")?;
        let token = unsafe { str_arg(token, "token") }?;
        *out_arg(out, "out")? = lex.contains(token);
        Ok(())
    })
}

/// Number of stored keys; 0 for a null handle.
///
/// # Safety
/// `lexicon` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_lexicon_len(lexicon: *const HistocrLexicon) -> usize {
    unsafe { lexicon.as_ref() }.map_or(0, |h| h.0.len())
}

/// Releases a lexicon handle. Null is ignored.
///
/// # Safety
/// `lexicon` must be null or a handle from this library not yet freed.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_lexicon_free(lexicon: *mut HistocrLexicon) {
    if !lexicon.is_null() {
        drop(unsafe { Box::from_raw(lexicon) });
    }
}

/// Corpus CER/WER with bootstrap intervals for every model in a manifest,
/// as JSON.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string; `out_json` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_evaluate_manifest(
    manifest_path: *const c_char,
    resamples: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> HistocrStatus {
    guard(|| {
        let path = unsafe { str_arg(manifest_path, "manifest_path") }?;
        let out = out_arg(out_json, "out_json")?;
        let records = manifest(path)?;
        let report = build_evaluation(&records, &options(resamples, seed), serde_json::Value::Null)
            .map_err(|e| Failure::new(HistocrStatus::InvalidInput, e.to_string()))?;
        *out = into_c_string(json(serde_json::to_string_pretty(&report))?);
        Ok(())
    })
}

/// Full analysis report for a manifest, as JSON. `modern` may be null, which
/// disables lexical-normalization detection.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string, `historical` a live
/// handle, `modern` null or a live handle, `out_json` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn histocr_analyze_manifest(
    manifest_path: *const c_char,
    historical: *const HistocrLexicon,
    modern: *const HistocrLexicon,
    resamples: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> HistocrStatus {
    guard(|| {
        let path = unsafe { str_arg(manifest_path, "manifest_path") }?;
        let historical = lexicon_arg(historical, "historical")?;
        let modern = unsafe { modern.as_ref() }.map(|h| &h.0);
        let out = out_arg(out_json, "out_json")?;
        let records = manifest(path)?;
        let table = default_confusion_table();
        let res = Resources { historical, modern, table: &table };
        let report = build_report(&records, &res, &options(resamples, seed), serde_json::Value::Null)
            .map_err(|e| Failure::new(HistocrStatus::InvalidInput, e.to_string()))?;
        *out = into_c_string(json(serde_json::to_string_pretty(&report))?);
        Ok(())
    })
}
