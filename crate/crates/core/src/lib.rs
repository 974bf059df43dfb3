//! Evaluation toolkit for OCR of historical print.
//!
//! Reference and hypothesis lines are normalized with a minimal technical
//! policy, aligned at scalar and token level, scored with pooled CER/WER and
//! percentile bootstrap intervals, and classified into error proxies
//! (real-word and non-word errors, boundary splits and merges, glyph
//! confusions, normalization events).

pub mod alignment;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod ingest;
pub mod lexicon;
pub mod metrics;
pub mod synth;
pub mod taxonomy;
pub mod textnorm;
