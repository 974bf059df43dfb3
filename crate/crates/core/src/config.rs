//! Run configuration.
//!
//! Values come from three layers, highest first: command-line flags, a TOML
//! file given with `--config`, built-in defaults. Every key is optional in
//! the file:
//!
//! ```toml
//! manifest = "data/manifest.jsonl"
//! historical_lexicon = "hist.lex"
//! modern_lexicon = "modern.lex"
//! confusion_table = "extra_pairs.tsv"
//! short_max = 15
//! medium_max = 34
//! resamples = 10000
//! seed = 1750
//! level = 0.95
//! bins = 10
//! top_k = 25
//! histogram_cap = 10
//! output_dir = "out"
//! formats = ["json", "csv", "lines"]
//! workers = 0
//! modalities = ["color", "bw"]
//! skip_bad_records = false
//! ```
//!
//! The effective configuration echoed into outputs uses the same keys, minus
//! `output_dir` and `workers`, so it can be fed back through `--config`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisOptions, DEFAULT_BINS, DEFAULT_HISTOGRAM_CAP, DEFAULT_TOP_K};
use crate::ingest::{ManifestOptions, OutputFormat, DEFAULT_MODALITIES};
use crate::metrics::{BootstrapConfig, LengthThresholds, DEFAULT_LEVEL, DEFAULT_RESAMPLES, DEFAULT_SEED};

pub const DEFAULT_OUTPUT_DIR: &str = "histocr-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {message}")]
    Parse { path: String, message: String },
}

/// One configuration layer; `None` means "not set here".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    pub manifest: Option<PathBuf>,
    pub historical_lexicon: Option<PathBuf>,
    pub modern_lexicon: Option<PathBuf>,
    pub confusion_table: Option<PathBuf>,
    pub short_max: Option<usize>,
    pub medium_max: Option<usize>,
    pub resamples: Option<usize>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub bins: Option<usize>,
    pub top_k: Option<usize>,
    pub histogram_cap: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub formats: Option<Vec<OutputFormat>>,
    pub workers: Option<usize>,
    pub modalities: Option<Vec<String>>,
    pub skip_bad_records: Option<bool>,
}

macro_rules! overlay {
    ($self:ident, $top:ident, $($field:ident),*) => {
        ConfigLayer { $($field: $top.$field.or($self.$field)),* }
    };
}

impl ConfigLayer {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    /// Values set in `top` win over values in `self`.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        overlay!(
            self,
            top,
            manifest,
            historical_lexicon,
            modern_lexicon,
            confusion_table,
            short_max,
            medium_max,
            resamples,
            seed,
            level,
            bins,
            top_k,
            histogram_cap,
            output_dir,
            formats,
            workers,
            modalities,
            skip_bad_records
        )
    }
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub historical_lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modern_lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion_table: Option<PathBuf>,
    pub short_max: usize,
    pub medium_max: usize,
    pub resamples: usize,
    pub seed: u64,
    pub level: f64,
    pub bins: usize,
    pub top_k: usize,
    pub histogram_cap: usize,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub workers: usize,
    pub modalities: Vec<String>,
    pub skip_bad_records: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        ConfigLayer::default().resolve()
    }
}

impl ConfigLayer {
    pub fn resolve(self) -> RunConfig {
        let th = LengthThresholds::default();
        let mut formats =
            self.formats.unwrap_or_else(|| vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Lines]);
        formats.sort();
        formats.dedup();
        RunConfig {
            manifest: self.manifest,
            historical_lexicon: self.historical_lexicon,
            modern_lexicon: self.modern_lexicon,
            confusion_table: self.confusion_table,
            short_max: self.short_max.unwrap_or(th.short_max),
            medium_max: self.medium_max.unwrap_or(th.medium_max),
            resamples: self.resamples.unwrap_or(DEFAULT_RESAMPLES),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            level: self.level.unwrap_or(DEFAULT_LEVEL),
            bins: self.bins.unwrap_or(DEFAULT_BINS),
            top_k: self.top_k.unwrap_or(DEFAULT_TOP_K),
            histogram_cap: self.histogram_cap.unwrap_or(DEFAULT_HISTOGRAM_CAP),
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            formats,
            workers: self.workers.unwrap_or(0),
            modalities: self.modalities.unwrap_or_else(|| DEFAULT_MODALITIES.iter().map(|s| s.to_string()).collect()),
            skip_bad_records: self.skip_bad_records.unwrap_or(false),
        }
    }
}

impl RunConfig {
    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            thresholds: LengthThresholds { short_max: self.short_max, medium_max: self.medium_max },
            bootstrap: BootstrapConfig { resamples: self.resamples, seed: self.seed, level: self.level },
            bins: self.bins,
            top_k: self.top_k,
            histogram_cap: self.histogram_cap,
            workers: self.workers,
        }
    }

    pub fn manifest_options(&self) -> ManifestOptions {
        ManifestOptions {
            skip_bad_records: self.skip_bad_records,
            modalities: self.modalities.iter().cloned().collect::<BTreeSet<_>>(),
        }
    }

    /// Configuration embedded in outputs. Omits settings that cannot change
    /// results (output location and worker count).
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut v {
            map.remove("output_dir");
            map.remove("workers");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.short_max, c.medium_max), (15, 34));
        assert_eq!((c.resamples, c.seed, c.level), (10_000, 1750, 0.95));
        assert_eq!((c.bins, c.top_k, c.histogram_cap), (10, 25, 10));
        assert_eq!(c.modalities, vec!["color", "bw"]);
    }

    #[test]
    fn precedence() {
        let file: ConfigLayer = toml::from_str("seed = 7\nbins = 5\n").unwrap();
        let flags = ConfigLayer { seed: Some(9), ..Default::default() };
        let c = ConfigLayer::default().overlay(file).overlay(flags).resolve();
        assert_eq!((c.seed, c.bins), (9, 5));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ConfigLayer>("sed = 7\n").is_err());
    }

    #[test]
    fn echo_round_trips_through_toml() {
        let c = RunConfig {
            manifest: Some("m.jsonl".into()),
            workers: 4,
            output_dir: "elsewhere".into(),
            ..Default::default()
        };
        let echo = c.echo();
        assert!(echo.get("workers").is_none() && echo.get("output_dir").is_none());
        let text = toml::to_string(&echo).unwrap();
        let back = ConfigLayer::default().overlay(toml::from_str(&text).unwrap()).resolve();
        assert_eq!(back.echo(), echo);
    }
}
