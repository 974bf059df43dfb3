//! Length-weighted CER/WER and bootstrap confidence intervals.
//!
//! Corpus rates pool counts across lines: `Σ distance / Σ reference length`.
//!
//! # Resampling sequence
//!
//! Resample `b` (0-based) draws its line indices from a ChaCha8 stream keyed
//! by `ChaCha8Rng::seed_from_u64(seed)` with `set_stream(b)`. Each index is
//! `(next_u64() as u128 * n) >> 64` for a pool of `n` lines, drawn `n` times.
//! Because every resample owns its stream, resamples can be evaluated in any
//! order or on any number of threads with identical results.
//!
//! # Percentile interval
//!
//! With `B` sorted resample statistics and `alpha = (1 - level) / 2`, the
//! tail size is `t = floor(alpha * B)` (clamped to `(B - 1) / 2`), and the
//! interval is `[stat[t], stat[B - 1 - t]]`. If the point estimate falls
//! outside that range the interval is widened to include it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{char_align, token_align, tokenize};
use crate::textnorm::NormalizedText;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_SEED: u64 = 1750;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("undefined rate: total reference length is zero")]
    UndefinedDenominator,
    #[error("invalid length thresholds: short_max ({short_max}) must be below medium_max ({medium_max})")]
    InvalidThresholds { short_max: usize, medium_max: usize },
    #[error("bootstrap needs at least one line with a non-empty reference")]
    NoLines,
    #[error("resample count must be at least 1")]
    NoResamples,
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    InvalidLevel(f64),
    #[error("worker pool: {0}")]
    Workers(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthCategory {
    Short,
    Medium,
    Long,
}

impl LengthCategory {
    pub const ALL: [LengthCategory; 3] = [Self::Short, Self::Medium, Self::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Medium => "medium",
            Self::Long => "long",
        }
    }
}

/// Upper bounds (inclusive, in reference scalars) of the short and medium
/// categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthThresholds {
    pub short_max: usize,
    pub medium_max: usize,
}

impl Default for LengthThresholds {
    fn default() -> Self {
        Self { short_max: 15, medium_max: 34 }
    }
}

impl LengthThresholds {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.short_max < self.medium_max {
            Ok(())
        } else {
            Err(MetricsError::InvalidThresholds { short_max: self.short_max, medium_max: self.medium_max })
        }
    }
}

pub fn length_category(ref_chars: usize, thresholds: &LengthThresholds) -> Result<LengthCategory, MetricsError> {
    thresholds.validate()?;
    Ok(if ref_chars <= thresholds.short_max {
        LengthCategory::Short
    } else if ref_chars <= thresholds.medium_max {
        LengthCategory::Medium
    } else {
        LengthCategory::Long
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMetrics {
    pub char_distance: usize,
    pub ref_chars: usize,
    pub word_distance: usize,
    pub ref_words: usize,
    pub length_category: LengthCategory,
}

impl LineMetrics {
    /// Per-line CER, or `None` when the reference is empty.
    pub fn cer(&self) -> Option<f64> {
        (self.ref_chars > 0).then(|| self.char_distance as f64 / self.ref_chars as f64)
    }

    pub fn wer(&self) -> Option<f64> {
        (self.ref_words > 0).then(|| self.word_distance as f64 / self.ref_words as f64)
    }
}

pub fn line_metrics(
    reference: &NormalizedText,
    hypothesis: &NormalizedText,
    thresholds: &LengthThresholds,
) -> Result<LineMetrics, MetricsError> {
    let ca = char_align(reference, hypothesis);
    let ref_tokens = tokenize(reference);
    let ta = token_align(&ref_tokens, &tokenize(hypothesis));
    Ok(LineMetrics {
        char_distance: ca.distance,
        ref_chars: ca.ref_length,
        word_distance: ta.word_distance,
        ref_words: ref_tokens.len(),
        length_category: length_category(ca.ref_length, thresholds)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Cer,
    Wer,
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Statistic::Cer => "CER",
            Statistic::Wer => "WER",
        })
    }
}

impl Statistic {
    fn counts(self, m: &LineMetrics) -> (u64, u64) {
        match self {
            Statistic::Cer => (m.char_distance as u64, m.ref_chars as u64),
            Statistic::Wer => (m.word_distance as u64, m.ref_words as u64),
        }
    }
}

fn pooled<'a>(lines: impl IntoIterator<Item = &'a LineMetrics>, stat: Statistic) -> Result<f64, MetricsError> {
    let (d, n) = lines.into_iter().fold((0u64, 0u64), |(d, n), m| {
        let (ld, ln) = stat.counts(m);
        (d + ld, n + ln)
    });
    if n == 0 {
        return Err(MetricsError::UndefinedDenominator);
    }
    Ok(d as f64 / n as f64)
}

pub fn corpus_cer(lines: &[LineMetrics]) -> Result<f64, MetricsError> {
    pooled(lines, Statistic::Cer)
}

pub fn corpus_wer(lines: &[LineMetrics]) -> Result<f64, MetricsError> {
    pooled(lines, Statistic::Wer)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: DEFAULT_RESAMPLES, seed: DEFAULT_SEED, level: DEFAULT_LEVEL }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.resamples == 0 {
            return Err(MetricsError::NoResamples);
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(MetricsError::InvalidLevel(self.level));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(ci_high - ci_low) / 2`, for "point ± x" display.
    pub half_width: f64,
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Lines left out of the resampling pool because their reference is empty.
    pub excluded_lines: usize,
}

/// Deterministic index stream for one resample.
pub struct ResampleStream {
    rng: ChaCha8Rng,
    pool: u64,
}

impl ResampleStream {
    pub fn new(seed: u64, resample: u64, pool: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(resample);
        Self { rng, pool: pool as u64 }
    }

    #[inline]
    pub fn next_index(&mut self) -> usize {
        ((u128::from(self.rng.next_u64()) * u128::from(self.pool)) >> 64) as usize
    }
}

/// Tail size used by the percentile interval (see module docs).
pub fn percentile_tail(resamples: usize, level: f64) -> usize {
    let alpha = (1.0 - level) / 2.0;
    // the epsilon absorbs representation error, e.g. 0.025 * 10000
    let tail = (alpha * resamples as f64 + 1e-9).floor() as usize;
    tail.min((resamples - 1) / 2)
}

fn percentile_interval(mut stats: Vec<f64>, level: f64, point: f64) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let t = percentile_tail(stats.len(), level);
    let lo = stats[t].min(point);
    let hi = stats[stats.len() - 1 - t].max(point);
    (lo, hi)
}

/// Runs `job` on the ambient rayon pool (`workers == 0`) or on a dedicated
/// pool of `workers` threads.
pub fn run_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T, MetricsError> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| MetricsError::Workers(e.to_string()))?;
    Ok(pool.install(job))
}

/// Resampling engine shared by every estimate.
///
/// Each row holds two `(distance, length)` pairs. A resample draws line
/// indices from the row's stream and returns the summed row; the caller turns
/// sums into a statistic. The single-system estimate reads only the first
/// pair, the joint CER/WER estimate reads both pairs as separate rates, and
/// the paired estimate takes their difference.
struct Resampler<'a> {
    counts: &'a [[u64; 4]],
    config: &'a BootstrapConfig,
}

fn rate(d: u64, n: u64) -> f64 {
    d as f64 / n as f64
}

impl Resampler<'_> {
    fn resample(&self, b: usize) -> [u64; 4] {
        let n = self.counts.len();
        let mut stream = ResampleStream::new(self.config.seed, b as u64, n);
        let mut sums = [0u64; 4];
        for _ in 0..n {
            let c = &self.counts[stream.next_index()];
            for k in 0..4 {
                sums[k] += c[k];
            }
        }
        sums
    }

    /// Totals over the original sample and the summed rows of every resample.
    fn run(&self, workers: usize) -> Result<([u64; 4], Vec<[u64; 4]>), MetricsError> {
        self.config.validate()?;
        if self.counts.is_empty() {
            return Err(MetricsError::NoLines);
        }
        let total = self.counts.iter().fold([0u64; 4], |mut acc, c| {
            for k in 0..4 {
                acc[k] += c[k];
            }
            acc
        });
        let sums =
            run_pool(workers, || (0..self.config.resamples).into_par_iter().map(|b| self.resample(b)).collect())?;
        Ok((total, sums))
    }

    fn estimate(&self, point: f64, stats: Vec<f64>, excluded: usize) -> MetricEstimate {
        let (ci_low, ci_high) = percentile_interval(stats, self.config.level, point);
        MetricEstimate {
            point,
            ci_low,
            ci_high,
            half_width: (ci_high - ci_low) / 2.0,
            level: self.config.level,
            resamples: self.config.resamples,
            seed: self.config.seed,
            excluded_lines: excluded,
        }
    }
}

fn rows<'a>(lines: &'a [LineMetrics], first: Statistic, second: Statistic) -> impl Iterator<Item = [u64; 4]> + 'a {
    lines.iter().filter(|m| m.ref_chars > 0).map(move |m| {
        let (da, na) = first.counts(m);
        let (db, nb) = second.counts(m);
        [da, na, db, nb]
    })
}

/// Percentile bootstrap over line instances for a single system.
///
/// `workers == 0` runs on the ambient rayon pool; any other value builds a
/// dedicated pool of that size. The result does not depend on it.
pub fn bootstrap_ci(
    lines: &[LineMetrics],
    statistic: Statistic,
    config: &BootstrapConfig,
    workers: usize,
) -> Result<MetricEstimate, MetricsError> {
    let counts: Vec<[u64; 4]> = rows(lines, statistic, statistic).collect();
    let r = Resampler { counts: &counts, config };
    let (total, sums) = r.run(workers)?;
    let stats = sums.iter().map(|s| rate(s[0], s[1])).collect();
    Ok(r.estimate(rate(total[0], total[1]), stats, lines.len() - counts.len()))
}

/// CER and WER estimates from one set of resamples.
///
/// Identical to calling [`bootstrap_ci`] once per statistic with the same
/// configuration (both draw the same line indices), at half the cost.
pub fn bootstrap_cer_wer(
    lines: &[LineMetrics],
    config: &BootstrapConfig,
    workers: usize,
) -> Result<(MetricEstimate, MetricEstimate), MetricsError> {
    let counts: Vec<[u64; 4]> = rows(lines, Statistic::Cer, Statistic::Wer).collect();
    let r = Resampler { counts: &counts, config };
    let (total, sums) = r.run(workers)?;
    let excluded = lines.len() - counts.len();
    let cer = sums.iter().map(|s| rate(s[0], s[1])).collect();
    let wer = sums.iter().map(|s| rate(s[2], s[3])).collect();
    Ok((r.estimate(rate(total[0], total[1]), cer, excluded), r.estimate(rate(total[2], total[3]), wer, excluded)))
}

/// Paired bootstrap of `metric(A) - metric(B)`: every resample applies the
/// same line indices to both systems.
pub fn paired_bootstrap_delta(
    pairs: &[(LineMetrics, LineMetrics)],
    statistic: Statistic,
    config: &BootstrapConfig,
    workers: usize,
) -> Result<MetricEstimate, MetricsError> {
    let counts: Vec<[u64; 4]> = pairs
        .iter()
        .filter(|(a, _)| a.ref_chars > 0)
        .map(|(a, b)| {
            let (da, na) = statistic.counts(a);
            let (db, nb) = statistic.counts(b);
            [da, na, db, nb]
        })
        .collect();
    let r = Resampler { counts: &counts, config };
    let (total, sums) = r.run(workers)?;
    let delta = |s: &[u64; 4]| rate(s[0], s[1]) - rate(s[2], s[3]);
    let stats = sums.iter().map(delta).collect();
    Ok(r.estimate(delta(&total), stats, pairs.len() - counts.len()))
}
