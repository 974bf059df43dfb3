//! Command-line interface.
//!
//! Exit codes: 0 success, 1 validation failure (bad input data, bad options,
//! missing prerequisites), 2 I/O failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{build_comparison, build_evaluation, build_report, AnalysisError};
use crate::config::{ConfigError, ConfigLayer, RunConfig};
use crate::ingest::{load_manifest, read_corpus, write_json, write_report, IngestError, Manifest, OutputFormat};
use crate::lexicon::{load_lexicon, save_lexicon, BuildOptions, KeyFolding, LexiconBuilder, LexiconError};
use crate::taxonomy::{default_confusion_table, ConfusionTable, Resources, TableError};
use crate::textnorm::normalize;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("lexicon {path}: {source}")]
    Lexicon {
        path: String,
        #[source]
        source: LexiconError,
    },
    #[error("confusion table {path}: {source}")]
    Table {
        path: String,
        #[source]
        source: TableError,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(ConfigError::Io { .. })
            | Error::Ingest(IngestError::Io { .. })
            | Error::Lexicon { source: LexiconError::Io(_), .. }
            | Error::Table { source: TableError::Io(_), .. }
            | Error::Io { .. } => 2,
            _ => 1,
        }
    }

    fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "histocr", version, about = "OCR evaluation for historical print")]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize text line by line (stdin or --input) to stdout.
    Normalize {
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
    /// Lexicon management.
    Lexicon {
        #[command(subcommand)]
        command: LexiconCommand,
    },
    /// Corpus CER/WER with bootstrap intervals.
    Evaluate(RunArgs),
    /// Full error analysis: metrics, proxies, distributions, CSV tables.
    Analyze(RunArgs),
    /// Paired bootstrap comparison of two models.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// The two model ids to compare (A minus B).
        #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
        models: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    /// Build a lexicon from plain-text corpus files.
    Build {
        #[arg(long, required = true, num_args = 1.., value_name = "FILE")]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value_t = 1, value_name = "N")]
        min_freq: u64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Keep case distinctions in keys.
        #[arg(long)]
        case_sensitive: bool,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSONL manifest: one {"id", "ref", "hyp": {model: text}} record per line.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Historical lexicon (required by analyze).
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Modern lexicon; enables lexical normalization detection.
    #[arg(long, value_name = "FILE")]
    pub modern_lexicon: Option<PathBuf>,
    /// Extra confusion pairs (from<TAB>to<TAB>category), added to the built-in table.
    #[arg(long, value_name = "FILE")]
    pub confusion_table: Option<PathBuf>,
    /// Longest reference line (scalars) counted as short [default: 15].
    #[arg(long, value_name = "N")]
    pub short_max: Option<usize>,
    /// Longest reference line (scalars) counted as medium [default: 34].
    #[arg(long, value_name = "N")]
    pub medium_max: Option<usize>,
    /// Bootstrap resamples [default: 10000].
    #[arg(long, value_name = "B")]
    pub resamples: Option<usize>,
    /// Bootstrap seed [default: 1750].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level in (0, 1) [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,
    /// Positional profile bins [default: 10].
    #[arg(long, value_name = "N")]
    pub bins: Option<usize>,
    /// Confusion pairs listed per model [default: 25].
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Last edit-distance histogram bucket, shown as ">=cap" [default: 10].
    #[arg(long, value_name = "N")]
    pub histogram_cap: Option<usize>,
    /// Output directory [default: histocr-out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of json,csv,lines.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<OutputFormat>>,
    /// Worker threads; 0 uses every available core. Never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated accepted modality values.
    #[arg(long, value_delimiter = ',')]
    pub modalities: Option<Vec<String>>,
    /// Skip invalid manifest records instead of failing.
    #[arg(long)]
    pub skip_bad_records: bool,
}

impl RunArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            manifest: self.manifest.clone(),
            historical_lexicon: self.lexicon.clone(),
            modern_lexicon: self.modern_lexicon.clone(),
            confusion_table: self.confusion_table.clone(),
            short_max: self.short_max,
            medium_max: self.medium_max,
            resamples: self.resamples,
            seed: self.seed,
            level: self.level,
            bins: self.bins,
            top_k: self.top_k,
            histogram_cap: self.histogram_cap,
            output_dir: self.out.clone(),
            formats: self.formats.clone(),
            workers: self.workers,
            modalities: self.modalities.clone(),
            skip_bad_records: self.skip_bad_records.then_some(true),
        }
    }
}

fn effective_config(file: Option<&Path>, args: &RunArgs) -> Result<RunConfig, Error> {
    let base = match file {
        Some(p) => ConfigLayer::load(p)?,
        None => ConfigLayer::default(),
    };
    Ok(ConfigLayer::default().overlay(base).overlay(args.layer()).resolve())
}

fn manifest(cfg: &RunConfig) -> Result<Manifest, Error> {
    let path = cfg.manifest.as_deref().ok_or_else(|| {
        Error::Usage("no manifest given (use --manifest or set `manifest` in the config file)".into())
    })?;
    Ok(load_manifest(path, &cfg.manifest_options())?)
}

fn lexicon(path: &Path) -> Result<crate::lexicon::Lexicon, Error> {
    load_lexicon(path).map_err(|source| Error::Lexicon { path: path.display().to_string(), source })
}

fn confusion_table(cfg: &RunConfig) -> Result<ConfusionTable, Error> {
    let mut table = default_confusion_table();
    if let Some(path) = &cfg.confusion_table {
        let extra =
            ConfusionTable::load(path).map_err(|source| Error::Table { path: path.display().to_string(), source })?;
        table.extend_from(&extra);
    }
    Ok(table)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))
}

fn cmd_normalize(input: Option<&Path>, out: &mut dyn Write) -> Result<(), Error> {
    let reader: Box<dyn BufRead> = match input {
        Some(p) => {
            Box::new(BufReader::new(File::open(p).map_err(|e| Error::io(format!("cannot open {}", p.display()), e))?))
        }
        None => Box::new(BufReader::new(io::stdin())),
    };
    let mut w = io::BufWriter::new(out);
    let mut buf = Vec::new();
    let mut reader = reader;
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io("cannot read input", e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let text =
            std::str::from_utf8(&buf).map_err(|_| Error::Usage(format!("input line {line_no} is not valid UTF-8")))?;
        let text = text.trim_end_matches(['\n', '\r']);
        writeln!(w, "{}", normalize(text)).map_err(|e| Error::io("cannot write output", e))?;
    }
    w.flush().map_err(|e| Error::io("cannot write output", e))
}

fn build_timestamp() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

fn cmd_lexicon_build(
    corpus: &[PathBuf],
    min_freq: u64,
    out: &Path,
    case_sensitive: bool,
    stdout: &mut dyn Write,
) -> Result<(), Error> {
    let lex_err = |source| Error::Lexicon { path: out.display().to_string(), source };
    if min_freq == 0 {
        return Err(Error::Usage("--min-freq must be at least 1".into()));
    }
    let mut builder = LexiconBuilder::new(BuildOptions {
        min_frequency: min_freq,
        folding: if case_sensitive { KeyFolding::Exact } else { KeyFolding::Lower },
        sources: corpus.iter().map(|p| p.display().to_string()).collect(),
        timestamp: build_timestamp(),
    });
    for line in read_corpus(corpus) {
        builder.add_line(&line?);
    }
    let lex = builder.finish().map_err(lex_err)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_lexicon(&lex, out).map_err(lex_err)?;
    writeln!(stdout, "wrote {} entries to {}", lex.len(), out.display())
        .map_err(|e| Error::io("cannot write output", e))
}

fn cmd_evaluate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), Error> {
    let m = manifest(cfg)?;
    let mut report = build_evaluation(&m.records, &cfg.analysis_options(), cfg.echo())?;
    report.diagnostics.extend(m.skipped);
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("evaluation.json");
    write_json(&report, &path)?;
    let mut say = |s: String| writeln!(stdout, "{s}").map_err(|e| Error::io("cannot write output", e));
    for model in &report.models {
        for row in model.estimates.iter().filter(|r| r.scope == "all") {
            if let Some(e) = &row.estimate {
                say(format!("{} {}: {:.6} [{:.6}, {:.6}]", model.model, row.statistic, e.point, e.ci_low, e.ci_high))?;
            }
        }
    }
    say(format!("wrote {}", path.display()))
}

fn cmd_analyze(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), Error> {
    let hist_path = cfg.historical_lexicon.as_deref().ok_or_else(|| {
        Error::Usage(
            "analyze needs a historical lexicon: pass --lexicon FILE (create one with `histocr lexicon build --corpus FILE... --out FILE`)"
                .into(),
        )
    })?;
    let historical = lexicon(hist_path)?;
    let modern = cfg.modern_lexicon.as_deref().map(lexicon).transpose()?;
    let table = confusion_table(cfg)?;
    let m = manifest(cfg)?;
    let res = Resources { historical: &historical, modern: modern.as_ref(), table: &table };
    let mut report = build_report(&m.records, &res, &cfg.analysis_options(), cfg.echo())?;
    report.diagnostics.extend(m.skipped);
    let files = write_report(&report, &cfg.output_dir, &cfg.formats)?;
    let mut say = |s: String| writeln!(stdout, "{s}").map_err(|e| Error::io("cannot write output", e));
    for model in &report.models {
        let t = &model.tallies.raw;
        use crate::taxonomy::ProxyKind::*;
        say(format!(
            "{}: {} lines, {} errored; real-word {}, non-word {}, splits {}, merges {}, glyph {}, lexical {}, graphemic {}",
            model.model,
            model.lines,
            model.errored_lines,
            t[&RealWord],
            t[&NonWord],
            t[&BoundarySplit],
            t[&BoundaryMerge],
            t[&GlyphConfusion],
            t[&NormalizationLexical],
            t[&NormalizationGraphemic],
        ))?;
    }
    say(format!("wrote {} files to {}", files.len(), cfg.output_dir.display()))
}

fn cmd_compare(cfg: &RunConfig, models: &[String], stdout: &mut dyn Write) -> Result<(), Error> {
    let m = manifest(cfg)?;
    let report = build_comparison(&m.records, &models[0], &models[1], &cfg.analysis_options(), cfg.echo())?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("comparison.json");
    write_json(&report, &path)?;
    let mut say = |s: String| writeln!(stdout, "{s}").map_err(|e| Error::io("cannot write output", e));
    for d in &report.deltas {
        say(format!(
            "{} {} - {}: {:+.6} [{:+.6}, {:+.6}]",
            d.statistic, report.model_a, report.model_b, d.delta.point, d.delta.ci_low, d.delta.ci_high
        ))?;
    }
    say(format!("wrote {}", path.display()))
}

/// Runs a parsed command, writing human-readable output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), Error> {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::Normalize { input } => cmd_normalize(input.as_deref(), stdout),
        Command::Lexicon { command: LexiconCommand::Build { corpus, min_freq, out, case_sensitive } } => {
            cmd_lexicon_build(corpus, *min_freq, out, *case_sensitive, stdout)
        }
        Command::Evaluate(args) => cmd_evaluate(&effective_config(file, args)?, stdout),
        Command::Analyze(args) => cmd_analyze(&effective_config(file, args)?, stdout),
        Command::Compare { run, models } => cmd_compare(&effective_config(file, run)?, models, stdout),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
