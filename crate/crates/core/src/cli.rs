//! The `srrg` command-line tool.
//!
//! Results go to stdout as JSON, logs to stderr. Exit codes: 0 success,
//! 1 domain findings (parse issues, violations, rejected rows), 2 operational
//! failure (I/O, bad configuration, unpaired inputs).
//!
//! Settings are read from `./srrg.toml` (or `--config`); flags win over the
//! file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::labeling::{
    discard_unlabeled, label_grouped, write_predictions, KeywordLabeler, Labeler, LabelingError,
    LlmClient, LlmConfig, LlmLabeler, PredictionLabeler, PredictionRow, ReplayClient,
};
use crate::metrics::{
    category_f1, corpus_bleu, f1_srr, label_reports, merge_external_scores, per_organ_breakdown,
    rouge_l, AlignmentMode, AverageMode, MetricsError, ScoreReport,
};
use crate::report::{parse_report, ParseIssue, ParseMode, StructuredReport};
use crate::service::{self, all_study_diffs, review_statistics, study_diff, AppState, ServiceConfig};
use crate::store::{
    read_manifest, read_studies, CorpusStore, ImportFormat, Provenance, Split, StoreError,
    UtteranceRecord,
};
use crate::taxonomy::{ChexbertMapping, LabelSet, LabelSpace, Taxonomy, TaxonomyError};
use crate::textdiff::{diff_stats, label_consistency, DiffStats, ReviewSummary};
use crate::utterance::{extract_utterances, Utterance};
use crate::validate::{validate_desiderata, ValidationConfig, Violation};

const DEFAULT_CONFIG: &str = "srrg.toml";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Findings,
}

/// Contents of `srrg.toml`. Every field has a flag of the same name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub corpus: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    /// Taxonomy-to-CheXbert mapping; validated against the taxonomy on load.
    pub mapping: Option<PathBuf>,
    pub labeler: Option<String>,
    pub workers: Option<usize>,
    /// Default output file of `label` and `evaluate`.
    pub output: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub llm: Option<LlmConfig>,
}

impl CliConfig {
    /// Reads `path`, or `./srrg.toml` when `path` is `None` (missing is fine).
    pub fn discover(path: Option<&Path>) -> Result<CliConfig, CliError> {
        let (path, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG), false),
        };
        if !path.exists() {
            return if required {
                Err(CliError::Config(format!("config file {} not found", path.display())))
            } else {
                Ok(CliConfig::default())
            };
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "srrg", version, about = "Structured radiology report toolkit")]
pub struct Cli {
    /// Config file (default: ./srrg.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Disease tree JSON (default: bundled).
    #[arg(long, global = true)]
    pub taxonomy: Option<PathBuf>,
    /// Taxonomy-to-CheXbert mapping JSON.
    #[arg(long, global = true)]
    pub mapping: Option<PathBuf>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse report files and list grammar issues.
    Parse(ParseArgs),
    /// Lenient-parse report files and check content rules.
    Validate(FilesArgs),
    /// Label every utterance of every structured study.
    Label(LabelArgs),
    /// Score generated reports against references.
    Evaluate(EvaluateArgs),
    /// Word-level diff statistics of original/edited report pairs.
    Diff(DiffArgs),
    /// Aggregate review statistics.
    Stats(StatsArgs),
    /// Import study files into a corpus.
    Import(ImportArgs),
    /// Assign splits from a manifest and print split sizes.
    Splits(SplitsArgs),
    /// Run the review HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct FilesArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Repair common drift instead of rejecting it; repairs are still listed.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// `keyword[:<lexicon.json>]`, `predictions:<file.jsonl>` or `llm[:<provider.toml>]`.
    #[arg(long)]
    pub labeler: Option<String>,
    /// Corpus directory or study file (JSONL/CSV). Defaults to the configured corpus.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Prediction file to write (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Voters per utterance: 1, or 3 for 2-of-3 voting (llm only).
    #[arg(long, default_value_t = 1)]
    pub consensus: usize,
    /// Labeling threads (default: config, then available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Store the labels in the corpus (when `--in` is a corpus directory).
    #[arg(long)]
    pub write_back: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generated reports: directory of `<study_id>.txt` or study file.
    #[arg(long)]
    pub pred_reports: PathBuf,
    /// Reference reports, same formats.
    #[arg(long)]
    pub ref_reports: PathBuf,
    /// Labeler for the generated reports, same forms as `label --labeler`.
    #[arg(long)]
    pub labeler: Option<String>,
    /// Labeler for the references (default: `--labeler`).
    #[arg(long)]
    pub ref_labeler: Option<String>,
    /// Label spaces to score (repeatable; default: all four).
    #[arg(long)]
    pub space: Vec<LabelSpace>,
    #[arg(long, default_value = "unaligned")]
    pub alignment: AlignmentMode,
    /// Score the common study ids instead of failing on unmatched ones.
    #[arg(long)]
    pub allow_partial: bool,
    /// Split name recorded in the output.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Include per-class scores.
    #[arg(long)]
    pub per_class: bool,
    /// JSON object of externally computed scores to tabulate alongside.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// JSON output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV output file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Labeling threads (default: config, then available cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Original text(s): a file, a directory of `<id>.txt`, or a study file.
    #[arg(long, requires = "edited", conflicts_with = "corpus")]
    pub orig: Option<PathBuf>,
    #[arg(long, requires = "orig")]
    pub edited: Option<PathBuf>,
    /// Diff stored structured texts against their latest reviews.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Only this study (with `--corpus`); prints its bare statistics.
    #[arg(long, requires = "corpus")]
    pub study: Option<String>,
    /// Print the summary listing instead of JSON.
    #[arg(long)]
    pub listing: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus directory, or JSONL of `{original, edited, auto_labels?, reviewed_labels?}`.
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    /// Compare diseases only, ignoring statuses.
    #[arg(long)]
    pub ignore_status: bool,
    /// Print the listing instead of JSON.
    #[arg(long)]
    pub listing: bool,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// CSV `study_id,split` or a JSON object.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Token file of `<reviewer> <token>` lines; enables bearer auth.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub lease_minutes: u64,
    #[arg(long, default_value_t = 1)]
    pub reviews_per_study: usize,
    /// Dispense studies of every split, not only `test_reviewed`.
    #[arg(long)]
    pub all_splits: bool,
}

/// Entry point of the `srrg` binary.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match execute(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Findings) => ExitCode::from(1),
        Err(err) => {
            eprintln!("srrg: {err}");
            ExitCode::from(2)
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let config = CliConfig::discover(cli.config.as_deref())?;
    let ctx = Context::new(&cli, config)?;
    match cli.command {
        Command::Parse(args) => cmd_parse(&args.files, args.lenient),
        Command::Validate(args) => cmd_validate(&args.files),
        Command::Label(args) => cmd_label(&ctx, args),
        Command::Evaluate(args) => cmd_evaluate(&ctx, args),
        Command::Diff(args) => cmd_diff(args),
        Command::Stats(args) => cmd_stats(&ctx, args),
        Command::Import(args) => cmd_import(&ctx, args),
        Command::Splits(args) => cmd_splits(&ctx, args),
        Command::Serve(args) => cmd_serve(&ctx, args),
    }
}

struct Context {
    config: CliConfig,
    taxonomy: Taxonomy,
}

impl Context {
    fn new(cli: &Cli, config: CliConfig) -> Result<Context, CliError> {
        let taxonomy = match cli.taxonomy.as_ref().or(config.taxonomy.as_ref()) {
            Some(path) => Taxonomy::load(path)?,
            None => Taxonomy::bundled(),
        };
        if let Some(path) = cli.mapping.as_ref().or(config.mapping.as_ref()) {
            ChexbertMapping::load(path, Some(&taxonomy))?;
        }
        Ok(Context { config, taxonomy })
    }

    fn workers(&self, flag: Option<usize>) -> usize {
        flag.or(self.config.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn corpus(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.config.corpus.clone())
            .ok_or_else(|| CliError::Config("no corpus directory given (--corpus or config)".into()))
    }

    fn open_store(&self, flag: Option<PathBuf>) -> Result<CorpusStore, CliError> {
        let dir = self.corpus(flag)?;
        if !dir.is_dir() {
            return Err(CliError::Config(format!("corpus {} is not a directory", dir.display())));
        }
        Ok(CorpusStore::open(dir)?)
    }

    fn labeler_spec(&self, flag: Option<String>) -> String {
        flag.or_else(|| self.config.labeler.clone())
            .unwrap_or_else(|| "keyword".to_string())
    }
}

/// A labeler built from a `--labeler` spec, with the provenance its labels
/// are stored under.
pub struct BuiltLabeler {
    pub labeler: Box<dyn Labeler>,
    pub provenance: Provenance,
}

/// Resolves a labeler spec: `keyword`, `keyword:<lexicon>`,
/// `predictions:<file>`, `llm` (provider from the config) or
/// `llm:<provider.toml>`. LLM labelers answer from the provider's recording.
pub fn build_labeler(
    spec: &str,
    consensus: usize,
    llm: Option<&LlmConfig>,
    taxonomy: &Taxonomy,
) -> Result<BuiltLabeler, CliError> {
    let (kind, arg) = match spec.split_once(':') {
        Some((kind, arg)) => (kind, Some(Path::new(arg))),
        None => (spec, None),
    };
    if consensus != 1 && consensus != 3 {
        return Err(CliError::Config(format!("--consensus must be 1 or 3, got {consensus}")));
    }
    if consensus == 3 && kind != "llm" {
        return Err(CliError::Config("--consensus 3 needs an llm labeler".into()));
    }
    let built = match (kind, arg) {
        ("keyword", None) => BuiltLabeler {
            labeler: Box::new(KeywordLabeler::bundled(taxonomy)?),
            provenance: Provenance::Baseline,
        },
        ("keyword", Some(path)) => BuiltLabeler {
            labeler: Box::new(KeywordLabeler::load(path, taxonomy)?),
            provenance: Provenance::Baseline,
        },
        ("predictions", Some(path)) => BuiltLabeler {
            labeler: Box::new(PredictionLabeler::load(path, taxonomy)?),
            provenance: Provenance::External,
        },
        ("llm", arg) => {
            let loaded;
            let provider = match arg {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                    loaded = toml::from_str::<LlmConfig>(&text)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    &loaded
                }
                None => llm.ok_or_else(|| CliError::Config("no [llm] provider configured".into()))?,
            };
            let recording = provider.recording.as_ref().ok_or_else(|| {
                CliError::Config(format!(
                    "provider {:?} has no recording; only recorded sessions can be replayed",
                    provider.model
                ))
            })?;
            let replay = ReplayClient::load(recording).map_err(LabelingError::from)?;
            let voters: Vec<Arc<dyn LlmClient>> = (0..consensus)
                .map(|i| Arc::new(replay.voter(i)) as Arc<dyn LlmClient>)
                .collect();
            BuiltLabeler {
                labeler: Box::new(LlmLabeler::new(voters, taxonomy.clone())?),
                provenance: if consensus == 3 {
                    Provenance::Consensus
                } else {
                    Provenance::Baseline
                },
            }
        }
        _ => return Err(CliError::Config(format!("unknown labeler spec {spec:?}"))),
    };
    Ok(built)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    print_text(&text)
}

fn print_text(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .map_err(io_err(Path::new("<stdout>")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Debug, Serialize)]
struct FileResult {
    file: String,
    ok: bool,
    issues: Vec<ParseIssue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    violations: Option<Vec<Violation>>,
}

fn cmd_parse(files: &[PathBuf], lenient: bool) -> Result<Outcome, CliError> {
    let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let mut results = Vec::new();
    for path in files {
        let issues = match parse_report(&read_file(path)?, mode) {
            Ok(parsed) => parsed.issues,
            Err(issues) => issues,
        };
        results.push(FileResult {
            file: path.display().to_string(),
            ok: issues.is_empty(),
            issues,
            violations: None,
        });
    }
    finish_files(results)
}

fn cmd_validate(files: &[PathBuf]) -> Result<Outcome, CliError> {
    let config = ValidationConfig::default();
    let mut results = Vec::new();
    for path in files {
        let (issues, violations) = match parse_report(&read_file(path)?, ParseMode::Lenient) {
            Ok(parsed) => (parsed.issues, validate_desiderata(&parsed.report, &config)),
            Err(issues) => (issues, Vec::new()),
        };
        results.push(FileResult {
            file: path.display().to_string(),
            ok: issues.is_empty() && violations.is_empty(),
            issues,
            violations: Some(violations),
        });
    }
    finish_files(results)
}

fn finish_files(results: Vec<FileResult>) -> Result<Outcome, CliError> {
    let clean = results.iter().all(|r| r.ok);
    print_json(&results)?;
    Ok(if clean { Outcome::Clean } else { Outcome::Findings })
}

/// Studies of a corpus directory or a study file, in study id order.
fn load_studies(path: &Path) -> Result<Vec<crate::store::Study>, CliError> {
    if path.is_dir() {
        return Ok(CorpusStore::open(path)?.studies());
    }
    let (mut studies, errors) = read_studies(path, ImportFormat::from_path(path))?;
    if let Some(first) = errors.first() {
        return Err(CliError::Input(format!(
            "{}: {} bad rows, first at line {}: {}",
            path.display(),
            errors.len(),
            first.line,
            first.message
        )));
    }
    studies.sort_by(|a, b| a.study_id.cmp(&b.study_id));
    studies.dedup_by(|later, earlier| {
        if later.study_id == earlier.study_id {
            *earlier = later.clone();
            true
        } else {
            false
        }
    });
    Ok(studies)
}

#[derive(Debug, Serialize)]
struct LabelSummary {
    studies: usize,
    utterances: usize,
    labeled: usize,
}

fn cmd_label(ctx: &Context, args: LabelArgs) -> Result<Outcome, CliError> {
    let input = match args.input {
        Some(path) => path,
        None => ctx.corpus(None)?,
    };
    if args.write_back && !input.is_dir() {
        return Err(CliError::Config("--write-back needs a corpus directory as --in".into()));
    }
    let built = build_labeler(
        &ctx.labeler_spec(args.labeler),
        args.consensus,
        ctx.config.llm.as_ref(),
        &ctx.taxonomy,
    )?;
    let studies = load_studies(&input)?;
    let groups: Vec<Vec<Utterance>> = studies
        .iter()
        .filter_map(|study| match study.structured() {
            Some(report) => Some(extract_utterances(&study.study_id, &report)),
            None => {
                log::info!("{}: no structured text, skipped", study.study_id);
                None
            }
        })
        .collect();
    let labels = label_grouped(
        built.labeler.as_ref(),
        &groups,
        &ctx.taxonomy,
        ctx.workers(args.workers),
    )?;
    let pairs: Vec<(Utterance, LabelSet)> = groups.iter().flatten().cloned().zip(labels.into_iter().flatten()).collect();
    let utterance_count = pairs.len();
    let kept = if args.consensus == 3 {
        discard_unlabeled(pairs)
    } else {
        pairs
    };
    let rows: Vec<PredictionRow> = kept
        .iter()
        .map(|(utt, labels)| PredictionRow::new(&utt.key(), labels.clone()))
        .collect();

    if args.write_back {
        let store = CorpusStore::open(&input)?;
        let records: Vec<UtteranceRecord> = kept
            .iter()
            .map(|(utt, labels)| UtteranceRecord {
                study_id: utt.study_id.clone(),
                origin: utt.origin,
                text: utt.text.clone(),
                labels: Some(labels.clone()),
                provenance: Some(built.provenance),
            })
            .collect();
        store.put_utterances(&records)?;
    }

    let predictions = write_predictions(&rows);
    let summary = LabelSummary {
        studies: groups.len(),
        utterances: utterance_count,
        labeled: rows.len(),
    };
    match args.out.or_else(|| ctx.config.output.clone()) {
        Some(path) => {
            write_file(&path, &predictions)?;
            print_json(&summary)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(predictions.as_bytes())
                .and_then(|_| out.flush())
                .map_err(io_err(Path::new("<stdout>")))?;
            log::info!(
                "labeled {} of {} utterances in {} studies",
                summary.labeled,
                summary.utterances,
                summary.studies
            );
        }
    }
    Ok(Outcome::Clean)
}

/// Report texts by study id: a directory of `<id>.txt` files, a study file
/// (structured text, else original text), or one plain text file keyed by
/// its stem.
fn read_texts(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    if path.is_dir() {
        let mut out = BTreeMap::new();
        let entries = std::fs::read_dir(path).map_err(io_err(path))?;
        for entry in entries {
            let file = entry.map_err(io_err(path))?.path();
            if file.extension().is_some_and(|e| e == "txt") {
                let id = file_stem(&file);
                out.insert(id, read_file(&file)?);
            }
        }
        return Ok(out);
    }
    if !path.exists() {
        return Err(CliError::Store(StoreError::FileNotFound(path.to_path_buf())));
    }
    let is_table = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["jsonl", "csv"].iter().any(|x| e.eq_ignore_ascii_case(x)));
    if is_table {
        return Ok(load_studies(path)?
            .into_iter()
            .map(|s| (s.study_id, s.structured_text.unwrap_or(s.original_text)))
            .collect());
    }
    Ok(BTreeMap::from([(file_stem(path), read_file(path)?)]))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Pairs two id-keyed maps; ids on one side only are an error unless
/// `partial`.
fn pair_texts(
    a: BTreeMap<String, String>,
    mut b: BTreeMap<String, String>,
    partial: bool,
) -> Result<Vec<(String, String, String)>, CliError> {
    let only_a: Vec<&String> = a.keys().filter(|k| !b.contains_key(*k)).collect();
    let only_b: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).collect();
    if !(only_a.is_empty() && only_b.is_empty()) {
        let message = format!(
            "unmatched study ids: {} on the first side only, {} on the second only (e.g. {:?})",
            only_a.len(),
            only_b.len(),
            only_a.first().or(only_b.first()).map(|s| s.as_str()).unwrap_or_default()
        );
        if !partial {
            return Err(CliError::Input(message));
        }
        log::warn!("{message}");
    }
    let paired: Vec<_> = a
        .into_iter()
        .filter_map(|(id, x)| b.remove(&id).map(|y| (id, x, y)))
        .collect();
    if paired.is_empty() {
        return Err(CliError::Input("no study ids in common".into()));
    }
    Ok(paired)
}

fn cmd_evaluate(ctx: &Context, args: EvaluateArgs) -> Result<Outcome, CliError> {
    let pred_spec = ctx.labeler_spec(args.labeler);
    let ref_spec = args.ref_labeler.unwrap_or_else(|| pred_spec.clone());
    let llm = ctx.config.llm.as_ref();
    let pred_labeler = build_labeler(&pred_spec, 1, llm, &ctx.taxonomy)?;
    let ref_labeler = build_labeler(&ref_spec, 1, llm, &ctx.taxonomy)?;
    let external: BTreeMap<String, f64> = match &args.external {
        Some(path) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => BTreeMap::new(),
    };

    let pairs = pair_texts(
        read_texts(&args.pred_reports)?,
        read_texts(&args.ref_reports)?,
        args.allow_partial,
    )?;
    let mut generated = Vec::with_capacity(pairs.len());
    let mut reference = Vec::with_capacity(pairs.len());
    for (id, pred, gold) in &pairs {
        // An unparseable generated report is a model failure and scores as
        // empty; an unparseable reference is bad input.
        generated.push(match parse_report(pred, ParseMode::Lenient) {
            Ok(parsed) => parsed.report,
            Err(_) => {
                log::warn!("{id}: generated report has no parseable content");
                StructuredReport::default()
            }
        });
        reference.push(
            parse_report(gold, ParseMode::Lenient)
                .map_err(|_| CliError::Input(format!("{id}: reference report does not parse")))?
                .report,
        );
    }
    let workers = ctx.workers(args.workers);
    let gen_refs: Vec<(&str, &StructuredReport)> =
        pairs.iter().map(|p| p.0.as_str()).zip(&generated).collect();
    let ref_refs: Vec<(&str, &StructuredReport)> =
        pairs.iter().map(|p| p.0.as_str()).zip(&reference).collect();
    let gen_labeled = label_reports(&gen_refs, pred_labeler.labeler.as_ref(), &ctx.taxonomy, workers)?;
    let ref_labeled = label_reports(&ref_refs, ref_labeler.labeler.as_ref(), &ctx.taxonomy, workers)?;

    let spaces: BTreeSet<LabelSpace> = if args.space.is_empty() {
        LabelSpace::ALL.into_iter().collect()
    } else {
        args.space.into_iter().collect()
    };
    let mut report = ScoreReport::new(args.split, args.alignment);
    let mut per_organ = BTreeMap::new();
    for space in spaces {
        let scores = f1_srr(&gen_labeled, &ref_labeled, &ctx.taxonomy, space, args.alignment)?;
        report.add_srr(&scores, args.per_class);
        per_organ.insert(space, per_organ_breakdown(&gen_labeled, &ref_labeled, &ctx.taxonomy, space)?);
    }
    report.per_organ = Some(per_organ);
    for mode in AverageMode::ALL {
        report.category.insert(mode, category_f1(&generated, &reference, mode)?);
    }
    let candidates: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
    let references: Vec<Vec<&str>> = pairs.iter().map(|p| vec![p.2.as_str()]).collect();
    report
        .traditional
        .insert("BLEU".into(), corpus_bleu(&candidates, &references, 4)?);
    let rouge = pairs.iter().map(|p| rouge_l(&p.1, &p.2)).sum::<f64>() / pairs.len() as f64;
    report.traditional.insert("ROUGE-L".into(), rouge);
    let report = merge_external_scores(report, &external)?;

    if let Some(path) = &args.csv {
        write_file(path, &report.to_csv())?;
    }
    match args.out.or_else(|| ctx.config.output.clone()) {
        Some(path) => write_file(&path, &(report.to_json() + "\n"))?,
        None => print_text(&report.to_json())?,
    }
    Ok(Outcome::Clean)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PairDiff {
    study_id: String,
    #[serde(flatten)]
    stats: DiffStats,
}

#[derive(Debug, Serialize)]
struct DiffOutput {
    pairs: Vec<PairDiff>,
    summary: ReviewSummary,
}

fn cmd_diff(args: DiffArgs) -> Result<Outcome, CliError> {
    if let (Some(corpus), Some(id)) = (&args.corpus, &args.study) {
        let store = CorpusStore::open(corpus)?;
        let stats = study_diff(&store, id)
            .ok_or_else(|| CliError::Input(format!("study {id:?} is unknown or unreviewed")))?;
        print_json(&stats)?;
        return Ok(Outcome::Clean);
    }
    let pairs: Vec<PairDiff> = match (&args.corpus, &args.orig, &args.edited) {
        (Some(corpus), _, _) => all_study_diffs(&CorpusStore::open(corpus)?)
            .into_iter()
            .map(|(study_id, stats)| PairDiff { study_id, stats })
            .collect(),
        (None, Some(orig), Some(edited)) => {
            let (a, b) = (read_texts(orig)?, read_texts(edited)?);
            let single = orig.is_file() && edited.is_file() && a.len() == 1 && b.len() == 1;
            let triples = if single {
                let (id, x) = a.into_iter().next().expect("one text");
                let y = b.into_values().next().expect("one text");
                vec![(id, x, y)]
            } else {
                pair_texts(a, b, false)?
            };
            triples
                .into_iter()
                .map(|(study_id, x, y)| PairDiff {
                    study_id,
                    stats: diff_stats(&x, &y),
                })
                .collect()
        }
        _ => return Err(CliError::Config("give --orig and --edited, or --corpus".into())),
    };
    let stats: Vec<DiffStats> = pairs.iter().map(|p| p.stats).collect();
    let summary = ReviewSummary::from_stats(&stats)
        .map_err(|_| CliError::Input("no reviewed pairs to diff".into()))?;
    if args.listing {
        print_text(&summary.listing())?;
    } else {
        print_json(&DiffOutput { pairs, summary })?;
    }
    Ok(Outcome::Clean)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewPairRow {
    #[serde(default)]
    #[allow(dead_code)]
    study_id: Option<String>,
    original: String,
    edited: String,
    #[serde(default)]
    auto_labels: Option<Vec<LabelSet>>,
    #[serde(default)]
    reviewed_labels: Option<Vec<LabelSet>>,
}

fn cmd_stats(ctx: &Context, args: StatsArgs) -> Result<Outcome, CliError> {
    let with_status = !args.ignore_status;
    let source = ctx.corpus(args.reviews)?;
    let payload = if source.is_dir() {
        let store = CorpusStore::open(&source)?;
        match review_statistics(&store, with_status) {
            Some(payload) => payload,
            None => {
                eprintln!("srrg: no reviews in {}", source.display());
                return Ok(Outcome::Findings);
            }
        }
    } else {
        let text = read_file(&source)?;
        let mut stats = Vec::new();
        let mut label_pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: ReviewPairRow = serde_json::from_str(line).map_err(|e| {
                CliError::Input(format!("{}:{}: {e}", source.display(), idx + 1))
            })?;
            stats.push(diff_stats(&row.original, &row.edited));
            match (row.auto_labels, row.reviewed_labels) {
                (Some(a), Some(r)) if a.len() == r.len() => label_pairs.extend(a.into_iter().zip(r)),
                (None, None) => {}
                _ => {
                    return Err(CliError::Input(format!(
                        "{}:{}: auto_labels and reviewed_labels must both be present with equal lengths",
                        source.display(),
                        idx + 1
                    )))
                }
            }
        }
        let review = ReviewSummary::from_stats(&stats)
            .map_err(|_| CliError::Input(format!("{}: no review rows", source.display())))?;
        service::SummaryPayload {
            review,
            label_consistency: label_consistency(&label_pairs, with_status).ok(),
        }
    };
    if args.listing {
        let mut text = payload.review.listing();
        if let Some(lc) = &payload.label_consistency {
            text = format!("{text}\n{}", lc.listing());
        }
        print_text(&text)?;
    } else {
        print_json(&payload)?;
    }
    Ok(Outcome::Clean)
}

#[derive(Debug, Serialize)]
struct ImportOutput {
    file: String,
    imported: usize,
    errors: Vec<crate::store::RowError>,
}

fn cmd_import(ctx: &Context, args: ImportArgs) -> Result<Outcome, CliError> {
    let store = ctx.open_store_or_create(args.corpus)?;
    let mut results = Vec::new();
    for path in &args.files {
        let report = store.import_studies(path, ImportFormat::from_path(path))?;
        results.push(ImportOutput {
            file: path.display().to_string(),
            imported: report.imported,
            errors: report.errors,
        });
    }
    let clean = results.iter().all(|r| r.errors.is_empty());
    print_json(&results)?;
    Ok(if clean { Outcome::Clean } else { Outcome::Findings })
}

impl Context {
    fn open_store_or_create(&self, flag: Option<PathBuf>) -> Result<CorpusStore, CliError> {
        let dir = self.corpus(flag)?;
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(CorpusStore::open(dir)?)
    }
}

fn cmd_splits(ctx: &Context, args: SplitsArgs) -> Result<Outcome, CliError> {
    let store = ctx.open_store(args.corpus)?;
    if let Some(path) = &args.manifest {
        store.assign_splits(&read_manifest(path)?)?;
    }
    let counts: BTreeMap<Split, usize> = store.split_counts();
    print_json(&counts)?;
    Ok(Outcome::Clean)
}

fn cmd_serve(ctx: &Context, args: ServeArgs) -> Result<Outcome, CliError> {
    let store = Arc::new(ctx.open_store(args.corpus)?);
    let tokens: HashMap<String, String> = match args.tokens.as_ref().or(ctx.config.tokens.as_ref()) {
        Some(path) => service::load_tokens(path).map_err(io_err(path))?,
        None => HashMap::new(),
    };
    let config = ServiceConfig {
        lease: Duration::from_secs(args.lease_minutes * 60),
        task_split: (!args.all_splits).then_some(Split::TestReviewed),
        reviews_per_study: args.reviews_per_study.max(1),
        tokens,
        ..ServiceConfig::default()
    };
    let state = AppState::new(store, ctx.taxonomy.clone(), config);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_err(Path::new("<runtime>")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .map_err(|source| CliError::Io {
                path: PathBuf::from(&args.addr),
                source,
            })?;
        let local = listener.local_addr().map_err(io_err(Path::new(&args.addr)))?;
        // One compact line, so supervisors can read the bound address.
        print_text(&serde_json::json!({ "listening": local.to_string() }).to_string())?;
        log::info!("serving on {local}");
        service::serve(listener, state, shutdown_signal())
            .await
            .map_err(io_err(Path::new(&args.addr)))
    })?;
    Ok(Outcome::Clean)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut sig) => {
                sig.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
