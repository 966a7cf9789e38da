//! `cxrlabel`: run the labeling pipeline stage by stage or end to end.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 stage failure.

use std::fmt::Display;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use cxrlabel::artifacts::{self, read_jsonl, write_atomic, write_jsonl, ConflictLine, MatchLine};
use cxrlabel::his::{self, ReportRecord};
use cxrlabel::label_file::{read_label_csv, read_score_csv, write_label_csv, LabelRow};
use cxrlabel::label_map::{map_file, UncertainPolicy};
use cxrlabel::labeler::{normalize_text, KeywordConfig};
use cxrlabel::labels::{Flags, LabelSource, LabelVector};
use cxrlabel::matcher::{match_all, MatchStatus};
use cxrlabel::metrics::{evaluate_labeler, BootstrapSettings};
use cxrlabel::pacs::{self, StudyRecord, ViewScorerClient};
use cxrlabel::pipeline::{self, PipelineConfig};
use cxrlabel::review::{manual_overlay, qc_sample, QcCandidate, QueueStore, ReviewItem};
use cxrlabel::splitter::stratified_split;

#[derive(Parser)]
#[command(name = "cxrlabel", version, about = "Build a labeled chest X-ray dataset from HIS and PACS exports")]
struct Cli {
    /// Pipeline config (TOML); its values fill in flags left unset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    log_format: LogFormat,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse HIS session XML and keep chest reports.
    IngestHis(IngestHisArgs),
    /// Read the PACS study manifest, score missing views, keep PA views.
    IngestPacs(IngestPacsArgs),
    /// Link studies to reports.
    Match(MatchArgs),
    /// Label matched descriptions; queue the rest for review.
    Label(LabelArgs),
    /// Serve the review queue over HTTP.
    ReviewServe(ReviewServeArgs),
    /// Write resolved review decisions as overlay files.
    ReviewExport(ReviewExportArgs),
    /// Map 14-observation CheXpert labels onto the five classes.
    MapChexpert(MapChexpertArgs),
    /// Stratified train/validation split.
    Split(SplitArgs),
    /// Compare automatic labels with ground truth.
    Evaluate(EvaluateArgs),
    /// Draw a QC audit sample of labeled studies into the review queue.
    QcSample(QcSampleArgs),
    /// Run every stage from the config file.
    Run,
}

#[derive(Args)]
struct IngestHisArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: Option<PathBuf>,
    #[arg(long)]
    whitelist: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestPacsArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Base URL of the view-scoring service.
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ignored: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    scorer_timeout_secs: u64,
    #[arg(long, default_value_t = 4)]
    scorer_concurrency: usize,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    studies: Option<PathBuf>,
    #[arg(long)]
    reports: Option<PathBuf>,
    #[arg(long)]
    window_hours: Option<i64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    conflicts: Option<PathBuf>,
    /// Also enqueue conflicts into this review log.
    #[arg(long)]
    queue: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    matches: Option<PathBuf>,
    /// Keyword config; the bundled sample when omitted.
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enqueue unlabeled descriptions into this review log.
    #[arg(long)]
    queue: Option<PathBuf>,
}

#[derive(Args)]
struct ReviewServeArgs {
    #[arg(long)]
    queue: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8642")]
    bind: SocketAddr,
}

#[derive(Args)]
struct ReviewExportArgs {
    #[arg(long)]
    queue: Option<PathBuf>,
    /// Label CSV of manual and corrected labels.
    #[arg(long)]
    out_labels: PathBuf,
    /// JSONL of `{study_uid, report_id}` conflict decisions.
    #[arg(long)]
    out_matches: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Uncertain {
    AsNegative,
    AsPositive,
}

#[derive(Args)]
struct MapChexpertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Uncertain::AsNegative)]
    uncertain: Uncertain,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_val: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    auto: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Bootstrap replicates for 95% intervals; none when omitted.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QcSampleArgs {
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Supplies the description for each labeled study.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    queue: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
    Stage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Stage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Stage(m) => m,
        }
    }
}

fn data(e: impl Display) -> Failure {
    Failure::Data(e.to_string())
}

type Outcome = Result<(), Failure>;

/// Settings from `--config`, if given. Paths are not required to exist
/// except by `run`.
struct Ctx {
    config: Option<PipelineConfig>,
}

impl Ctx {
    fn load(path: Option<&Path>) -> Result<Ctx, Failure> {
        let Some(path) = path else {
            return Ok(Ctx { config: None });
        };
        let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config = PipelineConfig::from_toml_str(&text, base).map_err(data)?;
        Ok(Ctx { config: Some(config) })
    }

    /// The flag value, else the config value, else a usage error.
    fn pick<T>(&self, flag: Option<T>, name: &str, from: impl FnOnce(&PipelineConfig) -> T) -> Result<T, Failure> {
        flag.or_else(|| self.config.as_ref().map(from))
            .ok_or_else(|| Failure::Usage(format!("--{name} is required (or pass --config)")))
    }

    fn value<T>(&self, flag: Option<T>, from: impl FnOnce(&PipelineConfig) -> T, default: T) -> T {
        flag.or_else(|| self.config.as_ref().map(from)).unwrap_or(default)
    }

    /// A file in the configured output directory.
    fn out_file(&self, flag: Option<PathBuf>, name: &str, file: &str) -> Result<PathBuf, Failure> {
        self.pick(flag, name, |c| c.paths.output_dir.join(file))
    }

    fn queue(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.config.as_ref().map(|c| c.paths.queue_log()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.log_format, cli.verbose);
    let result = Ctx::load(cli.config.as_deref()).and_then(|ctx| dispatch(cli.command, &ctx, cli.config.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            tracing::error!(code = f.code(), "{}", f.message());
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn init_logging(format: LogFormat, verbose: u8) {
    let default = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    match format {
        LogFormat::Text => builder.with_target(false).init(),
        LogFormat::Json => builder.json().init(),
    }
}

fn dispatch(command: Command, ctx: &Ctx, config_path: Option<&Path>) -> Outcome {
    match command {
        Command::IngestHis(a) => ingest_his(a, ctx),
        Command::IngestPacs(a) => ingest_pacs(a, ctx),
        Command::Match(a) => match_cmd(a, ctx),
        Command::Label(a) => label(a, ctx),
        Command::ReviewServe(a) => review_serve(a, ctx),
        Command::ReviewExport(a) => review_export(a, ctx),
        Command::MapChexpert(a) => map_chexpert(a),
        Command::Split(a) => split(a, ctx),
        Command::Evaluate(a) => evaluate(a, ctx),
        Command::QcSample(a) => qc(a, ctx),
        Command::Run => run(config_path),
    }
}

fn ingest_his(a: IngestHisArgs, ctx: &Ctx) -> Outcome {
    let dir = ctx.pick(a.input, "in", |c| c.paths.his_dir.clone())?;
    let whitelist = ctx.pick(a.whitelist, "whitelist", |c| c.paths.whitelist.clone())?;
    let out = ctx.out_file(a.out, "out", pipeline::outputs::REPORTS)?;
    let whitelist = his::read_whitelist(&whitelist).map_err(data)?;
    let (sessions, reports) = his::ingest_dir(&dir).map_err(|(p, e)| data(format!("{}: {e}", p.display())))?;
    let parsed = reports.len();
    let reports = his::filter_chest_reports(reports, &whitelist).map_err(data)?;
    write_jsonl(&out, &reports).map_err(data)?;
    tracing::info!(sessions, parsed, chest = reports.len(), out = %out.display(), "reports written");
    Ok(())
}

fn ingest_pacs(a: IngestPacsArgs, ctx: &Ctx) -> Outcome {
    let manifest = ctx.pick(a.manifest, "manifest", |c| c.paths.pacs_manifest.clone())?;
    let out = ctx.out_file(a.out, "out", pipeline::outputs::STUDIES)?;
    let ignored_out = ctx.out_file(a.ignored, "ignored", pipeline::outputs::IGNORED)?;
    let threshold = ctx.value(a.threshold, |c| c.pa_threshold, 0.5);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::Usage(format!("--threshold {threshold} is outside [0, 1]")));
    }
    let file = std::fs::File::open(&manifest).map_err(|e| data(format!("{}: {e}", manifest.display())))?;
    let studies = pacs::parse_study_manifest(std::io::BufReader::new(file)).map_err(data)?;
    let total = studies.len();
    let scorer_url = a
        .scorer
        .or_else(|| ctx.config.as_ref().and_then(|c| c.scorer.as_ref().map(|s| s.url.clone())));
    let studies = match scorer_url {
        Some(url) => {
            let client = ViewScorerClient::new(&url, Duration::from_secs(a.scorer_timeout_secs))
                .map_err(data)?
                .with_concurrency(a.scorer_concurrency);
            let n = client.concurrency();
            pacs::score_views(studies, &client, n).map_err(|e| {
                for f in &e.failures {
                    tracing::warn!(study = %f.study_uid, error = %f.error, "scoring failed");
                }
                data(e)
            })?
        }
        None => studies,
    };
    let part = pacs::filter_pa(studies, threshold).map_err(data)?;
    write_jsonl(&out, &part.kept).map_err(data)?;
    write_jsonl(&ignored_out, &part.ignored).map_err(data)?;
    tracing::info!(studies = total, kept = part.kept.len(), ignored = part.ignored.len(), "studies filtered");
    Ok(())
}

fn match_cmd(a: MatchArgs, ctx: &Ctx) -> Outcome {
    let studies_path = ctx.out_file(a.studies, "studies", pipeline::outputs::STUDIES)?;
    let reports_path = ctx.out_file(a.reports, "reports", pipeline::outputs::REPORTS)?;
    let out = ctx.out_file(a.out, "out", pipeline::outputs::MATCHES)?;
    let conflicts_out = ctx.out_file(a.conflicts, "conflicts", pipeline::outputs::CONFLICTS)?;
    let window = ctx.value(a.window_hours, |c| c.match_window_hours, 24);
    if window < 1 {
        return Err(Failure::Usage("--window-hours must be at least 1".into()));
    }
    let studies: Vec<StudyRecord> = read_jsonl(&studies_path).map_err(data)?;
    let reports: Vec<ReportRecord> = read_jsonl(&reports_path).map_err(data)?;
    let table = match_all(&studies, &reports, window, normalize_text).map_err(data)?;
    let (matches, conflicts) = artifacts::match_lines(&table, &studies, &reports);
    write_jsonl(&out, &matches).map_err(data)?;
    write_jsonl(&conflicts_out, &conflicts).map_err(data)?;
    if let Some(queue) = a.queue {
        enqueue_all(&queue, conflicts.iter().map(ConflictLine::payload))?;
    }
    tracing::info!(
        matched = table.count(MatchStatus::Matched),
        unmatched = table.count(MatchStatus::Unmatched),
        conflicts = table.count(MatchStatus::Conflict),
        "studies matched"
    );
    Ok(())
}

fn enqueue_all(queue: &Path, payloads: impl Iterator<Item = cxrlabel::review::Payload>) -> Outcome {
    let mut store = QueueStore::open(queue).map_err(data)?;
    let now = Utc::now();
    let before = store.len();
    for p in payloads {
        store.enqueue(ReviewItem::pending(p, now)).map_err(data)?;
    }
    tracing::info!(added = store.len() - before, queue = %queue.display(), "review items enqueued");
    Ok(())
}

fn load_keywords(path: Option<PathBuf>, ctx: &Ctx) -> Result<KeywordConfig, Failure> {
    let path = path.or_else(|| ctx.config.as_ref().and_then(|c| c.paths.keywords.clone()));
    match path {
        Some(p) => KeywordConfig::load(&p).map_err(data),
        None => Ok(KeywordConfig::sample()),
    }
}

fn label(a: LabelArgs, ctx: &Ctx) -> Outcome {
    let matches_path = ctx.out_file(a.matches, "matches", pipeline::outputs::MATCHES)?;
    let out = ctx.out_file(a.out, "out", pipeline::outputs::LABELS)?;
    let keywords = load_keywords(a.keywords, ctx)?;
    let matches: Vec<MatchLine> = read_jsonl(&matches_path).map_err(data)?;
    let stage = artifacts::label_matches(&matches, &keywords);
    let mut csv = Vec::new();
    write_label_csv(&mut csv, &stage.rows).map_err(data)?;
    write_atomic(&out, &csv).map_err(data)?;
    if let Some(queue) = ctx.queue(a.queue) {
        enqueue_all(&queue, stage.residual.iter().cloned())?;
    } else if !stage.residual.is_empty() {
        tracing::warn!(residual = stage.residual.len(), "no --queue given; residual descriptions were not enqueued");
    }
    tracing::info!(labeled = stage.rows.len(), residual = stage.residual.len(), keywords = %keywords.version, "labels written");
    Ok(())
}

fn review_serve(a: ReviewServeArgs, ctx: &Ctx) -> Outcome {
    let queue = ctx.queue(a.queue).ok_or_else(|| Failure::Usage("--queue is required (or pass --config)".into()))?;
    let store = QueueStore::open(&queue).map_err(data)?;
    let stats = store.stats();
    tracing::info!(pending = stats.pending, resolved = stats.resolved, queue = %queue.display(), "queue loaded");
    let runtime = tokio::runtime::Runtime::new().map_err(data)?;
    runtime
        .block_on(cxrlabel_review::serve(Arc::new(RwLock::new(store)), a.bind))
        .map_err(data)
}

fn review_export(a: ReviewExportArgs, ctx: &Ctx) -> Outcome {
    let queue = ctx.queue(a.queue).ok_or_else(|| Failure::Usage("--queue is required (or pass --config)".into()))?;
    let store = QueueStore::open(&queue).map_err(data)?;
    let overlay = manual_overlay(&store);
    let rows: Vec<LabelRow> = overlay
        .labels
        .iter()
        .map(|(uid, flags)| LabelRow {
            study_uid: uid.clone(),
            flags: *flags,
            source: LabelSource::Manual,
        })
        .collect();
    let mut csv = Vec::new();
    write_label_csv(&mut csv, &rows).map_err(data)?;
    write_atomic(&a.out_labels, &csv).map_err(data)?;
    if let Some(path) = a.out_matches {
        let lines: Vec<serde_json::Value> = overlay
            .matches
            .iter()
            .map(|(s, r)| serde_json::json!({"study_uid": s, "report_id": r}))
            .collect();
        write_jsonl(&path, &lines).map_err(data)?;
    }
    tracing::info!(labels = rows.len(), matches = overlay.matches.len(), "overlay written");
    Ok(())
}

fn map_chexpert(a: MapChexpertArgs) -> Outcome {
    let policy = match a.uncertain {
        Uncertain::AsNegative => UncertainPolicy::AsNegative,
        Uncertain::AsPositive => UncertainPolicy::AsPositive,
    };
    let input = std::fs::File::open(&a.input).map_err(|e| data(format!("{}: {e}", a.input.display())))?;
    let mut out = Vec::new();
    let summary = map_file(input, &mut out, policy).map_err(data)?;
    write_atomic(&a.out, &out).map_err(data)?;
    for w in &summary.warnings {
        tracing::warn!(row = w.row, id = %w.identifier, "{}", w.message);
    }
    tracing::info!(rows = summary.rows, warnings = summary.warnings.len(), "labels mapped");
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    read_label_csv(file).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn split(a: SplitArgs, ctx: &Ctx) -> Outcome {
    let labels_path = ctx.out_file(a.labels, "labels", pipeline::outputs::LABELS)?;
    let ratio = ctx.value(a.ratio, |c| c.split.ratio, 0.7);
    let seed = ctx.value(a.seed, |c| c.split.seed, 13);
    let tolerance = ctx.value(a.tolerance, |c| c.split.tolerance, 0.01);
    let rows = read_labels(&labels_path)?;
    let labels: Vec<(String, Flags)> = rows.into_iter().map(|r| (r.study_uid, r.flags)).collect();
    let result = stratified_split(&labels, ratio, seed, tolerance).map_err(data)?;
    let lines = |uids: &[String]| uids.iter().map(|u| format!("{u}\n")).collect::<String>();
    write_atomic(&a.out_train, lines(&result.train_uids).as_bytes()).map_err(data)?;
    write_atomic(&a.out_val, lines(&result.val_uids).as_bytes()).map_err(data)?;
    if let Some(path) = a.report {
        let mut json = serde_json::to_vec_pretty(&result.ratio_report).map_err(data)?;
        json.push(b'\n');
        write_atomic(&path, &json).map_err(data)?;
    }
    let report = &result.ratio_report;
    for v in report.violations() {
        tracing::warn!(class = %v.class, deviation = v.max_deviation(), tolerance, "class rate outside tolerance");
    }
    tracing::info!(
        train = result.train_uids.len(),
        val = result.val_uids.len(),
        max_deviation = report.max_deviation,
        within_tolerance = report.within_tolerance,
        "split written"
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs, ctx: &Ctx) -> Outcome {
    let auto = read_labels(&a.auto)?;
    let truth = read_labels(&a.truth)?;
    let scores = match &a.scores {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
            Some(read_score_csv(f).map_err(|e| data(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let bootstrap = a.bootstrap.map(|replicates| BootstrapSettings {
        replicates,
        seed: ctx.value(a.seed, |c| c.bootstrap.seed, 17),
    });
    if bootstrap.is_some_and(|b| b.replicates == 0) {
        return Err(Failure::Usage("--bootstrap must be positive".into()));
    }
    let report = evaluate_labeler(&auto, &truth, scores.as_deref(), bootstrap).map_err(data)?;
    if let Some(path) = a.out {
        let mut json = serde_json::to_vec_pretty(&report).map_err(data)?;
        json.push(b'\n');
        write_atomic(&path, &json).map_err(data)?;
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(report.to_table().as_bytes()).map_err(data)?;
    Ok(())
}

fn qc(a: QcSampleArgs, ctx: &Ctx) -> Outcome {
    let labels_path = ctx.out_file(a.labels, "labels", pipeline::outputs::LABELS)?;
    let matches_path = ctx.out_file(a.matches, "matches", pipeline::outputs::MATCHES)?;
    let queue = ctx.queue(a.queue).ok_or_else(|| Failure::Usage("--queue is required (or pass --config)".into()))?;
    let rate = ctx.value(a.rate, |c| c.qc.rate, 0.05);
    let seed = ctx.value(a.seed, |c| c.qc.seed, 1);
    let rows = read_labels(&labels_path)?;
    let matches: Vec<MatchLine> = read_jsonl(&matches_path).map_err(data)?;
    let descriptions: std::collections::HashMap<&str, &str> = matches
        .iter()
        .filter_map(|m| match m {
            MatchLine::Matched { study_uid, description, .. } => Some((study_uid.as_str(), description.as_str())),
            MatchLine::Unmatched { .. } => None,
        })
        .collect();
    let mut candidates = Vec::with_capacity(rows.len());
    for r in rows {
        let description = descriptions
            .get(r.study_uid.as_str())
            .ok_or_else(|| data(format!("study {} is not in {}", r.study_uid, matches_path.display())))?;
        candidates.push(QcCandidate {
            labels: LabelVector::new(r.flags, r.source),
            study_uid: r.study_uid,
            description: (*description).to_owned(),
        });
    }
    let items = qc_sample(&candidates, rate, seed, Utc::now()).map_err(data)?;
    let n = items.len();
    enqueue_all(&queue, items.into_iter().map(|i| i.payload))?;
    tracing::info!(sampled = n, of = candidates.len(), seed, "qc sample drawn");
    Ok(())
}

fn run(config_path: Option<&Path>) -> Outcome {
    let path = config_path.ok_or_else(|| Failure::Usage("run needs --config <file>".into()))?;
    let config = pipeline::validate_config(path).map_err(data)?;
    let manifest = pipeline::run_pipeline(&config).map_err(|e| Failure::Stage(e.to_string()))?;
    let c = &manifest.counts;
    tracing::info!(
        pa_kept = c.pa_kept,
        matched = c.matched,
        conflicts = c.conflicts,
        auto_labeled = c.auto_labeled,
        queued = c.queued,
        out = %config.paths.output_dir.display(),
        "run complete"
    );
    Ok(())
}
