//! End-to-end run: ingest HIS → ingest PACS and keep PA views → match →
//! label → queue the rest for review.
//!
//! Every stage writes its artifact into the output directory before the next
//! stage starts (see [`crate::artifacts`]). The run manifest goes last. If a
//! stage fails, the files this run already wrote are moved to
//! `<output_dir>/failed/` next to an `error.txt` naming the stage.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, label_matches, match_lines, write_atomic};
use crate::his;
use crate::label_file::write_label_csv;
use crate::labeler::{normalize_text, KeywordConfig};
use crate::matcher::{match_all, MatchStatus};
use crate::pacs::{self, ViewScorer, ViewScorerClient};
use crate::review::{QueueStore, ReviewItem};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub his_dir: PathBuf,
    pub pacs_manifest: PathBuf,
    pub whitelist: PathBuf,
    /// Keyword config; the bundled sample when absent.
    #[serde(default)]
    pub keywords: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Review queue log; `<output_dir>/queue.jsonl` when absent.
    #[serde(default)]
    pub queue: Option<PathBuf>,
}

impl Paths {
    pub fn queue_log(&self) -> PathBuf {
        self.queue
            .clone()
            .unwrap_or_else(|| self.output_dir.join("queue.jsonl"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSettings {
    pub url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    pub ratio: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            ratio: 0.7,
            seed: 13,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 3000,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcSettings {
    pub rate: f64,
    pub seed: u64,
}

impl Default for QcSettings {
    fn default() -> Self {
        QcSettings { rate: 0.05, seed: 1 }
    }
}

fn default_pa_threshold() -> f64 {
    0.5
}
fn default_window() -> i64 {
    24
}
fn default_timeout_secs() -> u64 {
    10
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default = "default_pa_threshold")]
    pub pa_threshold: f64,
    #[serde(default = "default_window")]
    pub match_window_hours: i64,
    #[serde(default)]
    pub scorer: Option<ScorerSettings>,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub qc: QcSettings,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    /// Dotted path of the offending field, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_owned(),
        message: message.into(),
    }
}

impl PipelineConfig {
    /// Parse without touching the file system. Relative paths are joined to
    /// `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<PipelineConfig, ConfigError> {
        let mut config: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_owned()))?;
        let p = &mut config.paths;
        for path in [&mut p.his_dir, &mut p.pacs_manifest, &mut p.whitelist, &mut p.output_dir] {
            *path = base.join(&*path);
        }
        for path in [&mut p.keywords, &mut p.queue].into_iter().flatten() {
            *path = base.join(&*path);
        }
        config.check_ranges()?;
        Ok(config)
    }

    fn check_ranges(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.pa_threshold) {
            return Err(field_err("pa_threshold", format!("{} is outside [0, 1]", self.pa_threshold)));
        }
        if !(1..=24 * 30).contains(&self.match_window_hours) {
            return Err(field_err(
                "match_window_hours",
                format!("{} is outside 1..=720", self.match_window_hours),
            ));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(field_err("split.ratio", format!("{} is outside (0, 1)", self.split.ratio)));
        }
        if !(self.split.tolerance > 0.0 && self.split.tolerance <= 1.0) {
            return Err(field_err(
                "split.tolerance",
                format!("{} is outside (0, 1]", self.split.tolerance),
            ));
        }
        if !(1..=1_000_000).contains(&self.bootstrap.replicates) {
            return Err(field_err(
                "bootstrap.replicates",
                format!("{} is outside 1..=1000000", self.bootstrap.replicates),
            ));
        }
        if !(self.qc.rate > 0.0 && self.qc.rate <= 1.0) {
            return Err(field_err("qc.rate", format!("{} is outside (0, 1]", self.qc.rate)));
        }
        if let Some(s) = &self.scorer {
            if s.timeout_secs == 0 {
                return Err(field_err("scorer.timeout_secs", "must be positive"));
            }
            if s.concurrency == 0 {
                return Err(field_err("scorer.concurrency", "must be positive"));
            }
        }
        Ok(())
    }

    /// Every input path must exist.
    pub fn check_paths(&self) -> Result<(), ConfigError> {
        let p = &self.paths;
        let need = |field: &str, path: &Path, dir: bool| {
            let ok = if dir { path.is_dir() } else { path.is_file() };
            if ok {
                Ok(())
            } else {
                let what = if dir { "directory" } else { "file" };
                Err(field_err(field, format!("{what} {} not found", path.display())))
            }
        };
        need("paths.his_dir", &p.his_dir, true)?;
        need("paths.pacs_manifest", &p.pacs_manifest, false)?;
        need("paths.whitelist", &p.whitelist, false)?;
        if let Some(k) = &p.keywords {
            need("paths.keywords", k, false)?;
        }
        Ok(())
    }

    pub fn keyword_config(&self) -> Result<KeywordConfig, crate::labeler::ConfigError> {
        match &self.paths.keywords {
            Some(path) => KeywordConfig::load(path),
            None => Ok(KeywordConfig::sample()),
        }
    }
}

/// Read, default, range-check and path-check a config file.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let config = PipelineConfig::from_toml_str(&text, base)?;
    config.check_paths()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    IngestHis,
    IngestPacs,
    Match,
    Label,
    Queue,
    Manifest,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::IngestHis => "ingest-his",
            Stage::IngestPacs => "ingest-pacs",
            Stage::Match => "match",
            Stage::Label => "label",
            Stage::Queue => "queue",
            Stage::Manifest => "manifest",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub sessions: usize,
    pub reports_parsed: usize,
    pub chest_reports: usize,
    pub studies: usize,
    pub pa_kept: usize,
    pub pa_ignored: usize,
    pub matched: usize,
    pub unmatched: usize,
    pub conflicts: usize,
    pub auto_labeled: usize,
    pub queued_residual: usize,
    pub queued_conflict: usize,
    pub queued: usize,
    pub resolved: usize,
}

impl RunCounts {
    /// The conservation rules every manifest must satisfy.
    pub fn check(&self) -> Result<(), String> {
        if self.pa_kept + self.pa_ignored != self.studies {
            return Err("pa_kept + pa_ignored != studies".into());
        }
        if self.matched + self.unmatched + self.conflicts != self.pa_kept {
            return Err("matched + unmatched + conflicts != pa_kept".into());
        }
        if self.auto_labeled + self.queued_residual != self.matched {
            return Err("auto_labeled + queued_residual != matched".into());
        }
        if self.queued_conflict != self.conflicts {
            return Err("queued_conflict != conflicts".into());
        }
        if self.queued != self.queued_residual + self.queued_conflict {
            return Err("queued != queued_residual + queued_conflict".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub keyword_config_version: String,
    pub config: PipelineConfig,
    pub counts: RunCounts,
    pub stages: Vec<StageTiming>,
}

/// Names of the files a run writes into the output directory.
pub mod outputs {
    pub const REPORTS: &str = "reports.jsonl";
    pub const STUDIES: &str = "studies.jsonl";
    pub const IGNORED: &str = "ignored.jsonl";
    pub const MATCHES: &str = "matches.jsonl";
    pub const CONFLICTS: &str = "conflicts.jsonl";
    pub const LABELS: &str = "labels.csv";
    pub const MANIFEST: &str = "manifest.json";
    pub const FAILED_DIR: &str = "failed";
}

struct Run {
    out: PathBuf,
    written: Vec<PathBuf>,
    stages: Vec<StageTiming>,
}

impl Run {
    fn write(&mut self, stage: Stage, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.out.join(name);
        write_atomic(&path, bytes).map_err(|e| fail(stage, e))?;
        self.written.push(path);
        Ok(())
    }

    fn timed<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&mut Run) -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        let start = Instant::now();
        let span = tracing::info_span!("stage", name = %stage);
        let _guard = span.enter();
        let value = f(self)?;
        self.stages.push(StageTiming {
            stage,
            seconds: round_secs(start.elapsed()),
        });
        Ok(value)
    }

    /// Move this run's outputs under `failed/` and record why.
    fn preserve_failure(&self, err: &PipelineError) {
        let failed = self.out.join(outputs::FAILED_DIR);
        if std::fs::create_dir_all(&failed).is_err() {
            return;
        }
        for path in &self.written {
            if let Some(name) = path.file_name() {
                let _ = std::fs::rename(path, failed.join(name));
            }
        }
        let _ = std::fs::write(failed.join("error.txt"), format!("{err}\n"));
        tracing::error!(stage = %err.stage, error = %err.source, "run failed");
    }
}

fn round_secs(d: Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e6
}

fn fail(stage: Stage, e: impl std::error::Error + Send + Sync + 'static) -> PipelineError {
    PipelineError {
        stage,
        source: Box::new(e),
    }
}

/// Run with the scorer named in the config, if any.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let client = match &config.scorer {
        Some(s) => Some(
            ViewScorerClient::new(&s.url, Duration::from_secs(s.timeout_secs))
                .map_err(|e| fail(Stage::IngestPacs, e))?
                .with_concurrency(s.concurrency),
        ),
        None => None,
    };
    run_pipeline_with(config, client.as_ref().map(|c| c as &dyn ViewScorer))
}

/// Run with an explicit scorer for studies whose manifest line has no PA
/// probability. Without one, such studies fail the PACS stage.
pub fn run_pipeline_with(
    config: &PipelineConfig,
    scorer: Option<&dyn ViewScorer>,
) -> Result<RunManifest, PipelineError> {
    let mut run = Run {
        out: config.paths.output_dir.clone(),
        written: Vec::new(),
        stages: Vec::new(),
    };
    match execute(config, scorer, &mut run) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            run.preserve_failure(&e);
            Err(e)
        }
    }
}

fn execute(
    config: &PipelineConfig,
    scorer: Option<&dyn ViewScorer>,
    run: &mut Run,
) -> Result<RunManifest, PipelineError> {
    let paths = &config.paths;
    let mut counts = RunCounts::default();
    let keywords = config.keyword_config().map_err(|e| fail(Stage::Label, e))?;

    let reports = run.timed(Stage::IngestHis, |run| {
        let stage = Stage::IngestHis;
        let whitelist = his::read_whitelist(&paths.whitelist).map_err(|e| fail(stage, e))?;
        let (sessions, reports) = his::ingest_dir(&paths.his_dir).map_err(|(path, e)| PipelineError {
            stage,
            source: format!("{}: {e}", path.display()).into(),
        })?;
        counts.sessions = sessions;
        counts.reports_parsed = reports.len();
        let reports = his::filter_chest_reports(reports, &whitelist).map_err(|e| fail(stage, e))?;
        counts.chest_reports = reports.len();
        run.write(stage, outputs::REPORTS, &artifacts::to_jsonl(&reports))?;
        tracing::info!(sessions, parsed = counts.reports_parsed, chest = reports.len(), "reports ingested");
        Ok(reports)
    })?;

    let studies = run.timed(Stage::IngestPacs, |run| {
        let stage = Stage::IngestPacs;
        let file = std::fs::File::open(&paths.pacs_manifest).map_err(|e| fail(stage, e))?;
        let studies = pacs::parse_study_manifest(std::io::BufReader::new(file)).map_err(|e| fail(stage, e))?;
        counts.studies = studies.len();
        let studies = match scorer {
            Some(s) => pacs::score_views(studies, s, config.scorer.as_ref().map_or(4, |c| c.concurrency)).map_err(|e| fail(stage, e))?,
            None => studies,
        };
        let part = pacs::filter_pa(studies, config.pa_threshold).map_err(|e| fail(stage, e))?;
        counts.pa_kept = part.kept.len();
        counts.pa_ignored = part.ignored.len();
        run.write(stage, outputs::STUDIES, &artifacts::to_jsonl(&part.kept))?;
        run.write(stage, outputs::IGNORED, &artifacts::to_jsonl(&part.ignored))?;
        tracing::info!(studies = counts.studies, kept = counts.pa_kept, ignored = counts.pa_ignored, "studies filtered");
        Ok(part.kept)
    })?;

    let (matches, conflicts) = run.timed(Stage::Match, |run| {
        let stage = Stage::Match;
        let table = match_all(&studies, &reports, config.match_window_hours, normalize_text)
            .map_err(|e| fail(stage, e))?;
        counts.matched = table.count(MatchStatus::Matched);
        counts.unmatched = table.count(MatchStatus::Unmatched);
        counts.conflicts = table.count(MatchStatus::Conflict);
        let (matches, conflicts) = match_lines(&table, &studies, &reports);
        run.write(stage, outputs::MATCHES, &artifacts::to_jsonl(&matches))?;
        run.write(stage, outputs::CONFLICTS, &artifacts::to_jsonl(&conflicts))?;
        let shared = table.report_usage.values().filter(|&&n| n > 1).count();
        tracing::info!(
            matched = counts.matched,
            unmatched = counts.unmatched,
            conflicts = counts.conflicts,
            shared_reports = shared,
            "studies matched"
        );
        Ok((matches, conflicts))
    })?;

    let labeled = run.timed(Stage::Label, |run| {
        let stage = Stage::Label;
        let labeled = label_matches(&matches, &keywords);
        counts.auto_labeled = labeled.rows.len();
        counts.queued_residual = labeled.residual.len();
        let mut csv = Vec::new();
        write_label_csv(&mut csv, &labeled.rows).map_err(|e| fail(stage, e))?;
        run.write(stage, outputs::LABELS, &csv)?;
        tracing::info!(auto = counts.auto_labeled, residual = counts.queued_residual, "descriptions labeled");
        Ok(labeled)
    })?;

    run.timed(Stage::Queue, |_| {
        let stage = Stage::Queue;
        let mut store = QueueStore::open(paths.queue_log()).map_err(|e| fail(stage, e))?;
        let now = Utc::now();
        let payloads = conflicts.iter().map(|c| c.payload()).chain(labeled.residual.iter().cloned());
        for payload in payloads {
            store
                .enqueue(ReviewItem::pending(payload, now))
                .map_err(|e| fail(stage, e))?;
        }
        counts.queued_conflict = conflicts.len();
        counts.queued = counts.queued_residual + counts.queued_conflict;
        counts.resolved = store.stats().resolved;
        tracing::info!(queued = counts.queued, resolved = counts.resolved, "review queue updated");
        Ok(())
    })?;

    if let Err(message) = counts.check() {
        return Err(PipelineError {
            stage: Stage::Manifest,
            source: format!("inconsistent counts: {message}").into(),
        });
    }
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_owned(),
        keyword_config_version: keywords.version.clone(),
        config: config.clone(),
        counts,
        stages: Vec::new(),
    };
    manifest.stages = run.stages.clone();
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    run.write(Stage::Manifest, outputs::MANIFEST, &json)?;
    Ok(manifest)
}
