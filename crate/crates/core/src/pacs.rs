//! PACS study manifest ingest and PA-view filtering.
//!
//! Studies arrive as a JSONL manifest exported from PACS, one study per line:
//!
//! ```json
//! {"study_uid":"1.2.3","patient_id":"P1","study_time":"2021-03-04T08:00:00+07:00","pa_probability":0.97,"image_ref":"pacs://1.2.3"}
//! ```
//!
//! `pa_probability` may be `null`, in which case an external view scorer can
//! fill it in over HTTP (`POST /score` with `{"image_ref": …}`, answering
//! `{"pa_probability": …}`).

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_uid: String,
    pub patient_id: String,
    pub study_time: DateTime<Utc>,
    pub pa_probability: Option<f64>,
    pub image_ref: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("manifest line {0}: duplicate study_uid")]
    DuplicateStudyUid(usize),
    #[error("reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse a JSONL manifest. Blank lines are skipped; line numbers are 1-based.
pub fn parse_study_manifest(input: impl BufRead) -> Result<Vec<StudyRecord>, ManifestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| ManifestError::MalformedLine {
            line: line_no,
            message,
        };
        let study: StudyRecord =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if study.study_uid.trim().is_empty() {
            return Err(malformed("study_uid is empty".into()));
        }
        if let Some(p) = study.pa_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(malformed(format!("pa_probability {p} outside [0, 1]")));
            }
        }
        if !seen.insert(study.study_uid.clone()) {
            return Err(ManifestError::DuplicateStudyUid(line_no));
        }
        out.push(study);
    }
    Ok(out)
}

pub fn write_study_manifest(mut out: impl Write, studies: &[StudyRecord]) -> std::io::Result<()> {
    for s in studies {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("bad scorer response: {0}")]
    BadResponse(String),
}

/// Anything that can estimate the probability that an image is a PA view.
pub trait ViewScorer: Sync {
    fn score(&self, image_ref: &str) -> Result<f64, ScorerError>;
}

/// HTTP client for the view-scoring service.
#[derive(Debug, Clone)]
pub struct ViewScorerClient {
    endpoint: String,
    agent: ureq::Agent,
    concurrency: usize,
}

impl ViewScorerClient {
    /// `endpoint` is the service base URL; requests go to `{endpoint}/score`.
    pub fn new(endpoint: &str, timeout: Duration) -> Result<ViewScorerClient, ScorerError> {
        if timeout.is_zero() {
            return Err(ScorerError::Unavailable("timeout must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(ViewScorerClient {
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            agent,
            concurrency: 4,
        })
    }

    pub fn with_concurrency(mut self, concurrency: usize) -> ViewScorerClient {
        self.concurrency = concurrency.max(1);
        self
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    image_ref: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    pa_probability: f64,
}

impl ViewScorer for ViewScorerClient {
    fn score(&self, image_ref: &str) -> Result<f64, ScorerError> {
        let url = format!("{}/score", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(ScoreRequest { image_ref })
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ScorerError::BadResponse(format!("HTTP {status}")));
        }
        let body: ScoreResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ScorerError::BadResponse(e.to_string()))?;
        if !(0.0..=1.0).contains(&body.pa_probability) {
            return Err(ScorerError::BadResponse(format!(
                "pa_probability {} outside [0, 1]",
                body.pa_probability
            )));
        }
        Ok(body.pa_probability)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub study_uid: String,
    pub error: ScorerError,
}

/// Some studies could not be scored. `studies` holds every input record (the
/// failed ones still unscored), `failures` names exactly the failed ones.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} of {} studies could not be scored", failures.len(), studies.len())]
pub struct PartialScoring {
    pub studies: Vec<StudyRecord>,
    pub failures: Vec<ScoreFailure>,
}

/// Fill in `pa_probability` for every study that lacks it.
///
/// Up to `concurrency` requests are in flight at once. Results are merged by
/// input position, so the output order never depends on completion order.
/// Already-scored studies pass through without touching the scorer.
pub fn score_views(
    studies: Vec<StudyRecord>,
    scorer: &dyn ViewScorer,
    concurrency: usize,
) -> Result<Vec<StudyRecord>, PartialScoring> {
    let pending: Vec<usize> = studies
        .iter()
        .enumerate()
        .filter(|(_, s)| s.pa_probability.is_none())
        .map(|(i, _)| i)
        .collect();
    if pending.is_empty() {
        return Ok(studies);
    }

    let next = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, pending.len());
    let mut results: Vec<(usize, Result<f64, ScorerError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&idx) = pending.get(k) else { break };
                        local.push((idx, scorer.score(&studies[idx].image_ref)));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("scorer worker panicked"))
            .collect()
    });
    results.sort_by_key(|(idx, _)| *idx);

    let mut studies = studies;
    let mut failures = Vec::new();
    for (idx, result) in results {
        match result {
            Ok(p) => studies[idx].pa_probability = Some(p),
            Err(error) => failures.push(ScoreFailure {
                study_uid: studies[idx].study_uid.clone(),
                error,
            }),
        }
    }
    if failures.is_empty() {
        Ok(studies)
    } else {
        Err(PartialScoring { studies, failures })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("study {0} has no PA probability")]
    UnscoredStudy(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PaPartition {
    pub kept: Vec<StudyRecord>,
    pub ignored: Vec<StudyRecord>,
}

/// Split studies into those whose PA probability strictly exceeds
/// `threshold` and the rest.
pub fn filter_pa(studies: Vec<StudyRecord>, threshold: f64) -> Result<PaPartition, FilterError> {
    if let Some(s) = studies.iter().find(|s| s.pa_probability.is_none()) {
        return Err(FilterError::UnscoredStudy(s.study_uid.clone()));
    }
    let (kept, ignored) = studies
        .into_iter()
        .partition(|s| s.pa_probability.is_some_and(|p| p > threshold));
    Ok(PaPartition { kept, ignored })
}
