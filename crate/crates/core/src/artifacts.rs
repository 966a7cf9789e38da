//! Files passed between stages, and the glue that builds them.
//!
//! | file              | one line per                                 |
//! |-------------------|----------------------------------------------|
//! | `reports.jsonl`   | chest [`ReportRecord`]                       |
//! | `studies.jsonl`   | PA-kept [`StudyRecord`]                      |
//! | `ignored.jsonl`   | study at or below the PA threshold           |
//! | `matches.jsonl`   | [`MatchLine`]: matched or unmatched study    |
//! | `conflicts.jsonl` | [`ConflictLine`]: study with rival reports   |
//! | `labels.csv`      | label row, see [`crate::label_file`]         |

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::his::ReportRecord;
use crate::label_file::LabelRow;
use crate::labeler::{label_description, KeywordConfig, LabelOutcome};
use crate::matcher::{MatchOutcome, MatchTable};
use crate::pacs::StudyRecord;
use crate::review::{CandidateReport, Payload};

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    BadLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `bytes` to a temporary file next to `path`, flush it, then rename
/// it over `path`. Readers see the old file or the new one, never a mix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| ArtifactError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ArtifactError> {
    write_atomic(path, &to_jsonl(items))
}

/// Read one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArtifactError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| ArtifactError::BadLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// One line of `matches.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatchLine {
    Matched {
        study_uid: String,
        image_ref: String,
        report_id: String,
        description: String,
    },
    Unmatched {
        study_uid: String,
    },
}

/// One line of `conflicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictLine {
    pub study_uid: String,
    pub image_ref: String,
    pub candidates: Vec<CandidateReport>,
}

impl ConflictLine {
    pub fn payload(&self) -> Payload {
        Payload::Conflict {
            study_uid: self.study_uid.clone(),
            image_ref: self.image_ref.clone(),
            candidates: self.candidates.clone(),
        }
    }
}

/// Turn matcher outcomes into the two match artifacts, in study order.
pub fn match_lines(
    table: &MatchTable,
    studies: &[StudyRecord],
    reports: &[ReportRecord],
) -> (Vec<MatchLine>, Vec<ConflictLine>) {
    let by_id: HashMap<&str, &ReportRecord> =
        reports.iter().map(|r| (r.report_id.as_str(), r)).collect();
    let image: HashMap<&str, &str> = studies
        .iter()
        .map(|s| (s.study_uid.as_str(), s.image_ref.as_str()))
        .collect();
    let mut matches = Vec::new();
    let mut conflicts = Vec::new();
    for outcome in &table.outcomes {
        let study_uid = outcome.study_uid().to_owned();
        let image_ref = image.get(study_uid.as_str()).copied().unwrap_or_default().to_owned();
        match outcome {
            MatchOutcome::Matched { report_id, .. } => matches.push(MatchLine::Matched {
                study_uid,
                image_ref,
                report_id: report_id.clone(),
                description: by_id[report_id.as_str()].description.clone(),
            }),
            MatchOutcome::Unmatched { .. } => matches.push(MatchLine::Unmatched { study_uid }),
            MatchOutcome::Conflict { candidate_ids, .. } => conflicts.push(ConflictLine {
                study_uid,
                image_ref,
                candidates: candidate_ids
                    .iter()
                    .map(|id| {
                        let r = by_id[id.as_str()];
                        CandidateReport {
                            report_id: r.report_id.clone(),
                            report_time: r.report_time,
                            description: r.description.clone(),
                        }
                    })
                    .collect(),
            }),
        }
    }
    (matches, conflicts)
}

/// Labels for the matched studies, sorted by study_uid, plus review
/// payloads for the descriptions the rules could not settle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelStage {
    pub rows: Vec<LabelRow>,
    pub residual: Vec<Payload>,
}

pub fn label_matches(matches: &[MatchLine], config: &KeywordConfig) -> LabelStage {
    let mut stage = LabelStage::default();
    for line in matches {
        let MatchLine::Matched {
            study_uid,
            image_ref,
            report_id,
            description,
        } = line
        else {
            continue;
        };
        match label_description(description, config) {
            LabelOutcome::Labeled(lv) => stage.rows.push(LabelRow {
                study_uid: study_uid.clone(),
                flags: lv.flags(),
                source: lv.source,
            }),
            LabelOutcome::NeedsReview(_) => stage.residual.push(Payload::Residual {
                study_uid: study_uid.clone(),
                report_id: report_id.clone(),
                description: description.clone(),
                image_ref: image_ref.clone(),
            }),
        }
    }
    stage.rows.sort_by(|a, b| a.study_uid.cmp(&b.study_uid));
    stage
}
