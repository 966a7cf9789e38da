//! Study ↔ report linkage.
//!
//! A report is a candidate for a study when all three hold:
//!
//! 1. same patient id;
//! 2. `|report_time − study_time| ≤ window` (inclusive);
//! 3. `check_in_time ≤ study_time ≤ check_out_time` of the report's session.
//!
//! Re-takes commonly produce several candidates for one study. When every
//! candidate carries the same (normalized) description the study is assigned
//! to the earliest report; otherwise the study is a conflict and goes to a
//! human. One report serving several studies is allowed and surfaced through
//! [`MatchTable::report_usage`].

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::his::ReportRecord;
use crate::pacs::StudyRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Matched,
    Conflict,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatchOutcome {
    Matched { study_uid: String, report_id: String },
    Conflict { study_uid: String, candidate_ids: Vec<String> },
    Unmatched { study_uid: String },
}

impl MatchOutcome {
    pub fn study_uid(&self) -> &str {
        match self {
            MatchOutcome::Matched { study_uid, .. }
            | MatchOutcome::Conflict { study_uid, .. }
            | MatchOutcome::Unmatched { study_uid } => study_uid,
        }
    }

    pub fn status(&self) -> MatchStatus {
        match self {
            MatchOutcome::Matched { .. } => MatchStatus::Matched,
            MatchOutcome::Conflict { .. } => MatchStatus::Conflict,
            MatchOutcome::Unmatched { .. } => MatchStatus::Unmatched,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchTable {
    /// One outcome per input study, in input order.
    pub outcomes: Vec<MatchOutcome>,
    /// report_id → number of studies assigned to it.
    pub report_usage: BTreeMap<String, usize>,
}

impl MatchTable {
    pub fn count(&self, status: MatchStatus) -> usize {
        self.outcomes.iter().filter(|o| o.status() == status).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("duplicate study_uid `{0}`")]
    DuplicateStudy(String),
    #[error("duplicate report_id `{0}`")]
    DuplicateReport(String),
}

fn satisfies(study: &StudyRecord, report: &ReportRecord, window: Duration) -> bool {
    report.patient_id == study.patient_id
        && (report.report_time - study.study_time).abs() <= window
        && report.check_in_time <= study.study_time
        && study.study_time <= report.check_out_time
}

fn sort_candidates(candidates: &mut [&ReportRecord]) {
    candidates.sort_by(|a, b| {
        a.report_time
            .cmp(&b.report_time)
            .then_with(|| a.report_id.cmp(&b.report_id))
    });
}

/// Every report linked to `study`, ordered by report time then report id.
pub fn match_candidates<'r>(
    study: &StudyRecord,
    reports: &'r [ReportRecord],
    window_hours: i64,
) -> Vec<&'r ReportRecord> {
    let window = Duration::hours(window_hours);
    let mut out: Vec<&ReportRecord> = reports
        .iter()
        .filter(|r| satisfies(study, r, window))
        .collect();
    sort_candidates(&mut out);
    out
}

/// Decide a study's outcome from its sorted candidates. `normalize` maps a
/// description to the form used for identity comparison.
pub fn resolve(
    study: &StudyRecord,
    candidates: &[&ReportRecord],
    normalize: impl Fn(&str) -> String,
) -> MatchOutcome {
    let study_uid = study.study_uid.clone();
    match candidates {
        [] => MatchOutcome::Unmatched { study_uid },
        [only] => MatchOutcome::Matched {
            study_uid,
            report_id: only.report_id.clone(),
        },
        [first, rest @ ..] => {
            let key = normalize(&first.description);
            if rest.iter().all(|r| normalize(&r.description) == key) {
                MatchOutcome::Matched {
                    study_uid,
                    report_id: first.report_id.clone(),
                }
            } else {
                MatchOutcome::Conflict {
                    study_uid,
                    candidate_ids: candidates.iter().map(|r| r.report_id.clone()).collect(),
                }
            }
        }
    }
}

/// Match every study against every report.
///
/// Reports are indexed by patient id; studies are matched in parallel and
/// the outcomes come back in study order.
pub fn match_all(
    studies: &[StudyRecord],
    reports: &[ReportRecord],
    window_hours: i64,
    normalize: impl Fn(&str) -> String + Sync,
) -> Result<MatchTable, MatchError> {
    let mut seen = HashSet::new();
    for s in studies {
        if !seen.insert(s.study_uid.as_str()) {
            return Err(MatchError::DuplicateStudy(s.study_uid.clone()));
        }
    }
    let mut by_patient: HashMap<&str, Vec<&ReportRecord>> = HashMap::new();
    let mut seen = HashSet::new();
    for r in reports {
        if !seen.insert(r.report_id.as_str()) {
            return Err(MatchError::DuplicateReport(r.report_id.clone()));
        }
        by_patient.entry(r.patient_id.as_str()).or_default().push(r);
    }

    let window = Duration::hours(window_hours);
    let outcomes: Vec<MatchOutcome> = studies
        .par_iter()
        .map(|study| {
            let mut candidates: Vec<&ReportRecord> = by_patient
                .get(study.patient_id.as_str())
                .map(|rs| rs.iter().copied().filter(|r| satisfies(study, r, window)).collect())
                .unwrap_or_default();
            sort_candidates(&mut candidates);
            resolve(study, &candidates, &normalize)
        })
        .collect();

    let mut report_usage = BTreeMap::new();
    for o in &outcomes {
        if let MatchOutcome::Matched { report_id, .. } = o {
            *report_usage.entry(report_id.clone()).or_insert(0) += 1;
        }
    }
    Ok(MatchTable {
        outcomes,
        report_usage,
    })
}
