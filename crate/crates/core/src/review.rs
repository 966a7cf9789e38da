//! Manual review queue.
//!
//! The queue lives in a newline-delimited JSON log. Each line is either an
//! `enqueue` record carrying a full pending item or a `resolve` record
//! carrying the decision, the annotator and the time. The in-memory view is
//! the fold of the log, so the audit trail never needs a second store.
//!
//! Item ids are a hash of `(kind, payload)`: enqueueing the same thing twice
//! yields the same id and one entry.
//!
//! A write is acknowledged only after the record line, including its
//! newline, has been flushed to disk. On open, bytes after the last newline
//! are the remains of an unacknowledged write and are cut off; any other
//! unreadable line is reported as [`StoreError::CorruptLog`].

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::labels::{Flags, LabelSource, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    ResidualDescription,
    MatchConflict,
    QcAudit,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::ResidualDescription => "residual_description",
            ItemKind::MatchConflict => "match_conflict",
            ItemKind::QcAudit => "qc_audit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Resolved,
}

impl std::str::FromStr for ItemStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(ItemStatus::Pending),
            "resolved" => Ok(ItemStatus::Resolved),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub report_id: String,
    pub report_time: DateTime<Utc>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Residual {
        study_uid: String,
        report_id: String,
        description: String,
        image_ref: String,
    },
    Conflict {
        study_uid: String,
        image_ref: String,
        candidates: Vec<CandidateReport>,
    },
    Audit {
        study_uid: String,
        description: String,
        labels: LabelVector,
        /// Seed of the sampling round; two rounds that draw the same study
        /// produce two items.
        round_seed: u64,
    },
}

impl Payload {
    pub fn kind(&self) -> ItemKind {
        match self {
            Payload::Residual { .. } => ItemKind::ResidualDescription,
            Payload::Conflict { .. } => ItemKind::MatchConflict,
            Payload::Audit { .. } => ItemKind::QcAudit,
        }
    }

    pub fn study_uid(&self) -> &str {
        match self {
            Payload::Residual { study_uid, .. }
            | Payload::Conflict { study_uid, .. }
            | Payload::Audit { study_uid, .. } => study_uid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditVerdict {
    Confirmed,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Resolution {
    Labels { labels: LabelVector },
    Match { report_id: String },
    Audit { verdict: AuditVerdict, labels: LabelVector },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub kind: ItemKind,
    pub payload: Payload,
    pub created_at: DateTime<Utc>,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_at: Option<DateTime<Utc>>,
}

impl ReviewItem {
    pub fn pending(payload: Payload, created_at: DateTime<Utc>) -> ReviewItem {
        ReviewItem {
            item_id: item_id(&payload),
            kind: payload.kind(),
            payload,
            created_at,
            status: ItemStatus::Pending,
            resolution: None,
            annotator: None,
            resolved_at: None,
        }
    }
}

/// Content hash of `(kind, payload)`, hex, 24 characters.
pub fn item_id(payload: &Payload) -> String {
    let mut h = Sha256::new();
    h.update(payload.kind().as_str().as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(payload).expect("payload serializes"));
    h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: write failed: {source}")]
    WriteFailed {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("no item `{0}`")]
    NotFound(String),
    #[error("item `{0}` is already resolved")]
    AlreadyResolved(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("item `{id}` is a {kind:?} item")]
    WrongKind { id: String, kind: ItemKind },
    #[error("`{0}` is not a candidate report of this item")]
    NotCandidate(String),
    #[error("only pending items can be enqueued")]
    NotPending,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogRecord {
    Enqueue {
        item: ReviewItem,
    },
    Resolve {
        item_id: String,
        resolution: Resolution,
        annotator: String,
        resolved_at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pending: usize,
    pub resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Page {
    pub items: Vec<ReviewItem>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug)]
pub struct QueueStore {
    log_path: PathBuf,
    file: File,
    len: u64,
    items: HashMap<String, ReviewItem>,
    /// Item ids in enqueue order.
    order: Vec<String>,
}

impl QueueStore {
    /// Open or create the log and replay it.
    pub fn open(path: impl AsRef<Path>) -> Result<QueueStore, StoreError> {
        let log_path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: log_path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;

        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            tracing::warn!(
                path = %log_path.display(),
                dropped = bytes.len() - complete,
                "truncating unacknowledged tail"
            );
            file.set_len(complete as u64).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;

        let mut store = QueueStore {
            log_path,
            file,
            len: complete as u64,
            items: HashMap::new(),
            order: Vec::new(),
        };
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let replayed = serde_json::from_slice::<LogRecord>(line)
                .map_err(|e| e.to_string())
                .and_then(|record| store.apply(record));
            if let Err(message) = replayed {
                return Err(StoreError::CorruptLog {
                    path: store.log_path.clone(),
                    line: i + 1,
                    message,
                });
            }
        }
        Ok(store)
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    fn apply(&mut self, record: LogRecord) -> Result<(), String> {
        match record {
            LogRecord::Enqueue { item } => {
                if item.status != ItemStatus::Pending || item.resolution.is_some() {
                    return Err(format!("enqueued item `{}` is not pending", item.item_id));
                }
                if item.item_id != item_id(&item.payload) || item.kind != item.payload.kind() {
                    return Err(format!("item `{}` does not match its payload", item.item_id));
                }
                if !self.items.contains_key(&item.item_id) {
                    self.order.push(item.item_id.clone());
                    self.items.insert(item.item_id.clone(), item);
                }
            }
            LogRecord::Resolve {
                item_id,
                resolution,
                annotator,
                resolved_at,
            } => {
                let item = self
                    .items
                    .get_mut(&item_id)
                    .ok_or_else(|| format!("resolve of unknown item `{item_id}`"))?;
                if item.status == ItemStatus::Resolved {
                    return Err(format!("item `{item_id}` resolved twice"));
                }
                item.status = ItemStatus::Resolved;
                item.resolution = Some(resolution);
                item.annotator = Some(annotator);
                item.resolved_at = Some(resolved_at);
            }
        }
        Ok(())
    }

    fn append(&mut self, record: &LogRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        let written = self
            .file
            .write_all(&line)
            .and_then(|()| self.file.sync_data());
        if let Err(source) = written {
            // Leave no half record behind for later appends to land after.
            let _ = self.file.set_len(self.len);
            return Err(StoreError::WriteFailed {
                path: self.log_path.clone(),
                source,
            });
        }
        self.len += line.len() as u64;
        Ok(())
    }

    /// Add a pending item; returns its id. A second enqueue of the same
    /// `(kind, payload)` is a no-op.
    pub fn enqueue(&mut self, item: ReviewItem) -> Result<String, ReviewError> {
        if item.status != ItemStatus::Pending || item.resolution.is_some() {
            return Err(ReviewError::NotPending);
        }
        let mut item = item;
        item.item_id = item_id(&item.payload);
        item.kind = item.payload.kind();
        if self.items.contains_key(&item.item_id) {
            return Ok(item.item_id);
        }
        let record = LogRecord::Enqueue { item };
        self.append(&record)?;
        let LogRecord::Enqueue { item } = record else { unreachable!() };
        let id = item.item_id.clone();
        self.apply(LogRecord::Enqueue { item }).expect("fresh pending item applies");
        Ok(id)
    }

    fn pending(&self, id: &str) -> Result<&ReviewItem, ReviewError> {
        let item = self.items.get(id).ok_or_else(|| ReviewError::NotFound(id.to_owned()))?;
        if item.status == ItemStatus::Resolved {
            return Err(ReviewError::AlreadyResolved(id.to_owned()));
        }
        Ok(item)
    }

    fn resolve(
        &mut self,
        id: &str,
        resolution: Resolution,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<ReviewItem, ReviewError> {
        let annotator = annotator.trim();
        if annotator.is_empty() {
            return Err(ReviewError::InvariantViolation("annotator must not be empty".into()));
        }
        let record = LogRecord::Resolve {
            item_id: id.to_owned(),
            resolution,
            annotator: annotator.to_owned(),
            resolved_at: at,
        };
        self.append(&record)?;
        self.apply(record).expect("pending item resolves");
        Ok(self.items[id].clone())
    }

    /// Record a human label decision for a residual or QC item.
    pub fn submit_labels(
        &mut self,
        id: &str,
        flags: Flags,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<ReviewItem, ReviewError> {
        let item = self.pending(id)?;
        if !flags.is_consistent() {
            return Err(ReviewError::InvariantViolation(
                "abnormal must be 1 when any location is 1".into(),
            ));
        }
        let labels = LabelVector::new(flags, LabelSource::Manual);
        let resolution = match &item.payload {
            Payload::Residual { .. } => Resolution::Labels { labels },
            Payload::Audit { labels: auto, .. } => Resolution::Audit {
                verdict: if auto.flags() == flags {
                    AuditVerdict::Confirmed
                } else {
                    AuditVerdict::Corrected
                },
                labels,
            },
            Payload::Conflict { .. } => {
                return Err(ReviewError::WrongKind {
                    id: id.to_owned(),
                    kind: item.kind,
                })
            }
        };
        self.resolve(id, resolution, annotator, at)
    }

    /// Pick the correct report for a conflict item.
    pub fn submit_match(
        &mut self,
        id: &str,
        report_id: &str,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<ReviewItem, ReviewError> {
        let item = self.pending(id)?;
        let Payload::Conflict { candidates, .. } = &item.payload else {
            return Err(ReviewError::WrongKind {
                id: id.to_owned(),
                kind: item.kind,
            });
        };
        if !candidates.iter().any(|c| c.report_id == report_id) {
            return Err(ReviewError::NotCandidate(report_id.to_owned()));
        }
        let resolution = Resolution::Match {
            report_id: report_id.to_owned(),
        };
        self.resolve(id, resolution, annotator, at)
    }

    pub fn get(&self, id: &str) -> Option<&ReviewItem> {
        self.items.get(id)
    }

    /// Items in enqueue order.
    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.order.iter().map(|id| &self.items[id])
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn stats(&self) -> QueueStats {
        let resolved = self
            .items
            .values()
            .filter(|i| i.status == ItemStatus::Resolved)
            .count();
        QueueStats {
            pending: self.items.len() - resolved,
            resolved,
        }
    }

    /// Newest first; `page` counts from 1. `page_size` is clamped to
    /// `1..=MAX_PAGE_SIZE`.
    pub fn list(&self, status: Option<ItemStatus>, page: usize, page_size: usize) -> Page {
        let page = page.max(1);
        let page_size = page_size.clamp(1, MAX_PAGE_SIZE);
        let mut matching: Vec<(usize, &ReviewItem)> = self
            .items()
            .enumerate()
            .filter(|(_, i)| status.map_or(true, |s| i.status == s))
            .collect();
        matching.sort_by(|a, b| b.1.created_at.cmp(&a.1.created_at).then(b.0.cmp(&a.0)));
        let total = matching.len();
        let items = matching
            .into_iter()
            .skip((page - 1).saturating_mul(page_size))
            .take(page_size)
            .map(|(_, i)| i.clone())
            .collect();
        Page {
            items,
            total,
            page,
            page_size,
        }
    }
}

/// One automatically labeled study offered to the QC sampler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QcCandidate {
    pub study_uid: String,
    pub labels: LabelVector,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QcError {
    #[error("nothing to sample from")]
    EmptyInput,
    #[error("rate {0} must lie in (0, 1]")]
    BadRate(f64),
}

/// `⌈rate·n⌉` of the labeled studies, drawn uniformly without replacement.
///
/// The draw works on the study_uid order, so membership depends only on the
/// set of inputs and the seed. Items come back in study_uid order.
pub fn qc_sample(
    labeled: &[QcCandidate],
    rate: f64,
    seed: u64,
    created_at: DateTime<Utc>,
) -> Result<Vec<ReviewItem>, QcError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(QcError::BadRate(rate));
    }
    if labeled.is_empty() {
        return Err(QcError::EmptyInput);
    }
    let n = labeled.len();
    let mut sorted: Vec<&QcCandidate> = labeled.iter().collect();
    sorted.sort_by(|a, b| a.study_uid.cmp(&b.study_uid));
    // Same epsilon idea as the split size: 0.05 · 100 must stay 5.
    let k = ((rate * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| {
            let c = sorted[i];
            ReviewItem::pending(
                Payload::Audit {
                    study_uid: c.study_uid.clone(),
                    description: c.description.clone(),
                    labels: c.labels.clone(),
                    round_seed: seed,
                },
                created_at,
            )
        })
        .collect())
}

/// Manual decisions pulled out of the log, ready to overlay on the
/// automatic labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManualOverlay {
    /// `(study_uid, flags)` from residual items and corrected QC audits.
    pub labels: Vec<(String, Flags)>,
    /// `(study_uid, report_id)` from resolved conflicts.
    pub matches: Vec<(String, String)>,
}

/// Collect resolved decisions in resolution order. A later decision for the
/// same study replaces an earlier one.
pub fn manual_overlay(store: &QueueStore) -> ManualOverlay {
    let mut labels: Vec<(String, Flags)> = Vec::new();
    let mut matches: Vec<(String, String)> = Vec::new();
    let mut resolved: Vec<&ReviewItem> = store
        .items()
        .filter(|i| i.status == ItemStatus::Resolved)
        .collect();
    resolved.sort_by_key(|i| i.resolved_at);
    for item in resolved {
        let uid = item.payload.study_uid().to_owned();
        match item.resolution.as_ref() {
            Some(Resolution::Labels { labels: lv })
            | Some(Resolution::Audit {
                verdict: AuditVerdict::Corrected,
                labels: lv,
            }) => {
                labels.retain(|(u, _)| *u != uid);
                labels.push((uid, lv.flags()));
            }
            Some(Resolution::Match { report_id }) => {
                matches.retain(|(u, _)| *u != uid);
                matches.push((uid, report_id.clone()));
            }
            _ => {}
        }
    }
    labels.sort();
    matches.sort();
    ManualOverlay { labels, matches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::LabelClass;

    fn at(min: u32) -> DateTime<Utc> {
        format!("2021-03-01T08:{min:02}:00Z").parse().unwrap()
    }

    fn residual(d: &str) -> ReviewItem {
        ReviewItem::pending(
            Payload::Residual {
                study_uid: format!("uid-{d}"),
                report_id: "r".into(),
                description: d.into(),
                image_ref: String::new(),
            },
            at(0),
        )
    }

    fn conflict() -> ReviewItem {
        let c = |id: &str, m| CandidateReport {
            report_id: id.into(),
            report_time: at(m),
            description: id.into(),
        };
        ReviewItem::pending(
            Payload::Conflict {
                study_uid: "s".into(),
                image_ref: String::new(),
                candidates: vec![c("a", 1), c("b", 2)],
            },
            at(1),
        )
    }

    #[test]
    fn enqueue_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = QueueStore::open(dir.path().join("q.jsonl")).unwrap();
        let a = s.enqueue(residual("mờ")).unwrap();
        let mut again = residual("mờ");
        again.created_at = at(5);
        assert_eq!(s.enqueue(again).unwrap(), a);
        assert_eq!(s.stats(), QueueStats { pending: 1, resolved: 0 });
        assert_eq!(s.list(Some(ItemStatus::Pending), 1, 50).items[0].item_id, a);
        let lines = std::fs::read_to_string(s.log_path()).unwrap().lines().count();
        assert_eq!(lines, 1);
    }

    #[test]
    fn submit_label_rules() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = QueueStore::open(dir.path().join("q.jsonl")).unwrap();
        let id = s.enqueue(residual("x")).unwrap();
        assert!(matches!(
            s.submit_labels(&id, Flags::from_bits([1, 0, 0, 0, 0]), "bs", at(2)),
            Err(ReviewError::InvariantViolation(_))
        ));
        let item = s.submit_labels(&id, Flags::from_bits([0, 0, 1, 0, 1]), "bs", at(2)).unwrap();
        assert_eq!(item.status, ItemStatus::Resolved);
        let Some(Resolution::Labels { labels }) = &item.resolution else { panic!() };
        assert_eq!(labels.source, LabelSource::Manual);
        assert!(labels.get(LabelClass::Parenchyma));
        assert!(matches!(
            s.submit_labels(&id, Flags::NORMAL, "bs", at(3)),
            Err(ReviewError::AlreadyResolved(_))
        ));
        assert!(matches!(
            s.submit_labels("nope", Flags::NORMAL, "bs", at(3)),
            Err(ReviewError::NotFound(_))
        ));
    }

    #[test]
    fn conflict_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = QueueStore::open(dir.path().join("q.jsonl")).unwrap();
        let id = s.enqueue(conflict()).unwrap();
        assert!(matches!(
            s.submit_labels(&id, Flags::NORMAL, "bs", at(2)),
            Err(ReviewError::WrongKind { .. })
        ));
        assert!(matches!(s.submit_match(&id, "zz", "bs", at(2)), Err(ReviewError::NotCandidate(_))));
        s.submit_match(&id, "b", "bs", at(2)).unwrap();
        let overlay = manual_overlay(&s);
        assert_eq!(overlay.matches, vec![("s".to_owned(), "b".to_owned())]);
    }

    #[test]
    fn replay_restores_state_and_audit_trail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        let mut s = QueueStore::open(&path).unwrap();
        let id = s.enqueue(residual("x")).unwrap();
        s.enqueue(conflict()).unwrap();
        s.submit_labels(&id, Flags::from_bits([0, 1, 0, 0, 1]), "dr. an", at(9)).unwrap();
        let before: Vec<ReviewItem> = s.items().cloned().collect();
        drop(s);
        let s = QueueStore::open(&path).unwrap();
        assert_eq!(s.items().cloned().collect::<Vec<_>>(), before);
        let item = s.get(&id).unwrap();
        assert_eq!(item.annotator.as_deref(), Some("dr. an"));
        assert_eq!(item.resolved_at, Some(at(9)));
    }

    #[test]
    fn torn_tail_is_dropped_and_corrupt_middle_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        let mut s = QueueStore::open(&path).unwrap();
        s.enqueue(residual("a")).unwrap();
        s.enqueue(residual("b")).unwrap();
        drop(s);
        let good = std::fs::read(&path).unwrap();

        let mut torn = good.clone();
        torn.extend_from_slice(br#"{"event":"enqu"#);
        std::fs::write(&path, &torn).unwrap();
        let s = QueueStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(std::fs::read(&path).unwrap(), good);
        drop(s);

        let mut bad = b"{not json}\n".to_vec();
        bad.extend_from_slice(&good);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(QueueStore::open(&path), Err(StoreError::CorruptLog { line: 1, .. })));
    }

    #[test]
    fn paging_is_newest_first() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = QueueStore::open(dir.path().join("q.jsonl")).unwrap();
        for m in 0..5 {
            let mut item = residual(&m.to_string());
            item.created_at = at(m);
            s.enqueue(item).unwrap();
        }
        let p1 = s.list(None, 1, 2);
        assert_eq!(p1.total, 5);
        let uids: Vec<&str> = p1.items.iter().map(|i| i.payload.study_uid()).collect();
        assert_eq!(uids, ["uid-4", "uid-3"]);
        assert_eq!(s.list(None, 3, 2).items.len(), 1);
        assert!(s.list(None, 4, 2).items.is_empty());
    }

    fn candidates(n: usize) -> Vec<QcCandidate> {
        (0..n)
            .map(|i| QcCandidate {
                study_uid: format!("s{i:04}"),
                labels: LabelVector::normal(),
                description: "tim phổi bình thường".into(),
            })
            .collect()
    }

    #[test]
    fn qc_sample_sizes() {
        assert_eq!(qc_sample(&candidates(100), 0.05, 1, at(0)).unwrap().len(), 5);
        assert_eq!(qc_sample(&candidates(101), 0.05, 1, at(0)).unwrap().len(), 6);
        assert_eq!(qc_sample(&[], 0.05, 1, at(0)), Err(QcError::EmptyInput));
        assert_eq!(qc_sample(&candidates(3), 0.0, 1, at(0)), Err(QcError::BadRate(0.0)));
        let all = qc_sample(&candidates(7), 1.0, 1, at(0)).unwrap();
        assert!(all.iter().all(|i| i.kind == ItemKind::QcAudit));
        let mut rev = candidates(7);
        rev.reverse();
        assert_eq!(qc_sample(&rev, 1.0, 1, at(0)).unwrap(), all);
    }

    #[test]
    fn qc_sample_is_seeded() {
        let c = candidates(1000);
        let uids = |seed| -> Vec<String> {
            qc_sample(&c, 0.05, seed, at(0))
                .unwrap()
                .into_iter()
                .map(|i| i.payload.study_uid().to_owned())
                .collect()
        };
        assert_eq!(uids(3), uids(3));
        assert_ne!(uids(3), uids(4));
        let mut shuffled = c.clone();
        shuffled.rotate_left(17);
        let again: Vec<String> = qc_sample(&shuffled, 0.05, 3, at(0))
            .unwrap()
            .into_iter()
            .map(|i| i.payload.study_uid().to_owned())
            .collect();
        assert_eq!(again, uids(3));
    }

    #[test]
    fn audit_verdicts_feed_overlay() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = QueueStore::open(dir.path().join("q.jsonl")).unwrap();
        let items = qc_sample(&candidates(2), 1.0, 9, at(0)).unwrap();
        let ids: Vec<String> = items.into_iter().map(|i| s.enqueue(i).unwrap()).collect();
        let a = s.submit_labels(&ids[0], Flags::NORMAL, "bs", at(1)).unwrap();
        assert!(matches!(a.resolution, Some(Resolution::Audit { verdict: AuditVerdict::Confirmed, .. })));
        let fixed = Flags::from_bits([0, 0, 0, 1, 1]);
        s.submit_labels(&ids[1], fixed, "bs", at(2)).unwrap();
        assert_eq!(manual_overlay(&s).labels, vec![("s0001".to_owned(), fixed)]);
    }
}
