//! Review queue for flagged excerpts: an append-only JSONL journal, the
//! decision state machine, queue listing, and export of decisions as
//! labeled-set rows.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::consolidation::normalize_for_match;
use crate::digest::FieldHasher;
use crate::labeling::{LabelVector, LabeledRecord};
use crate::modeling::{ScoreVector, GENERAL_HEAD};
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("no review item `{0}`")]
    NotFound(String),
    #[error("item `{item_id}` is already {status:?}; resubmit with overwrite to replace the decision")]
    Conflict { item_id: String, status: ReviewStatus },
    #[error("invalid decision: {0}")]
    Validation(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("storage error on {path}: {source}")]
    Storage { path: String, source: io::Error },
    #[error("{path}:{line}: corrupt journal entry: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReviewStatus {
    Pending,
    Confirmed,
    Rejected,
    Amended,
}

impl std::str::FromStr for ReviewStatus {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PENDING" => Ok(ReviewStatus::Pending),
            "CONFIRMED" => Ok(ReviewStatus::Confirmed),
            "REJECTED" => Ok(ReviewStatus::Rejected),
            "AMENDED" => Ok(ReviewStatus::Amended),
            other => Err(ReviewError::BadRequest(format!("unknown status `{other}`"))),
        }
    }
}

/// General bit and subcategory bits as 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelBits {
    pub y: u8,
    pub z: [u8; NUM_SUBCATEGORIES],
}

impl LabelBits {
    pub fn from_bools(y: bool, z: [bool; NUM_SUBCATEGORIES]) -> Self {
        Self { y: y as u8, z: z.map(u8::from) }
    }

    pub fn negative() -> Self {
        Self { y: 0, z: [0; NUM_SUBCATEGORIES] }
    }

    /// Checks 0/1 values and the label invariants: `z_c <= y`, and a
    /// positive needs at least one subcategory.
    pub fn to_label(self) -> Result<LabelVector, ReviewError> {
        if self.y > 1 || self.z.iter().any(|b| *b > 1) {
            return Err(ReviewError::Validation("label bits must be 0 or 1".into()));
        }
        LabelVector::from_bits(self.y == 1, self.z.map(|b| b == 1)).map_err(|e| ReviewError::Validation(e.to_string()))
    }

    /// Checks a predicted vector: 0/1 values and `z_c <= y`. A general-only
    /// model predicts `y = 1` without subcategories, so that is allowed here.
    pub fn check_predicted(self) -> Result<(), ReviewError> {
        if self.y > 1 || self.z.iter().any(|b| *b > 1) {
            return Err(ReviewError::Validation("label bits must be 0 or 1".into()));
        }
        if self.z.iter().any(|b| *b > self.y) {
            return Err(ReviewError::Validation("a subcategory bit is set while y = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub excerpt_id: String,
    pub document_id: String,
    pub page: u32,
    pub text: String,
    pub scores: ScoreVector,
    pub predicted: LabelBits,
    #[serde(default)]
    pub matched_terms: Vec<String>,
    pub status: ReviewStatus,
    pub decision: Option<LabelBits>,
    pub reviewer_id: Option<String>,
    pub created_at: DateTime<Utc>,
    /// Insertion order, breaking ties between items created together.
    pub seq: u64,
    pub decided_at: Option<DateTime<Utc>>,
}

impl ReviewItem {
    /// Largest subcategory probability; falls back to the general head
    /// for scorers without subcategory heads.
    pub fn priority(&self) -> f64 {
        let subs: Vec<f64> = Subcategory::ALL.iter().filter_map(|c| self.scores.subcategory(*c)).collect();
        if subs.is_empty() {
            self.scores.get(GENERAL_HEAD).unwrap_or(0.0)
        } else {
            subs.into_iter().fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// A model output offered to the queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPrediction {
    pub excerpt_id: String,
    pub document_id: String,
    #[serde(default)]
    pub page: u32,
    pub text: String,
    pub scores: ScoreVector,
    pub predicted: LabelBits,
    #[serde(default)]
    pub matched_terms: Vec<String>,
}

/// Stable id derived from the dedup key.
pub fn item_id_for(document_id: &str, text: &str) -> String {
    let mut h = FieldHasher::new();
    h.field(document_id).field(normalize_for_match(text));
    h.finish()[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Decision {
    /// Accept the model's predicted bits.
    Confirmed,
    /// Not IUL.
    Rejected,
    /// Replace the predicted bits.
    Amended { label: LabelBits },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueSort {
    /// Priority descending, then creation time, then id.
    #[default]
    Score,
    /// Creation time ascending, then id.
    Created,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueQuery {
    pub status: Option<ReviewStatus>,
    /// Only items predicted positive for this subcategory.
    pub subcategory: Option<Subcategory>,
    pub sort: QueueSort,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
}

impl Default for QueueQuery {
    fn default() -> Self {
        Self { status: None, subcategory: None, sort: QueueSort::Score, page: 1, page_size: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<ReviewItem>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub pending: usize,
    pub decided: usize,
}

/// One line of the audit log; written for every decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub item_id: String,
    pub reviewer_id: String,
    pub at: DateTime<Utc>,
    pub previous_status: ReviewStatus,
    pub previous_decision: Option<LabelBits>,
    pub status: ReviewStatus,
    pub decision: LabelBits,
    pub overwrite: bool,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

struct Files {
    journal: Option<File>,
    audit: Option<File>,
}

/// Review storage. Every state change appends the item's full new state to
/// the journal, so replay keeps the last line per item.
pub struct ReviewStore {
    dir: Option<PathBuf>,
    audit_mode: bool,
    clock: Clock,
    items: RwLock<BTreeMap<String, ReviewItem>>,
    files: Mutex<Files>,
}

impl ReviewStore {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            audit_mode: false,
            clock: Arc::new(Utc::now),
            items: RwLock::new(BTreeMap::new()),
            files: Mutex::new(Files { journal: None, audit: None }),
        }
    }

    /// Opens or creates a store in `dir`, replaying its journal.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ReviewError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(storage(&dir))?;
        let journal_path = dir.join(JOURNAL_FILE);
        let mut items = BTreeMap::new();
        if journal_path.exists() {
            let reader = BufReader::new(File::open(&journal_path).map_err(storage(&journal_path))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(storage(&journal_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let item: ReviewItem = serde_json::from_str(&line).map_err(|e| ReviewError::Corrupt {
                    path: journal_path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                items.insert(item.item_id.clone(), item);
            }
        }
        let files = Files { journal: Some(append(&journal_path)?), audit: Some(append(&dir.join(AUDIT_FILE))?) };
        Ok(Self { dir: Some(dir), items: RwLock::new(items), files: Mutex::new(files), ..Self::in_memory() })
    }

    /// When on, every prediction is queued, not only flagged ones.
    pub fn with_audit_mode(mut self, on: bool) -> Self {
        self.audit_mode = on;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn audit_mode(&self) -> bool {
        self.audit_mode
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, item_id: &str) -> Option<ReviewItem> {
        self.read().get(item_id).cloned()
    }

    /// Queues predictions with `y = 1` (all of them in audit mode), skipping
    /// any whose document and normalized text are already queued. Returns
    /// the number inserted.
    pub fn enqueue_flagged(&self, predictions: &[FlaggedPrediction]) -> Result<usize, ReviewError> {
        for p in predictions {
            if p.text.trim().is_empty() {
                return Err(ReviewError::BadRequest(format!("prediction `{}` has empty text", p.excerpt_id)));
            }
            p.predicted.check_predicted().map_err(|e| ReviewError::BadRequest(format!("{}: {e}", p.excerpt_id)))?;
        }
        let mut files = self.lock_files();
        let mut items = self.items.write().unwrap_or_else(|e| e.into_inner());
        let now = (self.clock)();
        let mut fresh = Vec::new();
        for p in predictions {
            if !(self.audit_mode || p.predicted.y == 1) {
                continue;
            }
            let item_id = item_id_for(&p.document_id, &p.text);
            if items.contains_key(&item_id) || fresh.iter().any(|i: &ReviewItem| i.item_id == item_id) {
                continue;
            }
            fresh.push(ReviewItem {
                item_id,
                excerpt_id: p.excerpt_id.clone(),
                document_id: p.document_id.clone(),
                page: p.page,
                text: p.text.clone(),
                scores: p.scores.clone(),
                predicted: p.predicted,
                matched_terms: p.matched_terms.clone(),
                status: ReviewStatus::Pending,
                decision: None,
                reviewer_id: None,
                created_at: now,
                seq: (items.len() + fresh.len()) as u64,
                decided_at: None,
            });
        }
        self.write_lines(&mut files.journal, JOURNAL_FILE, &fresh)?;
        let n = fresh.len();
        for item in fresh {
            items.insert(item.item_id.clone(), item);
        }
        Ok(n)
    }

    pub fn list_queue(&self, query: &QueueQuery) -> Result<QueuePage, ReviewError> {
        if query.page == 0 {
            return Err(ReviewError::BadRequest("page numbers start at 1".into()));
        }
        if query.page_size == 0 || query.page_size > MAX_PAGE_SIZE {
            return Err(ReviewError::BadRequest(format!("page_size must be in 1..={MAX_PAGE_SIZE}")));
        }
        let items = self.read();
        let pending = items.values().filter(|i| i.status == ReviewStatus::Pending).count();
        let mut selected: Vec<&ReviewItem> = items
            .values()
            .filter(|i| query.status.is_none_or(|s| i.status == s))
            .filter(|i| query.subcategory.is_none_or(|c| i.predicted.z[c.index()] == 1))
            .collect();
        match query.sort {
            QueueSort::Score => selected.sort_by(|a, b| {
                b.priority()
                    .total_cmp(&a.priority())
                    .then(a.created_at.cmp(&b.created_at))
                    .then(a.seq.cmp(&b.seq))
                    .then_with(|| a.item_id.cmp(&b.item_id))
            }),
            QueueSort::Created => {
                selected.sort_by(|a, b| {
                a.created_at.cmp(&b.created_at).then(a.seq.cmp(&b.seq)).then_with(|| a.item_id.cmp(&b.item_id))
            })
            }
        }
        let total = selected.len();
        let start = (query.page - 1).saturating_mul(query.page_size);
        let page = selected.into_iter().skip(start).take(query.page_size).cloned().collect();
        Ok(QueuePage {
            items: page,
            total,
            page: query.page,
            page_size: query.page_size,
            pending,
            decided: items.len() - pending,
        })
    }

    pub fn submit_decision(
        &self,
        item_id: &str,
        decision: &Decision,
        reviewer_id: &str,
        overwrite: bool,
    ) -> Result<ReviewItem, ReviewError> {
        if reviewer_id.trim().is_empty() {
            return Err(ReviewError::BadRequest("reviewer_id is required".into()));
        }
        let mut files = self.lock_files();
        let mut items = self.items.write().unwrap_or_else(|e| e.into_inner());
        let current = items.get(item_id).ok_or_else(|| ReviewError::NotFound(item_id.to_string()))?;
        if current.status != ReviewStatus::Pending && !overwrite {
            return Err(ReviewError::Conflict { item_id: item_id.to_string(), status: current.status });
        }
        let (status, bits) = match decision {
            Decision::Confirmed => (ReviewStatus::Confirmed, current.predicted),
            Decision::Rejected => (ReviewStatus::Rejected, LabelBits::negative()),
            Decision::Amended { label } => (ReviewStatus::Amended, *label),
        };
        bits.to_label()?;
        let now = (self.clock)();
        let mut updated = current.clone();
        updated.status = status;
        updated.decision = Some(bits);
        updated.reviewer_id = Some(reviewer_id.to_string());
        updated.decided_at = Some(now);
        let audit = AuditEntry {
            item_id: item_id.to_string(),
            reviewer_id: reviewer_id.to_string(),
            at: now,
            previous_status: current.status,
            previous_decision: current.decision,
            status,
            decision: bits,
            overwrite: current.status != ReviewStatus::Pending,
        };
        self.write_lines(&mut files.journal, JOURNAL_FILE, std::slice::from_ref(&updated))?;
        self.write_lines(&mut files.audit, AUDIT_FILE, &[audit])?;
        items.insert(item_id.to_string(), updated.clone());
        Ok(updated)
    }

    /// Decided items as labeled-set rows, oldest decision first. A decided
    /// `y = 1` becomes a POSITIVE row and a decided `y = 0` an AN row.
    pub fn export_decisions(&self, since: Option<DateTime<Utc>>) -> Result<Vec<LabeledRecord>, ReviewError> {
        let items = self.read();
        let mut decided: Vec<&ReviewItem> = items
            .values()
            .filter(|i| i.status != ReviewStatus::Pending)
            .filter(|i| since.is_none_or(|t| i.decided_at.is_some_and(|d| d >= t)))
            .collect();
        decided.sort_by(|a, b| a.decided_at.cmp(&b.decided_at).then_with(|| a.item_id.cmp(&b.item_id)));
        decided
            .into_iter()
            .map(|item| {
                let bits = item.decision.ok_or_else(|| ReviewError::Validation(format!("{} has no decision", item.item_id)))?;
                let mut row = LabeledRecord::new(item.excerpt_id.clone(), item.text.clone(), bits.to_label()?);
                row.matched_terms = item.matched_terms.clone();
                Ok(row)
            })
            .collect()
    }

    /// Rewrites the journal with one line per item.
    pub fn compact(&self) -> Result<(), ReviewError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut files = self.lock_files();
        let items = self.read();
        let path = dir.join(JOURNAL_FILE);
        let tmp = dir.join(format!("{JOURNAL_FILE}.tmp"));
        let mut out = String::new();
        for item in items.values() {
            out.push_str(&serde_json::to_string(item).expect("serializable item"));
            out.push('\n');
        }
        std::fs::write(&tmp, out).map_err(storage(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(storage(&path))?;
        files.journal = Some(append(&path)?);
        Ok(())
    }

    pub fn audit_log(&self) -> Result<Vec<AuditEntry>, ReviewError> {
        let Some(dir) = &self.dir else { return Ok(Vec::new()) };
        let path = dir.join(AUDIT_FILE);
        crate::jsonl::read_jsonl(&path).map_err(|e| ReviewError::Corrupt {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, ReviewItem>> {
        self.items.read().unwrap_or_else(|e| e.into_inner())
    }

    fn lock_files(&self) -> std::sync::MutexGuard<'_, Files> {
        self.files.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn write_lines<T: Serialize>(&self, file: &mut Option<File>, name: &str, rows: &[T]) -> Result<(), ReviewError> {
        let Some(file) = file.as_mut() else { return Ok(()) };
        let mut buf = String::new();
        for row in rows {
            buf.push_str(&serde_json::to_string(row).expect("serializable row"));
            buf.push('\n');
        }
        let path = self.dir.as_ref().map(|d| d.join(name)).unwrap_or_default();
        file.write_all(buf.as_bytes()).and_then(|()| file.flush()).map_err(storage(&path))
    }
}

fn storage(path: &Path) -> impl Fn(io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Storage { path: path.display().to_string(), source }
}

fn append(path: &Path) -> Result<File, ReviewError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(storage(path))
}

/// Formats a timestamp the way the HTTP API and export filters expect.
pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modeling::subcategory_heads;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn ticking_clock() -> Clock {
        let t = Arc::new(AtomicI64::new(0));
        Arc::new(move || DateTime::from_timestamp(1_700_000_000 + t.fetch_add(1, Ordering::SeqCst), 0).unwrap())
    }

    fn pred(id: &str, text: &str, max: f64, y: bool) -> FlaggedPrediction {
        let mut probs = vec![0.1; 6];
        probs[1] = max;
        let z = if y { [false, true, false, false, false, false] } else { [false; 6] };
        FlaggedPrediction {
            excerpt_id: id.into(),
            document_id: "doc".into(),
            page: 1,
            text: text.into(),
            scores: ScoreVector::new(subcategory_heads(), probs).unwrap(),
            predicted: LabelBits::from_bools(y, z),
            matched_terms: vec!["female".into()],
        }
    }

    fn store() -> ReviewStore {
        ReviewStore::in_memory().with_clock(ticking_clock())
    }

    fn ten() -> Vec<FlaggedPrediction> {
        (0..10).map(|i| pred(&format!("e{i}"), &format!("text number {i}"), 0.5 + i as f64 / 40.0, i % 5 < 2)).collect()
    }

    #[test]
    fn only_flagged_are_queued_and_duplicates_skipped() {
        let s = store();
        assert_eq!(s.enqueue_flagged(&ten()).unwrap(), 4);
        assert_eq!(s.enqueue_flagged(&ten()).unwrap(), 0);
        let dup = pred("other-id", "  TEXT number 0 ", 0.9, true);
        assert_eq!(s.enqueue_flagged(&[dup]).unwrap(), 0);
    }

    #[test]
    fn general_only_predictions_are_accepted() {
        let s = store();
        let mut p = pred("g", "general only", 0.9, true);
        p.predicted = LabelBits { y: 1, z: [0; 6] };
        assert_eq!(s.enqueue_flagged(&[p.clone()]).unwrap(), 1);
        p.predicted = LabelBits { y: 0, z: [1, 0, 0, 0, 0, 0] };
        assert!(matches!(s.enqueue_flagged(&[p]), Err(ReviewError::BadRequest(_))));
    }

    #[test]
    fn audit_mode_queues_everything() {
        let s = store().with_audit_mode(true);
        assert_eq!(s.enqueue_flagged(&ten()).unwrap(), 10);
    }

    #[test]
    fn queue_order_and_filters() {
        let s = store();
        assert!(s.list_queue(&QueueQuery::default()).unwrap().items.is_empty());
        s.enqueue_flagged(&[pred("a", "first text here", 0.9, true), pred("b", "second text here", 0.6, true)])
            .unwrap();
        s.enqueue_flagged(&[pred("c", "third text here", 0.95, true)]).unwrap();
        let page = s.list_queue(&QueueQuery::default()).unwrap();
        let order: Vec<f64> = page.items.iter().map(|i| i.priority()).collect();
        assert_eq!(order, vec![0.95, 0.9, 0.6]);
        let by_date = s.list_queue(&QueueQuery { sort: QueueSort::Created, ..QueueQuery::default() }).unwrap();
        let ids: Vec<&str> = by_date.items.iter().map(|i| i.excerpt_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        s.submit_decision(&page.items[0].item_id, &Decision::Confirmed, "r1", false).unwrap();
        let pending = s.list_queue(&QueueQuery { status: Some(ReviewStatus::Pending), ..QueueQuery::default() }).unwrap();
        assert_eq!(pending.total, 2);
        let gender = s
            .list_queue(&QueueQuery { subcategory: Some(Subcategory::GenderMisuse), ..QueueQuery::default() })
            .unwrap();
        assert_eq!(gender.total, 0);
        let p2 = s.list_queue(&QueueQuery { page: 2, page_size: 2, ..QueueQuery::default() }).unwrap();
        assert_eq!(p2.items.len(), 1);
        assert_eq!(p2.items[0].excerpt_id, "b");
        assert!(matches!(s.list_queue(&QueueQuery { page: 0, ..QueueQuery::default() }), Err(ReviewError::BadRequest(_))));
        assert!(matches!(
            s.list_queue(&QueueQuery { page_size: 0, ..QueueQuery::default() }),
            Err(ReviewError::BadRequest(_))
        ));
    }

    #[test]
    fn decision_state_machine() {
        let s = store();
        s.enqueue_flagged(&[pred("a", "some text to review", 0.9, true)]).unwrap();
        let id = item_id_for("doc", "some text to review");
        let done = s.submit_decision(&id, &Decision::Confirmed, "r1", false).unwrap();
        assert_eq!(done.status, ReviewStatus::Confirmed);
        assert_eq!(done.decision, Some(done.predicted));
        assert!(done.decided_at.is_some());
        assert!(matches!(s.submit_decision(&id, &Decision::Rejected, "r2", false), Err(ReviewError::Conflict { .. })));
        let over = s.submit_decision(&id, &Decision::Rejected, "r2", true).unwrap();
        assert_eq!(over.status, ReviewStatus::Rejected);
        assert!(matches!(s.submit_decision("nope", &Decision::Rejected, "r", false), Err(ReviewError::NotFound(_))));
    }

    #[test]
    fn amendment_must_respect_dominance() {
        let s = store();
        s.enqueue_flagged(&[pred("a", "some text to review", 0.9, true)]).unwrap();
        let id = item_id_for("doc", "some text to review");
        let bad = Decision::Amended { label: LabelBits { y: 0, z: [0, 1, 0, 0, 0, 0] } };
        assert!(matches!(s.submit_decision(&id, &bad, "r", false), Err(ReviewError::Validation(_))));
        let empty = Decision::Amended { label: LabelBits { y: 1, z: [0; 6] } };
        assert!(matches!(s.submit_decision(&id, &empty, "r", false), Err(ReviewError::Validation(_))));
        assert_eq!(s.get(&id).unwrap().status, ReviewStatus::Pending);
        let ok = Decision::Amended { label: LabelBits { y: 1, z: [1, 1, 0, 0, 0, 0] } };
        assert_eq!(s.submit_decision(&id, &ok, "r", false).unwrap().status, ReviewStatus::Amended);
    }

    #[test]
    fn export_maps_decisions_to_sources() {
        let s = store();
        assert!(s.export_decisions(None).unwrap().is_empty());
        s.enqueue_flagged(&[pred("a", "first text here", 0.9, true), pred("b", "second text here", 0.6, true)])
            .unwrap();
        let page = s.list_queue(&QueueQuery::default()).unwrap();
        s.submit_decision(&page.items[0].item_id, &Decision::Confirmed, "r", false).unwrap();
        s.submit_decision(&page.items[1].item_id, &Decision::Rejected, "r", false).unwrap();
        let rows = s.export_decisions(None).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].source, crate::LabelSource::Positive);
        assert_eq!(rows[0].z, [0, 1, 0, 0, 0, 0]);
        assert_eq!(rows[1].source, crate::LabelSource::An);
        let cutoff = s.get(&page.items[1].item_id).unwrap().decided_at;
        assert_eq!(s.export_decisions(cutoff).unwrap().len(), 1);
    }

    #[test]
    fn journal_replay_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let id;
        {
            let s = ReviewStore::open(dir.path()).unwrap().with_clock(ticking_clock());
            s.enqueue_flagged(&[pred("a", "first text here", 0.9, true), pred("b", "second text here", 0.6, true)])
                .unwrap();
            id = item_id_for("doc", "first text here");
            s.submit_decision(&id, &Decision::Confirmed, "r", false).unwrap();
            s.submit_decision(&id, &Decision::Rejected, "r", true).unwrap();
        }
        let s = ReviewStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(&id).unwrap().status, ReviewStatus::Rejected);
        let audit = s.audit_log().unwrap();
        assert_eq!(audit.len(), 2);
        assert!(!audit[0].overwrite && audit[1].overwrite);
        assert_eq!(audit[1].previous_status, ReviewStatus::Confirmed);
        let before: Vec<ReviewItem> = s.list_queue(&QueueQuery::default()).unwrap().items;
        s.compact().unwrap();
        let lines = std::fs::read_to_string(dir.path().join(JOURNAL_FILE)).unwrap().lines().count();
        assert_eq!(lines, 2);
        let reopened = ReviewStore::open(dir.path()).unwrap();
        assert_eq!(reopened.list_queue(&QueueQuery::default()).unwrap().items, before);
    }
}
