//! Precision, recall, F-beta, rank-based ROC AUC, and fold aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("prediction/label length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no samples to evaluate")]
    Empty,
    #[error("AUC undefined: need at least one positive and one negative (got {pos} / {neg})")]
    SingleClass { pos: usize, neg: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("cannot aggregate reports of different strategies: `{0}` and `{1}`")]
    MixedStrategies(String, String),
    #[error("no reports to aggregate")]
    NoReports,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(preds: &[bool], labels: &[bool]) -> Result<ConfusionMatrix, MetricError> {
    if preds.len() != labels.len() {
        return Err(MetricError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 { 0.0 } else { num / den }
}

/// `(precision, recall, F_beta)`, with every 0/0 taken as 0.
pub fn prf(cm: &ConfusionMatrix, beta: f64) -> (f64, f64, f64) {
    let p = ratio(cm.tp as f64, (cm.tp + cm.fp) as f64);
    let r = ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64);
    let b2 = beta * beta;
    (p, r, ratio((1.0 + b2) * p * r, b2 * p + r))
}

/// Mann-Whitney AUC: the fraction of positive/negative pairs ranked
/// correctly, ties counting one half. Computed from mid-ranks in
/// O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass { pos: n_pos, neg: n_neg });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid_rank * pos_in_tie as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
    /// `None` when the fold's labels are single-class.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl FoldMetrics {
    /// Metrics from scores and labels; predictions use `score > threshold`.
    pub fn from_scores(fold: usize, scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self, MetricError> {
        let preds: Vec<bool> = scores.iter().map(|s| *s > threshold).collect();
        Self::compute(fold, scores, &preds, labels)
    }

    /// P/R/F from `preds`, AUC from `scores`; for pipelines whose decisions
    /// are not a plain threshold of the score.
    pub fn compute(fold: usize, scores: &[f64], preds: &[bool], labels: &[bool]) -> Result<Self, MetricError> {
        if scores.len() != preds.len() {
            return Err(MetricError::LengthMismatch(scores.len(), preds.len()));
        }
        let mut m = Self::from_predictions(fold, preds, labels)?;
        m.auc = match auc(scores, labels) {
            Ok(a) => Some(a),
            Err(MetricError::SingleClass { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(m)
    }

    /// Metrics from hard predictions; AUC uses the 0/1 predictions as scores.
    pub fn from_predictions(fold: usize, preds: &[bool], labels: &[bool]) -> Result<Self, MetricError> {
        let cm = confusion(preds, labels)?;
        let (precision, recall, f1) = prf(&cm, 1.0);
        let (_, _, f2) = prf(&cm, 2.0);
        let scores: Vec<f64> = preds.iter().map(|&p| p as u8 as f64).collect();
        let auc = auc(&scores, labels).ok();
        Ok(Self { fold, precision, recall, f1, f2, auc, confusion: cm })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
    /// Mean over the folds where AUC is defined.
    pub auc: Option<f64>,
}

/// Per-fold metrics for one strategy/head plus their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub head: String,
    /// Negative-set configuration the models were trained with (AN, EN, AN+EN).
    pub negatives: String,
    pub folds: Vec<FoldMetrics>,
    pub mean: MeanMetrics,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Arithmetic mean per metric across folds; the folds are kept.
pub fn aggregate_folds(
    strategy: &str,
    head: &str,
    negatives: &str,
    folds: Vec<FoldMetrics>,
) -> Result<MetricsReport, MetricError> {
    if folds.is_empty() {
        return Err(MetricError::NoReports);
    }
    let m = MeanMetrics {
        precision: mean(folds.iter().map(|f| f.precision)).unwrap_or(0.0),
        recall: mean(folds.iter().map(|f| f.recall)).unwrap_or(0.0),
        f1: mean(folds.iter().map(|f| f.f1)).unwrap_or(0.0),
        f2: mean(folds.iter().map(|f| f.f2)).unwrap_or(0.0),
        auc: mean(folds.iter().filter_map(|f| f.auc)),
    };
    Ok(MetricsReport {
        strategy: strategy.to_string(),
        head: head.to_string(),
        negatives: negatives.to_string(),
        folds,
        mean: m,
    })
}

/// Merges single-fold reports of one strategy/head into one report.
pub fn merge_reports(reports: Vec<MetricsReport>) -> Result<MetricsReport, MetricError> {
    let first = reports.first().ok_or(MetricError::NoReports)?;
    let (strategy, head, negatives) = (first.strategy.clone(), first.head.clone(), first.negatives.clone());
    for r in &reports {
        if r.strategy != strategy || r.head != head {
            return Err(MetricError::MixedStrategies(
                format!("{strategy}/{head}"),
                format!("{}/{}", r.strategy, r.head),
            ));
        }
    }
    let folds = reports.into_iter().flat_map(|r| r.folds).collect();
    aggregate_folds(&strategy, &head, &negatives, folds)
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// Aligned text table: one row per report, mean metrics as columns.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let header = ["strategy", "head", "negatives", "P", "R", "F1", "F2", "AUC"];
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.strategy.clone(),
                r.head.clone(),
                r.negatives.clone(),
                fmt3(r.mean.precision),
                fmt3(r.mean.recall),
                fmt3(r.mean.f1),
                fmt3(r.mean.f2),
                r.mean.auc.map_or_else(|| "-".to_string(), fmt3),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }
    out
}

/// CSV of per-fold values, one row per (report, fold).
pub fn folds_csv(reports: &[MetricsReport]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "head", "negatives", "fold", "precision", "recall", "f1", "f2", "auc", "tp", "fp", "fn", "tn"])?;
    for r in reports {
        for f in &r.folds {
            w.write_record([
                r.strategy.clone(),
                r.head.clone(),
                r.negatives.clone(),
                f.fold.to_string(),
                f.precision.to_string(),
                f.recall.to_string(),
                f.f1.to_string(),
                f.f2.to_string(),
                f.auc.map_or_else(String::new, |a| a.to_string()),
                f.confusion.tp.to_string(),
                f.confusion.fp.to_string(),
                f.confusion.fn_.to_string(),
                f.confusion.tn.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
