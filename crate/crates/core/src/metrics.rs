//! Extraction quality against hand-annotated ground truth: object-set F1,
//! interval overlap scores and order-preserving step alignment.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::TutorialDocument;
use crate::linker::normalize_term;
use crate::Interval;

pub const DEFAULT_MIN_TIOU: f64 = 0.1;
/// Interval assigned to a ground-truth step that has no predicted match.
pub const MISSED_STEP: Interval = Interval::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction is for video {pred:?} but ground truth is for {gt:?}")]
    VideoIdMismatch { pred: String, gt: String },
    #[error("no rows to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthStep {
    pub description: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Annotation file for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub objects: Vec<String>,
    pub steps: Vec<GroundTruthStep>,
}

impl GroundTruth {
    pub fn object_set(&self) -> BTreeSet<String> {
        normalized_set(self.objects.iter().map(String::as_str))
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.steps.iter().map(|s| Interval::new(s.start_s, s.end_s)).collect()
    }
}

fn normalized_set<'a>(names: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
    names.filter_map(|n| normalize_term(n).ok()).collect()
}

/// `2|ours ∩ gt| / (|ours| + |gt|)`; two empty sets score 1.
pub fn object_f1(ours: &BTreeSet<String>, gt: &BTreeSet<String>) -> f64 {
    if ours.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let common = ours.intersection(gt).count();
    2.0 * common as f64 / (ours.len() + gt.len()) as f64
}

pub fn interval_overlap(a: Interval, b: Interval) -> f64 {
    (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0)
}

/// Temporal intersection over union.
pub fn tiou(a: Interval, b: Interval) -> f64 {
    let overlap = interval_overlap(a, b);
    let union = a.len() + b.len() - overlap;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    overlap / union
}

/// `2 * overlap / (|pred| + |gt|)`, the interval analogue of set F1.
pub fn temporal_f1(pred: Interval, gt: Interval) -> f64 {
    let total = pred.len() + gt.len();
    if total <= 0.0 {
        return if pred == gt { 1.0 } else { 0.0 };
    }
    2.0 * interval_overlap(pred, gt) / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(pred index, gt index)` pairs, increasing in both.
    pub matching: Vec<(usize, usize)>,
    pub false_neg: usize,
    pub false_pos: usize,
    pub total_tiou: f64,
}

const SCORE_EPS: f64 = 1e-12;

/// Lexicographic objective: total tIoU first, then number of matched pairs.
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 + SCORE_EPS || ((a.0 - b.0).abs() <= SCORE_EPS && a.1 > b.1)
}

/// Order-preserving matching of predicted to ground-truth intervals that
/// maximizes total tIoU, by dynamic programming over both sequences. Pairs
/// under `min_tiou` are never matched.
pub fn align_steps(pred: &[Interval], gt: &[Interval], min_tiou: f64) -> Alignment {
    let (n, m) = (pred.len(), gt.len());
    // best[i][j]: optimum over pred[..i] and gt[..j]
    let mut best = vec![vec![(0.0_f64, 0_usize); m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let mut cell = best[i - 1][j];
            if better(best[i][j - 1], cell) {
                cell = best[i][j - 1];
            }
            let w = tiou(pred[i - 1], gt[j - 1]);
            if w >= min_tiou && w > 0.0 {
                let (s, c) = best[i - 1][j - 1];
                let take = (s + w, c + 1);
                if better(take, cell) {
                    cell = take;
                }
            }
            best[i][j] = cell;
        }
    }

    let mut matching = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let here = best[i][j];
        if here == best[i - 1][j] {
            i -= 1;
        } else if here == best[i][j - 1] {
            j -= 1;
        } else {
            matching.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        }
    }
    matching.reverse();
    Alignment {
        false_neg: m - matching.len(),
        false_pos: n - matching.len(),
        total_tiou: best[n][m].0,
        matching,
    }
}

/// One video's scores, in the column order of the evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub video_id: String,
    pub ours_obj_count: usize,
    pub gt_obj_count: usize,
    pub obj_false_neg: usize,
    pub obj_false_pos: usize,
    pub obj_f1: f64,
    pub ours_step_count: usize,
    pub gt_step_count: usize,
    pub step_false_neg: usize,
    pub step_false_pos: usize,
    pub step_avg_f1: f64,
}

/// Mean temporal F1 over ground-truth steps, scoring unmatched ones against
/// the missed-step interval. No ground-truth steps scores 1 only when
/// nothing was predicted either.
pub fn step_average_f1(pred: &[Interval], gt: &[Interval], alignment: &Alignment) -> f64 {
    if gt.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    let total: f64 = gt
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let p = alignment
                .matching
                .iter()
                .find(|(_, gj)| *gj == j)
                .map(|(pi, _)| pred[*pi])
                .unwrap_or(MISSED_STEP);
            temporal_f1(p, *g)
        })
        .sum();
    total / gt.len() as f64
}

pub fn evaluate_video(doc: &TutorialDocument, gt: &GroundTruth, min_tiou: f64) -> Result<EvalRow, MetricsError> {
    if doc.video_id != gt.video_id {
        return Err(MetricsError::VideoIdMismatch {
            pred: doc.video_id.clone(),
            gt: gt.video_id.clone(),
        });
    }
    let ours = normalized_set(doc.objects.iter().map(|o| o.name.as_str()));
    let truth = gt.object_set();
    let pred: Vec<Interval> = doc.steps.iter().map(|s| s.draft.interval()).collect();
    let gt_steps = gt.intervals();
    let alignment = align_steps(&pred, &gt_steps, min_tiou);
    Ok(EvalRow {
        video_id: gt.video_id.clone(),
        ours_obj_count: ours.len(),
        gt_obj_count: truth.len(),
        obj_false_neg: truth.difference(&ours).count(),
        obj_false_pos: ours.difference(&truth).count(),
        obj_f1: object_f1(&ours, &truth),
        ours_step_count: pred.len(),
        gt_step_count: gt_steps.len(),
        step_false_neg: alignment.false_neg,
        step_false_pos: alignment.false_pos,
        step_avg_f1: step_average_f1(&pred, &gt_steps, &alignment),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_obj_f1: f64,
    pub mean_step_avg_f1: f64,
    pub mean_obj_false_neg: f64,
    pub mean_obj_false_pos: f64,
    pub mean_step_false_neg: f64,
    pub mean_step_false_pos: f64,
}

/// Unweighted means over videos.
pub fn aggregate(rows: &[EvalRow]) -> Result<EvalReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Ok(EvalReport {
        mean_obj_f1: mean(&|r| r.obj_f1),
        mean_step_avg_f1: mean(&|r| r.step_avg_f1),
        mean_obj_false_neg: mean(&|r| r.obj_false_neg as f64),
        mean_obj_false_pos: mean(&|r| r.obj_false_pos as f64),
        mean_step_false_neg: mean(&|r| r.step_false_neg as f64),
        mean_step_false_pos: mean(&|r| r.step_false_pos as f64),
        rows: rows.to_vec(),
    })
}

pub const TABLE_HEADERS: [&str; 11] = [
    "Video ID",
    "Ours # Obj.",
    "GT # Obj.",
    "False Neg.",
    "False Pos.",
    "F1",
    "Ours # Steps",
    "GT # Steps",
    "# False Neg.",
    "False Pos.",
    "Avg. F1",
];

fn table_cells(row: &EvalRow) -> [String; 11] {
    [
        row.video_id.clone(),
        row.ours_obj_count.to_string(),
        row.gt_obj_count.to_string(),
        row.obj_false_neg.to_string(),
        row.obj_false_pos.to_string(),
        format!("{:.2}", row.obj_f1),
        row.ours_step_count.to_string(),
        row.gt_step_count.to_string(),
        row.step_false_neg.to_string(),
        row.step_false_pos.to_string(),
        format!("{:.2}", row.step_avg_f1),
    ]
}

/// Aligned plain-text table: header, one line per row, and an optional
/// trailing line of means.
pub fn render_table(rows: &[EvalRow], report: Option<&EvalReport>) -> String {
    let mut lines: Vec<[String; 11]> = vec![TABLE_HEADERS.map(str::to_string)];
    lines.extend(rows.iter().map(table_cells));
    if let Some(r) = report {
        lines.push([
            "mean".to_string(),
            String::new(),
            String::new(),
            format!("{:.2}", r.mean_obj_false_neg),
            format!("{:.2}", r.mean_obj_false_pos),
            format!("{:.2}", r.mean_obj_f1),
            String::new(),
            String::new(),
            format!("{:.2}", r.mean_step_false_neg),
            format!("{:.2}", r.mean_step_false_pos),
            format!("{:.2}", r.mean_step_avg_f1),
        ]);
    }
    let widths: Vec<usize> = (0..11)
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
