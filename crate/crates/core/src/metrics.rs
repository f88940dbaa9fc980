//! The evaluation protocol: threshold-gated matching of detections to
//! ground truth, "not detected" accounting, the K×K confusion matrix, and
//! accuracy / precision / recall / F1 / average-IoU reporting.
//!
//! A deliberate quirk, kept faithful to the protocol this reproduces:
//! images whose detections all fail the score/IoU gates are counted as
//! *not detected* and excluded from the confusion matrix and from every
//! rate metric. Adding such an image changes only the `not_detected`
//! count. When no image matches at all, the rates are undefined and render
//! as dashes.

use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::postprocess::{iou, Detection};

/// The two evaluation gates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalThresholds {
    pub score_min: f64,
    pub iou_min: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        EvalThresholds { score_min: 0.7, iou_min: 0.5 }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("score_min", self.score_min), ("iou_min", self.iou_min)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Data(format!("{name} must be in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Outcome of evaluating one image against its single ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatchResult {
    Matched { pred_class: usize, iou: f64 },
    NotDetected,
}

/// Match one image: among detections passing the score gate, pick the
/// highest-score one whose IoU with the truth passes the IoU gate (both
/// gates inclusive). Score ties prefer higher IoU, then input order.
pub fn match_image(dets: &[Detection], truth: &GroundTruth, th: &EvalThresholds) -> MatchResult {
    let mut best: Option<(f64, f64, usize)> = None; // (score, iou, class)
    for d in dets {
        if d.score < th.score_min {
            continue;
        }
        let overlap = iou(&d.bbox, &truth.bbox);
        if overlap < th.iou_min {
            continue;
        }
        let better = match best {
            None => true,
            Some((bs, bi, _)) => d.score > bs || (d.score == bs && overlap > bi),
        };
        if better {
            best = Some((d.score, overlap, d.class_id));
        }
    }
    match best {
        Some((_, iou, pred_class)) => MatchResult::Matched { pred_class, iou },
        None => MatchResult::NotDetected,
    }
}

/// Row-major K×K counts; rows are ground-truth classes, columns predicted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; k]; k] }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Fold per-image match results into the confusion matrix, the mean IoU of
/// matched images, and the not-detected count.
pub fn accumulate(
    results: &[MatchResult],
    truths: &[GroundTruth],
    n_classes: usize,
) -> Result<(ConfusionMatrix, Option<f64>, usize)> {
    if results.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} match results for {} truths",
            results.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    let mut iou_sum = 0.0;
    let mut matched = 0u64;
    let mut not_detected = 0usize;
    for (res, truth) in results.iter().zip(truths) {
        match res {
            MatchResult::Matched { pred_class, iou } => {
                cm.counts[truth.class_id][*pred_class] += 1;
                iou_sum += iou;
                matched += 1;
            }
            MatchResult::NotDetected => not_detected += 1,
        }
    }
    let average_iou = (matched > 0).then(|| iou_sum / matched as f64);
    Ok((cm, average_iou, not_detected))
}

/// Macro averages each class equally; micro pools all counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    Macro,
    Micro,
}

/// The four rate metrics over matched images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Accuracy, precision, recall, and F1 from a confusion matrix.
///
/// Accuracy is trace/total. Per-class precision divides the diagonal by
/// the column sum (0 when the class was never predicted), recall by the
/// row sum. Macro averaging runs over classes that actually appear
/// (row sum > 0), unweighted.
pub fn compute_metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<RateMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::NoMatchedImages);
    }
    let accuracy = cm.trace() as f64 / total as f64;
    match averaging {
        Averaging::Macro => {
            let mut p_sum = 0.0;
            let mut r_sum = 0.0;
            let mut f_sum = 0.0;
            let mut present = 0usize;
            for k in 0..cm.k() {
                let rows = cm.row_sum(k);
                if rows == 0 {
                    continue;
                }
                present += 1;
                let cols = cm.col_sum(k);
                let tp = cm.counts[k][k] as f64;
                let p = if cols == 0 { 0.0 } else { tp / cols as f64 };
                let r = tp / rows as f64;
                p_sum += p;
                r_sum += r;
                f_sum += f1_of(p, r);
            }
            // total > 0 guarantees at least one row is populated
            let n = present as f64;
            Ok(RateMetrics {
                accuracy,
                precision: p_sum / n,
                recall: r_sum / n,
                f1: f_sum / n,
            })
        }
        Averaging::Micro => {
            // Single-label classification: pooled TP = trace and every
            // miss is both a false positive and a false negative, so
            // micro precision/recall/F1 all equal accuracy.
            let tp: u64 = cm.trace();
            let p = tp as f64 / total as f64;
            Ok(RateMetrics { accuracy, precision: p, recall: p, f1: f1_of(p, p) })
        }
    }
}

/// The full evaluation result, serialized as the machine-readable report.
/// Rate fields are `None` (rendered as dashes, serialized as null) when no
/// image matched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub average_iou: Option<f64>,
    pub not_detected: usize,
    pub confusion: ConfusionMatrix,
    pub classes: Vec<String>,
}

impl EvalReport {
    /// Build a report from per-image results.
    pub fn from_results(
        results: &[MatchResult],
        truths: &[GroundTruth],
        classes: &[String],
        averaging: Averaging,
    ) -> Result<EvalReport> {
        let (confusion, average_iou, not_detected) =
            accumulate(results, truths, classes.len())?;
        let rates = match compute_metrics(&confusion, averaging) {
            Ok(r) => Some(r),
            Err(Error::NoMatchedImages) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            accuracy: rates.map(|r| r.accuracy),
            precision: rates.map(|r| r.precision),
            recall: rates.map(|r| r.recall),
            f1: rates.map(|r| r.f1),
            average_iou,
            not_detected,
            confusion,
            classes: classes.to_vec(),
        })
    }

    /// Matched-image count (confusion total).
    pub fn matched(&self) -> u64 {
        self.confusion.total()
    }
}

fn fmt_rate(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    }
}

/// Human-readable rendering: the metric row (dashes when undefined)
/// followed by the class-coded confusion matrix.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("Accuracy  Precision  Recall  F1-score  Avg IOU  Not detected\n");
    out.push_str(&format!(
        "{:<9} {:<10} {:<7} {:<9} {:<8} {}\n",
        fmt_rate(report.accuracy),
        fmt_rate(report.precision),
        fmt_rate(report.recall),
        fmt_rate(report.f1),
        fmt_rate(report.average_iou),
        report.not_detected
    ));
    out.push_str("\nConfusion matrix (rows: truth, cols: predicted)\n");
    let k = report.confusion.k();
    out.push_str("      ");
    for c in 0..k {
        out.push_str(&format!("{c:>6}"));
    }
    out.push('\n');
    for r in 0..k {
        out.push_str(&format!("{r:>5} "));
        for c in 0..k {
            out.push_str(&format!("{:>6}", report.confusion.counts[r][c]));
        }
        out.push('\n');
    }
    out.push('\n');
    for (i, name) in report.classes.iter().enumerate() {
        out.push_str(&format!("{i}: {name}\n"));
    }
    out
}
