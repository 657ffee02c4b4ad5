//! ROC/PR metrics with conservative low-FPR operating points. Ties are
//! grouped so all equal scores flip together, and TPR@FPR never
//! interpolates between curve points.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::EvalError;

/// One point on the ROC sweep, ordered by descending threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub precision: f64,
}

/// A labeled attack score: `true` marks a member.
pub type LabeledScore = (f64, bool);

fn class_counts(scores: &[LabeledScore]) -> Result<(usize, usize), EvalError> {
    let p = scores.iter().filter(|(_, m)| *m).count();
    let n = scores.len() - p;
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((p, n))
}

/// Full ROC sweep: one point per distinct threshold (ties grouped), with
/// the (0, 0) and (1, 1) endpoints always present.
pub fn roc_curve(scores: &[LabeledScore]) -> Result<Vec<RocPoint>, EvalError> {
    let (p, n) = class_counts(scores)?;
    let mut sorted: Vec<LabeledScore> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
        // No predictions yet; precision is 1.0 by convention.
        precision: 1.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

/// ROC-AUC via the rank statistic, ties counted half.
pub fn auc(scores: &[LabeledScore]) -> Result<f64, EvalError> {
    let (p, n) = class_counts(scores)?;
    let mut sorted: Vec<LabeledScore> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Average ranks over tie groups.
    let mut rank_sum_members = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average rank.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let members_in_group = sorted[i..j].iter().filter(|(_, m)| *m).count();
        rank_sum_members += avg_rank * members_in_group as f64;
        i = j;
    }
    let u = rank_sum_members - (p as f64 * (p as f64 + 1.0)) / 2.0;
    Ok(u / (p as f64 * n as f64))
}

/// PR-AUC as average precision with step interpolation over grouped
/// thresholds.
pub fn pr_auc(scores: &[LabeledScore]) -> Result<f64, EvalError> {
    let (p, _) = class_counts(scores)?;
    let points = roc_curve(scores)?;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for pt in points.iter().skip(1) {
        let recall = pt.tpr;
        ap += (recall - prev_recall) * pt.precision;
        prev_recall = recall;
    }
    let _ = p;
    Ok(ap)
}

fn pick_operating_point(points: &[RocPoint], fpr_target: f64) -> Option<&RocPoint> {
    points
        .iter()
        .filter(|pt| pt.fpr <= fpr_target + 1e-12)
        .max_by(|a, b| a.tpr.total_cmp(&b.tpr).then(b.fpr.total_cmp(&a.fpr)))
}

/// Max TPR over ROC points with FPR at or below the target; no
/// interpolation. An attack that never separates at low FPR legitimately
/// returns 0.
pub fn tpr_at_fpr(scores: &[LabeledScore], fpr_target: f64) -> Result<f64, EvalError> {
    let points = roc_curve(scores)?;
    Ok(pick_operating_point(&points, fpr_target).map_or(0.0, |pt| pt.tpr))
}

/// Accuracy at the same operating point `tpr_at_fpr` selects for 1% FPR.
pub fn acc_at_fpr1(scores: &[LabeledScore]) -> Result<f64, EvalError> {
    let (p, n) = class_counts(scores)?;
    let points = roc_curve(scores)?;
    let pt = pick_operating_point(&points, 0.01)
        .cloned()
        .unwrap_or(points[0].clone());
    let tp = pt.tpr * p as f64;
    let tn = (1.0 - pt.fpr) * n as f64;
    Ok((tp + tn) / (p + n) as f64)
}

fn format_threshold(t: f64) -> String {
    if t == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{t}")
    }
}

/// Write the sweep as `threshold,fpr,tpr,precision` CSV.
pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("threshold,fpr,tpr,precision\n");
    for pt in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_threshold(pt.threshold),
            pt.fpr,
            pt.tpr,
            pt.precision
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Log-log plotting data: zero FPR/TPR values are clamped to 1e-4 so both
/// axes stay positive. Plotting data only; metrics never use this.
pub fn write_roc_loglog_csv(points: &[RocPoint], path: &Path) -> Result<(), EvalError> {
    const CLAMP: f64 = 1e-4;
    let mut out = String::from("threshold,fpr,tpr,precision\n");
    for pt in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_threshold(pt.threshold),
            pt.fpr.max(CLAMP),
            pt.tpr.max(CLAMP),
            pt.precision
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
