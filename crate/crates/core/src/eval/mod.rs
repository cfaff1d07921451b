//! Evaluation: confusion-derived metrics, the majority baseline, McNemar
//! model comparison, cross-validation orchestration and report rendering.

mod cv;
mod report;

pub use cv::{run_cv, CvResult, FoldModel};
pub use report::{render_report, ReportFormat};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Raw confusion counts for one positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts tp/tn/fp/fn treating `positive` as the positive class.
pub fn confusion(y_true: &[u8], y_pred: &[u8], positive: u8) -> ConfusionCounts {
    let mut c = ConfusionCounts {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// Per-class and aggregate scores for one prediction vector.
///
/// Index 0 of the per-class arrays treats label 0 as positive, index 1
/// treats label 1 as positive. All 0/0 ratios are defined as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub f1: [f64; 2],
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

impl MetricsReport {
    /// Unweighted mean of the per-class precisions.
    pub fn macro_precision(&self) -> f64 {
        0.5 * (self.precision[0] + self.precision[1])
    }

    /// Unweighted mean of the per-class recalls.
    pub fn macro_recall(&self) -> f64 {
        0.5 * (self.recall[0] + self.recall[1])
    }
}

/// Computes precision, recall, F1 and accuracy with each class treated as
/// positive in turn; macro-F1 is their unweighted mean, weighted-F1 the
/// support-weighted mean.
pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Config(format!(
            "{} truths vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Config("cannot score zero instances".into()));
    }
    let per_class = [confusion(y_true, y_pred, 0), confusion(y_true, y_pred, 1)];
    let precision = [per_class[0].precision(), per_class[1].precision()];
    let recall = [per_class[0].recall(), per_class[1].recall()];
    let f1 = [per_class[0].f1(), per_class[1].f1()];
    let support1 = y_true.iter().filter(|&&t| t == 1).count() as f64;
    let n = y_true.len() as f64;
    let support = [n - support1, support1];
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        accuracy: per_class[1].accuracy(),
        macro_f1: 0.5 * (f1[0] + f1[1]),
        weighted_f1: (support[0] * f1[0] + support[1] * f1[1]) / n,
    })
}

/// Constant classifier predicting the modal training class (ties go to 0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MajorityModel {
    pub label: u8,
}

impl MajorityModel {
    pub fn predict(&self) -> u8 {
        self.label
    }
}

pub fn majority_baseline(train_labels: &[u8]) -> Result<MajorityModel> {
    if train_labels.is_empty() {
        return Err(Error::Config("majority baseline needs labels".into()));
    }
    let ones = train_labels.iter().filter(|&&l| l == 1).count();
    let zeros = train_labels.len() - ones;
    Ok(MajorityModel {
        label: u8::from(ones > zeros),
    })
}

/// Which McNemar variant produced the p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarVariant {
    Chi2Corrected,
    ExactBinomial,
}

/// Paired comparison of two prediction vectors on shared ground truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Instances A classified correctly and B incorrectly.
    pub b: usize,
    /// Instances A classified incorrectly and B correctly.
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub variant: McNemarVariant,
}

/// McNemar test on the discordant counts.
///
/// With b + c >= 25 the continuity-corrected chi-square statistic
/// (|b-c|-1)^2 / (b+c) is referred to the chi-square(1) survival function;
/// below that an exact two-sided binomial p-value 2 P(X >= max(b,c)) is
/// used, capped at 1. Identical discordance (b + c = 0) gives p = 1.
pub fn mcnemar_test(preds_a: &[u8], preds_b: &[u8], y_true: &[u8]) -> Result<McNemarResult> {
    if preds_a.len() != y_true.len() || preds_b.len() != y_true.len() {
        return Err(Error::Config(format!(
            "prediction lengths {}/{} vs {} truths",
            preds_a.len(),
            preds_b.len(),
            y_true.len()
        )));
    }
    let mut b = 0usize;
    let mut c = 0usize;
    for ((&a, &bb), &t) in preds_a.iter().zip(preds_b).zip(y_true) {
        match (a == t, bb == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// The test itself, from the discordant counts.
pub fn mcnemar_from_counts(b: usize, c: usize) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult {
            b,
            c,
            statistic: 0.0,
            p_value: 1.0,
            variant: McNemarVariant::ExactBinomial,
        };
    }
    if n >= 25 {
        let diff = (b as f64 - c as f64).abs();
        // Clamp the continuity correction so b = c yields p = 1.
        let statistic = (diff - 1.0).max(0.0).powi(2) / n as f64;
        let p_value = ChiSquared::new(1.0).unwrap().sf(statistic);
        McNemarResult {
            b,
            c,
            statistic,
            p_value,
            variant: McNemarVariant::Chi2Corrected,
        }
    } else {
        let m = b.max(c);
        let p = (2.0 * binomial_tail_half(n, m)).min(1.0);
        McNemarResult {
            b,
            c,
            statistic: m as f64,
            p_value: p,
            variant: McNemarVariant::ExactBinomial,
        }
    }
}

/// P(X >= m) for X ~ Binomial(n, 1/2). Exact in f64 for the small n used
/// by the exact variant.
fn binomial_tail_half(n: usize, m: usize) -> f64 {
    let mut coeff = 1.0f64; // C(n, 0)
    let mut tail = 0.0f64;
    for i in 0..=n {
        if i >= m {
            tail += coeff;
        }
        coeff = coeff * (n - i) as f64 / (i + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}
