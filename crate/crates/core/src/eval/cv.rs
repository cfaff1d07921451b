//! Cross-validation orchestration.
//!
//! Folds evaluate independently (in parallel when enabled) with per-fold
//! seeds derived as `seed + fold`; reports are aggregated in fold order, so
//! serial and parallel execution produce identical results.

use super::{compute_metrics, MetricsReport};
use crate::corpus::{Dataset, FoldPlan, Task};
use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A model family that can be trained on one fold complement and asked for
/// hard predictions on the held-out fold.
pub trait FoldModel: Sync {
    fn model_id(&self) -> String;

    /// Trains on `train` record indices and predicts labels for `test`
    /// record indices, in the given order.
    fn run_fold(
        &self,
        ds: &Dataset,
        train: &[usize],
        test: &[usize],
        task: Task,
        seed: u64,
    ) -> Result<Vec<u8>>;
}

/// Per-fold reports plus their field-wise mean and population standard
/// deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub model_id: String,
    pub task: Task,
    pub seed: u64,
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

/// Runs k-fold cross-validation: for each fold, train on the other folds
/// and evaluate on it. Hyperparameters must already be fixed; the plan's
/// ids are the test portion of the corpus split.
pub fn run_cv<M: FoldModel>(
    model: &M,
    ds: &Dataset,
    task: Task,
    folds: &FoldPlan,
    seed: u64,
) -> Result<CvResult> {
    let index_of: HashMap<&str, usize> = ds
        .records()
        .iter()
        .enumerate()
        .map(|(i, (d, _))| (d.id.as_str(), i))
        .collect();
    for id in folds.assignment.keys() {
        if !index_of.contains_key(id.as_str()) {
            return Err(Error::Config(format!(
                "fold plan id {id:?} missing from the dataset"
            )));
        }
    }

    // Fold membership in deterministic (id-sorted) order.
    let mut fold_indices: Vec<Vec<usize>> = vec![Vec::new(); folds.k];
    for (id, &fold) in &folds.assignment {
        fold_indices[fold].push(index_of[id.as_str()]);
    }

    let outcomes: Vec<Result<MetricsReport>> = par::map_indices(folds.k, |fold| {
        let test = &fold_indices[fold];
        let train: Vec<usize> = (0..folds.k)
            .filter(|&f| f != fold)
            .flat_map(|f| fold_indices[f].iter().copied())
            .collect();
        let fold_seed = seed.wrapping_add(fold as u64);
        let preds = model.run_fold(ds, &train, test, task, fold_seed)?;
        let truth: Vec<u8> = test.iter().map(|&i| ds.records()[i].1.get(task)).collect();
        compute_metrics(&truth, &preds)
    });

    let mut reports = Vec::with_capacity(folds.k);
    for (fold, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => reports.push(r),
            Err(e) => return Err(Error::Fit(format!("fold {fold} failed: {e}"))),
        }
    }

    let mean = aggregate(&reports, |vals| mean_of(vals));
    let std = aggregate(&reports, |vals| {
        let m = mean_of(vals);
        let sq: Vec<f64> = vals.iter().map(|v| (v - m) * (v - m)).collect();
        (stable_sum(&sq) / vals.len() as f64).sqrt()
    });
    Ok(CvResult {
        model_id: model.model_id(),
        task,
        seed,
        folds: reports,
        mean,
        std,
    })
}

/// Order-insensitive sum: values are sorted first, so aggregates are pure
/// functions of the fold multiset and fold order never matters.
fn stable_sum(vals: &[f64]) -> f64 {
    let mut sorted = vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

fn mean_of(vals: &[f64]) -> f64 {
    stable_sum(vals) / vals.len() as f64
}

fn aggregate(reports: &[MetricsReport], f: impl Fn(&[f64]) -> f64) -> MetricsReport {
    let collect = |get: &dyn Fn(&MetricsReport) -> f64| -> f64 {
        let vals: Vec<f64> = reports.iter().map(get).collect();
        f(&vals)
    };
    MetricsReport {
        precision: [
            collect(&|r| r.precision[0]),
            collect(&|r| r.precision[1]),
        ],
        recall: [collect(&|r| r.recall[0]), collect(&|r| r.recall[1])],
        f1: [collect(&|r| r.f1[0]), collect(&|r| r.f1[1])],
        accuracy: collect(&|r| r.accuracy),
        macro_f1: collect(&|r| r.macro_f1),
        weighted_f1: collect(&|r| r.weighted_f1),
    }
}
