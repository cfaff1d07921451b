//! Deterministic stratified dev/test splits and k-fold plans.
//!
//! Plans are pure functions of (record ids, labels, seed): ids are sorted
//! ascending before seeded shuffling, so input order never matters. Class
//! quotas use largest-remainder allocation, which keeps fold sizes within
//! one of each other and every fold's positive count within one of the
//! exact proportional share.

use crate::corpus::{Dataset, Task};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A 30/70-style development/test split. Id lists are sorted ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub dev_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub dev_ratio: f64,
    pub seed: u64,
}

/// Assignment of test ids to folds `0..k`, stratified by one task's label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub assignment: BTreeMap<String, usize>,
    pub k: usize,
    pub task: Task,
    pub seed: u64,
}

impl FoldPlan {
    /// Ids of one fold, sorted ascending.
    pub fn fold_ids(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Splits `(id, label)` items into (selected, rest) where `|selected|` is
/// `round(ratio * N)`, stratified by label. Deterministic for a fixed seed.
pub fn stratified_split(items: &[(String, u8)], ratio: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let (class0, class1) = shuffled_classes(items, seed);
    let n = items.len();
    let take = (ratio * n as f64).round() as usize;
    let quotas = largest_remainder(&[class0.len(), class1.len()], take);

    let mut selected: Vec<String> = Vec::with_capacity(take);
    let mut rest: Vec<String> = Vec::with_capacity(n - take);
    for (members, &quota) in [class0, class1].into_iter().zip(&quotas) {
        for (i, id) in members.into_iter().enumerate() {
            if i < quota {
                selected.push(id);
            } else {
                rest.push(id);
            }
        }
    }
    selected.sort_unstable();
    rest.sort_unstable();
    (selected, rest)
}

/// Assigns `(id, label)` items to `k` stratified folds.
pub fn stratified_folds(items: &[(String, u8)], k: usize, seed: u64) -> BTreeMap<String, usize> {
    let (class0, class1) = shuffled_classes(items, seed);
    let n = items.len();

    // Fold sizes first (differ by at most one), then the positive-class
    // quota of each fold by largest remainder against its size.
    let base = n / k;
    let extra = n % k;
    let sizes: Vec<usize> = (0..k).map(|f| base + usize::from(f < extra)).collect();
    let pos_quota = largest_remainder_weighted(&sizes, class1.len(), n);

    let mut assignment = BTreeMap::new();
    let mut pos_iter = class1.into_iter();
    let mut neg_iter = class0.into_iter();
    for fold in 0..k {
        for _ in 0..pos_quota[fold] {
            assignment.insert(pos_iter.next().unwrap(), fold);
        }
        for _ in 0..(sizes[fold] - pos_quota[fold]) {
            assignment.insert(neg_iter.next().unwrap(), fold);
        }
    }
    assignment
}

/// Produces the dev/test split stratified by `task`, then a stratified
/// k-fold plan over the test ids only.
pub fn split_and_fold(
    ds: &Dataset,
    dev_ratio: f64,
    k: usize,
    task: Task,
    seed: u64,
) -> Result<(SplitPlan, FoldPlan)> {
    if !(0.0..1.0).contains(&dev_ratio) || dev_ratio <= 0.0 {
        return Err(Error::Config(format!(
            "dev_ratio must be in (0,1), got {dev_ratio}"
        )));
    }
    if k < 2 {
        return Err(Error::Config(format!("fold count must be >= 2, got {k}")));
    }
    if ds.len() < k {
        return Err(Error::Config(format!(
            "{} records cannot fill {k} folds",
            ds.len()
        )));
    }
    let items: Vec<(String, u8)> = ds
        .records()
        .iter()
        .map(|(doc, labels)| (doc.id.clone(), labels.get(task)))
        .collect();
    let (dev_ids, test_ids) = stratified_split(&items, dev_ratio, seed);
    if test_ids.len() < k {
        return Err(Error::Config(format!(
            "{} test records cannot fill {k} folds",
            test_ids.len()
        )));
    }
    let label_of: BTreeMap<&str, u8> = items.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let test_items: Vec<(String, u8)> = test_ids
        .iter()
        .map(|id| (id.clone(), label_of[id.as_str()]))
        .collect();
    let assignment = stratified_folds(&test_items, k, seed);
    Ok((
        SplitPlan {
            dev_ids,
            test_ids,
            dev_ratio,
            seed,
        },
        FoldPlan {
            assignment,
            k,
            task,
            seed,
        },
    ))
}

/// Sorts items by id, then shuffles each class with a seeded RNG.
fn shuffled_classes(items: &[(String, u8)], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut sorted: Vec<&(String, u8)> = items.iter().collect();
    sorted.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut class0: Vec<String> = Vec::new();
    let mut class1: Vec<String> = Vec::new();
    for (id, label) in sorted {
        if *label == 0 {
            class0.push(id.clone());
        } else {
            class1.push(id.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    class0.shuffle(&mut rng);
    class1.shuffle(&mut rng);
    (class0, class1)
}

/// Integer allocation of `total` across groups proportional to `counts`,
/// largest remainder first, remainder ties broken by lower group index.
fn largest_remainder(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    assert!(total <= n);
    let exact: Vec<f64> = counts
        .iter()
        .map(|&c| total as f64 * c as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = exact
        .iter()
        .zip(counts)
        .map(|(&e, &c)| (e.floor() as usize).min(c))
        .collect();
    let mut remaining = total - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut i = 0;
    while remaining > 0 {
        let g = order[i % order.len()];
        if alloc[g] < counts[g] {
            alloc[g] += 1;
            remaining -= 1;
        }
        i += 1;
    }
    alloc
}

/// Allocates `positives` across folds proportional to fold `sizes` (which
/// sum to `n`), largest remainder first, never exceeding a fold's size.
fn largest_remainder_weighted(sizes: &[usize], positives: usize, n: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| positives as f64 * s as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &s)| (e.floor() as usize).min(s))
        .collect();
    let mut remaining = positives - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut i = 0;
    while remaining > 0 {
        let f = order[i % order.len()];
        if alloc[f] < sizes[f] {
            alloc[f] += 1;
            remaining -= 1;
        }
        i += 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_labels, Document, Lang};

    fn dataset(n: usize, positive_rate: f64) -> Dataset {
        let records = (0..n)
            .map(|i| {
                let mbti = if (i as f64) < positive_rate * n as f64 {
                    "INTP"
                } else {
                    "ENTP"
                };
                (
                    Document {
                        id: format!("d{i:06}"),
                        author_id: String::new(),
                        lang: Lang::En,
                        raw_text: String::new(),
                        tokens: Vec::new(),
                    },
                    encode_labels(mbti).unwrap(),
                )
            })
            .collect();
        Dataset::new(records).unwrap()
    }

    #[test]
    fn sizes_at_n100() {
        let ds = dataset(100, 0.5);
        let (split, folds) = split_and_fold(&ds, 0.3, 10, Task::Ei, 13).unwrap();
        assert_eq!(split.dev_ids.len(), 30);
        assert_eq!(split.test_ids.len(), 70);
        for f in 0..10 {
            assert_eq!(folds.fold_ids(f).len(), 7);
        }
    }

    #[test]
    fn split_and_folds_partition_ids() {
        let ds = dataset(101, 0.37);
        let (split, folds) = split_and_fold(&ds, 0.3, 10, Task::Ei, 7).unwrap();
        let mut all: Vec<String> = split.dev_ids.clone();
        all.extend(split.test_ids.clone());
        all.sort_unstable();
        let mut expect: Vec<String> = ds.records().iter().map(|(d, _)| d.id.clone()).collect();
        expect.sort_unstable();
        assert_eq!(all, expect);
        assert_eq!(folds.assignment.len(), split.test_ids.len());
        let sizes: Vec<usize> = (0..10).map(|f| folds.fold_ids(f).len()).collect();
        let max = sizes.iter().max().unwrap();
        let min = sizes.iter().min().unwrap();
        assert!(max - min <= 1, "fold sizes {sizes:?}");
    }

    #[test]
    fn same_seed_identical_plans() {
        let ds = dataset(250, 0.41);
        let a = split_and_fold(&ds, 0.3, 10, Task::Ei, 99).unwrap();
        let b = split_and_fold(&ds, 0.3, 10, Task::Ei, 99).unwrap();
        assert_eq!(a.0.dev_ids, b.0.dev_ids);
        assert_eq!(a.1.assignment, b.1.assignment);
    }

    #[test]
    fn plans_ignore_record_order() {
        let ds = dataset(120, 0.4);
        let mut shuffled: Vec<_> = ds.records().to_vec();
        shuffled.reverse();
        let ds_rev = Dataset::new(shuffled).unwrap();
        let a = split_and_fold(&ds, 0.3, 10, Task::Ei, 5).unwrap();
        let b = split_and_fold(&ds_rev, 0.3, 10, Task::Ei, 5).unwrap();
        assert_eq!(a.0.dev_ids, b.0.dev_ids);
        assert_eq!(a.1.assignment, b.1.assignment);
    }

    #[test]
    fn too_few_records_is_config_error() {
        let ds = dataset(8, 0.5);
        let err = split_and_fold(&ds, 0.3, 10, Task::Ei, 13).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn stratification_holds_over_twenty_seeds() {
        // 10,000 records at 30% positives: every fold rate in [0.28, 0.32].
        let ds = dataset(10_000, 0.3);
        let labels: BTreeMap<String, u8> = ds
            .records()
            .iter()
            .map(|(d, l)| (d.id.clone(), l.get(Task::Ei)))
            .collect();
        for seed in 0..20 {
            let (_, folds) = split_and_fold(&ds, 0.3, 10, Task::Ei, seed).unwrap();
            for f in 0..10 {
                let ids = folds.fold_ids(f);
                let pos: usize = ids.iter().map(|id| labels[*id] as usize).sum();
                let rate = pos as f64 / ids.len() as f64;
                assert!(
                    (0.28..=0.32).contains(&rate),
                    "seed {seed} fold {f} rate {rate}"
                );
            }
        }
    }

    #[test]
    fn per_fold_rate_within_two_points_at_fifty() {
        // Smallest covered fold size: rate deviation stays within 0.02.
        for &(n, rate) in &[(500usize, 0.33f64), (730, 0.21), (977, 0.5)] {
            let ds = dataset(n, rate);
            let items: Vec<(String, u8)> = ds
                .records()
                .iter()
                .map(|(d, l)| (d.id.clone(), l.get(Task::Ei)))
                .collect();
            let global =
                items.iter().filter(|(_, l)| *l == 1).count() as f64 / items.len() as f64;
            let assignment = stratified_folds(&items, 10, 42);
            for f in 0..10 {
                let fold: Vec<&(String, u8)> = items
                    .iter()
                    .filter(|(id, _)| assignment[id] == f)
                    .collect();
                if fold.len() < 50 {
                    continue;
                }
                let pos = fold.iter().filter(|(_, l)| *l == 1).count() as f64;
                let dev = (pos / fold.len() as f64 - global).abs();
                assert!(dev <= 0.02, "n={n} fold {f} deviation {dev}");
            }
        }
    }
}
