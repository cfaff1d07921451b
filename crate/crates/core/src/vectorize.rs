//! TF-IDF n-gram feature spaces with ANOVA-F univariate selection.
//!
//! The word analyzer forms n-grams over preprocessed tokens; the char
//! analyzer slides over the whitespace-joined token string. idf uses the
//! smoothed form `ln((1+N)/(1+df)) + 1` and rows are L2-normalized.

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// N-gram source: whole tokens or characters of the joined token string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analyzer {
    Word,
    Char,
}

/// Fitted n-gram vocabulary with document frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Terms ordered by column index (index = position in this list).
    pub terms: Vec<String>,
    /// Document frequency per term, same order as `terms`.
    pub doc_freq: Vec<usize>,
    pub analyzer: Analyzer,
    pub ngram_range: (usize, usize),
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn build(
        mut entries: Vec<(String, usize)>,
        analyzer: Analyzer,
        ngram_range: (usize, usize),
    ) -> Self {
        // Index assignment by sorted term so the feature space does not
        // depend on document order.
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let terms: Vec<String> = entries.iter().map(|(t, _)| t.clone()).collect();
        let doc_freq: Vec<usize> = entries.iter().map(|(_, d)| *d).collect();
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            doc_freq,
            analyzer,
            ngram_range,
            index,
        }
    }

    /// Reassembles a vocabulary from stored parts (artifact loading).
    pub fn from_parts(
        terms: Vec<String>,
        doc_freq: Vec<usize>,
        analyzer: Analyzer,
        ngram_range: (usize, usize),
    ) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            doc_freq,
            analyzer,
            ngram_range,
            index,
        }
    }

    /// Rebuilds the term -> index map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Sparse vector with strictly increasing indices and non-zero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl SparseVector {
    pub fn zero(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    /// From (index, value) pairs; drops zeros, sorts, checks bounds.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.retain(|&(_, v)| v != 0.0);
        pairs.sort_unstable_by_key(|&(i, _)| i);
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(pairs.iter().all(|&(i, _)| (i as usize) < dim));
        SparseVector {
            indices: pairs.iter().map(|&(i, _)| i).collect(),
            values: pairs.iter().map(|&(_, v)| v).collect(),
            dim,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    /// Sets one component, inserting or removing the entry as needed.
    pub fn set(&mut self, index: u32, value: f64) {
        match self.indices.binary_search(&index) {
            Ok(pos) => {
                if value == 0.0 {
                    self.indices.remove(pos);
                    self.values.remove(pos);
                } else {
                    self.values[pos] = value;
                }
            }
            Err(pos) => {
                if value != 0.0 {
                    self.indices.insert(pos, index);
                    self.values.insert(pos, value);
                }
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * dense[i as usize])
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Keeps only `selected` columns (sorted ascending), remapping indices
    /// to the compacted space `0..selected.len()`.
    pub fn project(&self, selected: &[u32]) -> SparseVector {
        let mut pairs = Vec::new();
        for (i, v) in self.iter() {
            if let Ok(new_idx) = selected.binary_search(&i) {
                pairs.push((new_idx as u32, v));
            }
        }
        SparseVector::from_pairs(selected.len(), pairs)
    }
}

/// Fitted TF-IDF model: vocabulary plus idf weights, L2 row normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub min_df: usize,
}

/// Emits the n-grams of one document under the given analyzer.
fn ngrams(tokens: &[String], analyzer: Analyzer, range: (usize, usize)) -> Vec<String> {
    let (lo, hi) = range;
    let mut grams = Vec::new();
    match analyzer {
        Analyzer::Word => {
            for n in lo..=hi {
                if tokens.len() < n {
                    break;
                }
                for window in tokens.windows(n) {
                    grams.push(window.join(" "));
                }
            }
        }
        Analyzer::Char => {
            let joined = tokens.join(" ");
            let chars: Vec<char> = joined.chars().collect();
            for n in lo..=hi {
                if chars.len() < n {
                    break;
                }
                for window in chars.windows(n) {
                    grams.push(window.iter().collect());
                }
            }
        }
    }
    grams
}

/// Fits the vocabulary and idf vector over preprocessed documents.
pub fn fit_tfidf(
    docs: &[&[String]],
    analyzer: Analyzer,
    ngram_range: (usize, usize),
    min_df: usize,
) -> Result<TfidfModel> {
    if docs.is_empty() {
        return Err(Error::Fit("cannot fit tf-idf on zero documents".into()));
    }
    let (lo, hi) = ngram_range;
    if lo < 1 || lo > hi {
        return Err(Error::Config(format!(
            "invalid ngram range ({lo},{hi})"
        )));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut seen: Vec<String> = Vec::new();
    for doc in docs {
        seen.clear();
        seen.extend(ngrams(doc, analyzer, ngram_range));
        seen.sort_unstable();
        seen.dedup();
        for gram in seen.drain(..) {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    let entries: Vec<(String, usize)> = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df.max(1))
        .collect();
    if entries.is_empty() {
        return Err(Error::Fit(format!(
            "empty vocabulary after min_df={min_df} filtering"
        )));
    }
    let vocabulary = Vocabulary::build(entries, analyzer, ngram_range);
    let n = docs.len() as f64;
    let idf = vocabulary
        .doc_freq
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    Ok(TfidfModel {
        vocabulary,
        idf,
        min_df,
    })
}

/// Transforms one document: raw count x idf per in-vocabulary n-gram, then
/// L2 normalization. All-OOV documents yield the zero vector.
pub fn transform_tfidf(doc: &[String], model: &TfidfModel) -> SparseVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for gram in ngrams(doc, model.vocabulary.analyzer, model.vocabulary.ngram_range) {
        if let Some(idx) = model.vocabulary.index_of(&gram) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    let mut pairs: Vec<(u32, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i as u32, c * model.idf[i]))
        .collect();
    pairs.sort_unstable_by_key(|&(i, _)| i);
    let norm = pairs.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut pairs {
            *v /= norm;
        }
    }
    SparseVector::from_pairs(model.vocabulary.len(), pairs)
}

/// Transforms a batch of documents (parallel when enabled; output order
/// always matches input order).
pub fn transform_batch(docs: &[&[String]], model: &TfidfModel) -> Vec<SparseVector> {
    par::map_slice(docs, |doc| transform_tfidf(doc, model))
}

/// ANOVA-F selection state: per-feature scores and the chosen top-k set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSelector {
    pub f_scores: Vec<f64>,
    /// Selected column indices, sorted ascending.
    pub selected: Vec<u32>,
    pub k: usize,
}

/// Per-feature one-way ANOVA F statistic for a binary split.
///
/// F = between-class mean square / within-class mean square. Zero within-
/// class variance yields 0 when the between-class variance is also zero,
/// and +inf otherwise (a perfect separator outranks everything).
pub fn anova_f_scores(x: &[SparseVector], y: &[u8]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let n1 = y.iter().filter(|&&l| l == 1).count();
    let n0 = y.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Fit("both classes required for selection".into()));
    }
    let dim = x.first().map(|r| r.dim).unwrap_or(0);
    let mut sum = vec![[0.0f64; 2]; dim];
    let mut sumsq = vec![[0.0f64; 2]; dim];
    for (row, &label) in x.iter().zip(y) {
        let c = label as usize;
        for (i, v) in row.iter() {
            sum[i as usize][c] += v;
            sumsq[i as usize][c] += v * v;
        }
    }
    let counts = [n0 as f64, n1 as f64];
    let n = (n0 + n1) as f64;
    let scores = (0..dim)
        .map(|j| {
            let mean = [sum[j][0] / counts[0], sum[j][1] / counts[1]];
            let grand = (sum[j][0] + sum[j][1]) / n;
            let ssb = counts[0] * (mean[0] - grand).powi(2) + counts[1] * (mean[1] - grand).powi(2);
            let ssw = (sumsq[j][0] - counts[0] * mean[0] * mean[0])
                + (sumsq[j][1] - counts[1] * mean[1] * mean[1]);
            // Accumulated rounding can push a true-zero SS slightly negative.
            let ssw = ssw.max(0.0);
            let ssb = ssb.max(0.0);
            let msb = ssb; // df = 1
            let msw = ssw / (n - 2.0);
            if msw == 0.0 {
                if msb == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                msb / msw
            }
        })
        .collect();
    Ok(scores)
}

/// Scores every feature and keeps the `min(k, V)` largest, ties broken by
/// lower column index.
pub fn anova_f_select(x: &[SparseVector], y: &[u8], k: usize) -> Result<FeatureSelector> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let f_scores = anova_f_scores(x, y)?;
    let keep = k.min(f_scores.len());
    let mut order: Vec<usize> = (0..f_scores.len()).collect();
    order.sort_by(|&a, &b| {
        f_scores[b]
            .partial_cmp(&f_scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut selected: Vec<u32> = order[..keep].iter().map(|&i| i as u32).collect();
    selected.sort_unstable();
    Ok(FeatureSelector {
        f_scores,
        selected,
        k,
    })
}

/// Parameters fixed while searching the selected-feature count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BowConfig {
    pub analyzer: Analyzer,
    pub ngram_range: (usize, usize),
    pub min_df: usize,
    pub l2_lambda: f64,
}

impl BowConfig {
    pub fn word() -> Self {
        BowConfig {
            analyzer: Analyzer::Word,
            ngram_range: (1, 2),
            min_df: 2,
            l2_lambda: 1.0,
        }
    }

    pub fn char() -> Self {
        BowConfig {
            analyzer: Analyzer::Char,
            ngram_range: (2, 5),
            min_df: 5,
            l2_lambda: 1.0,
        }
    }
}

/// The default candidate grid: 30000 down to 1000 at -1000 steps.
pub fn default_k_candidates() -> Vec<usize> {
    (1..=30).rev().map(|i| i * 1000).collect()
}

/// Searches the selected-feature count on the development set.
///
/// For each candidate k the development data is split 80/20 (stratified,
/// seeded), a TF-IDF + selector + logistic model is fitted on the 80% side
/// and scored by macro-F1 on the holdout. Ties go to the smaller k.
pub fn search_k(
    dev: &Dataset,
    task: crate::corpus::Task,
    cfg: &BowConfig,
    candidates: &[usize],
    seed: u64,
) -> Result<usize> {
    use crate::eval::compute_metrics;
    use crate::linear;

    if candidates.is_empty() {
        return Err(Error::Config("empty candidate list".into()));
    }
    let items: Vec<(String, u8)> = dev
        .records()
        .iter()
        .map(|(d, l)| (d.id.clone(), l.get(task)))
        .collect();
    let (holdout_ids, train_ids) = stratified_pair(&items, 0.2, seed);
    let by_id: HashMap<&str, usize> = dev
        .records()
        .iter()
        .enumerate()
        .map(|(i, (d, _))| (d.id.as_str(), i))
        .collect();
    let gather = |ids: &[String]| -> (Vec<&[String]>, Vec<u8>) {
        let docs: Vec<&[String]> = ids
            .iter()
            .map(|id| dev.records()[by_id[id.as_str()]].0.tokens.as_slice())
            .collect();
        let labels: Vec<u8> = ids
            .iter()
            .map(|id| dev.records()[by_id[id.as_str()]].1.get(task))
            .collect();
        (docs, labels)
    };
    let (train_docs, train_labels) = gather(&train_ids);
    let (holdout_docs, holdout_labels) = gather(&holdout_ids);

    let tfidf = fit_tfidf(&train_docs, cfg.analyzer, cfg.ngram_range, cfg.min_df)?;
    let train_x = transform_batch(&train_docs, &tfidf);
    let holdout_x = transform_batch(&holdout_docs, &tfidf);

    let mut best: Option<(f64, usize)> = None;
    let mut failures = 0usize;
    for &k in candidates {
        let run = (|| -> Result<f64> {
            let selector = anova_f_select(&train_x, &train_labels, k)?;
            let xt: Vec<SparseVector> = train_x
                .iter()
                .map(|r| r.project(&selector.selected))
                .collect();
            let xh: Vec<SparseVector> = holdout_x
                .iter()
                .map(|r| r.project(&selector.selected))
                .collect();
            let config = linear::TrainConfig {
                l2_lambda: cfg.l2_lambda,
                ..linear::TrainConfig::default()
            };
            let model = linear::fit_logreg(&xt, &train_labels, &config)?;
            let preds: Vec<u8> = xh.iter().map(|r| linear::predict(&model, r).1).collect();
            Ok(compute_metrics(&holdout_labels, &preds)?.macro_f1)
        })();
        match run {
            Ok(f1) => {
                // >= keeps the later (smaller) candidate on ties.
                if best.map_or(true, |(bf, _)| f1 >= bf) {
                    best = Some((f1, k));
                }
            }
            Err(e) => {
                log::warn!("k={k} candidate failed: {e}");
                failures += 1;
            }
        }
    }
    if failures == candidates.len() {
        return Err(Error::Fit("every k candidate failed".into()));
    }
    Ok(best.unwrap().1)
}

/// Stratified (selected, rest) id split used by the inner dev holdout.
fn stratified_pair(items: &[(String, u8)], ratio: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    crate::corpus::stratified_split(items, ratio, seed)
}
