//! Skip-gram word embeddings with negative sampling.
//!
//! Trained on token lists alone; the trainer never sees labels. The
//! deterministic mode is single-worker; an optional multi-worker mode
//! (`workers > 1`, `parallel` feature) updates the matrices racily in the
//! classic lock-free style and is excluded from byte-level reproducibility
//! guarantees.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct W2vConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    /// Frequent-word subsampling threshold.
    pub subsample: f64,
    pub min_count: u64,
    pub seed: u64,
    /// 1 = deterministic single-worker training.
    pub workers: usize,
}

impl Default for W2vConfig {
    fn default() -> Self {
        W2vConfig {
            dim: 300,
            window: 8,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            subsample: 1e-3,
            min_count: 5,
            seed: 13,
            workers: 1,
        }
    }
}

/// Vocabulary ordered by descending count (ties by term), with the
/// count^0.75 unigram sampling table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct W2vVocab {
    pub terms: Vec<String>,
    pub counts: Vec<u64>,
    /// Normalized sampling probabilities, proportional to count^0.75.
    pub probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub total_tokens: u64,
}

impl W2vVocab {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Reassembles a vocabulary from stored parts (artifact loading);
    /// sampling probabilities are a pure function of the counts.
    pub fn from_parts(terms: Vec<String>, counts: Vec<u64>, total_tokens: u64) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let z: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let mut vocab = W2vVocab {
            terms,
            counts,
            probs,
            cumulative: Vec::new(),
            index: HashMap::new(),
            total_tokens,
        };
        vocab.rebuild();
        vocab
    }

    /// Rebuilds the derived lookup structures after deserialization.
    pub fn rebuild(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        self.cumulative = cumulative_of(&self.probs);
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(self.len() - 1),
            Err(i) => i.min(self.len() - 1),
        }
    }
}

fn cumulative_of(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Builds the vocabulary over in-corpus terms with count >= min_count.
pub fn build_vocab(corpus: &[&[String]], min_count: u64) -> Result<W2vVocab> {
    if corpus.is_empty() {
        return Err(Error::Fit("empty corpus".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        for tok in doc.iter() {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    if entries.is_empty() {
        return Err(Error::Fit(format!(
            "no term reaches min_count={min_count}"
        )));
    }
    entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let terms: Vec<String> = entries.iter().map(|(t, _)| t.clone()).collect();
    let counts: Vec<u64> = entries.iter().map(|(_, c)| *c).collect();
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let total_tokens = counts.iter().sum();
    let mut vocab = W2vVocab {
        terms,
        counts,
        probs,
        cumulative: Vec::new(),
        index: HashMap::new(),
        total_tokens,
    };
    vocab.rebuild();
    Ok(vocab)
}

/// Input/output embedding matrices plus the vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vocab: W2vVocab,
    /// V x dim "input" vectors; these are the word embeddings.
    pub input: Array2<f64>,
    /// V x dim "output" (context) vectors.
    pub output: Array2<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn vector(&self, term: &str) -> Option<ArrayView1<'_, f64>> {
        self.vocab.index_of(term).map(|i| self.input.row(i))
    }
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(&b) / (na * nb)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Loss and gradients of one SGNS example:
/// -log sigma(u_ctx . v) - sum_neg log sigma(-u_neg . v).
///
/// Returned gradients are with respect to `v`, `u_ctx` and each `u_neg`.
pub fn sgns_loss_and_grads(
    v: &[f64],
    u_ctx: &[f64],
    u_negs: &[&[f64]],
) -> (f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dim = v.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let softplus = |t: f64| {
        if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        }
    };

    let pos_score = dot(v, u_ctx);
    // -log sigma(x) = softplus(-x)
    let mut loss = softplus(-pos_score);
    let g_pos = sigmoid(pos_score) - 1.0;
    let mut grad_v: Vec<f64> = u_ctx.iter().map(|u| g_pos * u).collect();
    let grad_u_ctx: Vec<f64> = v.iter().map(|x| g_pos * x).collect();

    let mut grad_u_negs = Vec::with_capacity(u_negs.len());
    for u_neg in u_negs {
        let score = dot(v, u_neg);
        loss += softplus(score);
        let g_neg = sigmoid(score);
        for i in 0..dim {
            grad_v[i] += g_neg * u_neg[i];
        }
        grad_u_negs.push(v.iter().map(|x| g_neg * x).collect());
    }
    (loss, grad_v, grad_u_ctx, grad_u_negs)
}

/// One in-place SGNS update on the table.
pub fn sgns_step(
    table: &mut EmbeddingTable,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
) {
    let v: Vec<f64> = table.input.row(center).to_vec();
    let u_ctx: Vec<f64> = table.output.row(context).to_vec();
    let neg_rows: Vec<Vec<f64>> = negatives
        .iter()
        .map(|&n| table.output.row(n).to_vec())
        .collect();
    let neg_refs: Vec<&[f64]> = neg_rows.iter().map(|r| r.as_slice()).collect();
    let (_, grad_v, grad_u_ctx, grad_u_negs) = sgns_loss_and_grads(&v, &u_ctx, &neg_refs);

    {
        let mut row = table.input.row_mut(center);
        for (x, g) in row.iter_mut().zip(&grad_v) {
            *x -= lr * g;
        }
    }
    {
        let mut row = table.output.row_mut(context);
        for (x, g) in row.iter_mut().zip(&grad_u_ctx) {
            *x -= lr * g;
        }
    }
    for (&n, grad) in negatives.iter().zip(&grad_u_negs) {
        let mut row = table.output.row_mut(n);
        for (x, g) in row.iter_mut().zip(grad) {
            *x -= lr * g;
        }
    }
}

fn init_table(vocab: W2vVocab, dim: usize, seed: u64) -> EmbeddingTable {
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.5 / dim as f64;
    let input = Array2::from_shape_fn((v, dim), |_| rng.gen_range(-bound..bound));
    let output = Array2::zeros((v, dim));
    EmbeddingTable {
        vocab,
        input,
        output,
    }
}

/// Trains skip-gram embeddings over the corpus.
///
/// Per-token dynamic windows are uniform in [1, window]; the learning rate
/// decays linearly to 1e-4 of its initial value. Deterministic for a fixed
/// seed with `workers = 1`.
pub fn train_skipgram(corpus: &[&[String]], config: &W2vConfig) -> Result<EmbeddingTable> {
    let vocab = build_vocab(corpus, config.min_count)?;
    let mut table = init_table(vocab, config.dim, config.seed);

    // Token streams mapped to vocabulary ids, OOV dropped.
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|t| table.vocab.index_of(t))
                .collect()
        })
        .collect();
    let total_words: u64 = docs.iter().map(|d| d.len() as u64).sum();
    if total_words == 0 {
        return Ok(table);
    }
    let planned = total_words * config.epochs as u64;

    #[cfg(feature = "parallel")]
    if config.workers > 1 {
        train_racy(&mut table, &docs, config, planned);
        return Ok(table);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut processed = 0u64;
    for _epoch in 0..config.epochs {
        for doc in &docs {
            train_doc(&mut table, doc, config, &mut rng, &mut processed, planned);
        }
    }
    Ok(table)
}

fn keep_probability(count: u64, total: u64, threshold: f64) -> f64 {
    if threshold <= 0.0 {
        return 1.0;
    }
    let f = count as f64 / total as f64;
    ((threshold / f).sqrt() + threshold / f).min(1.0)
}

fn train_doc(
    table: &mut EmbeddingTable,
    doc: &[usize],
    config: &W2vConfig,
    rng: &mut ChaCha8Rng,
    processed: &mut u64,
    planned: u64,
) {
    let total = table.vocab.total_tokens;
    let kept: Vec<usize> = doc
        .iter()
        .copied()
        .filter(|&id| {
            let p = keep_probability(table.vocab.counts[id], total, config.subsample);
            p >= 1.0 || rng.gen::<f64>() < p
        })
        .collect();
    let mut negatives = Vec::with_capacity(config.negatives);
    for i in 0..kept.len() {
        let lr_scale = (1.0 - *processed as f64 / planned as f64).max(1e-4);
        let lr = config.initial_lr * lr_scale;
        let b = rng.gen_range(1..=config.window);
        let lo = i.saturating_sub(b);
        let hi = (i + b).min(kept.len().saturating_sub(1));
        for j in lo..=hi {
            if j == i {
                continue;
            }
            let center = kept[i];
            let context = kept[j];
            negatives.clear();
            for _ in 0..config.negatives {
                let cand = table.vocab.sample(rng);
                if cand != context {
                    negatives.push(cand);
                }
            }
            sgns_step(table, center, context, &negatives, lr);
        }
        *processed += 1;
    }
}

/// Lock-free multi-worker training. Worker threads update the shared
/// matrices without synchronization, so results are not reproducible
/// run-to-run; this mirrors the classic asynchronous-SGD trade-off.
#[cfg(feature = "parallel")]
fn train_racy(table: &mut EmbeddingTable, docs: &[Vec<usize>], config: &W2vConfig, planned: u64) {
    use std::sync::atomic::{AtomicU64, Ordering};

    struct RacyTable(*mut EmbeddingTable);
    unsafe impl Send for RacyTable {}
    unsafe impl Sync for RacyTable {}

    let shared = RacyTable(table as *mut EmbeddingTable);
    let processed = AtomicU64::new(0);
    let chunks: Vec<Vec<&Vec<usize>>> = (0..config.workers)
        .map(|w| docs.iter().skip(w).step_by(config.workers).collect())
        .collect();

    rayon::scope(|scope| {
        for (worker, chunk) in chunks.into_iter().enumerate() {
            let shared = &shared;
            let processed = &processed;
            scope.spawn(move |_| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(100 + worker as u64));
                for _ in 0..config.epochs {
                    for doc in &chunk {
                        // Each worker mutates the table through the shared
                        // pointer; racy by design.
                        let table = unsafe { &mut *shared.0 };
                        let mut local = processed.load(Ordering::Relaxed);
                        train_doc(table, doc, config, &mut rng, &mut local, planned);
                        processed.store(local, Ordering::Relaxed);
                    }
                }
            });
        }
    });
}

/// Embeds a token sequence as a dense `max_len x dim` matrix with a mask of
/// real positions. OOV tokens become zero rows; long sequences truncate.
pub fn embed_sequence(
    table: &EmbeddingTable,
    tokens: &[String],
    max_len: usize,
) -> (Array2<f64>, Vec<bool>) {
    let dim = table.dim();
    let mut out = Array2::zeros((max_len, dim));
    let mut mask = vec![false; max_len];
    for (pos, tok) in tokens.iter().take(max_len).enumerate() {
        mask[pos] = true;
        if let Some(row) = table.vector(tok) {
            out.row_mut(pos).assign(&row);
        }
    }
    (out, mask)
}
