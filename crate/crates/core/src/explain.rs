//! Model explanations for the linear classifier: permutation-based feature
//! weights and per-document token contribution highlights.
//!
//! A permutation weight is the macro-F1 drop when one feature column is
//! shuffled with the model held fixed. Highlights decompose a document's
//! decision logit into per-span contributions w_j * x_j whose sum plus the
//! bias reproduces the logit exactly.

use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::linear::{sigmoid, LogisticModel};
use crate::par;
use crate::vectorize::{Analyzer, SparseVector, TfidfModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A term with its signed importance weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub term: String,
    pub weight: f64,
}

/// Token-index span `[start, end)` with its signed logit contribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub start: usize,
    pub end: usize,
    pub term: String,
    pub value: f64,
}

/// Per-document explanation: span contributions plus the bias reproduce
/// the decision logit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Highlight {
    pub spans: Vec<HighlightSpan>,
    pub predicted: u8,
    pub p1: f64,
    pub bias: f64,
    pub logit: f64,
}

fn macro_f1_of_scores(y: &[u8], z: &[f64]) -> f64 {
    let preds: Vec<u8> = z.iter().map(|&zi| u8::from(sigmoid(zi) > 0.5)).collect();
    compute_metrics(y, &preds).expect("equal lengths").macro_f1
}

/// Mean macro-F1 drop when `feature`'s column is permuted, over `rounds`
/// shuffles with per-round derived seeds. Constant columns short-circuit
/// to 0 (the permutation distribution is the identity).
pub fn permutation_importance(
    model: &LogisticModel,
    x: &[SparseVector],
    y: &[u8],
    feature: usize,
    rounds: usize,
    seed: u64,
) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Config("rows and labels disagree".into()));
    }
    let column: Vec<f64> = x.iter().map(|row| row.get(feature as u32)).collect();
    let first = column[0];
    if column.iter().all(|&v| v == first) {
        return Ok(0.0);
    }
    let w_j = model.w[feature];
    // Base logits, and logits with the feature's contribution removed;
    // a permuted column then only re-adds w_j * permuted value.
    let base_z: Vec<f64> = x
        .iter()
        .map(|row| row.dot_dense(&model.w) + model.b)
        .collect();
    let without: Vec<f64> = base_z
        .iter()
        .zip(&column)
        .map(|(&z, &v)| z - w_j * v)
        .collect();
    let base_score = macro_f1_of_scores(y, &base_z);

    let drops: Vec<f64> = par::map_indices(rounds, |round| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(round as u64));
        let mut permuted = column.clone();
        permuted.shuffle(&mut rng);
        let z: Vec<f64> = without
            .iter()
            .zip(&permuted)
            .map(|(&z0, &v)| z0 + w_j * v)
            .collect();
        base_score - macro_f1_of_scores(y, &z)
    });
    let mut sorted = drops;
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.iter().sum::<f64>() / rounds as f64)
}

/// Permutation weights for every feature in `features` (parallel over
/// features, deterministic).
pub fn permutation_weights(
    model: &LogisticModel,
    x: &[SparseVector],
    y: &[u8],
    features: &[usize],
    rounds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let out: Vec<Result<f64>> = par::map_slice(features, |&j| {
        permutation_importance(model, x, y, j, rounds, seed.wrapping_add(j as u64 * 1000))
    });
    out.into_iter().collect()
}

/// The `n` largest and `n` smallest feature weights with their terms.
///
/// With `rounds > 0` and data available, weights are permutation
/// importances; `rounds == 0` falls back to the raw coefficients.
/// Positive list is sorted descending, negative ascending, ties by term.
#[allow(clippy::too_many_arguments)]
pub fn top_features(
    model: &LogisticModel,
    terms: &[String],
    data: Option<(&[SparseVector], &[u8])>,
    n: usize,
    rounds: usize,
    seed: u64,
) -> Result<(Vec<FeatureWeight>, Vec<FeatureWeight>)> {
    if terms.len() != model.w.len() {
        return Err(Error::Config(format!(
            "{} terms vs {} weights",
            terms.len(),
            model.w.len()
        )));
    }
    let weights: Vec<f64> = match (rounds, data) {
        (0, _) | (_, None) => model.w.clone(),
        (_, Some((x, y))) => {
            let features: Vec<usize> = (0..model.w.len()).collect();
            permutation_weights(model, x, y, &features, rounds, seed)?
        }
    };
    let n_eff = n.min(terms.len());
    if n > terms.len() {
        log::warn!("asked for top {n} of {} features; returning all", terms.len());
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap()
            .then_with(|| terms[a].cmp(&terms[b]))
    });
    let positive: Vec<FeatureWeight> = order[..n_eff]
        .iter()
        .map(|&j| FeatureWeight {
            term: terms[j].clone(),
            weight: weights[j],
        })
        .collect();
    let mut tail: Vec<usize> = order[weights.len() - n_eff..].to_vec();
    tail.reverse();
    let negative: Vec<FeatureWeight> = tail
        .into_iter()
        .map(|j| FeatureWeight {
            term: terms[j].clone(),
            weight: weights[j],
        })
        .collect();
    Ok((positive, negative))
}

/// N-grams of one document together with the token span each occurrence
/// covers (`[start, end)` in token indices).
pub fn ngrams_with_spans(
    tokens: &[String],
    analyzer: Analyzer,
    range: (usize, usize),
) -> Vec<(String, usize, usize)> {
    let (lo, hi) = range;
    let mut out = Vec::new();
    match analyzer {
        Analyzer::Word => {
            for n in lo..=hi {
                if tokens.len() < n {
                    break;
                }
                for start in 0..=(tokens.len() - n) {
                    out.push((tokens[start..start + n].join(" "), start, start + n));
                }
            }
        }
        Analyzer::Char => {
            // Map character windows of the joined string back to the token
            // indices they overlap.
            let joined = tokens.join(" ");
            let chars: Vec<char> = joined.chars().collect();
            let mut owner = vec![usize::MAX; chars.len()];
            let mut pos = 0usize;
            for (tok_idx, tok) in tokens.iter().enumerate() {
                for _ in tok.chars() {
                    owner[pos] = tok_idx;
                    pos += 1;
                }
                if tok_idx + 1 < tokens.len() {
                    owner[pos] = usize::MAX; // separator space
                    pos += 1;
                }
            }
            for n in lo..=hi {
                if chars.len() < n {
                    break;
                }
                for start in 0..=(chars.len() - n) {
                    let gram: String = chars[start..start + n].iter().collect();
                    let covered: Vec<usize> = (start..start + n)
                        .map(|p| owner[p])
                        .filter(|&t| t != usize::MAX)
                        .collect();
                    if let (Some(&first), Some(&last)) = (covered.first(), covered.last()) {
                        out.push((gram, first, last + 1));
                    }
                }
            }
        }
    }
    out
}

/// Decomposes a document's decision into per-span contributions.
///
/// Feature j contributes w_j * x_j on the TF-IDF vector (over the selected
/// space); the contribution is split evenly across that feature's
/// occurrences so span values plus the bias reproduce the logit.
pub fn highlight_document(
    model: &LogisticModel,
    tfidf: &TfidfModel,
    selected: &[u32],
    tokens: &[String],
) -> Highlight {
    let full = crate::vectorize::transform_tfidf(tokens, tfidf);
    let projected = full.project(selected);
    let logit = projected.dot_dense(&model.w) + model.b;
    let p1 = sigmoid(logit);
    let predicted = u8::from(p1 > 0.5);

    // Occurrence spans per selected feature present in the document.
    let mut occurrences: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (gram, start, end) in ngrams_with_spans(
        tokens,
        tfidf.vocabulary.analyzer,
        tfidf.vocabulary.ngram_range,
    ) {
        if let Some(col) = tfidf.vocabulary.index_of(&gram) {
            if let Ok(sel_idx) = selected.binary_search(&(col as u32)) {
                occurrences.entry(sel_idx).or_default().push((start, end));
            }
        }
    }

    let mut spans = Vec::new();
    for (sel_idx, value) in projected.iter() {
        let contribution = model.w[sel_idx as usize] * value;
        if contribution == 0.0 {
            continue;
        }
        let occ = &occurrences[&(sel_idx as usize)];
        let share = contribution / occ.len() as f64;
        let term = &tfidf.vocabulary.terms[selected[sel_idx as usize] as usize];
        for &(start, end) in occ {
            spans.push(HighlightSpan {
                start,
                end,
                term: term.clone(),
                value: share,
            });
        }
    }
    spans.sort_by(|a, b| (a.start, a.end, &a.term).cmp(&(b.start, b.end, &b.term)));
    Highlight {
        spans,
        predicted,
        p1,
        bias: model.b,
        logit,
    }
}

/// Plain-text rendering with inline `[token:+0.00]` annotations.
pub fn render_highlight(tokens: &[String], highlight: &Highlight) -> String {
    let mut per_token = vec![0.0f64; tokens.len()];
    for span in &highlight.spans {
        let width = (span.end - span.start) as f64;
        for slot in per_token.iter_mut().take(span.end).skip(span.start) {
            *slot += span.value / width;
        }
    }
    let body: Vec<String> = tokens
        .iter()
        .zip(&per_token)
        .map(|(tok, &v)| {
            if v == 0.0 {
                tok.clone()
            } else {
                format!("[{tok}:{v:+.2}]")
            }
        })
        .collect();
    format!(
        "pred={} p1={:.3} logit={:+.4} bias={:+.4}\n{}\n",
        highlight.predicted,
        highlight.p1,
        highlight.logit,
        highlight.bias,
        body.join(" ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::{anova_f_select, fit_tfidf, transform_batch};

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    /// Tiny planted corpus: "alpha" marks class 1, "omega" class 0, with
    /// shared filler tokens.
    fn planted(n: usize, seed: u64) -> (Vec<Vec<String>>, Vec<u8>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fillers = ["red", "green", "blue", "cyan", "lime", "teal"];
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let marker = if label == 1 { "alpha" } else { "omega" };
            let mut words = vec![marker.to_string()];
            for _ in 0..6 {
                words.push(fillers[rng.gen_range(0..fillers.len())].to_string());
            }
            docs.push(words);
            labels.push(label);
        }
        (docs, labels)
    }

    struct Fitted {
        tfidf: TfidfModel,
        selected: Vec<u32>,
        model: LogisticModel,
        x: Vec<SparseVector>,
        y: Vec<u8>,
        terms: Vec<String>,
        docs: Vec<Vec<String>>,
    }

    fn fit_planted(n: usize, seed: u64) -> Fitted {
        let (docs, y) = planted(n, seed);
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let tfidf = fit_tfidf(&refs, Analyzer::Word, (1, 1), 1).unwrap();
        let full = transform_batch(&refs, &tfidf);
        let selector = anova_f_select(&full, &y, 8).unwrap();
        let x: Vec<SparseVector> = full.iter().map(|r| r.project(&selector.selected)).collect();
        let model = crate::linear::fit_logreg(&x, &y, &Default::default()).unwrap();
        let terms: Vec<String> = selector
            .selected
            .iter()
            .map(|&c| tfidf.vocabulary.terms[c as usize].clone())
            .collect();
        Fitted {
            tfidf,
            selected: selector.selected,
            model,
            x,
            y,
            terms,
            docs,
        }
    }

    #[test]
    fn zero_weight_feature_has_zero_importance() {
        let mut f = fit_planted(60, 1);
        f.model.w[1] = 0.0;
        let d = permutation_importance(&f.model, &f.x, &f.y, 1, 5, 42).unwrap();
        assert!(d.abs() < 1e-12, "importance {d}");
    }

    #[test]
    fn constant_column_short_circuits_to_zero() {
        let f = fit_planted(40, 2);
        // A feature index absent from every document: constant zeros.
        let dim = f.x[0].dim;
        let mut x = f.x.clone();
        for row in &mut x {
            row.set(dim as u32 - 1, 0.0);
        }
        let d = permutation_importance(&f.model, &x, &f.y, dim - 1, 3, 7).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn planted_token_has_largest_importance() {
        let f = fit_planted(120, 3);
        let features: Vec<usize> = (0..f.model.w.len()).collect();
        let weights = permutation_weights(&f.model, &f.x, &f.y, &features, 5, 11).unwrap();
        let best = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(
            f.terms[best] == "alpha" || f.terms[best] == "omega",
            "top feature {} with {weights:?}",
            f.terms[best]
        );
    }

    #[test]
    fn two_seeds_agree_within_tolerance() {
        let f = fit_planted(1000, 4);
        let marker = f.terms.iter().position(|t| t == "alpha").unwrap();
        let a = permutation_importance(&f.model, &f.x, &f.y, marker, 5, 1).unwrap();
        let b = permutation_importance(&f.model, &f.x, &f.y, marker, 5, 999).unwrap();
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn top_features_contains_planted_marker() {
        let f = fit_planted(120, 5);
        let (pos, neg) = top_features(
            &f.model,
            &f.terms,
            Some((&f.x, &f.y)),
            3,
            5,
            13,
        )
        .unwrap();
        let names: Vec<&str> = pos.iter().map(|w| w.term.as_str()).collect();
        assert!(names.contains(&"alpha"), "positive list {names:?}");
        assert!(!neg.is_empty());
    }

    #[test]
    fn top_features_handles_oversized_n_and_sorts() {
        let f = fit_planted(60, 6);
        let (pos, neg) =
            top_features(&f.model, &f.terms, None, 50, 0, 13).unwrap();
        assert_eq!(pos.len(), f.terms.len());
        assert_eq!(neg.len(), f.terms.len());
        for w in pos.windows(2) {
            assert!(
                w[0].weight > w[1].weight
                    || (w[0].weight == w[1].weight && w[0].term <= w[1].term)
            );
        }
        for w in neg.windows(2) {
            assert!(
                w[0].weight < w[1].weight
                    || (w[0].weight == w[1].weight && w[0].term <= w[1].term)
            );
        }
    }

    #[test]
    fn span_contributions_plus_bias_equal_logit() {
        let f = fit_planted(80, 7);
        for doc in f.docs.iter().take(30) {
            let h = highlight_document(&f.model, &f.tfidf, &f.selected, doc);
            let total: f64 = h.spans.iter().map(|s| s.value).sum();
            assert!(
                (total + h.bias - h.logit).abs() < 1e-9,
                "sum {total} + bias {} != logit {}",
                h.bias,
                h.logit
            );
        }
    }

    #[test]
    fn all_oov_document_is_bias_only() {
        let f = fit_planted(40, 8);
        let h = highlight_document(&f.model, &f.tfidf, &f.selected, &toks(&["zzz", "qqq"]));
        assert!(h.spans.is_empty());
        assert_eq!(h.logit, h.bias);
    }

    #[test]
    fn single_token_doc_carries_full_non_bias_logit() {
        let f = fit_planted(40, 9);
        let h = highlight_document(&f.model, &f.tfidf, &f.selected, &toks(&["alpha"]));
        assert_eq!(h.spans.len(), 1);
        assert!((h.spans[0].value - (h.logit - h.bias)).abs() < 1e-12);
    }

    #[test]
    fn char_analyzer_spans_map_to_tokens() {
        let docs = vec![toks(&["ab", "cd"])];
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let tfidf = fit_tfidf(&refs, Analyzer::Char, (2, 3), 1).unwrap();
        let grams = ngrams_with_spans(&docs[0], Analyzer::Char, (2, 3));
        // "b c" overlaps both tokens.
        let cross = grams.iter().find(|(g, _, _)| g == "b c").unwrap();
        assert_eq!((cross.1, cross.2), (0, 2));
        let first = grams.iter().find(|(g, _, _)| g == "ab").unwrap();
        assert_eq!((first.1, first.2), (0, 1));
        let _ = tfidf;
    }

    #[test]
    fn top_features_invariant_to_document_order() {
        let f = fit_planted(100, 10);
        let mut xr = f.x.clone();
        let mut yr = f.y.clone();
        xr.reverse();
        yr.reverse();
        let (pos_a, neg_a) =
            top_features(&f.model, &f.terms, Some((&f.x, &f.y)), 3, 0, 5).unwrap();
        let (pos_b, neg_b) =
            top_features(&f.model, &f.terms, Some((&xr, &yr)), 3, 0, 5).unwrap();
        let ta: Vec<&str> = pos_a.iter().map(|w| w.term.as_str()).collect();
        let tb: Vec<&str> = pos_b.iter().map(|w| w.term.as_str()).collect();
        assert_eq!(ta, tb);
        let na: Vec<&str> = neg_a.iter().map(|w| w.term.as_str()).collect();
        let nb: Vec<&str> = neg_b.iter().map(|w| w.term.as_str()).collect();
        assert_eq!(na, nb);
    }

    #[test]
    fn render_includes_bracketed_annotations() {
        let f = fit_planted(40, 12);
        let doc = toks(&["alpha", "red"]);
        let h = highlight_document(&f.model, &f.tfidf, &f.selected, &doc);
        let text = render_highlight(&doc, &h);
        assert!(text.contains("[alpha:"), "{text}");
    }
}
