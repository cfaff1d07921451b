//! Inference for a distilled BERT-style encoder loaded from a tensor
//! archive: token + position embeddings, N layers of multi-head
//! self-attention with residuals and layer norm, and GELU feed-forward
//! blocks. Architecture constants come from the archive's config entry,
//! not from hard-coded assumptions.

use super::tokenizer::WordPieceTokenizer;
use super::ContextualEncoder;
use crate::artifact::{read_tensor_archive, write_tensor_archive, Tensor};
use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden: usize,
    pub intermediate: usize,
    pub vocab_size: usize,
    pub max_position: usize,
    pub layer_norm_eps: f64,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    q_w: Array2<f64>,
    q_b: Array1<f64>,
    k_w: Array2<f64>,
    k_b: Array1<f64>,
    v_w: Array2<f64>,
    v_b: Array1<f64>,
    out_w: Array2<f64>,
    out_b: Array1<f64>,
    ln1_g: Array1<f64>,
    ln1_b: Array1<f64>,
    ff1_w: Array2<f64>,
    ff1_b: Array1<f64>,
    ff2_w: Array2<f64>,
    ff2_b: Array1<f64>,
    ln2_g: Array1<f64>,
    ln2_b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    pub config: TransformerConfig,
    tokenizer: WordPieceTokenizer,
    word_emb: Array2<f64>,
    pos_emb: Array2<f64>,
    emb_ln_g: Array1<f64>,
    emb_ln_b: Array1<f64>,
    layers: Vec<EncoderLayer>,
}

/// Row-wise standardization to mean 0 / variance 1 (the pre-affine part of
/// layer norm).
pub fn normalize_rows(x: &Array2<f64>, eps: f64) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let denom = (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) / denom);
    }
    out
}

fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>, eps: f64) -> Array2<f64> {
    let mut out = normalize_rows(x, eps);
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * gamma[j] + beta[j];
        }
    }
    out
}

/// Softmax over each row, restricted to unmasked key columns; masked
/// columns receive exactly 0.
pub fn masked_softmax_rows(scores: &Array2<f64>, key_mask: &[bool]) -> Array2<f64> {
    let mut out = Array2::zeros(scores.raw_dim());
    for (mut orow, srow) in out.rows_mut().into_iter().zip(scores.rows()) {
        let live: Vec<usize> = (0..srow.len()).filter(|&j| key_mask[j]).collect();
        if live.is_empty() {
            continue;
        }
        let max = live.iter().map(|&j| srow[j]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &j in &live {
            let e = (srow[j] - max).exp();
            orow[j] = e;
            z += e;
        }
        for &j in &live {
            orow[j] /= z;
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

impl TransformerEncoder {
    /// Loads weights and the subword vocabulary. Every tensor is checked
    /// against the config-derived shape; mismatches name the tensor.
    pub fn load(weights: &Path, vocab: &Path) -> Result<Self> {
        let tokenizer = WordPieceTokenizer::load(vocab)?;
        let (config_json, tensors) = read_tensor_archive(weights)?;
        let config: TransformerConfig = serde_json::from_value(config_json)
            .map_err(|e| Error::Artifact(format!("{}: bad config entry: {e}", weights.display())))?;
        if config.hidden % config.n_heads != 0 {
            return Err(Error::Artifact(format!(
                "hidden width {} not divisible by {} heads",
                config.hidden, config.n_heads
            )));
        }
        let map: std::collections::HashMap<String, Tensor> = tensors.into_iter().collect();
        let get2 = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
            let t = map
                .get(name)
                .ok_or_else(|| Error::Artifact(format!("missing tensor {name:?}")))?;
            if t.shape != [rows, cols] {
                return Err(Error::Artifact(format!(
                    "tensor {name:?}: expected shape [{rows}, {cols}], found {:?}",
                    t.shape
                )));
            }
            t.to_array2(name)
        };
        let get1 = |name: &str, len: usize| -> Result<Array1<f64>> {
            let t = map
                .get(name)
                .ok_or_else(|| Error::Artifact(format!("missing tensor {name:?}")))?;
            if t.shape != [len] {
                return Err(Error::Artifact(format!(
                    "tensor {name:?}: expected shape [{len}], found {:?}",
                    t.shape
                )));
            }
            t.to_array1(name)
        };

        let h = config.hidden;
        let inter = config.intermediate;
        let word_emb = get2("embeddings.word", config.vocab_size, h)?;
        let pos_emb = get2("embeddings.position", config.max_position, h)?;
        let emb_ln_g = get1("embeddings.ln.weight", h)?;
        let emb_ln_b = get1("embeddings.ln.bias", h)?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let p = |suffix: &str| format!("layer{i}.{suffix}");
            layers.push(EncoderLayer {
                q_w: get2(&p("attn.q.weight"), h, h)?,
                q_b: get1(&p("attn.q.bias"), h)?,
                k_w: get2(&p("attn.k.weight"), h, h)?,
                k_b: get1(&p("attn.k.bias"), h)?,
                v_w: get2(&p("attn.v.weight"), h, h)?,
                v_b: get1(&p("attn.v.bias"), h)?,
                out_w: get2(&p("attn.out.weight"), h, h)?,
                out_b: get1(&p("attn.out.bias"), h)?,
                ln1_g: get1(&p("ln1.weight"), h)?,
                ln1_b: get1(&p("ln1.bias"), h)?,
                ff1_w: get2(&p("ffn.lin1.weight"), inter, h)?,
                ff1_b: get1(&p("ffn.lin1.bias"), inter)?,
                ff2_w: get2(&p("ffn.lin2.weight"), h, inter)?,
                ff2_b: get1(&p("ffn.lin2.bias"), h)?,
                ln2_g: get1(&p("ln2.weight"), h)?,
                ln2_b: get1(&p("ln2.bias"), h)?,
            });
        }
        if tokenizer.vocab_len() > config.vocab_size {
            return Err(Error::Artifact(format!(
                "vocabulary has {} entries but the embedding table holds {}",
                tokenizer.vocab_len(),
                config.vocab_size
            )));
        }
        Ok(TransformerEncoder {
            config,
            tokenizer,
            word_emb,
            pos_emb,
            emb_ln_g,
            emb_ln_b,
            layers,
        })
    }

    /// Serializes weights to a tensor archive readable by [`Self::load`].
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<(String, Tensor)> = vec![
            ("embeddings.word".into(), Tensor::from_array2(&self.word_emb)),
            ("embeddings.position".into(), Tensor::from_array2(&self.pos_emb)),
            ("embeddings.ln.weight".into(), Tensor::from_array1(&self.emb_ln_g)),
            ("embeddings.ln.bias".into(), Tensor::from_array1(&self.emb_ln_b)),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |suffix: &str| format!("layer{i}.{suffix}");
            tensors.push((p("attn.q.weight"), Tensor::from_array2(&l.q_w)));
            tensors.push((p("attn.q.bias"), Tensor::from_array1(&l.q_b)));
            tensors.push((p("attn.k.weight"), Tensor::from_array2(&l.k_w)));
            tensors.push((p("attn.k.bias"), Tensor::from_array1(&l.k_b)));
            tensors.push((p("attn.v.weight"), Tensor::from_array2(&l.v_w)));
            tensors.push((p("attn.v.bias"), Tensor::from_array1(&l.v_b)));
            tensors.push((p("attn.out.weight"), Tensor::from_array2(&l.out_w)));
            tensors.push((p("attn.out.bias"), Tensor::from_array1(&l.out_b)));
            tensors.push((p("ln1.weight"), Tensor::from_array1(&l.ln1_g)));
            tensors.push((p("ln1.bias"), Tensor::from_array1(&l.ln1_b)));
            tensors.push((p("ffn.lin1.weight"), Tensor::from_array2(&l.ff1_w)));
            tensors.push((p("ffn.lin1.bias"), Tensor::from_array1(&l.ff1_b)));
            tensors.push((p("ffn.lin2.weight"), Tensor::from_array2(&l.ff2_w)));
            tensors.push((p("ffn.lin2.bias"), Tensor::from_array1(&l.ff2_b)));
            tensors.push((p("ln2.weight"), Tensor::from_array1(&l.ln2_g)));
            tensors.push((p("ln2.bias"), Tensor::from_array1(&l.ln2_b)));
        }
        let config = serde_json::to_value(&self.config)
            .map_err(|e| Error::Artifact(e.to_string()))?;
        write_tensor_archive(path, &config, &tensors)
    }

    /// Randomly initialized encoder; test and tooling constructor.
    pub fn random(config: TransformerConfig, tokenizer: WordPieceTokenizer, seed: u64) -> Self {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let mut mat = |rows: usize, cols: usize| {
            let scale = (1.0 / cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
        };
        let word_emb = mat(config.vocab_size, h);
        let pos_emb = mat(config.max_position, h);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer {
                q_w: mat(h, h),
                q_b: Array1::zeros(h),
                k_w: mat(h, h),
                k_b: Array1::zeros(h),
                v_w: mat(h, h),
                v_b: Array1::zeros(h),
                out_w: mat(h, h),
                out_b: Array1::zeros(h),
                ln1_g: Array1::ones(h),
                ln1_b: Array1::zeros(h),
                ff1_w: mat(config.intermediate, h),
                ff1_b: Array1::zeros(config.intermediate),
                ff2_w: mat(h, config.intermediate),
                ff2_b: Array1::zeros(h),
                ln2_g: Array1::ones(h),
                ln2_b: Array1::zeros(h),
            })
            .collect();
        TransformerEncoder {
            emb_ln_g: Array1::ones(h),
            emb_ln_b: Array1::zeros(h),
            config,
            tokenizer,
            word_emb,
            pos_emb,
            layers,
        }
    }

    fn attention(&self, layer: &EncoderLayer, x: &Array2<f64>, mask: &[bool]) -> Array2<f64> {
        let l = x.nrows();
        let h = self.config.hidden;
        let heads = self.config.n_heads;
        let dh = h / heads;
        let q = x.dot(&layer.q_w.t()) + &layer.q_b;
        let k = x.dot(&layer.k_w.t()) + &layer.k_b;
        let v = x.dot(&layer.v_w.t()) + &layer.v_b;
        let mut ctx = Array2::zeros((l, h));
        for head in 0..heads {
            let cols = s![.., head * dh..(head + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let scores = qh.dot(&kh.t()) / (dh as f64).sqrt();
            let attn = masked_softmax_rows(&scores, mask);
            let ctx_h = attn.dot(&vh);
            ctx.slice_mut(cols).assign(&ctx_h);
        }
        ctx.dot(&layer.out_w.t()) + &layer.out_b
    }
}

impl ContextualEncoder for TransformerEncoder {
    fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    fn pad_id(&self) -> usize {
        self.tokenizer.pad_id
    }

    fn begin_id(&self) -> usize {
        self.tokenizer.begin_id
    }

    fn end_id(&self) -> usize {
        self.tokenizer.end_id
    }

    fn subword_ids(&self, text: &str) -> Vec<usize> {
        self.tokenizer.encode_text(text)
    }

    fn encode(&self, ids: &[usize], mask: &[bool]) -> Array2<f64> {
        let l = ids.len();
        assert!(
            l <= self.config.max_position,
            "sequence of {l} exceeds the {}-position table",
            self.config.max_position
        );
        let h = self.config.hidden;
        let eps = self.config.layer_norm_eps;
        let mut x = Array2::zeros((l, h));
        for (p, &id) in ids.iter().enumerate() {
            let row = &self.word_emb.row(id) + &self.pos_emb.row(p);
            x.row_mut(p).assign(&row);
        }
        x = layer_norm(&x, &self.emb_ln_g, &self.emb_ln_b, eps);
        for layer in &self.layers {
            let attn_out = self.attention(layer, &x, mask);
            x = layer_norm(&(&x + &attn_out), &layer.ln1_g, &layer.ln1_b, eps);
            let ff = x.dot(&layer.ff1_w.t()) + &layer.ff1_b;
            let ff = ff.mapv(gelu);
            let ff = ff.dot(&layer.ff2_w.t()) + &layer.ff2_b;
            x = layer_norm(&(&x + &ff), &layer.ln2_g, &layer.ln2_b, eps);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoderhead::tokenize_truncate;

    fn tiny_vocab() -> WordPieceTokenizer {
        let words = [
            "[PAD]", "[UNK]", "[CLS]", "[SEP]", "alpha", "beta", "gamma", "delta", "##s",
        ];
        WordPieceTokenizer::from_lines(words.iter().map(|s| s.to_string())).unwrap()
    }

    fn tiny_config() -> TransformerConfig {
        TransformerConfig {
            n_layers: 2,
            n_heads: 2,
            hidden: 8,
            intermediate: 16,
            vocab_size: 16,
            max_position: 16,
            layer_norm_eps: 1e-12,
        }
    }

    #[test]
    fn normalize_rows_gives_zero_mean_unit_variance() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((5, 64), |_| rng.gen_range(-3.0..3.0));
        let out = normalize_rows(&x, 1e-12);
        for row in out.rows() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn attention_rows_sum_to_one_over_unmasked() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let scores = Array2::from_shape_fn((6, 6), |_| rng.gen_range(-4.0..4.0));
        let mask = vec![true, true, true, true, false, false];
        let attn = masked_softmax_rows(&scores, &mask);
        for row in attn.rows() {
            let total: f64 = row.sum();
            assert!((total - 1.0).abs() < 1e-9, "row sum {total}");
            assert_eq!(row[4], 0.0);
            assert_eq!(row[5], 0.0);
        }
    }

    #[test]
    fn save_load_roundtrip_reproduces_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let weights = dir.path().join("enc.bin");
        let vocab_path = dir.path().join("vocab.txt");
        std::fs::write(
            &vocab_path,
            "[PAD]\n[UNK]\n[CLS]\n[SEP]\nalpha\nbeta\ngamma\ndelta\n##s\n",
        )
        .unwrap();
        let enc = TransformerEncoder::random(tiny_config(), tiny_vocab(), 5);
        enc.save_weights(&weights).unwrap();
        let loaded = TransformerEncoder::load(&weights, &vocab_path).unwrap();
        let (ids, mask) = tokenize_truncate("alpha beta gammas", &enc, 10).unwrap();
        let a = enc.encode(&ids, &mask);
        let b = loaded.encode(&ids, &mask);
        assert_eq!(a, b, "loaded weights must reproduce the encoding exactly");
    }

    #[test]
    fn deterministic_same_text_same_states() {
        let enc = TransformerEncoder::random(tiny_config(), tiny_vocab(), 8);
        let (ids, mask) = tokenize_truncate("alpha delta", &enc, 8).unwrap();
        assert_eq!(enc.encode(&ids, &mask), enc.encode(&ids, &mask));
    }

    #[test]
    fn pads_do_not_leak_into_real_positions() {
        let enc = TransformerEncoder::random(tiny_config(), tiny_vocab(), 9);
        let (ids_a, mask_a) = tokenize_truncate("alpha beta", &enc, 6).unwrap();
        let (ids_b, mask_b) = tokenize_truncate("alpha beta", &enc, 12).unwrap();
        let a = enc.encode(&ids_a, &mask_a);
        let b = enc.encode(&ids_b, &mask_b);
        for p in 0..4 {
            for j in 0..8 {
                assert!(
                    (a[[p, j]] - b[[p, j]]).abs() < 1e-9,
                    "position {p} column {j} differs with extra padding"
                );
            }
        }
    }

    #[test]
    fn shape_mismatch_errors_name_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let weights = dir.path().join("enc.bin");
        let vocab_path = dir.path().join("vocab.txt");
        std::fs::write(
            &vocab_path,
            "[PAD]\n[UNK]\n[CLS]\n[SEP]\nalpha\nbeta\ngamma\ndelta\n##s\n",
        )
        .unwrap();
        let enc = TransformerEncoder::random(tiny_config(), tiny_vocab(), 5);
        enc.save_weights(&weights).unwrap();
        // Corrupt: rewrite with one tensor's shape lying about its size.
        let (cfg, mut tensors) = read_tensor_archive(&weights).unwrap();
        for (name, t) in &mut tensors {
            if name == "layer0.attn.q.weight" {
                t.shape = vec![4, 4];
                t.data.truncate(16);
            }
        }
        write_tensor_archive(&weights, &cfg, &tensors).unwrap();
        let err = TransformerEncoder::load(&weights, &vocab_path).unwrap_err();
        assert!(
            err.to_string().contains("layer0.attn.q.weight"),
            "error must name the tensor: {err}"
        );
    }
}
