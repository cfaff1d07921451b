//! Contextual-encoder pathway: a frozen pretrained transformer produces
//! pooled sequence vectors, and a small dense head is trained on top.
//!
//! The encoder is abstract: the real transformer loads a named-tensor
//! weight archive, while [`make_stub_encoder`] gives a deterministic,
//! hermetic substitute for tests and offline runs.

mod head;
mod stub;
mod tokenizer;
mod transformer;

pub use head::{fit_head, head_gradients, predict_head, HeadConfig, HeadModel};
pub use stub::{make_stub_encoder, StubEncoder};
pub use tokenizer::WordPieceTokenizer;
pub use transformer::{masked_softmax_rows, normalize_rows, TransformerConfig, TransformerEncoder};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// A deterministic context-dependent encoder: subword tokenization plus a
/// map from id sequences to per-position hidden states.
pub trait ContextualEncoder: Sync {
    fn hidden_size(&self) -> usize;
    fn pad_id(&self) -> usize;
    fn begin_id(&self) -> usize;
    fn end_id(&self) -> usize;
    /// Subword ids for raw text, without begin/end markers or padding.
    fn subword_ids(&self, text: &str) -> Vec<usize>;
    /// Hidden states, one row per input position.
    fn encode(&self, ids: &[usize], mask: &[bool]) -> Array2<f64>;
}

/// How per-position hidden states collapse to one sequence vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// The first position's hidden state (the begin marker).
    FirstToken,
    /// Mean over unmasked positions.
    Mean,
}

impl Pooling {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first" | "first-token" => Some(Pooling::FirstToken),
            "mean" => Some(Pooling::Mean),
            _ => None,
        }
    }
}

/// Encoder-side settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub max_tokens: usize,
    pub pooling: Pooling,
    pub frozen: bool,
    pub weights_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            max_tokens: 32,
            pooling: Pooling::FirstToken,
            frozen: true,
            weights_path: None,
            vocab_path: None,
        }
    }
}

/// Begin marker + subword ids + end marker, truncated to `max_tokens` and
/// padded with the pad id; the mask marks non-pad positions.
pub fn tokenize_truncate(
    text: &str,
    encoder: &dyn ContextualEncoder,
    max_tokens: usize,
) -> Result<(Vec<usize>, Vec<bool>)> {
    if max_tokens < 2 {
        return Err(Error::Config(format!(
            "max_tokens must leave room for the begin/end markers, got {max_tokens}"
        )));
    }
    let mut ids = Vec::with_capacity(max_tokens);
    ids.push(encoder.begin_id());
    for id in encoder.subword_ids(text).into_iter().take(max_tokens - 2) {
        ids.push(id);
    }
    ids.push(encoder.end_id());
    let real = ids.len();
    ids.resize(max_tokens, encoder.pad_id());
    let mask: Vec<bool> = (0..max_tokens).map(|p| p < real).collect();
    Ok((ids, mask))
}

/// Runs the encoder and pools the hidden states to a single H-vector.
pub fn encode_pool(
    ids: &[usize],
    mask: &[bool],
    encoder: &dyn ContextualEncoder,
    pooling: Pooling,
) -> Array1<f64> {
    let states = encoder.encode(ids, mask);
    match pooling {
        Pooling::FirstToken => states.row(0).to_owned(),
        Pooling::Mean => {
            let mut acc = Array1::zeros(states.ncols());
            let mut n = 0usize;
            for (p, &live) in mask.iter().enumerate() {
                if live {
                    acc += &states.row(p);
                    n += 1;
                }
            }
            if n > 0 {
                acc /= n as f64;
            }
            acc
        }
    }
}
