//! Model families behind one interface: fold-level training for
//! cross-validation, full-corpus training, prediction, and artifact
//! round-trips.
//!
//! Label-free preparation (skip-gram embeddings, encoder forward passes)
//! happens once per corpus before cross-validation; per-fold work uses
//! seeds derived from the fold index so parallel and serial runs agree.

use crate::artifact::{ModelArtifact, Tensor};
use crate::corpus::{stratified_split, Dataset, Task};
use crate::encoderhead::{
    encode_pool, fit_head, make_stub_encoder, predict_head, tokenize_truncate, ContextualEncoder,
    EncoderConfig, HeadConfig, HeadModel, Pooling, StubEncoder, TransformerEncoder,
};
use crate::error::{Error, Result};
use crate::eval::{majority_baseline, FoldModel, MajorityModel};
use crate::linear::{fit_logreg, predict as predict_linear, LogisticModel, TrainConfig};
use crate::par;
use crate::seqnet::{
    fit_seqnet, seqnet_forward, SeqNetDims, SeqNetModel, SeqTrainConfig,
};
use crate::vectorize::{
    anova_f_select, fit_tfidf, transform_batch, transform_tfidf, Analyzer, BowConfig,
    SparseVector, TfidfModel,
};
use crate::word2vec::{embed_sequence, train_skipgram, EmbeddingTable, W2vConfig, W2vVocab};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::PathBuf;

/// Where encoder weights come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EncoderSource {
    Stub { seed: u64, hidden: usize },
    Archive { weights: PathBuf, vocab: PathBuf },
}

#[derive(Debug, Clone)]
pub struct LstmSpec {
    pub w2v: W2vConfig,
    pub dims: SeqNetDims,
    pub dropout: f64,
    pub train: SeqTrainConfig,
    /// Fraction of fold-training data held out for early stopping.
    pub inner_dev: f64,
}

impl Default for LstmSpec {
    fn default() -> Self {
        let w2v = W2vConfig::default();
        let dims = SeqNetDims {
            input: w2v.dim,
            ..SeqNetDims::default()
        };
        LstmSpec {
            w2v,
            dims,
            dropout: 0.2,
            train: SeqTrainConfig::default(),
            inner_dev: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderSpec {
    pub source: EncoderSource,
    pub max_tokens: usize,
    pub pooling: Pooling,
    pub head: HeadConfig,
    pub inner_dev: f64,
}

impl EncoderSpec {
    pub fn stub(seed: u64, hidden: usize) -> Self {
        EncoderSpec {
            source: EncoderSource::Stub { seed, hidden },
            max_tokens: EncoderConfig::default().max_tokens,
            pooling: Pooling::FirstToken,
            head: HeadConfig::default(),
            inner_dev: 0.15,
        }
    }
}

/// One of the model families under evaluation.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Majority,
    Bow { config: BowConfig, k: usize },
    Lstm(LstmSpec),
    Encoder(EncoderSpec),
}

impl ModelSpec {
    pub fn model_id(&self) -> String {
        match self {
            ModelSpec::Majority => "majority".into(),
            ModelSpec::Bow { config, .. } => match config.analyzer {
                Analyzer::Word => "bow-word".into(),
                Analyzer::Char => "bow-char".into(),
            },
            ModelSpec::Lstm(_) => "lstm".into(),
            ModelSpec::Encoder(_) => "encoder".into(),
        }
    }
}

enum EncoderInstance {
    Stub(StubEncoder),
    Archive(TransformerEncoder),
}

impl EncoderInstance {
    fn build(source: &EncoderSource) -> Result<Self> {
        Ok(match source {
            EncoderSource::Stub { seed, hidden } => {
                EncoderInstance::Stub(make_stub_encoder(*seed, *hidden))
            }
            EncoderSource::Archive { weights, vocab } => {
                EncoderInstance::Archive(TransformerEncoder::load(weights, vocab)?)
            }
        })
    }

    fn as_encoder(&self) -> &dyn ContextualEncoder {
        match self {
            EncoderInstance::Stub(e) => e,
            EncoderInstance::Archive(e) => e,
        }
    }
}

enum Shared {
    None,
    Embeddings(EmbeddingTable),
    /// Pooled vector per record, in record order.
    Encoded(Array2<f64>),
}

/// A model spec plus its label-free per-corpus precomputations.
pub struct Prepared<'a> {
    spec: &'a ModelSpec,
    shared: Shared,
}

/// Runs the label-free preparation: skip-gram embeddings for the LSTM,
/// encoder forward passes for the head model.
pub fn prepare<'a>(spec: &'a ModelSpec, ds: &Dataset) -> Result<Prepared<'a>> {
    let shared = match spec {
        ModelSpec::Majority | ModelSpec::Bow { .. } => Shared::None,
        ModelSpec::Lstm(lstm) => {
            let docs = ds.token_lists();
            Shared::Embeddings(train_skipgram(&docs, &lstm.w2v)?)
        }
        ModelSpec::Encoder(enc) => {
            let instance = EncoderInstance::build(&enc.source)?;
            Shared::Encoded(encode_dataset(
                ds,
                instance.as_encoder(),
                enc.max_tokens,
                enc.pooling,
            )?)
        }
    };
    Ok(Prepared { spec, shared })
}

fn encode_dataset(
    ds: &Dataset,
    encoder: &dyn ContextualEncoder,
    max_tokens: usize,
    pooling: Pooling,
) -> Result<Array2<f64>> {
    let texts: Vec<String> = ds
        .records()
        .iter()
        .map(|(d, _)| d.tokens.join(" "))
        .collect();
    let rows: Vec<Result<Array1<f64>>> = par::map_slice(&texts, |text| {
        let (ids, mask) = tokenize_truncate(text, encoder, max_tokens)?;
        Ok(encode_pool(&ids, &mask, encoder, pooling))
    });
    let mut out = Array2::zeros((ds.len(), encoder.hidden_size()));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&row?);
    }
    Ok(out)
}

/// Splits fold-training indices into (inner train, inner dev), stratified
/// by the task label.
fn inner_split(
    ds: &Dataset,
    train: &[usize],
    task: Task,
    ratio: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let items: Vec<(String, u8)> = train
        .iter()
        .map(|&i| {
            let (doc, labels) = &ds.records()[i];
            (doc.id.clone(), labels.get(task))
        })
        .collect();
    let (dev_ids, train_ids) = stratified_split(&items, ratio, seed);
    let index_of: std::collections::HashMap<&str, usize> = train
        .iter()
        .map(|&i| (ds.records()[i].0.id.as_str(), i))
        .collect();
    let to_indices =
        |ids: &[String]| -> Vec<usize> { ids.iter().map(|id| index_of[id.as_str()]).collect() };
    (to_indices(&train_ids), to_indices(&dev_ids))
}

impl Prepared<'_> {
    fn run_bow(
        &self,
        ds: &Dataset,
        config: &BowConfig,
        k: usize,
        train: &[usize],
        test: &[usize],
        task: Task,
    ) -> Result<Vec<u8>> {
        let train_docs: Vec<&[String]> = train
            .iter()
            .map(|&i| ds.records()[i].0.tokens.as_slice())
            .collect();
        let train_labels: Vec<u8> = train.iter().map(|&i| ds.records()[i].1.get(task)).collect();
        let tfidf = fit_tfidf(&train_docs, config.analyzer, config.ngram_range, config.min_df)?;
        let train_x_full = transform_batch(&train_docs, &tfidf);
        let selector = anova_f_select(&train_x_full, &train_labels, k)?;
        let train_x: Vec<SparseVector> = train_x_full
            .iter()
            .map(|r| r.project(&selector.selected))
            .collect();
        let logreg_cfg = TrainConfig {
            l2_lambda: config.l2_lambda,
            ..TrainConfig::default()
        };
        let model = fit_logreg(&train_x, &train_labels, &logreg_cfg)?;
        Ok(test
            .iter()
            .map(|&i| {
                let v = transform_tfidf(&ds.records()[i].0.tokens, &tfidf)
                    .project(&selector.selected);
                predict_linear(&model, &v).1
            })
            .collect())
    }

    fn run_lstm(
        &self,
        ds: &Dataset,
        spec: &LstmSpec,
        train: &[usize],
        test: &[usize],
        task: Task,
        seed: u64,
    ) -> Result<Vec<u8>> {
        let Shared::Embeddings(table) = &self.shared else {
            return Err(Error::Config("lstm spec prepared without embeddings".into()));
        };
        let (inner_train, inner_dev) = inner_split(ds, train, task, spec.inner_dev, seed);
        let embed = |idx: &[usize]| -> (Vec<(Array2<f64>, Vec<bool>)>, Vec<u8>) {
            let xs = idx
                .iter()
                .map(|&i| embed_sequence(table, &ds.records()[i].0.tokens, spec.train.max_len))
                .collect();
            let ys = idx.iter().map(|&i| ds.records()[i].1.get(task)).collect();
            (xs, ys)
        };
        let (train_x, train_y) = embed(&inner_train);
        let (dev_x, dev_y) = embed(&inner_dev);
        let net = SeqNetModel::new(spec.dims, spec.dropout, seed.wrapping_add(1));
        let config = SeqTrainConfig {
            seed,
            ..spec.train.clone()
        };
        let fitted = fit_seqnet(net, &train_x, &train_y, &dev_x, &dev_y, &config)?;
        Ok(test
            .iter()
            .map(|&i| {
                let (x, mask) =
                    embed_sequence(table, &ds.records()[i].0.tokens, spec.train.max_len);
                let out = seqnet_forward(&fitted, &x, &mask, false, None);
                u8::from(out.probs[1] > 0.5)
            })
            .collect())
    }

    fn run_encoder(
        &self,
        ds: &Dataset,
        spec: &EncoderSpec,
        train: &[usize],
        test: &[usize],
        task: Task,
        seed: u64,
    ) -> Result<Vec<u8>> {
        let Shared::Encoded(vectors) = &self.shared else {
            return Err(Error::Config("encoder spec prepared without vectors".into()));
        };
        let (inner_train, inner_dev) = inner_split(ds, train, task, spec.inner_dev, seed);
        let gather = |idx: &[usize]| -> (Array2<f64>, Vec<u8>) {
            let mut x = Array2::zeros((idx.len(), vectors.ncols()));
            for (row, &i) in idx.iter().enumerate() {
                x.row_mut(row).assign(&vectors.row(i));
            }
            let y = idx.iter().map(|&i| ds.records()[i].1.get(task)).collect();
            (x, y)
        };
        let (train_x, train_y) = gather(&inner_train);
        let (dev_x, dev_y) = gather(&inner_dev);
        let config = HeadConfig {
            seed,
            ..spec.head.clone()
        };
        let head = fit_head(&train_x, &train_y, &dev_x, &dev_y, &config)?;
        Ok(test
            .iter()
            .map(|&i| {
                let p = predict_head(&head, &vectors.row(i).to_owned());
                u8::from(p[1] > 0.5)
            })
            .collect())
    }
}

impl FoldModel for Prepared<'_> {
    fn model_id(&self) -> String {
        self.spec.model_id()
    }

    fn run_fold(
        &self,
        ds: &Dataset,
        train: &[usize],
        test: &[usize],
        task: Task,
        seed: u64,
    ) -> Result<Vec<u8>> {
        match self.spec {
            ModelSpec::Majority => {
                let labels: Vec<u8> =
                    train.iter().map(|&i| ds.records()[i].1.get(task)).collect();
                let model = majority_baseline(&labels)?;
                Ok(vec![model.predict(); test.len()])
            }
            ModelSpec::Bow { config, k } => self.run_bow(ds, config, *k, train, test, task),
            ModelSpec::Lstm(spec) => self.run_lstm(ds, spec, train, test, task, seed),
            ModelSpec::Encoder(spec) => self.run_encoder(ds, spec, train, test, task, seed),
        }
    }
}

/// A fully trained model ready for prediction and serialization.
pub enum TrainedModel {
    Majority(MajorityModel),
    Bow(BowBundle),
    Lstm(LstmBundle),
    Encoder(EncoderBundle),
}

pub struct BowBundle {
    pub config: BowConfig,
    pub k: usize,
    pub tfidf: TfidfModel,
    pub selected: Vec<u32>,
    pub model: LogisticModel,
}

impl BowBundle {
    /// Term string per selected feature (model weight order).
    pub fn selected_terms(&self) -> Vec<String> {
        self.selected
            .iter()
            .map(|&c| self.tfidf.vocabulary.terms[c as usize].clone())
            .collect()
    }

    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        transform_tfidf(tokens, &self.tfidf).project(&self.selected)
    }
}

pub struct LstmBundle {
    pub table: EmbeddingTable,
    pub net: SeqNetModel,
    pub dims: SeqNetDims,
    pub dropout: f64,
    pub max_len: usize,
}

pub struct EncoderBundle {
    pub source: EncoderSource,
    pub pooling: Pooling,
    pub max_tokens: usize,
    pub head: HeadModel,
    instance: EncoderInstance,
}

/// Trains the spec on the full dataset for one task.
pub fn train_full(
    spec: &ModelSpec,
    ds: &Dataset,
    task: Task,
    seed: u64,
) -> Result<TrainedModel> {
    let all: Vec<usize> = (0..ds.len()).collect();
    match spec {
        ModelSpec::Majority => {
            let labels = ds.labels(task);
            Ok(TrainedModel::Majority(majority_baseline(&labels)?))
        }
        ModelSpec::Bow { config, k } => {
            let docs = ds.token_lists();
            let labels = ds.labels(task);
            let tfidf = fit_tfidf(&docs, config.analyzer, config.ngram_range, config.min_df)?;
            let x_full = transform_batch(&docs, &tfidf);
            let selector = anova_f_select(&x_full, &labels, *k)?;
            let x: Vec<SparseVector> =
                x_full.iter().map(|r| r.project(&selector.selected)).collect();
            let logreg_cfg = TrainConfig {
                l2_lambda: config.l2_lambda,
                ..TrainConfig::default()
            };
            let model = fit_logreg(&x, &labels, &logreg_cfg)?;
            Ok(TrainedModel::Bow(BowBundle {
                config: config.clone(),
                k: *k,
                tfidf,
                selected: selector.selected,
                model,
            }))
        }
        ModelSpec::Lstm(lstm) => {
            let prepared = prepare(spec, ds)?;
            let Shared::Embeddings(table) = prepared.shared else {
                unreachable!()
            };
            let (inner_train, inner_dev) = inner_split(ds, &all, task, lstm.inner_dev, seed);
            let embed = |idx: &[usize]| -> (Vec<(Array2<f64>, Vec<bool>)>, Vec<u8>) {
                let xs = idx
                    .iter()
                    .map(|&i| {
                        embed_sequence(&table, &ds.records()[i].0.tokens, lstm.train.max_len)
                    })
                    .collect();
                let ys = idx.iter().map(|&i| ds.records()[i].1.get(task)).collect();
                (xs, ys)
            };
            let (train_x, train_y) = embed(&inner_train);
            let (dev_x, dev_y) = embed(&inner_dev);
            let net = SeqNetModel::new(lstm.dims, lstm.dropout, seed.wrapping_add(1));
            let config = SeqTrainConfig {
                seed,
                ..lstm.train.clone()
            };
            let fitted = fit_seqnet(net, &train_x, &train_y, &dev_x, &dev_y, &config)?;
            Ok(TrainedModel::Lstm(LstmBundle {
                table,
                net: fitted,
                dims: lstm.dims,
                dropout: lstm.dropout,
                max_len: lstm.train.max_len,
            }))
        }
        ModelSpec::Encoder(enc) => {
            let instance = EncoderInstance::build(&enc.source)?;
            let vectors = encode_dataset(ds, instance.as_encoder(), enc.max_tokens, enc.pooling)?;
            let (inner_train, inner_dev) = inner_split(ds, &all, task, enc.inner_dev, seed);
            let gather = |idx: &[usize]| -> (Array2<f64>, Vec<u8>) {
                let mut x = Array2::zeros((idx.len(), vectors.ncols()));
                for (row, &i) in idx.iter().enumerate() {
                    x.row_mut(row).assign(&vectors.row(i));
                }
                (x, idx.iter().map(|&i| ds.records()[i].1.get(task)).collect())
            };
            let (train_x, train_y) = gather(&inner_train);
            let (dev_x, dev_y) = gather(&inner_dev);
            let config = HeadConfig {
                seed,
                ..enc.head.clone()
            };
            let head = fit_head(&train_x, &train_y, &dev_x, &dev_y, &config)?;
            Ok(TrainedModel::Encoder(EncoderBundle {
                source: enc.source.clone(),
                pooling: enc.pooling,
                max_tokens: enc.max_tokens,
                head,
                instance,
            }))
        }
    }
}

impl TrainedModel {
    pub fn model_id(&self) -> &'static str {
        match self {
            TrainedModel::Majority(_) => "majority",
            TrainedModel::Bow(b) => match b.config.analyzer {
                Analyzer::Word => "bow-word",
                Analyzer::Char => "bow-char",
            },
            TrainedModel::Lstm(_) => "lstm",
            TrainedModel::Encoder(_) => "encoder",
        }
    }

    /// (p1, hard label) for one preprocessed document.
    pub fn predict_tokens(&self, tokens: &[String]) -> Result<(f64, u8)> {
        match self {
            TrainedModel::Majority(m) => {
                let label = m.predict();
                Ok((label as f64, label))
            }
            TrainedModel::Bow(b) => {
                let v = b.transform(tokens);
                Ok(predict_linear(&b.model, &v))
            }
            TrainedModel::Lstm(l) => {
                let (x, mask) = embed_sequence(&l.table, tokens, l.max_len);
                let out = seqnet_forward(&l.net, &x, &mask, false, None);
                Ok((out.probs[1], u8::from(out.probs[1] > 0.5)))
            }
            TrainedModel::Encoder(e) => {
                let text = tokens.join(" ");
                let (ids, mask) =
                    tokenize_truncate(&text, e.instance.as_encoder(), e.max_tokens)?;
                let pooled = encode_pool(&ids, &mask, e.instance.as_encoder(), e.pooling);
                let p = predict_head(&e.head, &pooled);
                Ok((p[1], u8::from(p[1] > 0.5)))
            }
        }
    }

    /// Predictions for every record, in record order.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<(String, f64, u8)>> {
        let outcomes: Vec<Result<(f64, u8)>> =
            par::map_slice(ds.records(), |(doc, _)| self.predict_tokens(&doc.tokens));
        let mut out = Vec::with_capacity(ds.len());
        for ((doc, _), outcome) in ds.records().iter().zip(outcomes) {
            let (p1, label) = outcome?;
            out.push((doc.id.clone(), p1, label));
        }
        Ok(out)
    }

    /// Serializes into the versioned artifact container.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut artifact = match self {
            TrainedModel::Majority(m) => ModelArtifact::new(json!({
                "model": "majority",
                "label": m.label,
            })),
            TrainedModel::Bow(b) => {
                let mut art = ModelArtifact::new(json!({
                    "model": self.model_id(),
                    "analyzer": match b.config.analyzer {
                        Analyzer::Word => "word",
                        Analyzer::Char => "char",
                    },
                    "ngram_lo": b.config.ngram_range.0,
                    "ngram_hi": b.config.ngram_range.1,
                    "min_df": b.config.min_df,
                    "l2_lambda": b.config.l2_lambda,
                    "k": b.k,
                    "terms": b.tfidf.vocabulary.terms,
                    "doc_freq": b.tfidf.vocabulary.doc_freq,
                }));
                art.push("idf", Tensor::from_vec(&b.tfidf.idf));
                art.push(
                    "selected",
                    Tensor::from_vec(&b.selected.iter().map(|&v| v as f64).collect::<Vec<_>>()),
                );
                art.push("logreg.w", Tensor::from_vec(&b.model.w));
                art.push("logreg.b", Tensor::from_vec(&[b.model.b]));
                art
            }
            TrainedModel::Lstm(l) => {
                let mut art = ModelArtifact::new(json!({
                    "model": "lstm",
                    "terms": l.table.vocab.terms,
                    "counts": l.table.vocab.counts,
                    "total_tokens": l.table.vocab.total_tokens,
                    "dims": {
                        "input": l.dims.input,
                        "hidden": l.dims.hidden,
                        "attention": l.dims.attention,
                        "dense": l.dims.dense,
                    },
                    "dropout": l.dropout,
                    "max_len": l.max_len,
                }));
                art.push("w2v.input", Tensor::from_array2(&l.table.input));
                art.push("w2v.output", Tensor::from_array2(&l.table.output));
                for (name, block) in SeqNetModel::BLOCK_NAMES.iter().zip(seqnet_tensors(&l.net))
                {
                    art.push(*name, block);
                }
                art
            }
            TrainedModel::Encoder(e) => {
                let mut art = ModelArtifact::new(json!({
                    "model": "encoder",
                    "source": serde_json::to_value(&e.source).unwrap(),
                    "pooling": serde_json::to_value(e.pooling).unwrap(),
                    "max_tokens": e.max_tokens,
                    "head_dropout": e.head.dropout,
                }));
                art.push("head.w1", Tensor::from_array2(&e.head.w1));
                art.push("head.b1", Tensor::from_array1(&e.head.b1));
                art.push("head.w2", Tensor::from_array2(&e.head.w2));
                art.push("head.b2", Tensor::from_array1(&e.head.b2));
                art
            }
        };
        artifact.meta["format"] = json!("mbtikit-model");
        artifact.meta["toolkit_version"] = json!(env!("CARGO_PKG_VERSION"));
        artifact.save(path)
    }

    /// Loads any artifact written by [`Self::save`]; predictions after a
    /// round-trip are bit-identical.
    pub fn load(path: &std::path::Path) -> Result<TrainedModel> {
        let art = ModelArtifact::load(path)?;
        let model_id = art.meta["model"]
            .as_str()
            .ok_or_else(|| Error::Artifact("metadata lacks a model field".into()))?
            .to_string();
        match model_id.as_str() {
            "majority" => {
                let label = art.meta["label"]
                    .as_u64()
                    .ok_or_else(|| Error::Artifact("majority label missing".into()))?
                    as u8;
                Ok(TrainedModel::Majority(MajorityModel { label }))
            }
            "bow-word" | "bow-char" => load_bow(&art),
            "lstm" => load_lstm(&art),
            "encoder" => load_encoder(&art),
            other => Err(Error::Artifact(format!("unknown model kind {other:?}"))),
        }
    }
}

fn seqnet_tensors(net: &SeqNetModel) -> Vec<Tensor> {
    vec![
        Tensor::from_array2(&net.lstm1.w),
        Tensor::from_array2(&net.lstm1.u),
        Tensor::from_array1(&net.lstm1.b),
        Tensor::from_array2(&net.lstm2.w),
        Tensor::from_array2(&net.lstm2.u),
        Tensor::from_array1(&net.lstm2.b),
        Tensor::from_array2(&net.attention.proj),
        Tensor::from_array1(&net.attention.score),
        Tensor::from_array2(&net.dense_w),
        Tensor::from_array1(&net.dense_b),
        Tensor::from_array2(&net.out_w),
        Tensor::from_array1(&net.out_b),
    ]
}

fn meta_strings(meta: &serde_json::Value, field: &str) -> Result<Vec<String>> {
    meta[field]
        .as_array()
        .ok_or_else(|| Error::Artifact(format!("metadata lacks {field}")))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Artifact(format!("{field} holds a non-string")))
        })
        .collect()
}

fn meta_usize(meta: &serde_json::Value, field: &str) -> Result<usize> {
    meta[field]
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::Artifact(format!("metadata lacks {field}")))
}

fn load_bow(art: &ModelArtifact) -> Result<TrainedModel> {
    let meta = &art.meta;
    let analyzer = match meta["analyzer"].as_str() {
        Some("word") => Analyzer::Word,
        Some("char") => Analyzer::Char,
        other => return Err(Error::Artifact(format!("bad analyzer {other:?}"))),
    };
    let terms = meta_strings(meta, "terms")?;
    let doc_freq: Vec<usize> = meta["doc_freq"]
        .as_array()
        .ok_or_else(|| Error::Artifact("metadata lacks doc_freq".into()))?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0) as usize)
        .collect();
    let config = BowConfig {
        analyzer,
        ngram_range: (meta_usize(meta, "ngram_lo")?, meta_usize(meta, "ngram_hi")?),
        min_df: meta_usize(meta, "min_df")?,
        l2_lambda: meta["l2_lambda"].as_f64().unwrap_or(1.0),
    };
    let vocabulary = crate::vectorize::Vocabulary::from_parts(
        terms,
        doc_freq,
        analyzer,
        config.ngram_range,
    );
    let tfidf = TfidfModel {
        vocabulary,
        idf: art.tensor("idf")?.data.clone(),
        min_df: config.min_df,
    };
    let selected: Vec<u32> = art
        .tensor("selected")?
        .data
        .iter()
        .map(|&v| v as u32)
        .collect();
    let model = LogisticModel {
        w: art.tensor("logreg.w")?.data.clone(),
        b: art.tensor("logreg.b")?.data[0],
    };
    Ok(TrainedModel::Bow(BowBundle {
        k: meta_usize(meta, "k")?,
        config,
        tfidf,
        selected,
        model,
    }))
}

fn load_lstm(art: &ModelArtifact) -> Result<TrainedModel> {
    let meta = &art.meta;
    let terms = meta_strings(meta, "terms")?;
    let counts: Vec<u64> = meta["counts"]
        .as_array()
        .ok_or_else(|| Error::Artifact("metadata lacks counts".into()))?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0))
        .collect();
    let vocab = W2vVocab::from_parts(terms, counts, meta["total_tokens"].as_u64().unwrap_or(0));
    let table = EmbeddingTable {
        vocab,
        input: art.tensor("w2v.input")?.to_array2("w2v.input")?,
        output: art.tensor("w2v.output")?.to_array2("w2v.output")?,
    };
    let dims = SeqNetDims {
        input: meta_usize(&meta["dims"], "input")?,
        hidden: meta_usize(&meta["dims"], "hidden")?,
        attention: meta_usize(&meta["dims"], "attention")?,
        dense: meta_usize(&meta["dims"], "dense")?,
    };
    let dropout = meta["dropout"].as_f64().unwrap_or(0.2);
    let net = SeqNetModel {
        lstm1: crate::seqnet::LstmLayer {
            w: art.tensor("lstm1.w")?.to_array2("lstm1.w")?,
            u: art.tensor("lstm1.u")?.to_array2("lstm1.u")?,
            b: art.tensor("lstm1.b")?.to_array1("lstm1.b")?,
        },
        lstm2: crate::seqnet::LstmLayer {
            w: art.tensor("lstm2.w")?.to_array2("lstm2.w")?,
            u: art.tensor("lstm2.u")?.to_array2("lstm2.u")?,
            b: art.tensor("lstm2.b")?.to_array1("lstm2.b")?,
        },
        attention: crate::seqnet::AttentionPool {
            proj: art.tensor("attn.proj")?.to_array2("attn.proj")?,
            score: art.tensor("attn.score")?.to_array1("attn.score")?,
        },
        dense_w: art.tensor("dense.w")?.to_array2("dense.w")?,
        dense_b: art.tensor("dense.b")?.to_array1("dense.b")?,
        out_w: art.tensor("out.w")?.to_array2("out.w")?,
        out_b: art.tensor("out.b")?.to_array1("out.b")?,
        dropout,
    };
    Ok(TrainedModel::Lstm(LstmBundle {
        table,
        net,
        dims,
        dropout,
        max_len: meta_usize(meta, "max_len")?,
    }))
}

fn load_encoder(art: &ModelArtifact) -> Result<TrainedModel> {
    let meta = &art.meta;
    let source: EncoderSource = serde_json::from_value(meta["source"].clone())
        .map_err(|e| Error::Artifact(format!("bad encoder source: {e}")))?;
    let pooling: Pooling = serde_json::from_value(meta["pooling"].clone())
        .map_err(|e| Error::Artifact(format!("bad pooling: {e}")))?;
    let head = HeadModel {
        w1: art.tensor("head.w1")?.to_array2("head.w1")?,
        b1: art.tensor("head.b1")?.to_array1("head.b1")?,
        w2: art.tensor("head.w2")?.to_array2("head.w2")?,
        b2: art.tensor("head.b2")?.to_array1("head.b2")?,
        dropout: meta["head_dropout"].as_f64().unwrap_or(0.5),
    };
    let instance = EncoderInstance::build(&source)?;
    Ok(TrainedModel::Encoder(EncoderBundle {
        source,
        pooling,
        max_tokens: meta_usize(meta, "max_tokens")?,
        head,
        instance,
    }))
}
