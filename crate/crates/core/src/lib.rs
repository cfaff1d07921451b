//! MBTI-from-text classification benchmark toolkit.
//!
//! Personality detection from social-media text is modelled as four
//! independent binary tasks (EI, NS, TF, PJ). This crate provides the full
//! pipeline: corpus ingestion and preprocessing, TF-IDF n-gram feature
//! spaces with ANOVA-F selection, a logistic-regression baseline trained
//! with an in-house L-BFGS, skip-gram word embeddings feeding an
//! attention-LSTM sequence classifier, a frozen contextual-encoder pathway
//! with a trainable dense head, stratified 10-fold cross-validation,
//! McNemar model comparison, and permutation-based feature explanations.
//!
//! With the default `parallel` feature, fold evaluation, batch transforms
//! and permutation rounds run on a rayon pool; outputs are byte-identical
//! to the sequential fallback because every parallel site uses
//! order-preserving collection and per-unit derived seeds.

pub mod artifact;
pub mod corpus;
pub mod encoderhead;
pub mod error;
pub mod eval;
pub mod explain;
pub mod linear;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod seqnet;
pub mod synth;
pub mod vectorize;
pub mod word2vec;

pub use error::{Error, ErrorClass, Result};
