//! Flat `key = value` run configuration: file values override defaults,
//! command-line flags override file values, and the effective result is
//! echoed into the output directory.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Every key a configuration file may set. Unknown keys are rejected.
const KNOWN_KEYS: &[&str] = &[
    "batch_size",
    "char_ngram_hi",
    "char_ngram_lo",
    "dev_ratio",
    "encoder_hidden",
    "encoder_stub_seed",
    "encoder_vocab",
    "encoder_weights",
    "folds",
    "format",
    "head_dropout",
    "head_epochs",
    "head_hidden",
    "head_lr",
    "head_patience",
    "inner_dev",
    "input",
    "k",
    "l2_lambda",
    "lr",
    "lstm_attention",
    "lstm_dense",
    "lstm_dropout",
    "lstm_epochs",
    "lstm_hidden",
    "lstm_patience",
    "max_iter",
    "max_len",
    "max_tokens",
    "min_df",
    "model",
    "out",
    "pooling",
    "rounds",
    "search_k",
    "seed",
    "stopwords",
    "task",
    "tol",
    "top",
    "w2v_dim",
    "w2v_epochs",
    "w2v_lr",
    "w2v_min_count",
    "w2v_negatives",
    "w2v_subsample",
    "w2v_window",
    "w2v_workers",
    "word_ngram_hi",
    "word_ngram_lo",
    "workers",
];

/// Parsed configuration file contents.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!(usage(format!(
                    "{}:{}: unknown configuration key {key:?}",
                    path.display(),
                    lineno + 1
                )));
            }
            values.insert(key, value);
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses a typed value from the file, if present.
    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| usage(format!("config key {key:?}: {e}"))),
        }
    }
}

fn usage(msg: String) -> anyhow::Error {
    anyhow::Error::new(mbtikit_core::Error::Config(msg))
}

/// Resolution order: command-line flag, then config file, then default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// The resolved settings of one run, echoed into the output directory so
/// reruns are auditable and byte-comparable.
#[derive(Debug, Default)]
pub struct EffectiveConfig {
    entries: BTreeMap<String, String>,
}

impl EffectiveConfig {
    pub fn new(command: &str) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("command".to_string(), command.to_string());
        entries.insert(
            "toolkit_version".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        EffectiveConfig { entries }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join("effective_config.txt");
        std::fs::write(&path, self.render())
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
