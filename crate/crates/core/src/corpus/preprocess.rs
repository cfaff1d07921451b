//! Text preprocessing: lowercasing, special-character removal, stopwords.
//!
//! Retained characters are Unicode letters, digits, whitespace and the
//! apostrophe; everything else (emoji, emoticons, punctuation, symbols) is
//! dropped before whitespace tokenization.

use crate::corpus::Lang;
use crate::error::{Error, Result};
use std::collections::{HashMap, HashSet};
use std::path::Path;

/// Per-language stopword sets, loaded from `stopwords.<lang>.txt` files.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    sets: HashMap<Lang, HashSet<String>>,
}

impl Stopwords {
    /// No stopwords for any language.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Loads every `stopwords.<lang>.txt` present in `dir` (one word per
    /// line, `#` comments ignored). Missing files leave that language empty.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut sets = HashMap::new();
        for lang in Lang::ALL {
            let path = dir.join(format!("stopwords.{}.txt", lang.code()));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let set: HashSet<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_lowercase())
                .collect();
            sets.insert(lang, set);
        }
        Ok(Stopwords { sets })
    }

    pub fn insert(&mut self, lang: Lang, words: impl IntoIterator<Item = String>) {
        self.sets.entry(lang).or_default().extend(words);
    }

    pub fn set_for(&self, lang: Lang) -> Option<&HashSet<String>> {
        self.sets.get(&lang)
    }
}

fn keep_char(c: char) -> bool {
    c.is_alphanumeric() || c.is_whitespace() || c == '\''
}

/// Lowercases, strips non-retained characters, splits on whitespace and
/// removes stopwords. Token order is preserved; an empty result is legal.
pub fn preprocess_text(raw: &str, stopwords: &HashSet<String>) -> Vec<String> {
    let cleaned: String = raw
        .to_lowercase()
        .chars()
        .filter(|&c| keep_char(c))
        .collect();
    cleaned
        .split_whitespace()
        .filter(|tok| !stopwords.contains(*tok))
        .map(str::to_string)
        .collect()
}

/// Fills `tokens` for every document using its language's stopword set.
pub fn preprocess_dataset(ds: &mut super::Dataset, stopwords: &Stopwords) {
    static EMPTY: std::sync::OnceLock<HashSet<String>> = std::sync::OnceLock::new();
    let empty = EMPTY.get_or_init(HashSet::new);
    for (doc, _) in ds.records_mut() {
        let set = stopwords.set_for(doc.lang).unwrap_or(empty);
        doc.tokens = preprocess_text(&doc.raw_text, set);
    }
}
