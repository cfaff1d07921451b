//! Greedy longest-match-first subword tokenization over a plain-text
//! vocabulary file (one token per line, `##` marks continuations).

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::path::Path;

const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    index: HashMap<String, usize>,
    pub pad_id: usize,
    pub unk_id: usize,
    pub begin_id: usize,
    pub end_id: usize,
    vocab_len: usize,
}

impl WordPieceTokenizer {
    pub fn from_lines(lines: impl Iterator<Item = String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, tok) in lines.enumerate() {
            index.insert(tok, i);
        }
        let special = |name: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Schema(format!("vocabulary lacks the {name} token")))
        };
        let pad_id = special("[PAD]")?;
        let unk_id = special("[UNK]")?;
        let begin_id = special("[CLS]")?;
        let end_id = special("[SEP]")?;
        let vocab_len = index.len();
        Ok(WordPieceTokenizer {
            index,
            pad_id,
            unk_id,
            begin_id,
            end_id,
            vocab_len,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(text.lines().map(|l| l.trim_end().to_string()))
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    /// Tokenizes lowercased whitespace-split words into subword ids.
    /// Unknown pieces map to the unknown id, never an error.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in text.to_lowercase().split_whitespace() {
            self.encode_word(word, &mut ids);
        }
        ids
    }

    fn encode_word(&self, word: &str, out: &mut Vec<usize>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() {
            return;
        }
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk_id);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0usize;
        while start < chars.len() {
            let mut end = chars.len();
            let mut hit = None;
            while end > start {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece = format!("##{piece}");
                }
                if let Some(&id) = self.index.get(&piece) {
                    hit = Some(id);
                    break;
                }
                end -= 1;
            }
            match hit {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    // No decomposition: the whole word is unknown.
                    out.push(self.unk_id);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}
