//! Corpus ingestion, label encoding, preprocessing and split planning.
//!
//! Records carry a four-letter MBTI type which is encoded into four
//! independent binary tasks (EI, NS, TF, PJ). The first-listed letter of
//! each dichotomy (E, N, T, P) maps to 0, the other to 1.

mod preprocess;
mod split;

pub use preprocess::{preprocess_dataset, preprocess_text, Stopwords};
pub use split::{split_and_fold, stratified_folds, stratified_split, FoldPlan, SplitPlan};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

/// Supported corpus languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    De,
    Es,
    Fr,
    It,
    Nl,
    Pt,
}

impl Lang {
    pub const ALL: [Lang; 7] = [
        Lang::En,
        Lang::De,
        Lang::Es,
        Lang::Fr,
        Lang::It,
        Lang::Nl,
        Lang::Pt,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::De => "de",
            Lang::Es => "es",
            Lang::Fr => "fr",
            Lang::It => "it",
            Lang::Nl => "nl",
            Lang::Pt => "pt",
        }
    }

    pub fn from_code(code: &str) -> Option<Lang> {
        Lang::ALL.iter().copied().find(|l| l.code() == code)
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One of the four binary classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Ei,
    Ns,
    Tf,
    Pj,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Ei, Task::Ns, Task::Tf, Task::Pj];

    pub fn name(self) -> &'static str {
        match self {
            Task::Ei => "EI",
            Task::Ns => "NS",
            Task::Tf => "TF",
            Task::Pj => "PJ",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
    }

    /// Trait letters as (letter for label 0, letter for label 1).
    pub fn letters(self) -> (char, char) {
        match self {
            Task::Ei => ('E', 'I'),
            Task::Ns => ('N', 'S'),
            Task::Tf => ('T', 'F'),
            Task::Pj => ('P', 'J'),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The four binary labels derived from a 4-letter MBTI type string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub ei: u8,
    pub ns: u8,
    pub tf: u8,
    pub pj: u8,
}

impl LabelSet {
    pub fn get(&self, task: Task) -> u8 {
        match task {
            Task::Ei => self.ei,
            Task::Ns => self.ns,
            Task::Tf => self.tf,
            Task::Pj => self.pj,
        }
    }

    /// Reconstructs the 4-letter type string. Inverse of [`encode_labels`].
    pub fn decode(&self) -> String {
        Task::ALL
            .iter()
            .map(|&t| {
                let (zero, one) = t.letters();
                if self.get(t) == 0 {
                    zero
                } else {
                    one
                }
            })
            .collect()
    }
}

/// Encodes a 4-letter MBTI type string into four binary labels.
///
/// The first-listed letter of each dichotomy (E, N, T, P) maps to 0, the
/// other (I, S, F, J) to 1. Case-insensitive.
pub fn encode_labels(mbti: &str) -> Result<LabelSet> {
    let chars: Vec<char> = mbti.chars().map(|c| c.to_ascii_uppercase()).collect();
    if chars.len() != 4 {
        return Err(Error::InvalidLabel(mbti.to_string()));
    }
    let bit = |c: char, zero: char, one: char| -> Result<u8> {
        if c == zero {
            Ok(0)
        } else if c == one {
            Ok(1)
        } else {
            Err(Error::InvalidLabel(mbti.to_string()))
        }
    };
    Ok(LabelSet {
        ei: bit(chars[0], 'E', 'I')?,
        ns: bit(chars[1], 'N', 'S')?,
        tf: bit(chars[2], 'T', 'F')?,
        pj: bit(chars[3], 'P', 'J')?,
    })
}

/// A single corpus document. `tokens` is empty until preprocessing runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub author_id: String,
    pub lang: Lang,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

/// An ordered, immutable collection of labelled documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<(Document, LabelSet)>,
    lang: Lang,
}

impl Dataset {
    /// Builds a dataset from records, deriving the dominant language.
    pub fn new(records: Vec<(Document, LabelSet)>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Schema("dataset has no records".into()));
        }
        let mut counts = [0usize; 7];
        for (doc, _) in &records {
            counts[Lang::ALL.iter().position(|&l| l == doc.lang).unwrap()] += 1;
        }
        let dominant = Lang::ALL[counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .map(|(i, _)| i)
            .unwrap()];
        Ok(Dataset {
            records,
            lang: dominant,
        })
    }

    pub fn records(&self) -> &[(Document, LabelSet)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    /// Binary labels of every record for one task, in record order.
    pub fn labels(&self, task: Task) -> Vec<u8> {
        self.records.iter().map(|(_, l)| l.get(task)).collect()
    }

    /// Token lists of every record, in record order.
    pub fn token_lists(&self) -> Vec<&[String]> {
        self.records
            .iter()
            .map(|(d, _)| d.tokens.as_slice())
            .collect()
    }

    pub(crate) fn records_mut(&mut self) -> &mut Vec<(Document, LabelSet)> {
        &mut self.records
    }
}

/// Per-trait record counts. Each dichotomy pair sums to the record count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub e: usize,
    pub i: usize,
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub f: usize,
    pub p: usize,
    pub j: usize,
}

impl ClassDistribution {
    /// (count of label 0, count of label 1) for one task.
    pub fn pair(&self, task: Task) -> (usize, usize) {
        match task {
            Task::Ei => (self.e, self.i),
            Task::Ns => (self.n, self.s),
            Task::Tf => (self.t, self.f),
            Task::Pj => (self.p, self.j),
        }
    }
}

/// Counts trait occurrences over a dataset.
pub fn class_distribution(ds: &Dataset) -> ClassDistribution {
    let mut d = ClassDistribution {
        e: 0,
        i: 0,
        n: 0,
        s: 0,
        t: 0,
        f: 0,
        p: 0,
        j: 0,
    };
    for (_, l) in ds.records() {
        if l.ei == 0 {
            d.e += 1
        } else {
            d.i += 1
        }
        if l.ns == 0 {
            d.n += 1
        } else {
            d.s += 1
        }
        if l.tf == 0 {
            d.t += 1
        } else {
            d.f += 1
        }
        if l.pj == 0 {
            d.p += 1
        } else {
            d.j += 1
        }
    }
    d
}

/// Wire schema of one JSON-lines corpus record.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    author_id: String,
    lang: String,
    text: String,
    #[serde(default)]
    mbti: Option<String>,
    #[serde(default)]
    labels: Option<RawLabels>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLabels {
    #[serde(rename = "EI")]
    ei: u8,
    #[serde(rename = "NS")]
    ns: u8,
    #[serde(rename = "TF")]
    tf: u8,
    #[serde(rename = "PJ")]
    pj: u8,
}

/// Ingestion options. `concat_by_author` merges all documents of one author
/// into a single record keyed by the author id (text joined in file order).
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub concat_by_author: bool,
}

/// Result of corpus ingestion: the dataset plus the invalid-record count.
#[derive(Debug)]
pub struct Ingested {
    pub dataset: Dataset,
    pub skipped: usize,
}

/// Reads a UTF-8 JSON-lines corpus file, one record per line.
///
/// Records with a missing or invalid MBTI string, an unsupported language
/// code or a duplicate id are counted and skipped with a warning; only an
/// unreadable file or zero valid records is fatal.
pub fn ingest_corpus(path: &Path, opts: IngestOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);

    let mut records: Vec<(Document, LabelSet)> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut skipped = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}:{}: malformed record: {e}", path.display(), lineno + 1);
                skipped += 1;
                continue;
            }
        };
        let Some(lang) = Lang::from_code(&raw.lang) else {
            log::warn!(
                "{}:{}: unsupported language {:?}",
                path.display(),
                lineno + 1,
                raw.lang
            );
            skipped += 1;
            continue;
        };
        let labels = match (&raw.mbti, &raw.labels) {
            (Some(mbti), _) => match encode_labels(mbti) {
                Ok(l) => l,
                Err(_) => {
                    log::warn!(
                        "{}:{}: invalid MBTI string {:?}",
                        path.display(),
                        lineno + 1,
                        mbti
                    );
                    skipped += 1;
                    continue;
                }
            },
            (None, Some(raw_labels)) => {
                let ok = [raw_labels.ei, raw_labels.ns, raw_labels.tf, raw_labels.pj]
                    .iter()
                    .all(|&b| b <= 1);
                if !ok {
                    log::warn!("{}:{}: labels must be 0 or 1", path.display(), lineno + 1);
                    skipped += 1;
                    continue;
                }
                LabelSet {
                    ei: raw_labels.ei,
                    ns: raw_labels.ns,
                    tf: raw_labels.tf,
                    pj: raw_labels.pj,
                }
            }
            (None, None) => {
                log::warn!(
                    "{}:{}: record carries neither mbti nor labels",
                    path.display(),
                    lineno + 1
                );
                skipped += 1;
                continue;
            }
        };
        if !seen_ids.insert(raw.id.clone()) {
            log::warn!("{}:{}: duplicate id {:?}", path.display(), lineno + 1, raw.id);
            skipped += 1;
            continue;
        }
        records.push((
            Document {
                id: raw.id,
                author_id: raw.author_id,
                lang,
                raw_text: raw.text,
                tokens: Vec::new(),
            },
            labels,
        ));
    }

    if opts.concat_by_author {
        records = concat_by_author(records);
    }
    if records.is_empty() {
        return Err(Error::Schema(format!(
            "{}: no valid records",
            path.display()
        )));
    }
    Ok(Ingested {
        dataset: Dataset::new(records)?,
        skipped,
    })
}

/// Merges documents per author, preserving first-seen author order. Labels
/// come from the author's first record; conflicting labels are warned about.
fn concat_by_author(records: Vec<(Document, LabelSet)>) -> Vec<(Document, LabelSet)> {
    let mut order: Vec<String> = Vec::new();
    let mut merged: std::collections::HashMap<String, (Document, LabelSet)> =
        std::collections::HashMap::new();
    for (doc, labels) in records {
        match merged.get_mut(&doc.author_id) {
            None => {
                order.push(doc.author_id.clone());
                let author_id = doc.author_id.clone();
                let mut doc = doc;
                doc.id = author_id.clone();
                merged.insert(author_id, (doc, labels));
            }
            Some((existing, existing_labels)) => {
                if *existing_labels != labels {
                    log::warn!(
                        "author {:?}: conflicting labels, keeping the first",
                        doc.author_id
                    );
                }
                existing.raw_text.push(' ');
                existing.raw_text.push_str(&doc.raw_text);
            }
        }
    }
    order
        .into_iter()
        .map(|author| merged.remove(&author).unwrap())
        .collect()
}

/// Serializes records back to the JSON-lines wire format.
pub fn write_jsonl(path: &Path, ds: &Dataset) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    for (doc, labels) in ds.records() {
        let raw = RawRecord {
            id: doc.id.clone(),
            author_id: doc.author_id.clone(),
            lang: doc.lang.code().to_string(),
            text: doc.raw_text.clone(),
            mbti: Some(labels.decode()),
            labels: None,
        };
        serde_json::to_writer(&mut out, &raw).map_err(|e| Error::Schema(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
