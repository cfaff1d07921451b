//! Synthetic corpora: datasets regenerated from published class-count
//! marginals (for baseline reconstruction) and planted-signal corpora
//! whose labels are a deterministic function of marker tokens (a
//! recoverable ground truth for end-to-end harnesses).

use crate::corpus::{Dataset, Document, LabelSet, Lang};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-trait record counts of a published corpus subset.
#[derive(Debug, Clone, Copy)]
pub struct Marginals {
    pub e: usize,
    pub i: usize,
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub f: usize,
    pub p: usize,
    pub j: usize,
}

/// English Reddit subset (MBTI9k) class distribution.
pub const MBTI9K_EN: Marginals = Marginals {
    e: 1423,
    i: 5053,
    n: 5625,
    s: 851,
    t: 4168,
    f: 2308,
    p: 3759,
    j: 2717,
};

/// German TwiSty subset class distribution.
pub const TWISTY_DE: Marginals = Marginals {
    e: 92_452,
    i: 180_252,
    n: 227_409,
    s: 45_295,
    t: 113_414,
    f: 159_290,
    p: 170_232,
    j: 102_472,
};

/// Spanish TwiSty subset class distribution.
pub const TWISTY_ES: Marginals = Marginals {
    e: 243_840,
    i: 277_788,
    n: 334_483,
    s: 187_145,
    t: 199_573,
    f: 322_055,
    p: 302_092,
    j: 219_536,
};

impl Marginals {
    pub fn total(&self) -> usize {
        self.e + self.i
    }
}

/// Builds a dataset of empty-text records whose per-task label counts
/// equal the marginals exactly (tasks assigned independently).
pub fn dataset_from_marginals(m: &Marginals, lang: Lang) -> Dataset {
    let n = m.total();
    assert_eq!(m.n + m.s, n, "NS counts must partition the record count");
    assert_eq!(m.t + m.f, n, "TF counts must partition the record count");
    assert_eq!(m.p + m.j, n, "PJ counts must partition the record count");
    let records: Vec<(Document, LabelSet)> = (0..n)
        .map(|idx| {
            (
                Document {
                    id: format!("d{idx:07}"),
                    author_id: String::new(),
                    lang,
                    raw_text: String::new(),
                    tokens: Vec::new(),
                },
                LabelSet {
                    ei: u8::from(idx >= m.e),
                    ns: u8::from(idx >= m.n),
                    tf: u8::from(idx >= m.t),
                    pj: u8::from(idx >= m.p),
                },
            )
        })
        .collect();
    Dataset::new(records).expect("marginals are non-empty")
}

/// Shape of a planted-signal corpus.
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub docs: usize,
    /// Tokens per document, marker included.
    pub doc_len: usize,
    /// Filler vocabulary size (tokens shared by both classes).
    pub filler_vocab: usize,
    /// Marker tokens per class; each document carries one of its class's
    /// markers at the front.
    pub markers_per_class: usize,
    /// Occurrences of the marker within one document (the first is always
    /// at position 0; extra copies land at random positions). Repetition
    /// gives markers a distinctive self-co-occurrence profile, which
    /// embedding trainers need to tell the two classes' markers apart.
    pub marker_repeats: usize,
    pub lang: Lang,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            docs: 300,
            doc_len: 12,
            filler_vocab: 50,
            markers_per_class: 1,
            marker_repeats: 1,
            lang: Lang::En,
            seed: 13,
        }
    }
}

/// Generates a corpus whose four task labels all equal one binary label
/// determined by the planted marker token. `raw_text` and `tokens` agree
/// with the preprocessing pipeline (lowercase alphanumeric words).
pub fn planted_corpus(cfg: &PlantedConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let records: Vec<(Document, LabelSet)> = (0..cfg.docs)
        .map(|idx| {
            let label = (idx % 2) as u8;
            let marker_idx = rng.gen_range(0..cfg.markers_per_class);
            let marker = if label == 0 {
                format!("zeromark{marker_idx}")
            } else {
                format!("onemark{marker_idx}")
            };
            let mut tokens = vec![marker.clone()];
            for _ in 1..cfg.doc_len {
                tokens.push(format!("filler{}", rng.gen_range(0..cfg.filler_vocab)));
            }
            for _ in 1..cfg.marker_repeats.max(1) {
                let pos = rng.gen_range(1..cfg.doc_len.max(2));
                tokens[pos] = marker.clone();
            }
            let raw_text = tokens.join(" ");
            let labels = LabelSet {
                ei: label,
                ns: label,
                tf: label,
                pj: label,
            };
            (
                Document {
                    id: format!("p{idx:05}"),
                    author_id: format!("a{idx:05}"),
                    lang: cfg.lang,
                    raw_text,
                    tokens,
                },
                labels,
            )
        })
        .collect();
    Dataset::new(records).expect("planted corpus is non-empty")
}
