//! A small generated sentiment treebank in the SST bracketed format.
//!
//! Sentences are random binary trees over a toy lexicon whose sentiment is
//! compositional: negators flip and dampen the phrase they attach to,
//! intensifiers amplify it, `but` lets the second clause dominate, and plain
//! concatenation adds. Every node is labeled with the 5-way bucket of its
//! value. Useful for demos and tests when the real treebank is not at hand.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::treebank::Tree;

const POSITIVE: &[(&str, f64)] = &[
    ("good", 1.0),
    ("fine", 0.8),
    ("funny", 1.0),
    ("charming", 1.2),
    ("great", 1.8),
    ("brilliant", 2.0),
    ("moving", 1.2),
    ("masterpiece", 2.0),
    ("enjoyable", 1.1),
    ("clever", 1.0),
];

const NEGATIVE: &[(&str, f64)] = &[
    ("bad", -1.0),
    ("dull", -1.0),
    ("boring", -1.2),
    ("awful", -1.8),
    ("terrible", -2.0),
    ("mess", -1.6),
    ("tedious", -1.2),
    ("weak", -0.8),
    ("bland", -0.9),
    ("disaster", -2.0),
];

const NEGATORS: &[&str] = &["not", "never", "hardly"];
const INTENSIFIERS: &[&str] = &["very", "really", "extremely", "truly"];

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "film", "movie", "story", "plot", "it", "is", "was", "and", "of", "with", "cast",
    "director", "script", "this", "that", "its", "to", "in",
];

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    /// Mean sentence length in tokens.
    pub mean_length: f64,
    /// Number of extra sentiment-free filler tokens `t0..`.
    pub filler_vocab: usize,
    /// Probability that a leaf carries sentiment.
    pub sentiment_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            mean_length: 12.0,
            filler_vocab: 200,
            sentiment_rate: 0.3,
        }
    }
}

impl SyntheticConfig {
    /// Lengths and vocabulary size shaped like the real treebank (about 19 tokens per sentence).
    pub fn sst_shaped() -> Self {
        SyntheticConfig {
            mean_length: 19.1,
            filler_vocab: 16000,
            sentiment_rate: 0.25,
        }
    }
}

pub fn fine_label(value: f64) -> u8 {
    if value <= -1.0 {
        0
    } else if value <= -0.35 {
        1
    } else if value < 0.35 {
        2
    } else if value < 1.0 {
        3
    } else {
        4
    }
}

pub struct Generator {
    config: SyntheticConfig,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(config: SyntheticConfig, seed: u64) -> Self {
        Generator {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn length(&mut self) -> usize {
        // geometric-ish spread around the mean, at least 2 tokens
        let mean = self.config.mean_length.max(2.0);
        let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        let spread = -(u.ln()) * (mean - 2.0) * 0.5 + (mean - 2.0) * 0.5;
        (2.0 + spread).round() as usize
    }

    fn word(&mut self) -> (String, f64) {
        if self.rng.gen_bool(self.config.sentiment_rate) {
            let list = if self.rng.gen_bool(0.5) {
                POSITIVE
            } else {
                NEGATIVE
            };
            let (w, v) = list[self.rng.gen_range(0..list.len())];
            (w.to_owned(), v)
        } else if self.config.filler_vocab > 0 && self.rng.gen_bool(0.5) {
            (
                format!("t{}", self.rng.gen_range(0..self.config.filler_vocab)),
                0.0,
            )
        } else {
            let w = FUNCTION_WORDS[self.rng.gen_range(0..FUNCTION_WORDS.len())];
            (w.to_owned(), 0.0)
        }
    }

    fn leaf(token: impl Into<String>, value: f64) -> (Tree, f64) {
        (Tree::leaf(Some(fine_label(value)), token), value)
    }

    fn node(left: Tree, right: Tree, value: f64) -> (Tree, f64) {
        let value = value.clamp(-2.0, 2.0);
        (Tree::inner(Some(fine_label(value)), left, right), value)
    }

    fn phrase(&mut self, n: usize) -> (Tree, f64) {
        if n == 1 {
            let (w, v) = self.word();
            return Self::leaf(w, v);
        }
        let roll: f64 = self.rng.gen();
        if roll < 0.15 {
            let neg = NEGATORS[self.rng.gen_range(0..NEGATORS.len())];
            let (t, v) = self.phrase(n - 1);
            let (l, _) = Self::leaf(neg, 0.0);
            Self::node(l, t, -0.7 * v)
        } else if roll < 0.27 {
            let int = INTENSIFIERS[self.rng.gen_range(0..INTENSIFIERS.len())];
            let (t, v) = self.phrase(n - 1);
            let (l, _) = Self::leaf(int, 0.0);
            Self::node(l, t, 1.6 * v)
        } else if roll < 0.37 && n >= 3 {
            let k = self.rng.gen_range(1..n - 1);
            let (a, va) = self.phrase(k);
            let (b, vb) = self.phrase(n - 1 - k);
            let (but, _) = Self::leaf("but", 0.0);
            let (tail, vt) = Self::node(but, b, vb);
            Self::node(a, tail, 0.3 * va + vt)
        } else {
            let k = self.rng.gen_range(1..n);
            let (a, va) = self.phrase(k);
            let (b, vb) = self.phrase(n - k);
            Self::node(a, b, va + vb)
        }
    }

    pub fn sentence(&mut self) -> Tree {
        let n = self.length();
        self.phrase(n).0
    }

    pub fn sentences(&mut self, count: usize) -> Vec<Tree> {
        (0..count).map(|_| self.sentence()).collect()
    }
}

/// Train/dev/test trees with the given sizes.
pub fn generate_splits(
    config: SyntheticConfig,
    sizes: (usize, usize, usize),
    seed: u64,
) -> (Vec<Tree>, Vec<Tree>, Vec<Tree>) {
    let mut g = Generator::new(config, seed);
    (
        g.sentences(sizes.0),
        g.sentences(sizes.1),
        g.sentences(sizes.2),
    )
}

/// Writes `train.txt`, `dev.txt` and `test.txt` under `dir`.
pub fn write_splits(
    dir: &Path,
    train: &[Tree],
    dev: &[Tree],
    test: &[Tree],
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, trees) in [("train.txt", train), ("dev.txt", dev), ("test.txt", test)] {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(name))?);
        for t in trees {
            writeln!(f, "{t}")?;
        }
        f.flush()?;
    }
    Ok(())
}

/// Writes a GloVe-format file for the lexicon and fillers: random vectors
/// whose first component carries the word's prior sentiment.
pub fn write_glove(
    path: &Path,
    config: &SyntheticConfig,
    dim: usize,
    seed: u64,
) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let mut words: Vec<(String, f64)> = Vec::new();
    words.extend(
        POSITIVE
            .iter()
            .chain(NEGATIVE)
            .map(|&(w, v)| (w.to_owned(), v)),
    );
    words.extend(
        NEGATORS
            .iter()
            .chain(INTENSIFIERS)
            .chain(FUNCTION_WORDS)
            .map(|w| (w.to_string(), 0.0)),
    );
    words.push(("but".to_owned(), 0.0));
    words.extend((0..config.filler_vocab).map(|i| (format!("t{i}"), 0.0)));
    for (w, v) in words {
        write!(f, "{w}")?;
        for k in 0..dim {
            let x: f64 = if k == 0 {
                0.3 * v
            } else {
                rng.gen_range(-0.3..0.3)
            };
            write!(f, " {x:.5}")?;
        }
        writeln!(f)?;
    }
    f.flush()
}
