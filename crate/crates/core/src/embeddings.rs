//! Vocabulary and word-vector table, loaded from GloVe text files or drawn at random.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Matrix, Vector};

pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: token `{token}` has {found} components, expected {expected}")]
    Dimension {
        path: PathBuf,
        line: usize,
        token: String,
        found: usize,
        expected: usize,
    },
    #[error("{path}:{line}: token `{token}`: bad number `{value}`")]
    Number {
        path: PathBuf,
        line: usize,
        token: String,
        value: String,
    },
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

/// Token to row-index bijection. The unknown-word row is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    unk: usize,
    lowercase_fallback: bool,
}

impl Vocabulary {
    /// Index 0 is the unknown word; the remaining tokens follow in iteration order.
    pub fn new<I, S>(tokens: I, lowercase_fallback: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
            unk: 0,
            lowercase_fallback,
        };
        vocab.insert(UNK_TOKEN.to_owned());
        for t in tokens {
            vocab.insert(t.into());
        }
        vocab
    }

    /// Rebuilds a vocabulary from an explicit token list (e.g. a saved model).
    pub fn from_parts(tokens: Vec<String>, unk: usize, lowercase_fallback: bool) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            index,
            tokens,
            unk,
            lowercase_fallback,
        }
    }

    fn insert(&mut self, token: String) -> usize {
        if let Some(&i) = self.index.get(&token) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.clone(), i);
        self.tokens.push(token);
        i
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.unk
    }

    pub fn lowercase_fallback(&self) -> bool {
        self.lowercase_fallback
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Exact match, then (if enabled) the lowercased token, then the unknown word.
    pub fn resolve(&self, token: &str) -> usize {
        if let Some(i) = self.get(token) {
            return i;
        }
        if self.lowercase_fallback {
            if let Some(i) = self.get(&token.to_lowercase()) {
                return i;
            }
        }
        self.unk
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Matrix,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }
}

/// Bound of the uniform initialization interval for inputs of width `n`.
pub fn init_bound(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Entries uniform in `[-1/sqrt(dim), 1/sqrt(dim)]`, reproducible from `seed`.
pub fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingTable {
    assert!(
        vocab_size > 0 && dim > 0,
        "vocab_size and dim must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingTable {
        vectors: Matrix::uniform(vocab_size, dim, init_bound(dim), &mut rng),
        trainable: true,
    }
}

pub fn lookup(vocab: &Vocabulary, table: &EmbeddingTable, token: &str) -> Vector {
    Vector::from_vec(table.row(vocab.resolve(token)).to_vec())
}

/// Sorted set of all tokens occurring in the given trees.
pub fn corpus_tokens<'a>(
    trees: impl IntoIterator<Item = &'a crate::treebank::Tree>,
) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    for t in trees {
        for tok in t.tokens() {
            set.insert(tok.to_owned());
        }
    }
    set
}

/// Vocabulary over `tokens` with a random table (no pre-trained vectors).
pub fn random_for_corpus(
    tokens: &BTreeSet<String>,
    dim: usize,
    lowercase_fallback: bool,
    seed: u64,
) -> (Vocabulary, EmbeddingTable) {
    let vocab = Vocabulary::new(tokens.iter().cloned(), lowercase_fallback);
    let table = random_embeddings(vocab.len(), dim, seed);
    (vocab, table)
}

/// Loads GloVe vectors for the tokens of `corpus_vocab`.
///
/// Rows are kept only for tokens that some corpus token resolves to (exact,
/// or lowercased when `lowercase_fallback` is set). Corpus tokens that
/// resolve to nothing in the file get their own row drawn from the unknown
/// word distribution, as does the `<unk>` row itself.
pub fn load_glove(
    path: impl AsRef<Path>,
    expected_dim: usize,
    corpus_vocab: &BTreeSet<String>,
    lowercase_fallback: bool,
    seed: u64,
) -> Result<(Vocabulary, EmbeddingTable), EmbeddingError> {
    if expected_dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    let path = path.as_ref();
    let io_err = |source| EmbeddingError::Io {
        path: path.to_owned(),
        source,
    };
    let mut wanted: HashSet<String> = corpus_vocab.iter().cloned().collect();
    if lowercase_fallback {
        wanted.extend(corpus_vocab.iter().map(|t| t.to_lowercase()));
    }

    let mut found: HashMap<String, Vec<f64>> = HashMap::new();
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default();
        let fields: Vec<&str> = parts.collect();
        if fields.len() != expected_dim {
            return Err(EmbeddingError::Dimension {
                path: path.to_owned(),
                line: i + 1,
                token: token.to_owned(),
                found: fields.len(),
                expected: expected_dim,
            });
        }
        if !wanted.contains(token) || found.contains_key(token) {
            continue;
        }
        let mut row = Vec::with_capacity(expected_dim);
        for f in fields {
            let v: f64 = f.parse().map_err(|_| EmbeddingError::Number {
                path: path.to_owned(),
                line: i + 1,
                token: token.to_owned(),
                value: f.to_owned(),
            })?;
            row.push(v);
        }
        found.insert(token.to_owned(), row);
    }

    let mut rows: Vec<String> = Vec::new();
    for tok in corpus_vocab {
        if found.contains_key(tok) {
            rows.push(tok.clone());
        } else if lowercase_fallback && found.contains_key(&tok.to_lowercase()) {
            rows.push(tok.to_lowercase());
        } else {
            // no pre-trained vector: keep a dedicated randomly initialized row
            rows.push(tok.clone());
        }
    }
    let vocab = Vocabulary::new(
        rows.into_iter().collect::<BTreeSet<_>>(),
        lowercase_fallback,
    );
    let mut table = random_embeddings(vocab.len(), expected_dim, seed);
    for (i, tok) in vocab.tokens().iter().enumerate() {
        if let Some(v) = found.get(tok) {
            table.vectors.row_mut(i).copy_from_slice(v);
        }
    }
    Ok((vocab, table))
}

/// How many corpus tokens find a vector in the GloVe file at `path`.
pub fn glove_coverage(
    path: impl AsRef<Path>,
    corpus_vocab: &BTreeSet<String>,
    lowercase_fallback: bool,
) -> Result<usize, EmbeddingError> {
    let path = path.as_ref();
    let io_err = |source| EmbeddingError::Io {
        path: path.to_owned(),
        source,
    };
    let mut present: HashSet<String> = HashSet::new();
    for line in BufReader::new(File::open(path).map_err(io_err)?).lines() {
        let line = line.map_err(io_err)?;
        if let Some(tok) = line.split(' ').next().filter(|t| !t.is_empty()) {
            present.insert(tok.to_owned());
        }
    }
    Ok(corpus_vocab
        .iter()
        .filter(|t| {
            present.contains(*t) || (lowercase_fallback && present.contains(&t.to_lowercase()))
        })
        .count())
}
