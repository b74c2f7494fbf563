//! Self-describing model files.
//!
//! Layout: an ASCII header of `key value` lines, the vocabulary (one token
//! per line), a tensor table (`name rows cols`), the line `data`, then every
//! tensor as little-endian `f64` in table order.
//!
//! ```text
//! treelstm-model 1
//! task fine
//! model lstm
//! activation tanh
//! d 50
//! d_w 100
//! classes 5
//! embeddings_trainable true
//! lowercase false
//! best_epoch 7
//! dev_accuracy 44.50499545867393
//! manifest 3f1c…
//! vocab 21701 0
//! <unk>
//! …
//! tensors 30
//! W_i1.leaf 50 100
//! …
//! data
//! <binary>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::embeddings::Vocabulary;
use crate::model::{ModelKind, ModelParams};
use crate::tensor::ActivationKind;
use crate::treebank::TaskKind;

pub const MAGIC: &str = "treelstm-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (missing `{MAGIC}` header)")]
    BadMagic,
    #[error("unsupported model format version {0} (this build reads version {FORMAT_VERSION})")]
    Version(u32),
    #[error("malformed model header: {0}")]
    Header(String),
    #[error("tensor data is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub task: TaskKind,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    /// Content hash of the run manifest's inputs, `-` if none.
    pub manifest: String,
}

impl ModelArtifact {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut h = String::new();
        let _ = writeln!(h, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(h, "task {}", self.task);
        let _ = writeln!(h, "model {}", p.kind());
        let _ = writeln!(h, "activation {}", p.activation());
        let _ = writeln!(h, "d {}", p.d());
        let _ = writeln!(h, "d_w {}", p.d_w());
        let _ = writeln!(h, "classes {}", p.num_classes());
        let _ = writeln!(h, "embeddings_trainable {}", p.embeddings.trainable);
        let _ = writeln!(h, "lowercase {}", self.vocab.lowercase_fallback());
        let _ = writeln!(h, "best_epoch {}", self.best_epoch);
        let _ = writeln!(h, "dev_accuracy {}", self.dev_accuracy);
        let _ = writeln!(h, "manifest {}", self.manifest);
        let _ = writeln!(h, "vocab {} {}", self.vocab.len(), self.vocab.unk_index());
        for t in self.vocab.tokens() {
            let _ = writeln!(h, "{t}");
        }
        let tensors = p.tensors();
        let _ = writeln!(h, "tensors {}", tensors.len());
        for t in &tensors {
            let _ = writeln!(h, "{} {} {}", t.name, t.rows, t.cols);
        }
        h.push_str("data\n");
        let mut out = h.into_bytes();
        for t in &tensors {
            for x in t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        let mut r = Reader { bytes, pos: 0 };
        let first = r.line()?;
        let version = first
            .strip_prefix(MAGIC)
            .ok_or(ArtifactError::BadMagic)?
            .trim()
            .parse::<u32>()
            .map_err(|_| ArtifactError::BadMagic)?;
        if version != FORMAT_VERSION {
            return Err(ArtifactError::Version(version));
        }
        let task: TaskKind = r.field("task")?;
        let kind: ModelKind = r.field("model")?;
        let activation: ActivationKind = r.field("activation")?;
        let d: usize = r.field("d")?;
        let d_w: usize = r.field("d_w")?;
        let classes: usize = r.field("classes")?;
        let trainable: bool = r.field("embeddings_trainable")?;
        let lowercase: bool = r.field("lowercase")?;
        let best_epoch: usize = r.field("best_epoch")?;
        let dev_accuracy: f64 = r.field("dev_accuracy")?;
        let manifest: String = r.field("manifest")?;
        if classes != task.num_classes() {
            return Err(ArtifactError::Header(format!(
                "{classes} classes stored for task {task}"
            )));
        }

        let vocab_line: String = r.field("vocab")?;
        let mut it = vocab_line.split(' ');
        let (len, unk) = match (it.next().map(str::parse), it.next().map(str::parse)) {
            (Some(Ok(len)), Some(Ok(unk))) => (len, unk),
            _ => {
                return Err(ArtifactError::Header(format!(
                    "bad vocab line `{vocab_line}`"
                )))
            }
        };
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            tokens.push(r.line()?.to_owned());
        }
        if unk >= len {
            return Err(ArtifactError::Header(
                "unknown-word index out of range".into(),
            ));
        }
        let vocab = Vocabulary::from_parts(tokens, unk, lowercase);

        let mut params = ModelParams::zeros(kind, activation, d, d_w, classes, len);
        params.embeddings.trainable = trainable;
        let count: usize = r.field("tensors")?;
        let expected: Vec<(String, usize, usize)> = params
            .tensors()
            .iter()
            .map(|t| (t.name.to_owned(), t.rows, t.cols))
            .collect();
        if count != expected.len() {
            return Err(ArtifactError::Header(format!(
                "{count} tensors listed, {} expected for {kind}",
                expected.len()
            )));
        }
        for (name, rows, cols) in &expected {
            let line = r.line()?;
            if line != format!("{name} {rows} {cols}") {
                return Err(ArtifactError::Header(format!(
                    "tensor entry `{line}` does not match `{name} {rows} {cols}`"
                )));
            }
        }
        if r.line()? != "data" {
            return Err(ArtifactError::Header("missing `data` marker".into()));
        }

        let body = &bytes[r.pos..];
        let total: usize = expected.iter().map(|(_, r, c)| r * c).sum();
        if body.len() != total * 8 {
            return Err(ArtifactError::Truncated {
                expected: total * 8,
                found: body.len(),
            });
        }
        let mut chunks = body.chunks_exact(8);
        for t in params.tensors_mut() {
            for x in t.data.iter_mut() {
                let b: [u8; 8] = chunks.next().expect("length checked").try_into().unwrap();
                *x = f64::from_le_bytes(b);
            }
        }
        Ok(ModelArtifact {
            task,
            params,
            vocab,
            best_epoch,
            dev_accuracy,
            manifest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ArtifactError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| ArtifactError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ArtifactError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ArtifactError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str, ArtifactError> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ArtifactError::Header("unexpected end of header".into()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map_err(|_| ArtifactError::Header("header is not UTF-8".into()))
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ArtifactError> {
        let line = self.line()?;
        let value = line
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .ok_or_else(|| ArtifactError::Header(format!("expected `{key}`, found `{line}`")))?;
        value
            .parse()
            .map_err(|_| ArtifactError::Header(format!("bad value for `{key}`: `{value}`")))
    }
}
