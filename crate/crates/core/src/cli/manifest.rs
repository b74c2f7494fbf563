//! Flat `key=value` configuration and the run manifest built from it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::training::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Parses `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_owned(),
        })?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_owned(),
        message: e.to_string(),
    })
}

/// Sets one `TrainConfig` field by name. Returns `false` for keys that are not config fields.
pub fn apply_config_key(
    config: &mut TrainConfig,
    key: &str,
    value: &str,
) -> Result<bool, ConfigError> {
    match key {
        "d" => config.d = parse_value(key, value)?,
        "activation" => config.activation = parse_value(key, value)?,
        "learning_rate" => config.learning_rate = parse_value(key, value)?,
        "lambda" => config.lambda = parse_value(key, value)?,
        "batch_size" => config.batch_size = parse_value(key, value)?,
        "epochs" => config.epochs = parse_value(key, value)?,
        "seed" => config.seed = parse_value(key, value)?,
        "task" => config.task = parse_value(key, value)?,
        "model_kind" => config.model_kind = parse_value(key, value)?,
        "embeddings_trainable" => config.embeddings_trainable = parse_value(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Everything needed to reproduce a training invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub train_path: PathBuf,
    pub dev_path: PathBuf,
    pub test_path: PathBuf,
    pub embeddings_path: Option<PathBuf>,
    pub embedding_dim: usize,
    pub lowercase: bool,
    pub out_dir: PathBuf,
    pub runs: usize,
    /// SHA-256 over the input files, git blob style; filled in at launch.
    pub input_hash: Option<String>,
    /// Unix seconds at launch; the only time-dependent field of a run.
    pub started_at: Option<u64>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            config: TrainConfig::default(),
            train_path: PathBuf::from("trees/train.txt"),
            dev_path: PathBuf::from("trees/dev.txt"),
            test_path: PathBuf::from("trees/test.txt"),
            embeddings_path: None,
            embedding_dim: 100,
            lowercase: false,
            out_dir: PathBuf::from("runs"),
            runs: 1,
            input_hash: None,
            started_at: None,
        }
    }
}

impl RunManifest {
    /// Points the three split paths at `train.txt`, `dev.txt`, `test.txt` in `dir`.
    pub fn set_data_dir(&mut self, dir: &Path) {
        self.train_path = dir.join("train.txt");
        self.dev_path = dir.join("dev.txt");
        self.test_path = dir.join("test.txt");
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if apply_config_key(&mut self.config, key, value)? {
            return Ok(());
        }
        match key {
            "data" => self.set_data_dir(Path::new(value)),
            "train" => self.train_path = value.into(),
            "dev" => self.dev_path = value.into(),
            "test" => self.test_path = value.into(),
            "embeddings" => {
                self.embeddings_path = (!value.is_empty() && value != "-").then(|| value.into())
            }
            "embedding_dim" => self.embedding_dim = parse_value(key, value)?,
            "lowercase" => self.lowercase = parse_value(key, value)?,
            "out" => self.out_dir = value.into(),
            "runs" => self.runs = parse_value(key, value)?,
            "input_hash" => self.input_hash = (value != "-").then(|| value.to_owned()),
            "started_at" => {
                self.started_at = if value == "-" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v) in parse_key_values(text)? {
            self.apply(&k, &v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        self.apply_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut m = RunManifest::default();
        m.apply_text(text)?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("d", &c.d);
        kv("activation", &c.activation);
        kv("learning_rate", &c.learning_rate);
        kv("lambda", &c.lambda);
        kv("batch_size", &c.batch_size);
        kv("epochs", &c.epochs);
        kv("seed", &c.seed);
        kv("task", &c.task);
        kv("model_kind", &c.model_kind);
        kv("embeddings_trainable", &c.embeddings_trainable);
        kv("train", &self.train_path.display());
        kv("dev", &self.dev_path.display());
        kv("test", &self.test_path.display());
        match &self.embeddings_path {
            Some(p) => kv("embeddings", &p.display()),
            None => kv("embeddings", &"-"),
        }
        kv("embedding_dim", &self.embedding_dim);
        kv("lowercase", &self.lowercase);
        kv("out", &self.out_dir.display());
        kv("runs", &self.runs);
        kv("input_hash", &self.input_hash.as_deref().unwrap_or("-"));
        match self.started_at {
            Some(t) => kv("started_at", &t),
            None => kv("started_at", &"-"),
        }
        out
    }

    /// Rejects unusable settings before any data is read.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.runs == 0 {
            return Err(ConfigError::Invalid("runs must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid(
                "embedding_dim must be positive".into(),
            ));
        }
        let mut inputs = vec![&self.train_path, &self.dev_path, &self.test_path];
        inputs.extend(self.embeddings_path.as_ref());
        for p in inputs {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!(
                    "input file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn input_files(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = vec![&self.train_path, &self.dev_path, &self.test_path];
        v.extend(self.embeddings_path.as_deref());
        v
    }

    pub fn compute_input_hash(&self) -> Result<String, ConfigError> {
        let mut hasher = Sha256::new();
        for p in self.input_files() {
            let bytes = std::fs::read(p).map_err(|source| ConfigError::Io {
                path: p.to_owned(),
                source,
            })?;
            hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
            hasher.update(&bytes);
        }
        Ok(hex::encode(hasher.finalize()))
    }
}
