//! The commands behind the `treelstm` binary.
//!
//! Each command is a plain function returning its report so that tests and
//! examples can run it in-process; the binary only parses flags and prints.

pub mod artifact;
pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use artifact::{ArtifactError, ModelArtifact};
pub use manifest::{ConfigError, RunManifest};

use crate::embeddings::{
    corpus_tokens, glove_coverage, load_glove, random_for_corpus, EmbeddingError, EmbeddingTable,
    Vocabulary,
};
use crate::evaluation::{evaluate, run_stats, EvalReport, RunStats, StatsError};
use crate::model::{count_matvecs_with, encode_all, matvec_cost, ModelKind, ModelParams};
use crate::tensor::ActivationKind;
use crate::training::gradcheck::{run_gradcheck, CheckResult, GradCheckOptions};
use crate::training::{history_csv, timing_csv, train_with, TrainConfig, TrainError};
use crate::treebank::{
    distinct_phrases, load_split, to_binary_task, tree_stats, Dataset, TaskKind, Tree,
    TreebankError,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("class-count mismatch: model has {model} classes, the {task} task has {expected}")]
    ClassMismatch {
        model: usize,
        task: TaskKind,
        expected: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `run_id,accuracy`, found `{text}`")]
    StatsCsv {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("gradient check failed at threshold {threshold:e}; failing tensors: {}", failing.join(", "))]
    GradCheck {
        threshold: f64,
        failing: Vec<String>,
    },
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn load_fine_splits(m: &RunManifest) -> Result<[Vec<Tree>; 3], CliError> {
    Ok([
        load_split(&m.train_path)?,
        load_split(&m.dev_path)?,
        load_split(&m.test_path)?,
    ])
}

/// Vocabulary and word vectors for the corpus: GloVe rows when an embedding
/// file is configured, random rows otherwise.
fn load_embeddings(
    m: &RunManifest,
    splits: &[Vec<Tree>; 3],
    seed: u64,
) -> Result<(Vocabulary, EmbeddingTable), CliError> {
    let tokens = corpus_tokens(splits.iter().flatten());
    Ok(match &m.embeddings_path {
        Some(path) => load_glove(path, m.embedding_dim, &tokens, m.lowercase, seed)?,
        None => random_for_corpus(&tokens, m.embedding_dim, m.lowercase, seed),
    })
}

// ---------------------------------------------------------------- prepare

#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    /// Sentences per split, fine-grained task (train, dev, test).
    pub fine: [usize; 3],
    /// Sentences per split after dropping neutral roots.
    pub binary: [usize; 3],
    pub sentences: usize,
    pub labeled_nodes: usize,
    pub distinct_phrases: usize,
    pub mean_length: f64,
    pub vocabulary: usize,
    pub embedding_dim: usize,
    /// Corpus tokens that found a pre-trained vector, if an embedding file was given.
    pub embedding_hits: Option<usize>,
}

impl Census {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        let mut row = |k: &str, v: String| {
            let _ = writeln!(out, "{k},{v}");
        };
        for (i, split) in ["train", "dev", "test"].iter().enumerate() {
            row(&format!("fine_{split}"), self.fine[i].to_string());
        }
        for (i, split) in ["train", "dev", "test"].iter().enumerate() {
            row(&format!("binary_{split}"), self.binary[i].to_string());
        }
        row("sentences", self.sentences.to_string());
        row("labeled_nodes", self.labeled_nodes.to_string());
        row("distinct_phrases", self.distinct_phrases.to_string());
        row("mean_length", format!("{:.4}", self.mean_length));
        row("vocabulary", self.vocabulary.to_string());
        row("embedding_dim", self.embedding_dim.to_string());
        if let Some(h) = self.embedding_hits {
            row("embedding_hits", h.to_string());
        }
        out
    }
}

/// Loads and validates the splits (and embeddings, if configured) and counts them.
pub fn cmd_prepare(m: &RunManifest) -> Result<Census, CliError> {
    m.validate()?;
    let splits = load_fine_splits(m)?;
    let stats = tree_stats(splits.iter().flatten());
    let (vocab, table) = load_embeddings(m, &splits, m.config.seed)?;
    let embedding_hits = match &m.embeddings_path {
        Some(path) => Some(glove_coverage(
            path,
            &corpus_tokens(splits.iter().flatten()),
            m.lowercase,
        )?),
        None => None,
    };
    Ok(Census {
        fine: [splits[0].len(), splits[1].len(), splits[2].len()],
        binary: [
            to_binary_task(&splits[0]).len(),
            to_binary_task(&splits[1]).len(),
            to_binary_task(&splits[2]).len(),
        ],
        sentences: stats.sentences,
        labeled_nodes: stats.labeled_nodes,
        distinct_phrases: distinct_phrases(splits.iter().flatten()),
        mean_length: stats.mean_length(),
        vocabulary: vocab.len(),
        embedding_dim: table.dim(),
        embedding_hits,
    })
}

// ------------------------------------------------------------------ train

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    pub test: EvalReport,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub runs: Vec<RunSummary>,
    /// Summary of the per-run test root accuracies.
    pub stats: RunStats,
}

/// Output layout under `out_dir`:
///
/// ```text
/// manifest.txt          resolved settings, input hash and launch time
/// stats.csv             test root accuracy per run plus quartiles
/// run-0/model.bin       best-on-dev snapshot
/// run-0/history.csv     epoch,train_loss,dev_accuracy
/// run-0/timing.csv      epoch,seconds
/// run-0/test.csv        evaluation of the snapshot on the test split
/// ```
///
/// Run `i` uses seed `config.seed + i`. Everything except `manifest.txt` and
/// `timing.csv` is a pure function of the inputs and seed.
pub fn cmd_train(
    manifest: &RunManifest,
    mut progress: impl FnMut(usize, &crate::training::EpochRecord),
) -> Result<TrainSummary, CliError> {
    manifest.validate()?;
    let input_hash = manifest.compute_input_hash()?;
    let splits = load_fine_splits(manifest)?;
    let task = manifest.config.task;
    let [train, dev, test] = splits.clone();
    let data = Dataset::from_fine(train, dev, test, task);

    create_dir(&manifest.out_dir)?;
    let mut resolved = manifest.clone();
    resolved.input_hash = Some(input_hash.clone());
    resolved.started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs());
    write_file(&manifest.out_dir.join("manifest.txt"), resolved.to_text())?;

    let mut runs = Vec::with_capacity(manifest.runs);
    for run in 0..manifest.runs {
        let config = TrainConfig {
            seed: manifest.config.seed + run as u64,
            ..manifest.config.clone()
        };
        let (vocab, embeddings) = load_embeddings(manifest, &splits, config.seed)?;
        let train_set = encode_all(&data.train, &vocab);
        let dev_set = encode_all(&data.dev, &vocab);
        let test_set = encode_all(&data.test, &vocab);
        let outcome = train_with(&config, &train_set, &dev_set, embeddings, |r| {
            progress(run, r)
        })?;

        let dir = manifest.out_dir.join(format!("run-{run}"));
        create_dir(&dir)?;
        let test = evaluate(&outcome.best, &test_set);
        let artifact = ModelArtifact {
            task,
            params: outcome.best,
            vocab,
            best_epoch: outcome.best_epoch,
            dev_accuracy: outcome.best_dev_accuracy,
            manifest: input_hash.clone(),
        };
        artifact.save(dir.join("model.bin"))?;
        write_file(&dir.join("history.csv"), history_csv(&outcome.history))?;
        write_file(&dir.join("timing.csv"), timing_csv(&outcome.history))?;
        write_file(&dir.join("test.csv"), test.to_csv())?;
        runs.push(RunSummary {
            run,
            seed: config.seed,
            dir,
            best_epoch: outcome.best_epoch,
            dev_accuracy: outcome.best_dev_accuracy,
            test,
        });
    }
    let accuracies: Vec<f64> = runs.iter().map(|r| r.test.root_accuracy()).collect();
    let stats = run_stats(&accuracies)?;
    write_file(&manifest.out_dir.join("stats.csv"), stats.to_csv())?;
    Ok(TrainSummary { runs, stats })
}

// --------------------------------------------------------------- evaluate

/// Scores a saved model on a treebank file. The file is read as
/// fine-grained and converted to `task` (default: the model's own task).
pub fn cmd_evaluate(
    artifact_path: &Path,
    split_path: &Path,
    task: Option<TaskKind>,
) -> Result<EvalReport, CliError> {
    let artifact = ModelArtifact::load(artifact_path)?;
    let task = task.unwrap_or(artifact.task);
    let model = artifact.params.num_classes();
    if model != task.num_classes() {
        return Err(CliError::ClassMismatch {
            model,
            task,
            expected: task.num_classes(),
        });
    }
    let trees = load_split(split_path)?;
    let trees = match task {
        TaskKind::FineGrained => trees,
        TaskKind::Binary => to_binary_task(&trees),
    };
    Ok(evaluate(
        &artifact.params,
        &encode_all(&trees, &artifact.vocab),
    ))
}

// -------------------------------------------------------------- gradcheck

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub threshold: f64,
    pub results: Vec<CheckResult>,
}

impl GradCheckReport {
    /// Worst relative error per (model, activation, tensor) over seeds and lambdas.
    pub fn worst_by_tensor(&self) -> Vec<(ModelKind, ActivationKind, &'static str, f64)> {
        let mut rows: Vec<(ModelKind, ActivationKind, &'static str, f64)> = Vec::new();
        for r in &self.results {
            for (&name, &e) in &r.worst {
                match rows
                    .iter_mut()
                    .find(|(k, a, n, _)| *k == r.kind && *a == r.activation && *n == name)
                {
                    Some(row) => row.3 = row.3.max(e),
                    None => rows.push((r.kind, r.activation, name, e)),
                }
            }
        }
        rows
    }

    pub fn failing(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.results {
            for n in r.failing(self.threshold) {
                if !names.iter().any(|x| x == n) {
                    names.push(n.to_owned());
                }
            }
        }
        names
    }

    pub fn max_error(&self) -> f64 {
        self.results
            .iter()
            .map(CheckResult::max_error)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,activation,tensor,max_relative_error,pass\n");
        for (k, a, n, e) in self.worst_by_tensor() {
            let _ = writeln!(out, "{k},{a},{n},{e:.3e},{}", e < self.threshold);
        }
        out
    }
}

/// Runs the full gradient-check matrix; `Err(CliError::GradCheck)` lists failing tensors.
pub fn cmd_gradcheck(
    threshold: f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, (GradCheckReport, CliError)> {
    let results = match run_gradcheck(opts) {
        Ok(r) => r,
        Err(e) => {
            let empty = GradCheckReport {
                threshold,
                results: Vec::new(),
            };
            return Err((empty, e.into()));
        }
    };
    let report = GradCheckReport { threshold, results };
    let failing = report.failing();
    if failing.is_empty() {
        Ok(report)
    } else {
        Err((report, CliError::GradCheck { threshold, failing }))
    }
}

// ------------------------------------------------------------------ stats

/// Reads the `run_id,accuracy` rows of a stats file (summary rows are ignored).
pub fn read_accuracies(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || CliError::StatsCsv {
            path: path.to_owned(),
            line: i + 1,
            text: line.to_owned(),
        };
        if line.trim().is_empty() {
            continue;
        }
        let (id, acc) = line.split_once(',').ok_or_else(bad)?;
        if id.parse::<usize>().is_err() {
            continue;
        }
        out.push(acc.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}

pub fn cmd_stats(path: &Path) -> Result<RunStats, CliError> {
    Ok(run_stats(&read_accuracies(path)?)?)
}

// ------------------------------------------------------------- complexity

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub d: usize,
    pub d_w: usize,
    pub trees: usize,
    pub mean_rnn: f64,
    pub mean_lstm: f64,
    /// Trees whose instrumented count differs from the closed form (either model).
    pub mismatches: usize,
    pub seconds: f64,
}

impl ComplexityReport {
    pub fn ratio(&self) -> f64 {
        self.mean_lstm / self.mean_rnn
    }

    pub fn to_csv(&self) -> String {
        format!(
            "d,d_w,trees,mean_rnn_mults,mean_lstm_mults,ratio,closed_form_mismatches\n{},{},{},{:.2},{:.2},{:.4},{}\n",
            self.d,
            self.d_w,
            self.trees,
            self.mean_rnn,
            self.mean_lstm,
            self.ratio(),
            self.mismatches
        )
    }
}

/// Counts composition multiplications over every tree, by instrumenting real
/// forward passes, and checks each count against the closed form.
pub fn complexity_of(trees: &[Tree], d: usize, d_w: usize) -> ComplexityReport {
    let started = Instant::now();
    let rnn = ModelParams::zeros(ModelKind::Rnn, ActivationKind::Tanh, d, d_w, 2, 1);
    let lstm = ModelParams::zeros(ModelKind::Lstm, ActivationKind::Tanh, d, d_w, 2, 1);
    let (mut sum_rnn, mut sum_lstm, mut mismatches) = (0u64, 0u64, 0usize);
    for t in trees {
        let n = t.num_leaves();
        let r = count_matvecs_with(t, &rnn);
        let l = count_matvecs_with(t, &lstm);
        if r != matvec_cost(n, ModelKind::Rnn, d, d_w)
            || l != matvec_cost(n, ModelKind::Lstm, d, d_w)
        {
            mismatches += 1;
        }
        sum_rnn += r;
        sum_lstm += l;
    }
    let n = trees.len().max(1) as f64;
    ComplexityReport {
        d,
        d_w,
        trees: trees.len(),
        mean_rnn: sum_rnn as f64 / n,
        mean_lstm: sum_lstm as f64 / n,
        mismatches,
        seconds: started.elapsed().as_secs_f64(),
    }
}

pub fn cmd_complexity(d: usize, d_w: usize, treebank: &Path) -> Result<ComplexityReport, CliError> {
    Ok(complexity_of(&load_split(treebank)?, d, d_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_splits, write_splits, SyntheticConfig};

    fn workspace(dir: &Path) -> RunManifest {
        let (tr, dv, te) = generate_splits(SyntheticConfig::default(), (30, 10, 10), 4);
        write_splits(dir, &tr, &dv, &te).unwrap();
        let mut m = RunManifest::default();
        m.set_data_dir(dir);
        m.out_dir = dir.join("out");
        m.embedding_dim = 6;
        m.config.d = 4;
        m.config.epochs = 2;
        m
    }

    #[test]
    fn train_writes_consistent_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let mut m = workspace(tmp.path());
        m.runs = 2;
        let summary = cmd_train(&m, |_, _| {}).unwrap();
        assert_eq!(summary.runs.len(), 2);
        assert_eq!(summary.stats.accuracies.len(), 2);
        for r in &summary.runs {
            let a = ModelArtifact::load(r.dir.join("model.bin")).unwrap();
            assert_eq!(a.dev_accuracy, r.dev_accuracy);
            let eval = cmd_evaluate(&r.dir.join("model.bin"), &m.dev_path, None).unwrap();
            assert_eq!(eval.root_accuracy(), a.dev_accuracy);
        }
        assert_eq!(summary.runs[1].seed, 1);
        let text = fs::read_to_string(m.out_dir.join("manifest.txt")).unwrap();
        let back = RunManifest::from_text(&text).unwrap();
        assert_eq!(back.config, m.config);
        assert!(back.input_hash.is_some() && back.started_at.is_some());
    }

    #[test]
    fn evaluate_rejects_class_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let mut m = workspace(tmp.path());
        m.config.epochs = 0;
        let s = cmd_train(&m, |_, _| {}).unwrap();
        let err = cmd_evaluate(
            &s.runs[0].dir.join("model.bin"),
            &m.test_path,
            Some(TaskKind::Binary),
        )
        .unwrap_err();
        assert!(err.to_string().contains("class-count mismatch"), "{err}");
    }

    #[test]
    fn stats_reads_back_its_own_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let stats = run_stats(&[40.0, 42.5, 41.0]).unwrap();
        let p = tmp.path().join("s.csv");
        fs::write(&p, stats.to_csv()).unwrap();
        let back = cmd_stats(&p).unwrap();
        assert_eq!(back.median, 41.0);
        assert_eq!(back.accuracies.len(), 3);
    }

    #[test]
    fn complexity_matches_closed_forms() {
        let (trees, _, _) = generate_splits(SyntheticConfig::default(), (40, 0, 0), 1);
        let r = complexity_of(&trees, 5, 7);
        assert_eq!(r.mismatches, 0);
        assert_eq!(r.trees, 40);
    }
}
