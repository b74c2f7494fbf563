//! Training: objective and gradients, the finite-difference oracle, AdaGrad,
//! and the mini-batch loop with development-set model selection.

mod adagrad;
mod backprop;
pub mod gradcheck;
pub mod reference;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adagrad::{adagrad_step, adagrad_step_regularized, AdaGradState, DEFAULT_EPSILON};
pub use backprop::{
    accumulate_data_gradient, backward, backward_into, objective, regularization, tree_loss,
    GradientSet,
};
pub use gradcheck::{central_difference, finite_difference_gradient, relative_error};

use crate::embeddings::EmbeddingTable;
use crate::evaluation::root_accuracy;
use crate::model::{EncodedTree, ModelKind, ModelParams};
use crate::tensor::ActivationKind;
use crate::treebank::TaskKind;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("label {label} does not fit a {classes}-class task")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub activation: ActivationKind,
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub task: TaskKind,
    pub model_kind: ModelKind,
    pub embeddings_trainable: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 50,
            activation: ActivationKind::Tanh,
            learning_rate: 0.05,
            lambda: 1e-3,
            batch_size: 5,
            epochs: 20,
            seed: 0,
            task: TaskKind::FineGrained,
            model_kind: ModelKind::Lstm,
            embeddings_trainable: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative and finite");
        }
        Ok(())
    }
}

/// Fresh parameters for `config` around the given word vectors.
pub fn init_params(config: &TrainConfig, mut embeddings: EmbeddingTable) -> ModelParams {
    embeddings.trainable = config.embeddings_trainable;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    ModelParams::init(
        config.model_kind,
        config.activation,
        config.d,
        config.task.num_classes(),
        embeddings,
        &mut rng,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    /// 1-based epoch of the returned snapshot, 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub history: Vec<EpochRecord>,
}

fn check_labels(trees: &[EncodedTree], classes: usize) -> Result<(), TrainError> {
    for t in trees {
        for n in &t.nodes {
            if let Some(label) = n.label {
                if label >= classes {
                    return Err(TrainError::LabelOutOfRange { label, classes });
                }
            }
        }
    }
    Ok(())
}

pub fn train(
    config: &TrainConfig,
    train_set: &[EncodedTree],
    dev_set: &[EncodedTree],
    embeddings: EmbeddingTable,
) -> Result<TrainOutcome, TrainError> {
    train_with(config, train_set, dev_set, embeddings, |_| {})
}

/// Trains for `config.epochs` epochs and returns the snapshot with the best
/// development root accuracy (earliest epoch on ties). `on_epoch` sees each
/// history record as it is produced.
pub fn train_with(
    config: &TrainConfig,
    train_set: &[EncodedTree],
    dev_set: &[EncodedTree],
    embeddings: EmbeddingTable,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let classes = config.task.num_classes();
    check_labels(train_set, classes)?;
    check_labels(dev_set, classes)?;

    let mut params = init_params(config, embeddings);
    let mut best = TrainOutcome {
        best: params.clone(),
        best_epoch: 0,
        best_dev_accuracy: f64::NEG_INFINITY,
        history: Vec::new(),
    };
    if config.epochs == 0 || train_set.is_empty() {
        best.best_dev_accuracy = root_accuracy(&params, dev_set);
        return Ok(best);
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut state = AdaGradState::new(&params);
    let mut grads = GradientSet::zeros_like(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch: Vec<EncodedTree> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let data = accumulate_data_gradient(&batch, &params, &mut grads.grads);
            let reg = adagrad_step_regularized(
                &mut params,
                &mut grads,
                &mut state,
                config.learning_rate,
                config.lambda,
            );
            let j = match reg {
                Some(reg) if data.is_finite() => data + reg,
                _ => return Err(TrainError::Diverged { epoch, batch: b }),
            };
            if !params.embeddings.trainable {
                clear_word_rows(&batch, &mut grads);
            }
            loss_sum += j;
            batches += 1;
        }
        let dev_accuracy = root_accuracy(&params, dev_set);
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        if dev_accuracy > best.best_dev_accuracy {
            best.best = params.clone();
            best.best_epoch = epoch;
            best.best_dev_accuracy = dev_accuracy;
        }
        best.history.push(record);
    }
    Ok(best)
}

/// Zeroes the word-vector gradient rows a batch wrote to.
fn clear_word_rows(batch: &[EncodedTree], grads: &mut GradientSet) {
    for t in batch {
        for n in &t.nodes {
            if let crate::model::NodeKind::Leaf { word } = n.kind {
                grads.grads.embeddings.vectors.row_mut(word).fill(0.0);
            }
        }
    }
}

/// `epoch,train_loss,dev_accuracy` rows; timings are kept out so the file is reproducible.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,dev_accuracy\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.10},{:.4}\n",
            r.epoch, r.train_loss, r.dev_accuracy
        ));
    }
    out
}

pub fn timing_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,seconds\n");
    for r in history {
        out.push_str(&format!("{},{:.3}\n", r.epoch, r.seconds));
    }
    out
}
