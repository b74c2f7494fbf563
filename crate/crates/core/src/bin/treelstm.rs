use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use treelstm::cli::{
    cmd_complexity, cmd_evaluate, cmd_gradcheck, cmd_prepare, cmd_stats, cmd_train, CliError,
    RunManifest,
};
use treelstm::model::ModelKind;
use treelstm::tensor::ActivationKind;
use treelstm::training::gradcheck::GradCheckOptions;
use treelstm::treebank::TaskKind;

#[derive(Parser)]
#[command(
    name = "treelstm",
    version,
    about = "LSTM-RNN and RNN sentiment models over parse trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the treebank (and embeddings) and print a census.
    Prepare(RunArgs),
    /// Train one or more seeded runs.
    Train(RunArgs),
    /// Score a saved model on a treebank file.
    Evaluate {
        /// Model file written by `train`.
        #[arg(long)]
        artifact: PathBuf,
        /// Treebank file in the bracketed format.
        #[arg(long)]
        split: PathBuf,
        /// Task view of the split; defaults to the model's task.
        #[arg(long)]
        task: Option<TaskKind>,
    },
    /// Compare analytic gradients with central differences on random trees.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Perturb the analytic gradient of this tensor (self-test of the checker).
        #[arg(long, value_name = "TENSOR")]
        inject_fault: Option<String>,
    },
    /// Quartiles of a `run_id,accuracy` CSV.
    Stats { csv: PathBuf },
    /// Multiplication counts for RNN and LSTM-RNN over a treebank file.
    Complexity {
        #[arg(long, default_value_t = 50)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        d_w: usize,
        treebank: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key=value file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding train.txt, dev.txt and test.txt.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    activation: Option<ActivationKind>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// GloVe text file; random vectors are used without it.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    freeze_embeddings: bool,
    /// Fall back to the lowercased token when the exact one has no vector.
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn manifest(&self) -> Result<RunManifest, CliError> {
        let mut m = RunManifest::default();
        if let Some(path) = &self.config {
            m.apply_file(path)?;
        }
        if let Some(dir) = &self.data {
            m.set_data_dir(dir);
        }
        let c = &mut m.config;
        set(&mut m.train_path, &self.train);
        set(&mut m.dev_path, &self.dev);
        set(&mut m.test_path, &self.test);
        set(&mut c.model_kind, &self.model);
        set(&mut c.activation, &self.activation);
        set(&mut c.task, &self.task);
        set(&mut c.d, &self.d);
        set(&mut c.learning_rate, &self.lr);
        set(&mut c.lambda, &self.lambda);
        set(&mut c.batch_size, &self.batch_size);
        set(&mut c.epochs, &self.epochs);
        set(&mut c.seed, &self.seed);
        if self.freeze_embeddings {
            c.embeddings_trainable = false;
        }
        set(&mut m.runs, &self.runs);
        set(&mut m.embedding_dim, &self.embedding_dim);
        set(&mut m.out_dir, &self.out);
        if self.embeddings.is_some() {
            m.embeddings_path = self.embeddings.clone();
        }
        m.lowercase |= self.lowercase;
        Ok(m)
    }
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(args) => print!("{}", cmd_prepare(&args.manifest()?)?.to_csv()),
        Command::Train(args) => {
            let m = args.manifest()?;
            let summary = cmd_train(&m, |run, r| {
                eprintln!(
                    "run {run} epoch {:>3}  loss {:.4}  dev {:.2}  ({:.1}s)",
                    r.epoch, r.train_loss, r.dev_accuracy, r.seconds
                )
            })?;
            println!("run,seed,best_epoch,dev_accuracy,test_accuracy,artifact");
            for r in &summary.runs {
                println!(
                    "{},{},{},{:.4},{:.4},{}",
                    r.run,
                    r.seed,
                    r.best_epoch,
                    r.dev_accuracy,
                    r.test.root_accuracy(),
                    r.dir.join("model.bin").display()
                );
            }
            eprintln!("stats: {}", m.out_dir.join("stats.csv").display());
        }
        Command::Evaluate {
            artifact,
            split,
            task,
        } => print!("{}", cmd_evaluate(&artifact, &split, task)?.to_csv()),
        Command::Gradcheck {
            threshold,
            step,
            inject_fault,
        } => {
            let opts = GradCheckOptions {
                h: step,
                inject_fault,
                ..GradCheckOptions::default()
            };
            match cmd_gradcheck(threshold, &opts) {
                Ok(report) => {
                    print!("{}", report.to_csv());
                    eprintln!(
                        "worst relative error {:.3e} < {threshold:e}",
                        report.max_error()
                    );
                }
                Err((report, e)) => {
                    print!("{}", report.to_csv());
                    return Err(e);
                }
            }
        }
        Command::Stats { csv } => print!("{}", cmd_stats(&csv)?.to_csv()),
        Command::Complexity { d, d_w, treebank } => {
            print!("{}", cmd_complexity(d, d_w, Path::new(&treebank))?.to_csv())
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
