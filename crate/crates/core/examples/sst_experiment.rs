//! The multi-run protocol on the Stanford Sentiment Treebank: train each
//! configuration with several seeds, pick every run's best epoch on dev, and
//! report quartiles of the test root accuracy.
//!
//!     cargo run --release --example sst_experiment -- trees/ [glove.6B.100d.txt] [runs]
//!
//! Writes everything under `experiment-out/`. Expect roughly ten minutes per
//! 20-epoch LSTM run on one core.

use std::path::PathBuf;

use treelstm::cli::{cmd_train, RunManifest};
use treelstm::model::ModelKind;
use treelstm::treebank::TaskKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let data = PathBuf::from(
        args.next()
            .ok_or("usage: sst_experiment <trees-dir> [glove] [runs]")?,
    );
    let glove = args.next().filter(|g| g != "-").map(PathBuf::from);
    let runs: usize = args.next().map(|r| r.parse()).transpose()?.unwrap_or(10);

    println!("task,model,runs,min,q1,median,q3,max");
    for task in [TaskKind::FineGrained, TaskKind::Binary] {
        for kind in ModelKind::ALL {
            let mut m = RunManifest::default();
            m.set_data_dir(&data);
            m.embeddings_path = glove.clone();
            m.runs = runs;
            m.config.task = task;
            m.config.model_kind = kind;
            m.out_dir = PathBuf::from(format!("experiment-out/{task}-{kind}"));
            let summary = cmd_train(&m, |run, r| {
                eprintln!(
                    "{task} {kind} run {run} epoch {} dev {:.2}",
                    r.epoch, r.dev_accuracy
                )
            })?;
            let s = &summary.stats;
            println!(
                "{task},{kind},{runs},{:.2},{:.2},{:.2},{:.2},{:.2}",
                s.min, s.q1, s.median, s.q3, s.max
            );
        }
    }
    Ok(())
}
