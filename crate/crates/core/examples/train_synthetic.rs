//! Trains an LSTM-RNN and an RNN on a generated treebank whose sentiment is
//! compositional (negation, intensifiers, contrast) and reports test accuracy.
//!
//!     cargo run --release --example train_synthetic

use treelstm::embeddings::{corpus_tokens, random_for_corpus};
use treelstm::evaluation::evaluate;
use treelstm::model::{encode_all, ModelKind};
use treelstm::synthetic::{generate_splits, SyntheticConfig};
use treelstm::training::{train_with, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (train, dev, test) = generate_splits(SyntheticConfig::default(), (1000, 200, 400), 11);
    let tokens = corpus_tokens(train.iter().chain(&dev).chain(&test));

    for kind in ModelKind::ALL {
        let config = TrainConfig {
            d: 20,
            model_kind: kind,
            epochs: 8,
            ..TrainConfig::default()
        };
        let (vocab, emb) = random_for_corpus(&tokens, 20, false, config.seed);
        let (tr, dv, te) = (
            encode_all(&train, &vocab),
            encode_all(&dev, &vocab),
            encode_all(&test, &vocab),
        );
        println!("== {kind}");
        let outcome = train_with(&config, &tr, &dv, emb, |r| {
            println!(
                "epoch {:>2}  loss {:>8.4}  dev {:>6.2}  {:.1}s",
                r.epoch, r.train_loss, r.dev_accuracy, r.seconds
            )
        })?;
        let report = evaluate(&outcome.best, &te);
        println!(
            "best epoch {}: test root {:.2}%, all nodes {:.2}%\n",
            outcome.best_epoch,
            report.root_accuracy(),
            report.allnode_accuracy()
        );
    }
    Ok(())
}
