//! Writes a generated treebank (train/dev/test.txt) and a matching GloVe-style
//! vector file, for trying the `treelstm` binary without the real data.
//!
//!     cargo run --example synthetic_corpus -- demo-data [--sst-shaped]
//!     cargo run --bin treelstm -- train --data demo-data \
//!         --embeddings demo-data/vectors.txt --embedding-dim 20 --d 20 --epochs 5

use std::path::PathBuf;

use treelstm::synthetic::{generate_splits, write_glove, write_splits, SyntheticConfig};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "demo-data".into()),
    );
    // --sst-shaped: real split sizes, ~19 tokens per sentence, 100-D vectors
    let sst = std::env::args().any(|a| a == "--sst-shaped");
    let (config, sizes, dim) = if sst {
        (SyntheticConfig::sst_shaped(), (8544, 1101, 2210), 100)
    } else {
        (SyntheticConfig::default(), (800, 100, 200), 20)
    };
    let (train, dev, test) = generate_splits(config.clone(), sizes, 0);
    write_splits(&dir, &train, &dev, &test)?;
    write_glove(&dir.join("vectors.txt"), &config, dim, 0)?;
    println!(
        "wrote {} (train {}, dev {}, test {})",
        dir.display(),
        train.len(),
        dev.len(),
        test.len()
    );
    Ok(())
}
