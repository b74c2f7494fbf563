//! Loads a treebank directory (train.txt, dev.txt, test.txt) and prints the
//! same census as `treelstm prepare`. Without an argument a small generated
//! treebank is used.
//!
//!     cargo run --release --example census -- path/to/trees

use treelstm::cli::{cmd_prepare, RunManifest};
use treelstm::synthetic::{generate_splits, write_splits, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch;
    let dir = match std::env::args().nth(1) {
        Some(d) => std::path::PathBuf::from(d),
        None => {
            scratch = tempfile::tempdir()?;
            let (tr, dv, te) = generate_splits(SyntheticConfig::sst_shaped(), (854, 110, 221), 0);
            write_splits(scratch.path(), &tr, &dv, &te)?;
            eprintln!("no directory given; using a generated treebank");
            scratch.path().to_owned()
        }
    };
    let mut m = RunManifest::default();
    m.set_data_dir(&dir);
    let started = std::time::Instant::now();
    let census = cmd_prepare(&m)?;
    print!("{}", census.to_csv());
    eprintln!("loaded in {:.2}s", started.elapsed().as_secs_f64());
    Ok(())
}
