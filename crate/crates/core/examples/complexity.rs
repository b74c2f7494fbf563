//! Counts the multiplications of real forward passes for both models and
//! compares them with the closed-form cost model.
//!
//!     cargo run --release --example complexity -- [treebank-file]

use treelstm::cli::complexity_of;
use treelstm::model::{matvec_cost, ModelKind};
use treelstm::synthetic::{Generator, SyntheticConfig};
use treelstm::treebank::load_split;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trees = match std::env::args().nth(1) {
        Some(path) => load_split(path)?,
        None => Generator::new(SyntheticConfig::sst_shaped(), 0).sentences(2210),
    };

    println!("per-sentence cost at N leaves, d = d_w = 100");
    println!("{:>3} {:>12} {:>12} {:>7}", "N", "rnn", "lstm", "ratio");
    for n in [2, 5, 10, 19, 40] {
        let r = matvec_cost(n, ModelKind::Rnn, 100, 100);
        let l = matvec_cost(n, ModelKind::Lstm, 100, 100);
        println!("{n:>3} {r:>12} {l:>12} {:>7.3}", l as f64 / r as f64);
    }

    for (d, d_w) in [(50, 100), (100, 100)] {
        let report = complexity_of(&trees, d, d_w);
        println!("\n{} trees, d={d}, d_w={d_w}", report.trees);
        print!("{}", report.to_csv());
    }
    Ok(())
}
