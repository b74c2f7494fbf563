//! Runs the gradient-check matrix (both models, every activation, five
//! seeds, two regularization strengths) and prints the worst relative error
//! per parameter tensor.
//!
//!     cargo run --release --example gradient_check

use treelstm::cli::cmd_gradcheck;
use treelstm::training::gradcheck::GradCheckOptions;

fn main() {
    let threshold = 1e-4;
    let (report, ok) = match cmd_gradcheck(threshold, &GradCheckOptions::default()) {
        Ok(r) => (r, true),
        Err((r, e)) => {
            eprintln!("{e}");
            (r, false)
        }
    };
    println!(
        "{:<5} {:<9} {:<12} {:>12}",
        "model", "act", "tensor", "worst err"
    );
    for (kind, act, name, err) in report.worst_by_tensor() {
        println!(
            "{:<5} {:<9} {:<12} {:>12.3e}",
            kind.to_string(),
            act.to_string(),
            name,
            err
        );
    }
    println!(
        "\n{} instances, worst {:.3e}: {}",
        report.results.len(),
        report.max_error(),
        if ok { "PASS" } else { "FAIL" }
    );
    if !ok {
        std::process::exit(1);
    }
}
