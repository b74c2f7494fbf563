//! Accuracy at sentence (root) and phrase (all-node) granularity, and
//! order statistics over repeated runs.

use std::fmt::Write as _;

use crate::model::{forward, EncodedTree, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalReport {
    pub root_correct: usize,
    pub root_total: usize,
    pub allnode_correct: usize,
    pub allnode_total: usize,
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

impl EvalReport {
    pub fn root_accuracy(&self) -> f64 {
        percent(self.root_correct, self.root_total)
    }

    pub fn allnode_accuracy(&self) -> f64 {
        percent(self.allnode_correct, self.allnode_total)
    }

    pub const CSV_HEADER: &'static str =
        "root_accuracy,root_correct,root_total,allnode_accuracy,allnode_correct,allnode_total";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{},{},{:.4},{},{}",
            self.root_accuracy(),
            self.root_correct,
            self.root_total,
            self.allnode_accuracy(),
            self.allnode_correct,
            self.allnode_total
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

/// Scores every labeled node; a node is correct when the argmax of its
/// class distribution (ties to the smallest index) equals its label.
pub fn evaluate(model: &ModelParams, trees: &[EncodedTree]) -> EvalReport {
    let mut report = EvalReport::default();
    for tree in trees {
        let states = forward(tree, model);
        let root = tree.root();
        for (i, (node, state)) in tree.nodes.iter().zip(&states).enumerate() {
            let (Some(label), Some(dist)) = (node.label, &state.class_distribution) else {
                continue;
            };
            let hit = dist.argmax() == label;
            report.allnode_total += 1;
            report.allnode_correct += usize::from(hit);
            if i == root {
                report.root_total += 1;
                report.root_correct += usize::from(hit);
            }
        }
    }
    report
}

pub fn root_accuracy(model: &ModelParams, trees: &[EncodedTree]) -> f64 {
    evaluate(model, trees).root_accuracy()
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("no accuracies given")]
    Empty,
    #[error("accuracy {0} is not finite")]
    NotFinite(f64),
}

/// Five-number summary of per-run accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub accuracies: Vec<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `q·(n−1)`).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn run_stats(accuracies: &[f64]) -> Result<RunStats, StatsError> {
    if accuracies.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&bad) = accuracies.iter().find(|a| !a.is_finite()) {
        return Err(StatsError::NotFinite(bad));
    }
    let mut sorted = accuracies.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(RunStats {
        accuracies: accuracies.to_vec(),
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

impl RunStats {
    /// `run_id,accuracy` rows followed by the summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run_id,accuracy\n");
        for (i, a) in self.accuracies.iter().enumerate() {
            let _ = writeln!(out, "{i},{a:.4}");
        }
        for (name, v) in [
            ("min", self.min),
            ("q1", self.q1),
            ("median", self.median),
            ("q3", self.q3),
            ("max", self.max),
        ] {
            let _ = writeln!(out, "{name},{v:.4}");
        }
        out
    }
}
