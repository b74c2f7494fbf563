//! Central finite differences as an independent check on the analytic gradient.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backprop::{backward, GradientSet};
use super::reference::{reference_objective, DoubleDouble, Real};
use super::TrainError;
use crate::embeddings::{random_embeddings, Vocabulary};
use crate::model::{EncodedTree, ModelKind, ModelParams};
use crate::tensor::ActivationKind;
use crate::treebank::Tree;

/// `(f(θ+h) − f(θ−h)) / 2h` for every coordinate of `theta`, restoring it afterwards.
pub fn central_difference(
    theta: &mut [f64],
    mut f: impl FnMut(&[f64]) -> f64,
    h: f64,
) -> Result<Vec<f64>, TrainError> {
    check_step(h)?;
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = f(theta);
        theta[i] = orig - h;
        let minus = f(theta);
        theta[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

fn check_step(h: f64) -> Result<(), TrainError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(TrainError::InvalidStep(h))
    }
}

/// Numerical gradient of the objective by central differences.
///
/// The objective is evaluated by the independent reference implementation in
/// double-double precision, and each difference is divided by the exact
/// distance between the two rounded `f64` points, so the result is limited by
/// truncation error (`O(h²)`) rather than by `f64` cancellation.
pub fn finite_difference_gradient(
    batch: &[EncodedTree],
    params: &ModelParams,
    lambda: f64,
    h: f64,
) -> Result<GradientSet, TrainError> {
    check_step(h)?;
    let mut work = params.clone();
    let mut out = GradientSet::zeros_like(params);
    let num_tensors = params.tensors().len();
    for t in 0..num_tensors {
        let len = params.tensors()[t].data.len();
        for i in 0..len {
            let orig = work.tensors_mut()[t].data[i];
            let (up, down) = (orig + h, orig - h);
            work.tensors_mut()[t].data[i] = up;
            let plus: DoubleDouble = reference_objective(batch, &work, lambda);
            work.tensors_mut()[t].data[i] = down;
            let minus: DoubleDouble = reference_objective(batch, &work, lambda);
            work.tensors_mut()[t].data[i] = orig;
            let step = DoubleDouble::of(up) - DoubleDouble::of(down);
            out.grads.tensors_mut()[t].data[i] = ((plus - minus) / step).to_f64();
        }
    }
    Ok(out)
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Worst elementwise relative error per tensor name.
pub fn compare(analytic: &GradientSet, numeric: &GradientSet) -> BTreeMap<&'static str, f64> {
    let mut worst = BTreeMap::new();
    for (a, n) in analytic.grads.tensors().iter().zip(numeric.grads.tensors()) {
        let e = a
            .data
            .iter()
            .zip(n.data)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        worst.insert(a.name, e);
    }
    worst
}

/// A random binary tree over tokens `w0..w{vocab-1}`, every node labeled.
pub fn random_tree<R: Rng>(rng: &mut R, leaves: usize, vocab: usize, classes: usize) -> Tree {
    assert!(leaves >= 1);
    let label = Some(rng.gen_range(0..classes) as u8);
    if leaves == 1 {
        return Tree::leaf(label, format!("w{}", rng.gen_range(0..vocab)));
    }
    let left = rng.gen_range(1..leaves);
    let l = random_tree(rng, left, vocab, classes);
    let r = random_tree(rng, leaves - left, vocab, classes);
    Tree::inner(label, l, r)
}

/// One tiny randomized gradient-check problem.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub kind: ModelKind,
    pub activation: ActivationKind,
    pub seed: u64,
    pub lambda: f64,
    pub trees: Vec<EncodedTree>,
    pub params: ModelParams,
}

/// Random parameters (including non-zero biases) and a batch of random trees.
#[allow(clippy::too_many_arguments)]
pub fn random_instance(
    kind: ModelKind,
    activation: ActivationKind,
    d: usize,
    d_w: usize,
    leaves: std::ops::RangeInclusive<usize>,
    batch: usize,
    lambda: f64,
    seed: u64,
) -> CheckInstance {
    const VOCAB: usize = 6;
    const CLASSES: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::new((0..VOCAB).map(|i| format!("w{i}")), false);
    let emb = random_embeddings(vocab.len(), d_w, rng.gen());
    let mut params = ModelParams::init(kind, activation, d, CLASSES, emb, &mut rng);
    for t in params.tensors_mut() {
        if t.cols == 1 {
            t.data
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
    }
    let trees = (0..batch)
        .map(|_| {
            let n = rng.gen_range(leaves.clone());
            EncodedTree::encode(&random_tree(&mut rng, n, VOCAB, CLASSES), &vocab)
        })
        .collect();
    CheckInstance {
        kind,
        activation,
        seed,
        lambda,
        trees,
        params,
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub kind: ModelKind,
    pub activation: ActivationKind,
    pub seed: u64,
    pub lambda: f64,
    pub worst: BTreeMap<&'static str, f64>,
}

impl CheckResult {
    pub fn max_error(&self) -> f64 {
        self.worst.values().copied().fold(0.0, f64::max)
    }

    pub fn failing(&self, threshold: f64) -> Vec<&'static str> {
        self.worst
            .iter()
            .filter(|(_, &e)| e.is_nan() || e >= threshold)
            .map(|(&n, _)| n)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub d: usize,
    pub d_w: usize,
    pub leaves: std::ops::RangeInclusive<usize>,
    pub batch: usize,
    pub h: f64,
    /// Adds a constant to the analytic gradient of the named tensor before comparing.
    pub inject_fault: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            seeds: (0..5).collect(),
            lambdas: vec![0.0, 1e-3],
            d: 4,
            d_w: 3,
            leaves: 3..=6,
            batch: 2,
            h: 1e-5,
            inject_fault: None,
        }
    }
}

/// Runs both models × all activations × seeds × lambdas.
pub fn run_gradcheck(opts: &GradCheckOptions) -> Result<Vec<CheckResult>, TrainError> {
    let mut results = Vec::new();
    for kind in ModelKind::ALL {
        for activation in ActivationKind::ALL {
            for &seed in &opts.seeds {
                for &lambda in &opts.lambdas {
                    let inst = random_instance(
                        kind,
                        activation,
                        opts.d,
                        opts.d_w,
                        opts.leaves.clone(),
                        opts.batch,
                        lambda,
                        seed,
                    );
                    let (_, mut analytic) = backward(&inst.trees, &inst.params, lambda);
                    if let Some(name) = &opts.inject_fault {
                        if let Some(t) = analytic.tensor_mut(name) {
                            t.iter_mut().for_each(|g| *g += 1e-2);
                        }
                    }
                    let numeric =
                        finite_difference_gradient(&inst.trees, &inst.params, lambda, opts.h)?;
                    results.push(CheckResult {
                        kind,
                        activation,
                        seed,
                        lambda,
                        worst: compare(&analytic, &numeric),
                    });
                }
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let mut theta = [3.0];
        let g = central_difference(&mut theta, |t| t[0] * t[0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
        assert_eq!(theta, [3.0]);
    }

    #[test]
    fn zero_step_is_rejected() {
        let mut theta = [1.0];
        assert!(matches!(
            central_difference(&mut theta, |t| t[0], 0.0),
            Err(TrainError::InvalidStep(_))
        ));
        let inst = random_instance(ModelKind::Rnn, ActivationKind::Tanh, 2, 2, 2..=2, 1, 0.0, 0);
        assert!(finite_difference_gradient(&inst.trees, &inst.params, 0.0, 0.0).is_err());
    }

    #[test]
    fn random_trees_have_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..10 {
            let t = random_tree(&mut rng, n, 4, 5);
            assert_eq!(t.num_leaves(), n);
            assert_eq!(t.num_labeled(), 2 * n - 1);
        }
    }

    #[test]
    fn analytic_matches_numeric_on_one_instance() {
        for kind in ModelKind::ALL {
            let inst = random_instance(kind, ActivationKind::Tanh, 4, 3, 3..=6, 2, 1e-3, 42);
            let (_, a) = backward(&inst.trees, &inst.params, inst.lambda);
            let n =
                finite_difference_gradient(&inst.trees, &inst.params, inst.lambda, 1e-5).unwrap();
            for (name, e) in compare(&a, &n) {
                assert!(e < 1e-4, "{kind} {name}: {e}");
            }
        }
    }
}
