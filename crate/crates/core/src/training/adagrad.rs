use super::backprop::GradientSet;
use crate::model::{ModelParams, EMBEDDINGS};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Updated weights smaller than this in magnitude are set to zero.
///
/// Under the L2 term, weights that see no data gradient shrink geometrically
/// toward zero, and once their squares leave the normal `f64` range every
/// operation on them is many times slower. Nothing below `√f64::MIN_POSITIVE`
/// (about `1.5e-154`) can affect the objective at `f64` precision.
pub const FLUSH_BELOW: f64 = 1.4916681462400413e-154;

#[inline]
fn flush(w: f64) -> f64 {
    if w.abs() < FLUSH_BELOW {
        0.0
    } else {
        w
    }
}

/// Per-parameter sums of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    pub accumulators: ModelParams,
    pub epsilon: f64,
}

impl AdaGradState {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_epsilon(params, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(params: &ModelParams, epsilon: f64) -> Self {
        AdaGradState {
            accumulators: params.zeros_like(),
            epsilon,
        }
    }
}

/// `acc += g²; θ −= lr · g / (√acc + ε)`, elementwise, then [`FLUSH_BELOW`].
/// Frozen word vectors are skipped.
pub fn adagrad_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdaGradState,
    lr: f64,
) {
    let eps = state.epsilon;
    let trainable = params.embeddings.trainable;
    let gs = grads.grads.tensors();
    let accs = state.accumulators.tensors_mut();
    for ((p, g), acc) in params.tensors_mut().into_iter().zip(gs).zip(accs) {
        debug_assert_eq!(p.name, g.name);
        if p.name == EMBEDDINGS && !trainable {
            continue;
        }
        for ((w, &g), a) in p.data.iter_mut().zip(g.data).zip(acc.data.iter_mut()) {
            if g == 0.0 {
                continue;
            }
            *a += g * g;
            *w = flush(*w - lr * g / (a.sqrt() + eps));
        }
    }
}

/// One training step fused into a single pass over the parameters:
/// adds the L2 term `λθ` to the accumulated data gradient, applies
/// [`adagrad_step`]'s update, and resets the gradient buffers to zero.
///
/// Returns `(λ/2)·‖θ‖²` of the parameters before the step, or `None` if
/// any gradient entry was not finite. Frozen word vectors are neither
/// updated nor cleared; their buffer is the caller's to reset.
pub fn adagrad_step_regularized(
    params: &mut ModelParams,
    grads: &mut GradientSet,
    state: &mut AdaGradState,
    lr: f64,
    lambda: f64,
) -> Option<f64> {
    let eps = state.epsilon;
    let trainable = params.embeddings.trainable;
    let mut sq = 0.0;
    let mut finite = true;
    let gs = grads.grads.tensors_mut();
    let accs = state.accumulators.tensors_mut();
    for ((p, g), acc) in params.tensors_mut().into_iter().zip(gs).zip(accs) {
        debug_assert_eq!(p.name, g.name);
        if p.name == EMBEDDINGS && !trainable {
            continue;
        }
        // Branch-free so the loop vectorizes; a zero gradient leaves `w` and `a` as they were.
        let mut tensor_sq = 0.0;
        for ((w, g), a) in p
            .data
            .iter_mut()
            .zip(g.data.iter_mut())
            .zip(acc.data.iter_mut())
        {
            tensor_sq += *w * *w;
            let total = *g + lambda * *w;
            *g = 0.0;
            finite &= total.is_finite();
            *a += total * total;
            *w = flush(*w - lr * total / (a.sqrt() + eps));
        }
        sq += tensor_sq;
    }
    finite.then_some(if lambda == 0.0 {
        0.0
    } else {
        0.5 * lambda * sq
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::tensor::ActivationKind;

    fn tiny() -> ModelParams {
        let mut p = ModelParams::zeros(ModelKind::Rnn, ActivationKind::Tanh, 2, 2, 2, 2);
        for t in p.tensors_mut() {
            t.data
                .iter_mut()
                .enumerate()
                .for_each(|(i, x)| *x = 0.1 * i as f64);
        }
        p
    }

    #[test]
    fn fused_step_matches_separate_passes() {
        use crate::training::backprop::{accumulate_data_gradient, backward};
        use crate::training::gradcheck::random_instance;
        for lambda in [0.0, 1e-3] {
            let inst = random_instance(
                ModelKind::Lstm,
                ActivationKind::Tanh,
                4,
                3,
                3..=6,
                3,
                lambda,
                2,
            );
            let (j, g) = backward(&inst.trees, &inst.params, lambda);
            let mut p1 = inst.params.clone();
            let mut s1 = AdaGradState::new(&p1);
            adagrad_step(&mut p1, &g, &mut s1, 0.05);

            let mut p2 = inst.params.clone();
            let mut s2 = AdaGradState::new(&p2);
            let mut g2 = GradientSet::zeros_like(&p2);
            let data = accumulate_data_gradient(&inst.trees, &p2, &mut g2.grads);
            let reg = adagrad_step_regularized(&mut p2, &mut g2, &mut s2, 0.05, lambda).unwrap();
            assert_eq!(data + reg, j);
            assert_eq!(p1, p2);
            assert_eq!(s1, s2);
            assert!(g2
                .grads
                .tensors()
                .iter()
                .all(|t| t.data.iter().all(|&x| x == 0.0)));
        }
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = tiny();
        let before = p.clone();
        let g = GradientSet::zeros_like(&p);
        let mut s = AdaGradState::new(&p);
        adagrad_step(&mut p, &g, &mut s, 0.05);
        assert_eq!(p, before);
        assert!(s
            .accumulators
            .tensors()
            .iter()
            .all(|t| t.data.iter().all(|&a| a == 0.0)));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = GradientSet::zeros_like(&p);
        g.tensor_mut("b").unwrap().copy_from_slice(&[0.3, -2.0]);
        let mut s = AdaGradState::new(&p);
        adagrad_step(&mut p, &g, &mut s, 0.05);
        let delta: Vec<f64> = p.tensors()[4]
            .data
            .iter()
            .zip(before.tensors()[4].data)
            .map(|(a, b)| a - b)
            .collect();
        assert!((delta[0] + 0.05).abs() < 1e-8);
        assert!((delta[1] - 0.05).abs() < 1e-8);
    }

    #[test]
    fn second_identical_step_shrinks_by_root_two() {
        let mut p = tiny();
        let mut g = GradientSet::zeros_like(&p);
        g.tensor_mut("b").unwrap().copy_from_slice(&[0.7, 0.7]);
        let mut s = AdaGradState::new(&p);
        adagrad_step(&mut p, &g, &mut s, 0.05);
        let mid = p.tensors()[4].data[0];
        adagrad_step(&mut p, &g, &mut s, 0.05);
        let step = mid - p.tensors()[4].data[0];
        assert!((step - 0.05 / 2f64.sqrt()).abs() < 1e-8, "{step}");
    }

    #[test]
    fn frozen_embeddings_are_untouched() {
        let mut p = tiny();
        p.embeddings.trainable = false;
        let before = p.embeddings.clone();
        let mut g = GradientSet::zeros_like(&p);
        g.tensor_mut(EMBEDDINGS).unwrap().fill(1.0);
        let mut s = AdaGradState::new(&p);
        adagrad_step(&mut p, &g, &mut s, 0.05);
        assert_eq!(p.embeddings, before);
    }
}
