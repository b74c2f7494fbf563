//! Independent re-derivations checked against the production code paths.

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treelstm::model::{count_matvecs, matvec_cost, ModelKind};
use treelstm::tensor::ActivationKind;
use treelstm::training::gradcheck::{random_instance, random_tree};
use treelstm::training::reference::{reference_objective, DoubleDouble, Real};
use treelstm::training::{backward, objective, regularization};

#[test]
fn naive_objective_matches_forward_pass() {
    for kind in ModelKind::ALL {
        for g in ActivationKind::ALL {
            for seed in 0..4 {
                let inst = random_instance(kind, g, 5, 4, 1..=9, 3, 1e-3, seed);
                let fast = objective(&inst.trees, &inst.params, 1e-3);
                let naive: f64 = reference_objective(&inst.trees, &inst.params, 1e-3);
                assert_relative_eq!(fast, naive, max_relative = 1e-12);
                let precise = reference_objective::<DoubleDouble>(&inst.trees, &inst.params, 1e-3);
                assert_relative_eq!(fast, precise.to_f64(), max_relative = 1e-12);
            }
        }
    }
}

#[test]
fn objective_splits_into_data_and_penalty() {
    let inst = random_instance(
        ModelKind::Lstm,
        ActivationKind::Tanh,
        4,
        3,
        3..=6,
        4,
        0.0,
        11,
    );
    let data = objective(&inst.trees, &inst.params, 0.0);
    for lambda in [1e-4, 1e-3, 0.5] {
        let j = objective(&inst.trees, &inst.params, lambda);
        assert_relative_eq!(
            j,
            data + regularization(&inst.params, lambda),
            max_relative = 1e-14
        );
        let sq: f64 = inst
            .params
            .trainable_tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum();
        assert_relative_eq!(
            regularization(&inst.params, lambda),
            0.5 * lambda * sq,
            max_relative = 1e-12
        );
    }
}

#[test]
fn penalty_gradient_is_lambda_theta() {
    let inst = random_instance(
        ModelKind::Rnn,
        ActivationKind::Softsign,
        4,
        3,
        3..=6,
        2,
        0.0,
        3,
    );
    let (_, g0) = backward(&inst.trees, &inst.params, 0.0);
    let lambda = 0.25;
    let (_, g1) = backward(&inst.trees, &inst.params, lambda);
    for ((a, b), p) in g0
        .grads
        .tensors()
        .iter()
        .zip(g1.grads.tensors())
        .zip(inst.params.tensors())
    {
        for ((x, y), w) in a.data.iter().zip(b.data).zip(p.data) {
            assert_relative_eq!(y - x, lambda * w, epsilon = 1e-15, max_relative = 1e-9);
        }
    }
}

#[test]
fn instrumented_counts_equal_closed_forms_on_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let leaves = rng.gen_range(1..40);
        let tree = random_tree(&mut rng, leaves, 10, 5);
        let (d, d_w) = (rng.gen_range(1..20), rng.gen_range(1..20));
        for kind in ModelKind::ALL {
            assert_eq!(
                count_matvecs(&tree, kind, d, d_w),
                matvec_cost(leaves, kind, d, d_w)
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lstm_to_rnn_cost_ratio_is_bounded(leaves in 2usize..200, d in 1usize..64) {
        // with d = d_w the ratio is (17N − 21) / (2N − 2): 6.5 at N = 2, approaching 8.5
        let r = matvec_cost(leaves, ModelKind::Lstm, d, d) as f64
            / matvec_cost(leaves, ModelKind::Rnn, d, d) as f64;
        prop_assert!((6.5..8.5).contains(&r), "{r}");
    }

    #[test]
    fn objective_is_finite_and_positive(seed in 0u64..1000, kind_lstm in any::<bool>()) {
        let kind = if kind_lstm { ModelKind::Lstm } else { ModelKind::Rnn };
        let inst = random_instance(kind, ActivationKind::Tanh, 3, 2, 1..=8, 2, 1e-3, seed);
        let j = objective(&inst.trees, &inst.params, 1e-3);
        prop_assert!(j.is_finite() && j > 0.0);
    }
}
