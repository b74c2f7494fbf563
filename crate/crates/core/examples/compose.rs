//! Composes a three-word phrase bottom-up with both composition functions
//! and prints each node's gates and class distribution.
//!
//!     cargo run --example compose

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelstm::embeddings::{random_embeddings, Vocabulary};
use treelstm::model::{forward, EncodedTree, ModelKind, ModelParams, NodeKind};
use treelstm::tensor::ActivationKind;
use treelstm::treebank::parse_tree;

fn fmt(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:+.3}")).collect();
    format!("[{}]", cells.join(" "))
}

fn main() {
    let tree = parse_tree("(1 (2 not) (3 (3 very) (4 good)))").expect("valid tree");
    let vocab = Vocabulary::new(tree.tokens(), false);
    let encoded = EncodedTree::encode(&tree, &vocab);
    println!("tree: {tree}\n");

    for kind in ModelKind::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let emb = random_embeddings(vocab.len(), 4, 3);
        let params = ModelParams::init(kind, ActivationKind::Tanh, 3, 5, emb, &mut rng);
        println!("== {kind} ({} parameters)", params.num_scalars());
        let states = forward(&encoded, &params);
        for (node, state) in encoded.nodes.iter().zip(&states) {
            let what = match node.kind {
                NodeKind::Leaf { word } => format!("leaf {:<6}", vocab.tokens()[word]),
                NodeKind::Inner { left, right } => format!("inner({left},{right}) "),
            };
            println!("{what} h = {}", fmt(&state.h));
            if let Some(c) = state.lstm_cache() {
                println!("             c = {}", fmt(&state.c));
                println!("       i1 / i2 = {} / {}", fmt(&c.i1), fmt(&c.i2));
                println!("       f1 / f2 = {} / {}", fmt(&c.f1), fmt(&c.f2));
                println!("             o = {}", fmt(&c.o));
            }
            if let Some(p) = &state.class_distribution {
                println!("          p(c) = {}", fmt(p));
            }
        }
        println!();
    }
}
