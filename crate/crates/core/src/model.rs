//! Tree composition models and per-node softmax classification.
//!
//! Two composition functions are provided. The plain recursive network
//! computes a parent as `g(W1·x + W2·y + b)`. The LSTM composition keeps a
//! memory cell at every node and gates each child separately:
//!
//! ```text
//! i1 = σ(W_i1 x + W_i2 y + W_ci1 c_x + W_ci2 c_y + b_i)
//! i2 = σ(W_i1 y + W_i2 x + W_ci1 c_y + W_ci2 c_x + b_i)
//! f1 = σ(W_f1 x + W_f2 y + W_cf1 c_x + W_cf2 c_y + b_f)
//! f2 = σ(W_f1 y + W_f2 x + W_cf1 c_y + W_cf2 c_x + b_f)
//! c  = f1 ⊙ c_x + f2 ⊙ c_y + g(W_c1 x ⊙ i1 + W_c2 y ⊙ i2 + b_c)
//! o  = σ(W_o1 x + W_o2 y + W_co c + b_o)
//! p  = o ⊙ g(c)
//! ```
//!
//! The input gates scale the candidates *inside* `g`, and the output gate
//! looks at the freshly computed parent memory `c`. Leaves have zero memory,
//! so memory products against a leaf child are skipped entirely.
//!
//! Every matrix applied to a child exists twice: a `d×d_w` variant for leaf
//! children and a `d×d` variant for inner children ([`Untied`]).

use rand::Rng;

use crate::embeddings::{init_bound, EmbeddingTable, Vocabulary};
use crate::tensor::{sigmoid, softmax, ActivationKind, Matrix, Vector};
use crate::treebank::{Tree, TreeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Rnn,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Rnn, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" | "lstm-rnn" => Ok(ModelKind::Lstm),
            other => Err(format!("unknown model `{other}` (expected rnn or lstm)")),
        }
    }
}

/// A weight matrix with separate leaf-child (`d×d_w`) and inner-child (`d×d`) variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Untied {
    pub leaf: Matrix,
    pub inner: Matrix,
}

impl Untied {
    pub fn zeros(d: usize, d_w: usize) -> Self {
        Untied {
            leaf: Matrix::zeros(d, d_w),
            inner: Matrix::zeros(d, d),
        }
    }

    fn uniform<R: Rng>(d: usize, d_w: usize, rng: &mut R) -> Self {
        Untied {
            leaf: Matrix::uniform(d, d_w, init_bound(d_w), rng),
            inner: Matrix::uniform(d, d, init_bound(d), rng),
        }
    }

    #[inline]
    pub fn for_child(&self, child_is_leaf: bool) -> &Matrix {
        if child_is_leaf {
            &self.leaf
        } else {
            &self.inner
        }
    }

    #[inline]
    pub fn for_child_mut(&mut self, child_is_leaf: bool) -> &mut Matrix {
        if child_is_leaf {
            &mut self.leaf
        } else {
            &mut self.inner
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w1: Untied,
    pub w2: Untied,
    pub b: Vector,
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i1: Untied,
    pub w_i2: Untied,
    pub w_f1: Untied,
    pub w_f2: Untied,
    pub w_c1: Untied,
    pub w_c2: Untied,
    pub w_o1: Untied,
    pub w_o2: Untied,
    pub w_ci1: Matrix,
    pub w_ci2: Matrix,
    pub w_cf1: Matrix,
    pub w_cf2: Matrix,
    pub w_co: Matrix,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_c: Vector,
    pub b_o: Vector,
    /// Nonlinearity for the candidate and the output; gates always use the sigmoid.
    pub activation: ActivationKind,
}

// one per model, so the size difference between variants is irrelevant
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Composition {
    Rnn(RnnParams),
    Lstm(LstmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxParams {
    pub w_leaf: Matrix,
    pub b_leaf: Vector,
    pub w_inner: Matrix,
    pub b_inner: Vector,
}

impl SoftmaxParams {
    fn for_node(&self, is_leaf: bool) -> (&Matrix, &Vector) {
        if is_leaf {
            (&self.w_leaf, &self.b_leaf)
        } else {
            (&self.w_inner, &self.b_inner)
        }
    }
}

/// The full parameter set: composition weights, classifiers and word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub composition: Composition,
    pub softmax: SoftmaxParams,
    pub embeddings: EmbeddingTable,
}

/// Borrowed view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [f64],
}

pub const EMBEDDINGS: &str = "embeddings";

macro_rules! tensor_list {
    ($make:ident, $self:ident, $access:ident) => {{
        let mut out = Vec::new();
        match $access!($self.composition) {
            Composition::Rnn(p) => {
                out.push($make("W_1.leaf", $access!(p.w1.leaf)));
                out.push($make("W_1.inner", $access!(p.w1.inner)));
                out.push($make("W_2.leaf", $access!(p.w2.leaf)));
                out.push($make("W_2.inner", $access!(p.w2.inner)));
                out.push($make("b", $access!(p.b)));
            }
            Composition::Lstm(p) => {
                out.push($make("W_i1.leaf", $access!(p.w_i1.leaf)));
                out.push($make("W_i1.inner", $access!(p.w_i1.inner)));
                out.push($make("W_i2.leaf", $access!(p.w_i2.leaf)));
                out.push($make("W_i2.inner", $access!(p.w_i2.inner)));
                out.push($make("W_f1.leaf", $access!(p.w_f1.leaf)));
                out.push($make("W_f1.inner", $access!(p.w_f1.inner)));
                out.push($make("W_f2.leaf", $access!(p.w_f2.leaf)));
                out.push($make("W_f2.inner", $access!(p.w_f2.inner)));
                out.push($make("W_c1.leaf", $access!(p.w_c1.leaf)));
                out.push($make("W_c1.inner", $access!(p.w_c1.inner)));
                out.push($make("W_c2.leaf", $access!(p.w_c2.leaf)));
                out.push($make("W_c2.inner", $access!(p.w_c2.inner)));
                out.push($make("W_o1.leaf", $access!(p.w_o1.leaf)));
                out.push($make("W_o1.inner", $access!(p.w_o1.inner)));
                out.push($make("W_o2.leaf", $access!(p.w_o2.leaf)));
                out.push($make("W_o2.inner", $access!(p.w_o2.inner)));
                out.push($make("W_ci1", $access!(p.w_ci1)));
                out.push($make("W_ci2", $access!(p.w_ci2)));
                out.push($make("W_cf1", $access!(p.w_cf1)));
                out.push($make("W_cf2", $access!(p.w_cf2)));
                out.push($make("W_co", $access!(p.w_co)));
                out.push($make("b_i", $access!(p.b_i)));
                out.push($make("b_f", $access!(p.b_f)));
                out.push($make("b_c", $access!(p.b_c)));
                out.push($make("b_o", $access!(p.b_o)));
            }
        }
        out.push($make("W_s.leaf", $access!($self.softmax.w_leaf)));
        out.push($make("b_s.leaf", $access!($self.softmax.b_leaf)));
        out.push($make("W_s.inner", $access!($self.softmax.w_inner)));
        out.push($make("b_s.inner", $access!($self.softmax.b_inner)));
        out.push($make(EMBEDDINGS, $access!($self.embeddings.vectors)));
        out
    }};
}

trait AsTensor {
    fn shape(&self) -> (usize, usize);
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
}

impl AsTensor for Matrix {
    fn shape(&self) -> (usize, usize) {
        Matrix::shape(self)
    }
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn values_mut(&mut self) -> &mut [f64] {
        self.as_mut_slice()
    }
}

impl AsTensor for Vector {
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn values_mut(&mut self) -> &mut [f64] {
        self.as_mut_slice()
    }
}

fn tensor_ref<'a, T: AsTensor>(name: &'static str, t: &'a T) -> TensorRef<'a> {
    let (rows, cols) = t.shape();
    TensorRef {
        name,
        rows,
        cols,
        data: t.values(),
    }
}

fn tensor_mut<'a, T: AsTensor>(name: &'static str, t: &'a mut T) -> TensorMut<'a> {
    let (rows, cols) = t.shape();
    TensorMut {
        name,
        rows,
        cols,
        data: t.values_mut(),
    }
}

macro_rules! by_ref {
    ($e:expr) => {
        &$e
    };
}

macro_rules! by_mut {
    ($e:expr) => {
        &mut $e
    };
}

impl ModelParams {
    /// Weights uniform in `[-1/√n, 1/√n]` with `n` the matrix's input width; biases zero.
    pub fn init<R: Rng>(
        kind: ModelKind,
        activation: ActivationKind,
        d: usize,
        num_classes: usize,
        embeddings: EmbeddingTable,
        rng: &mut R,
    ) -> Self {
        let d_w = embeddings.dim();
        let composition = match kind {
            ModelKind::Rnn => Composition::Rnn(RnnParams {
                w1: Untied::uniform(d, d_w, rng),
                w2: Untied::uniform(d, d_w, rng),
                b: Vector::zeros(d),
                activation,
            }),
            ModelKind::Lstm => {
                let sq = |rng: &mut R| Matrix::uniform(d, d, init_bound(d), rng);
                Composition::Lstm(LstmParams {
                    w_i1: Untied::uniform(d, d_w, rng),
                    w_i2: Untied::uniform(d, d_w, rng),
                    w_f1: Untied::uniform(d, d_w, rng),
                    w_f2: Untied::uniform(d, d_w, rng),
                    w_c1: Untied::uniform(d, d_w, rng),
                    w_c2: Untied::uniform(d, d_w, rng),
                    w_o1: Untied::uniform(d, d_w, rng),
                    w_o2: Untied::uniform(d, d_w, rng),
                    w_ci1: sq(rng),
                    w_ci2: sq(rng),
                    w_cf1: sq(rng),
                    w_cf2: sq(rng),
                    w_co: sq(rng),
                    b_i: Vector::zeros(d),
                    b_f: Vector::zeros(d),
                    b_c: Vector::zeros(d),
                    b_o: Vector::zeros(d),
                    activation,
                })
            }
        };
        let softmax = SoftmaxParams {
            w_leaf: Matrix::uniform(num_classes, d_w, init_bound(d_w), rng),
            b_leaf: Vector::zeros(num_classes),
            w_inner: Matrix::uniform(num_classes, d, init_bound(d), rng),
            b_inner: Vector::zeros(num_classes),
        };
        ModelParams {
            composition,
            softmax,
            embeddings,
        }
    }

    /// All-zero parameters of the given shape (used as gradient buffers and in tests).
    pub fn zeros(
        kind: ModelKind,
        activation: ActivationKind,
        d: usize,
        d_w: usize,
        num_classes: usize,
        vocab_size: usize,
    ) -> Self {
        let composition = match kind {
            ModelKind::Rnn => Composition::Rnn(RnnParams {
                w1: Untied::zeros(d, d_w),
                w2: Untied::zeros(d, d_w),
                b: Vector::zeros(d),
                activation,
            }),
            ModelKind::Lstm => Composition::Lstm(LstmParams {
                w_i1: Untied::zeros(d, d_w),
                w_i2: Untied::zeros(d, d_w),
                w_f1: Untied::zeros(d, d_w),
                w_f2: Untied::zeros(d, d_w),
                w_c1: Untied::zeros(d, d_w),
                w_c2: Untied::zeros(d, d_w),
                w_o1: Untied::zeros(d, d_w),
                w_o2: Untied::zeros(d, d_w),
                w_ci1: Matrix::zeros(d, d),
                w_ci2: Matrix::zeros(d, d),
                w_cf1: Matrix::zeros(d, d),
                w_cf2: Matrix::zeros(d, d),
                w_co: Matrix::zeros(d, d),
                b_i: Vector::zeros(d),
                b_f: Vector::zeros(d),
                b_c: Vector::zeros(d),
                b_o: Vector::zeros(d),
                activation,
            }),
        };
        ModelParams {
            composition,
            softmax: SoftmaxParams {
                w_leaf: Matrix::zeros(num_classes, d_w),
                b_leaf: Vector::zeros(num_classes),
                w_inner: Matrix::zeros(num_classes, d),
                b_inner: Vector::zeros(num_classes),
            },
            embeddings: EmbeddingTable {
                vectors: Matrix::zeros(vocab_size, d_w),
                trainable: true,
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = ModelParams::zeros(
            self.kind(),
            self.activation(),
            self.d(),
            self.d_w(),
            self.num_classes(),
            self.embeddings.len(),
        );
        z.embeddings.trainable = self.embeddings.trainable;
        z
    }

    pub fn kind(&self) -> ModelKind {
        match self.composition {
            Composition::Rnn(_) => ModelKind::Rnn,
            Composition::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn activation(&self) -> ActivationKind {
        match &self.composition {
            Composition::Rnn(p) => p.activation,
            Composition::Lstm(p) => p.activation,
        }
    }

    /// Inner-node dimension.
    pub fn d(&self) -> usize {
        self.softmax.w_inner.cols()
    }

    /// Word-vector dimension.
    pub fn d_w(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.softmax.b_inner.len()
    }

    /// Every parameter tensor in a fixed order, word vectors last.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        tensor_list!(tensor_ref, self, by_ref)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        tensor_list!(tensor_mut, self, by_mut)
    }

    /// Tensors that are trained and regularized: word vectors only when trainable.
    pub fn trainable_tensors(&self) -> Vec<TensorRef<'_>> {
        let trainable = self.embeddings.trainable;
        self.tensors()
            .into_iter()
            .filter(|t| trainable || t.name != EMBEDDINGS)
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// A tree flattened to post-order with word indices resolved; the root is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTree {
    pub nodes: Vec<EncodedNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedNode {
    pub label: Option<usize>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { word: usize },
    Inner { left: usize, right: usize },
}

impl EncodedTree {
    pub fn encode(tree: &Tree, vocab: &Vocabulary) -> Self {
        let mut nodes = Vec::with_capacity(tree.num_nodes());
        encode_into(tree, vocab, &mut nodes);
        EncodedTree { nodes }
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn root_label(&self) -> Option<usize> {
        self.nodes.last().and_then(|n| n.label)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
            .count()
    }
}

fn encode_into(tree: &Tree, vocab: &Vocabulary, nodes: &mut Vec<EncodedNode>) -> usize {
    let kind = match &tree.kind {
        TreeKind::Leaf(tok) => NodeKind::Leaf {
            word: vocab.resolve(tok),
        },
        TreeKind::Inner(l, r) => {
            let left = encode_into(l, vocab, nodes);
            let right = encode_into(r, vocab, nodes);
            NodeKind::Inner { left, right }
        }
    };
    nodes.push(EncodedNode {
        label: tree.label.map(usize::from),
        kind,
    });
    nodes.len() - 1
}

pub fn encode_all(trees: &[Tree], vocab: &Vocabulary) -> Vec<EncodedTree> {
    trees
        .iter()
        .map(|t| EncodedTree::encode(t, vocab))
        .collect()
}

/// Gate activations and intermediate products of one LSTM composition.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    pub i1: Vector,
    pub i2: Vector,
    pub f1: Vector,
    pub f2: Vector,
    pub o: Vector,
    /// `W_c1·x` and `W_c2·y` before gating.
    pub cand_x: Vector,
    pub cand_y: Vector,
    /// Argument of `g` in the memory update.
    pub cand_pre: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerCache {
    Rnn { pre: Vector },
    Lstm(LstmCache),
}

/// Forward state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub is_leaf: bool,
    /// Output vector: length `d_w` at leaves and `d` at inner nodes.
    pub h: Vector,
    /// Memory cell, length `d`; identically zero at leaves and for the plain RNN.
    pub c: Vector,
    pub cache: Option<InnerCache>,
    pub class_distribution: Option<Vector>,
}

impl NodeState {
    pub fn leaf(h: Vector, d: usize) -> Self {
        NodeState {
            is_leaf: true,
            h,
            c: Vector::zeros(d),
            cache: None,
            class_distribution: None,
        }
    }

    pub fn lstm_cache(&self) -> Option<&LstmCache> {
        match &self.cache {
            Some(InnerCache::Lstm(c)) => Some(c),
            _ => None,
        }
    }
}

/// Receives the shape of every composition matrix-vector product.
pub trait MatvecObserver {
    fn record(&mut self, rows: usize, cols: usize);
}

impl MatvecObserver for () {
    #[inline]
    fn record(&mut self, _: usize, _: usize) {}
}

/// Counts scalar multiplications performed in composition products.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MulCounter(pub u64);

impl MatvecObserver for MulCounter {
    fn record(&mut self, rows: usize, cols: usize) {
        self.0 += (rows * cols) as u64;
    }
}

#[inline]
fn mv<O: MatvecObserver>(obs: &mut O, m: &Matrix, v: &[f64], out: &mut [f64]) {
    obs.record(m.rows(), m.cols());
    m.matvec_acc(v, out);
}

pub fn rnn_compose(x: &NodeState, y: &NodeState, params: &RnnParams) -> NodeState {
    rnn_compose_observed(x, y, params, &mut ())
}

pub fn rnn_compose_observed<O: MatvecObserver>(
    x: &NodeState,
    y: &NodeState,
    params: &RnnParams,
    obs: &mut O,
) -> NodeState {
    let mut pre = params.b.clone();
    mv(obs, params.w1.for_child(x.is_leaf), &x.h, &mut pre);
    mv(obs, params.w2.for_child(y.is_leaf), &y.h, &mut pre);
    let h = pre
        .iter()
        .map(|&a| params.activation.apply(a))
        .collect::<Vec<_>>();
    let d = pre.len();
    NodeState {
        is_leaf: false,
        h: h.into(),
        c: Vector::zeros(d),
        cache: Some(InnerCache::Rnn { pre }),
        class_distribution: None,
    }
}

/// Pre-activation of a child-specific gate; the sibling gate is the same call
/// with the children exchanged.
#[allow(clippy::too_many_arguments)]
fn gate_pre<O: MatvecObserver>(
    obs: &mut O,
    first: &NodeState,
    second: &NodeState,
    w_first: &Untied,
    w_second: &Untied,
    wc_first: &Matrix,
    wc_second: &Matrix,
    bias: &Vector,
) -> Vector {
    let mut z = bias.clone();
    mv(obs, w_first.for_child(first.is_leaf), &first.h, &mut z);
    mv(obs, w_second.for_child(second.is_leaf), &second.h, &mut z);
    if !first.is_leaf {
        mv(obs, wc_first, &first.c, &mut z);
    }
    if !second.is_leaf {
        mv(obs, wc_second, &second.c, &mut z);
    }
    z
}

fn sigmoid_in_place(v: &mut Vector) {
    v.iter_mut().for_each(|a| *a = sigmoid(*a));
}

pub fn lstm_compose(x: &NodeState, y: &NodeState, params: &LstmParams) -> NodeState {
    lstm_compose_observed(x, y, params, &mut ())
}

pub fn lstm_compose_observed<O: MatvecObserver>(
    x: &NodeState,
    y: &NodeState,
    p: &LstmParams,
    obs: &mut O,
) -> NodeState {
    let g = p.activation;
    let mut i1 = gate_pre(obs, x, y, &p.w_i1, &p.w_i2, &p.w_ci1, &p.w_ci2, &p.b_i);
    let mut i2 = gate_pre(obs, y, x, &p.w_i1, &p.w_i2, &p.w_ci1, &p.w_ci2, &p.b_i);
    let mut f1 = gate_pre(obs, x, y, &p.w_f1, &p.w_f2, &p.w_cf1, &p.w_cf2, &p.b_f);
    let mut f2 = gate_pre(obs, y, x, &p.w_f1, &p.w_f2, &p.w_cf1, &p.w_cf2, &p.b_f);
    sigmoid_in_place(&mut i1);
    sigmoid_in_place(&mut i2);
    sigmoid_in_place(&mut f1);
    sigmoid_in_place(&mut f2);

    let d = p.b_c.len();
    let mut cand_x = Vector::zeros(d);
    let mut cand_y = Vector::zeros(d);
    mv(obs, p.w_c1.for_child(x.is_leaf), &x.h, &mut cand_x);
    mv(obs, p.w_c2.for_child(y.is_leaf), &y.h, &mut cand_y);

    let mut cand_pre = Vector::zeros(d);
    let mut c = Vector::zeros(d);
    for k in 0..d {
        cand_pre[k] = cand_x[k] * i1[k] + cand_y[k] * i2[k] + p.b_c[k];
        c[k] = f1[k] * x.c[k] + f2[k] * y.c[k] + g.apply(cand_pre[k]);
    }

    let mut o = p.b_o.clone();
    mv(obs, p.w_o1.for_child(x.is_leaf), &x.h, &mut o);
    mv(obs, p.w_o2.for_child(y.is_leaf), &y.h, &mut o);
    mv(obs, &p.w_co, &c, &mut o);
    sigmoid_in_place(&mut o);

    let h: Vector = o
        .iter()
        .zip(c.iter())
        .map(|(&o, &c)| o * g.apply(c))
        .collect::<Vec<_>>()
        .into();

    NodeState {
        is_leaf: false,
        h,
        c,
        cache: Some(InnerCache::Lstm(LstmCache {
            i1,
            i2,
            f1,
            f2,
            o,
            cand_x,
            cand_y,
            cand_pre,
        })),
        class_distribution: None,
    }
}

/// Class probabilities `softmax(W·h + b)`, using the leaf or inner classifier.
pub fn classify(h: &[f64], softmax_params: &SoftmaxParams, node_is_leaf: bool) -> Vector {
    let (w, b) = softmax_params.for_node(node_is_leaf);
    let mut logits = b.clone();
    w.matvec_acc(h, &mut logits);
    softmax(&logits)
}

/// Bottom-up evaluation; returns one state per node in the tree's post-order.
pub fn forward(tree: &EncodedTree, params: &ModelParams) -> Vec<NodeState> {
    forward_observed(tree, params, &mut ())
}

pub fn forward_observed<O: MatvecObserver>(
    tree: &EncodedTree,
    params: &ModelParams,
    obs: &mut O,
) -> Vec<NodeState> {
    let d = params.d();
    let mut states: Vec<NodeState> = Vec::with_capacity(tree.nodes.len());
    for node in &tree.nodes {
        let mut state = match node.kind {
            NodeKind::Leaf { word } => {
                NodeState::leaf(Vector::from_vec(params.embeddings.row(word).to_vec()), d)
            }
            NodeKind::Inner { left, right } => {
                let (x, y) = (&states[left], &states[right]);
                match &params.composition {
                    Composition::Rnn(p) => rnn_compose_observed(x, y, p, obs),
                    Composition::Lstm(p) => lstm_compose_observed(x, y, p, obs),
                }
            }
        };
        if node.label.is_some() {
            state.class_distribution = Some(classify(&state.h, &params.softmax, state.is_leaf));
        }
        states.push(state);
    }
    states
}

/// Class probabilities at the root, computed even if the root is unlabeled.
pub fn predict_root(tree: &EncodedTree, params: &ModelParams) -> Vector {
    let states = forward(tree, params);
    let root = states.last().expect("empty tree");
    match &root.class_distribution {
        Some(p) => p.clone(),
        None => classify(&root.h, &params.softmax, root.is_leaf),
    }
}

/// Closed-form count of scalar multiplications in the composition products
/// of one forward pass over a tree with `leaves` leaves.
pub fn matvec_cost(leaves: usize, kind: ModelKind, d: usize, d_w: usize) -> u64 {
    if leaves < 2 {
        return 0;
    }
    let (n, d, d_w) = (leaves as u64, d as u64, d_w as u64);
    match kind {
        ModelKind::Rnn => n * d * d_w + (n - 2) * d * d,
        ModelKind::Lstm => n * 6 * d * d_w + (n - 2) * 10 * d * d + (n - 1) * d * d,
    }
}

/// Scalar multiplications actually performed by the composition products of
/// a forward pass over `tree`, measured with [`MulCounter`].
pub fn count_matvecs(tree: &Tree, kind: ModelKind, d: usize, d_w: usize) -> u64 {
    let params = ModelParams::zeros(kind, ActivationKind::Tanh, d, d_w, 2, 1);
    count_matvecs_with(tree, &params)
}

/// Like [`count_matvecs`], reusing caller-owned weights (their values do not matter).
pub fn count_matvecs_with(tree: &Tree, params: &ModelParams) -> u64 {
    let unlabeled = tree.map_labels(&|_| None);
    let encoded = EncodedTree::encode(&unlabeled, &Vocabulary::new(Vec::<String>::new(), false));
    let mut counter = MulCounter::default();
    forward_observed(&encoded, params, &mut counter);
    counter.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::Vocabulary;
    use crate::treebank::parse_tree;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf_state(h: &[f64], d: usize) -> NodeState {
        NodeState::leaf(Vector::from_vec(h.to_vec()), d)
    }

    fn inner_state(h: &[f64], c: &[f64]) -> NodeState {
        NodeState {
            is_leaf: false,
            h: Vector::from_vec(h.to_vec()),
            c: Vector::from_vec(c.to_vec()),
            cache: None,
            class_distribution: None,
        }
    }

    fn zero_lstm(d: usize, d_w: usize, g: ActivationKind) -> LstmParams {
        match ModelParams::zeros(ModelKind::Lstm, g, d, d_w, 5, 1).composition {
            Composition::Lstm(p) => p,
            _ => unreachable!(),
        }
    }

    fn zero_rnn(d: usize, d_w: usize, g: ActivationKind) -> RnnParams {
        match ModelParams::zeros(ModelKind::Rnn, g, d, d_w, 5, 1).composition {
            Composition::Rnn(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn rnn_zero_weights() {
        let x = leaf_state(&[1.0, 2.0], 3);
        let y = leaf_state(&[-1.0, 0.5], 3);
        let h = rnn_compose(&x, &y, &zero_rnn(3, 2, ActivationKind::Tanh)).h;
        assert_eq!(h.as_slice(), &[0.0; 3]);
        let h = rnn_compose(&x, &y, &zero_rnn(3, 2, ActivationKind::Sigmoid)).h;
        assert_eq!(h.as_slice(), &[0.5; 3]);
    }

    #[test]
    fn rnn_identity_weights() {
        let mut p = zero_rnn(2, 2, ActivationKind::Tanh);
        p.w1.leaf = Matrix::identity(2);
        p.w2.leaf = Matrix::identity(2);
        let out = rnn_compose(&leaf_state(&[0.1, 0.0], 2), &leaf_state(&[0.2, 0.0], 2), &p);
        assert_abs_diff_eq!(out.h[0], 0.3f64.tanh(), epsilon = 1e-15);
        assert_eq!(out.h[1], 0.0);
    }

    #[test]
    fn lstm_zero_params_leaf_children() {
        let p = zero_lstm(3, 2, ActivationKind::Tanh);
        let s = lstm_compose(
            &leaf_state(&[0.3, -0.2], 3),
            &leaf_state(&[1.0, 1.0], 3),
            &p,
        );
        let cache = s.lstm_cache().unwrap();
        for v in [&cache.i1, &cache.i2, &cache.f1, &cache.f2, &cache.o] {
            assert_eq!(v.as_slice(), &[0.5; 3]);
        }
        assert_eq!(s.c.as_slice(), &[0.0; 3]);
        assert_eq!(s.h.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn lstm_zero_params_inner_children() {
        let p = zero_lstm(1, 1, ActivationKind::Tanh);
        let s = lstm_compose(
            &inner_state(&[0.0], &[0.4]),
            &inner_state(&[0.0], &[0.2]),
            &p,
        );
        assert_abs_diff_eq!(s.c[0], 0.3, epsilon = 1e-15);
        assert_eq!(s.lstm_cache().unwrap().o[0], 0.5);
        assert_abs_diff_eq!(s.h[0], 0.5 * 0.3f64.tanh(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.h[0], 0.145656, epsilon = 1e-6);
    }

    fn random_model(
        kind: ModelKind,
        g: ActivationKind,
        d: usize,
        d_w: usize,
        seed: u64,
    ) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = crate::embeddings::random_embeddings(6, d_w, seed + 1);
        let mut p = ModelParams::init(kind, g, d, 5, emb, &mut rng);
        // non-zero biases so that every term is exercised
        for t in p.tensors_mut() {
            if t.cols == 1 {
                t.data
                    .iter_mut()
                    .for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
        }
        p
    }

    #[test]
    fn child_swap_exchanges_gates() {
        let p = match random_model(ModelKind::Lstm, ActivationKind::Tanh, 4, 3, 5).composition {
            Composition::Lstm(p) => p,
            _ => unreachable!(),
        };
        let pairs = [
            (
                leaf_state(&[0.1, -0.4, 0.3], 4),
                inner_state(&[0.2, 0.1, -0.3, 0.5], &[0.7, -0.1, 0.2, 0.4]),
            ),
            (
                inner_state(&[0.3, 0.3, -0.1, 0.0], &[0.1, 0.1, 0.9, -0.5]),
                inner_state(&[-0.2, 0.1, 0.6, 0.2], &[0.3, -0.6, 0.2, 0.1]),
            ),
            (
                leaf_state(&[0.5, 0.5, -0.5], 4),
                leaf_state(&[-0.1, 0.2, 0.0], 4),
            ),
        ];
        for (x, y) in &pairs {
            let a = lstm_compose(x, y, &p);
            let b = lstm_compose(y, x, &p);
            let (a, b) = (a.lstm_cache().unwrap(), b.lstm_cache().unwrap());
            assert_eq!(a.i1, b.i2);
            assert_eq!(a.i2, b.i1);
            assert_eq!(a.f1, b.f2);
            assert_eq!(a.f2, b.f1);
        }
    }

    #[test]
    fn forward_orders_and_counts_nodes() {
        let tree = parse_tree("(3 (2 (2 a) (2 b)) (2 c))").unwrap();
        let vocab = Vocabulary::new(["a", "b", "c"], false);
        let enc = EncodedTree::encode(&tree, &vocab);
        let params = random_model(ModelKind::Lstm, ActivationKind::Tanh, 4, 3, 1);
        let states = forward(&enc, &params);
        assert_eq!(states.iter().filter(|s| !s.is_leaf).count(), 2);
        // post-order: a, b, (a b), c, root
        assert!(states[0].is_leaf && states[1].is_leaf && !states[2].is_leaf);
        assert_eq!(enc.nodes[4].kind, NodeKind::Inner { left: 2, right: 3 });
        assert!(states.iter().all(|s| s.class_distribution.is_some()));
    }

    #[test]
    fn single_leaf_forward() {
        let tree = parse_tree("(4 great)").unwrap();
        let vocab = Vocabulary::new(["great"], false);
        let params = random_model(ModelKind::Rnn, ActivationKind::Tanh, 4, 3, 2);
        let states = forward(&EncodedTree::encode(&tree, &vocab), &params);
        assert_eq!(states.len(), 1);
        assert_eq!(
            states[0].h.as_slice(),
            params.embeddings.row(vocab.get("great").unwrap())
        );
        assert_eq!(states[0].c.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn classify_examples() {
        let mut sm = SoftmaxParams {
            w_leaf: Matrix::zeros(5, 3),
            b_leaf: Vector::zeros(5),
            w_inner: Matrix::zeros(5, 4),
            b_inner: Vector::zeros(5),
        };
        let p = classify(&[1.0, 2.0, 3.0, 4.0], &sm, false);
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        sm.b_leaf[0] = 10.0;
        assert_eq!(classify(&[1.0, -1.0, 0.5], &sm, true).argmax(), 0);
    }

    #[test]
    fn gates_are_open_intervals() {
        let params = random_model(ModelKind::Lstm, ActivationKind::Softsign, 5, 4, 9);
        let tree = parse_tree("(1 (2 (2 a) (3 (2 b) (2 c))) (0 (2 d) (2 e)))").unwrap();
        let vocab = Vocabulary::new(["a", "b", "c", "d", "e"], false);
        for s in forward(&EncodedTree::encode(&tree, &vocab), &params) {
            if let Some(c) = s.lstm_cache() {
                for v in [&c.i1, &c.i2, &c.f1, &c.f2, &c.o] {
                    assert!(v.iter().all(|&g| g > 0.0 && g < 1.0));
                }
            } else {
                assert!(s.c.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn cost_model_small_cases() {
        assert_eq!(matvec_cost(2, ModelKind::Lstm, 7, 5), 12 * 7 * 5 + 49);
        assert_eq!(matvec_cost(2, ModelKind::Rnn, 7, 5), 2 * 7 * 5);
        assert_eq!(matvec_cost(19, ModelKind::Rnn, 10, 10), 36 * 100);
        assert_eq!(matvec_cost(19, ModelKind::Lstm, 10, 10), 302 * 100);
        assert_eq!(matvec_cost(1, ModelKind::Lstm, 10, 10), 0);
    }

    #[test]
    fn instrumented_counts_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for leaves in 1..12 {
            let tree = crate::training::gradcheck::random_tree(&mut rng, leaves, 4, 5);
            for kind in ModelKind::ALL {
                assert_eq!(
                    count_matvecs(&tree, kind, 6, 4),
                    matvec_cost(leaves, kind, 6, 4)
                );
            }
        }
    }

    #[test]
    fn tensor_listing_is_consistent() {
        for kind in ModelKind::ALL {
            let mut p = random_model(kind, ActivationKind::Tanh, 4, 3, 3);
            let names: Vec<_> = p.tensors().iter().map(|t| t.name).collect();
            let names_mut: Vec<_> = p.tensors_mut().iter().map(|t| t.name).collect();
            assert_eq!(names, names_mut);
            assert_eq!(*names.last().unwrap(), EMBEDDINGS);
            let z = p.zeros_like();
            for (a, b) in p.tensors().iter().zip(z.tensors()) {
                assert_eq!((a.name, a.rows, a.cols), (b.name, b.rows, b.cols));
            }
            p.embeddings.trainable = false;
            assert!(p.trainable_tensors().iter().all(|t| t.name != EMBEDDINGS));
        }
    }

    #[test]
    fn init_respects_bounds_and_zero_biases() {
        let emb = crate::embeddings::random_embeddings(3, 100, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::init(ModelKind::Lstm, ActivationKind::Tanh, 50, 5, emb, &mut rng);
        for t in p.tensors() {
            if t.name == EMBEDDINGS {
                continue;
            }
            if t.cols == 1 {
                assert!(t.data.iter().all(|&b| b == 0.0), "{}", t.name);
            } else {
                let bound = 1.0 / (t.cols as f64).sqrt();
                assert!(t.data.iter().all(|w| w.abs() <= bound), "{}", t.name);
            }
        }
        assert_eq!(p.d(), 50);
        assert_eq!(p.d_w(), 100);
    }
}
