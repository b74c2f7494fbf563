//! Objective and its exact gradient by backpropagation through structure.

use crate::model::{
    forward, Composition, EncodedTree, InnerCache, LstmParams, ModelParams, NodeKind, NodeState,
    RnnParams, SoftmaxParams, Untied, EMBEDDINGS,
};
use crate::tensor::{Matrix, Vector};

/// Gradient buffers shaped like the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: ModelParams,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientSet {
            grads: params.zeros_like(),
        }
    }

    pub fn clear(&mut self) {
        for t in self.grads.tensors_mut() {
            t.data.fill(0.0);
        }
    }

    /// Flat view of the named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.grads
            .tensors()
            .into_iter()
            .find(|t| t.name == name)
            .map(|t| t.data)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.grads
            .tensors_mut()
            .into_iter()
            .find(|t| t.name == name)
            .map(|t| t.data)
    }

    pub fn is_finite(&self) -> bool {
        self.grads.is_finite()
    }
}

/// Sum over labeled nodes of `−log Pr(label | node)` for one tree.
pub fn tree_loss(tree: &EncodedTree, params: &ModelParams) -> f64 {
    let states = forward(tree, params);
    tree.nodes
        .iter()
        .zip(&states)
        .filter_map(|(n, s)| Some(-s.class_distribution.as_ref()?[n.label?].ln()))
        .sum()
}

/// `(λ/2)·‖θ‖²` over the trained tensors.
pub fn regularization(params: &ModelParams, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sq: f64 = params
        .trainable_tensors()
        .iter()
        .map(|t| t.data.iter().map(|x| x * x).sum::<f64>())
        .sum();
    0.5 * lambda * sq
}

/// Mean cross-entropy over the batch's sentences plus the L2 penalty.
pub fn objective(batch: &[EncodedTree], params: &ModelParams, lambda: f64) -> f64 {
    assert!(!batch.is_empty(), "objective of an empty batch");
    let data: f64 = batch.iter().map(|t| tree_loss(t, params)).sum();
    data / batch.len() as f64 + regularization(params, lambda)
}

/// Objective and its gradient, written into `out` (which is cleared first).
pub fn backward_into(
    batch: &[EncodedTree],
    params: &ModelParams,
    lambda: f64,
    out: &mut GradientSet,
) -> f64 {
    out.clear();
    let data = accumulate_data_gradient(batch, params, &mut out.grads);
    if lambda != 0.0 {
        let trainable = params.embeddings.trainable;
        for (g, p) in out.grads.tensors_mut().into_iter().zip(params.tensors()) {
            if p.name == EMBEDDINGS && !trainable {
                continue;
            }
            for (gi, &pi) in g.data.iter_mut().zip(p.data) {
                *gi += lambda * pi;
            }
        }
    }
    data + regularization(params, lambda)
}

/// Mean loss over the batch's sentences; its gradient is added to `grads`.
pub fn accumulate_data_gradient(
    batch: &[EncodedTree],
    params: &ModelParams,
    grads: &mut ModelParams,
) -> f64 {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let scale = 1.0 / batch.len() as f64;
    let mut data = 0.0;
    for tree in batch {
        data += backprop_tree(tree, params, grads, scale);
    }
    data * scale
}

pub fn backward(batch: &[EncodedTree], params: &ModelParams, lambda: f64) -> (f64, GradientSet) {
    let mut grads = GradientSet::zeros_like(params);
    let j = backward_into(batch, params, lambda, &mut grads);
    (j, grads)
}

/// Accumulates `scale · ∂loss/∂θ` for one tree into `grads`; returns the unscaled loss.
fn backprop_tree(
    tree: &EncodedTree,
    params: &ModelParams,
    grads: &mut ModelParams,
    scale: f64,
) -> f64 {
    let states = forward(tree, params);
    let n = states.len();
    let mut dh: Vec<Vector> = states.iter().map(|s| Vector::zeros(s.h.len())).collect();
    let mut dc: Vec<Vector> = states.iter().map(|s| Vector::zeros(s.c.len())).collect();
    let mut loss = 0.0;

    for i in (0..n).rev() {
        let node = &tree.nodes[i];
        let state = &states[i];
        if let (Some(label), Some(dist)) = (node.label, &state.class_distribution) {
            loss -= dist[label].ln();
            softmax_backward(
                &params.softmax,
                &mut grads.softmax,
                state,
                dist,
                label,
                scale,
                &mut dh[i],
            );
        }

        let dh_i = std::mem::take(&mut dh[i]);
        match node.kind {
            NodeKind::Leaf { word } => {
                for (g, d) in grads
                    .embeddings
                    .vectors
                    .row_mut(word)
                    .iter_mut()
                    .zip(dh_i.iter())
                {
                    *g += d;
                }
            }
            NodeKind::Inner { left, right } => {
                let dc_i = std::mem::take(&mut dc[i]);
                let (x, y) = (&states[left], &states[right]);
                let mut gx = ChildGrad::new(x);
                let mut gy = ChildGrad::new(y);
                match (&params.composition, &mut grads.composition, &state.cache) {
                    (Composition::Rnn(p), Composition::Rnn(gp), Some(InnerCache::Rnn { pre })) => {
                        rnn_backward(p, gp, x, y, pre, &dh_i, &mut gx, &mut gy)
                    }
                    (Composition::Lstm(p), Composition::Lstm(gp), Some(InnerCache::Lstm(_))) => {
                        lstm_backward(p, gp, x, y, state, &dh_i, &dc_i, &mut gx, &mut gy)
                    }
                    _ => unreachable!("gradient buffers do not match the model"),
                }
                dh[left].add_assign(&gx.h);
                dh[right].add_assign(&gy.h);
                if !x.is_leaf {
                    dc[left].add_assign(&gx.c);
                }
                if !y.is_leaf {
                    dc[right].add_assign(&gy.c);
                }
            }
        }
    }
    loss
}

fn softmax_backward(
    p: &SoftmaxParams,
    g: &mut SoftmaxParams,
    state: &NodeState,
    dist: &Vector,
    label: usize,
    scale: f64,
    dh: &mut Vector,
) {
    let mut dlogits: Vec<f64> = dist.iter().map(|&q| q * scale).collect();
    dlogits[label] -= scale;
    let (w, gw, gb) = if state.is_leaf {
        (&p.w_leaf, &mut g.w_leaf, &mut g.b_leaf)
    } else {
        (&p.w_inner, &mut g.w_inner, &mut g.b_inner)
    };
    gw.add_outer(&dlogits, &state.h);
    gb.add_assign(&dlogits);
    w.tr_matvec_acc(&dlogits, dh);
}

/// Gradient flowing into one child: its output and its memory cell.
struct ChildGrad {
    h: Vec<f64>,
    c: Vec<f64>,
}

impl ChildGrad {
    fn new(s: &NodeState) -> Self {
        ChildGrad {
            h: vec![0.0; s.h.len()],
            c: vec![0.0; s.c.len()],
        }
    }
}

/// `W.for_child += da · hᵀ` and `dh += Wᵀ · da`.
fn linear_backward(w: &Untied, gw: &mut Untied, child: &NodeState, da: &[f64], dh: &mut [f64]) {
    gw.for_child_mut(child.is_leaf).add_outer(da, &child.h);
    w.for_child(child.is_leaf).tr_matvec_acc(da, dh);
}

#[allow(clippy::too_many_arguments)]
fn rnn_backward(
    p: &RnnParams,
    gp: &mut RnnParams,
    x: &NodeState,
    y: &NodeState,
    pre: &Vector,
    dh: &[f64],
    gx: &mut ChildGrad,
    gy: &mut ChildGrad,
) {
    let da: Vec<f64> = dh
        .iter()
        .zip(pre.iter())
        .map(|(&d, &a)| d * p.activation.derivative(a))
        .collect();
    gp.b.add_assign(&da);
    linear_backward(&p.w1, &mut gp.w1, x, &da, &mut gx.h);
    linear_backward(&p.w2, &mut gp.w2, y, &da, &mut gy.h);
}

struct GateWeights<'a> {
    w_first: &'a Untied,
    w_second: &'a Untied,
    wc_first: &'a Matrix,
    wc_second: &'a Matrix,
}

struct GateGrads<'a> {
    w_first: &'a mut Untied,
    w_second: &'a mut Untied,
    wc_first: &'a mut Matrix,
    wc_second: &'a mut Matrix,
    bias: &'a mut Vector,
}

/// Reverse of `σ⁻¹(gate) = W_first·a + W_second·b + Wc_first·c_a + Wc_second·c_b + bias`.
fn gate_backward(
    w: &GateWeights<'_>,
    g: &mut GateGrads<'_>,
    first: &NodeState,
    second: &NodeState,
    da: &[f64],
    g_first: &mut ChildGrad,
    g_second: &mut ChildGrad,
) {
    g.bias.add_assign(da);
    linear_backward(w.w_first, g.w_first, first, da, &mut g_first.h);
    linear_backward(w.w_second, g.w_second, second, da, &mut g_second.h);
    if !first.is_leaf {
        g.wc_first.add_outer(da, &first.c);
        w.wc_first.tr_matvec_acc(da, &mut g_first.c);
    }
    if !second.is_leaf {
        g.wc_second.add_outer(da, &second.c);
        w.wc_second.tr_matvec_acc(da, &mut g_second.c);
    }
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    p: &LstmParams,
    gp: &mut LstmParams,
    x: &NodeState,
    y: &NodeState,
    node: &NodeState,
    dh: &[f64],
    dc_from_parent: &[f64],
    gx: &mut ChildGrad,
    gy: &mut ChildGrad,
) {
    let Some(k) = node.lstm_cache() else {
        unreachable!("LSTM node without cache")
    };
    let g = p.activation;
    let c = &node.c;
    let d = c.len();

    // p = o ⊙ g(c)
    let mut da_o = vec![0.0; d];
    let mut dcp: Vec<f64> = dc_from_parent.to_vec();
    for j in 0..d {
        let o = k.o[j];
        da_o[j] = dh[j] * g.apply(c[j]) * o * (1.0 - o);
        dcp[j] += dh[j] * o * g.derivative(c[j]);
    }
    // o = σ(W_o1 x + W_o2 y + W_co c + b_o); c feeds the output gate
    p.w_co.tr_matvec_acc(&da_o, &mut dcp);
    gp.w_co.add_outer(&da_o, c);
    gp.b_o.add_assign(&da_o);
    linear_backward(&p.w_o1, &mut gp.w_o1, x, &da_o, &mut gx.h);
    linear_backward(&p.w_o2, &mut gp.w_o2, y, &da_o, &mut gy.h);

    // c = f1 ⊙ c_x + f2 ⊙ c_y + g(u),  u = (W_c1 x) ⊙ i1 + (W_c2 y) ⊙ i2 + b_c
    let mut da_f1 = vec![0.0; d];
    let mut da_f2 = vec![0.0; d];
    let mut da_i1 = vec![0.0; d];
    let mut da_i2 = vec![0.0; d];
    let mut d_cand_x = vec![0.0; d];
    let mut d_cand_y = vec![0.0; d];
    let mut du = vec![0.0; d];
    for j in 0..d {
        gx.c[j] += dcp[j] * k.f1[j];
        gy.c[j] += dcp[j] * k.f2[j];
        let (f1, f2, i1, i2) = (k.f1[j], k.f2[j], k.i1[j], k.i2[j]);
        da_f1[j] = dcp[j] * x.c[j] * f1 * (1.0 - f1);
        da_f2[j] = dcp[j] * y.c[j] * f2 * (1.0 - f2);
        du[j] = dcp[j] * g.derivative(k.cand_pre[j]);
        d_cand_x[j] = du[j] * i1;
        d_cand_y[j] = du[j] * i2;
        da_i1[j] = du[j] * k.cand_x[j] * i1 * (1.0 - i1);
        da_i2[j] = du[j] * k.cand_y[j] * i2 * (1.0 - i2);
    }
    gp.b_c.add_assign(&du);
    linear_backward(&p.w_c1, &mut gp.w_c1, x, &d_cand_x, &mut gx.h);
    linear_backward(&p.w_c2, &mut gp.w_c2, y, &d_cand_y, &mut gy.h);

    let input_w = GateWeights {
        w_first: &p.w_i1,
        w_second: &p.w_i2,
        wc_first: &p.w_ci1,
        wc_second: &p.w_ci2,
    };
    let mut input_g = GateGrads {
        w_first: &mut gp.w_i1,
        w_second: &mut gp.w_i2,
        wc_first: &mut gp.w_ci1,
        wc_second: &mut gp.w_ci2,
        bias: &mut gp.b_i,
    };
    gate_backward(&input_w, &mut input_g, x, y, &da_i1, gx, gy);
    gate_backward(&input_w, &mut input_g, y, x, &da_i2, gy, gx);

    let forget_w = GateWeights {
        w_first: &p.w_f1,
        w_second: &p.w_f2,
        wc_first: &p.w_cf1,
        wc_second: &p.w_cf2,
    };
    let mut forget_g = GateGrads {
        w_first: &mut gp.w_f1,
        w_second: &mut gp.w_f2,
        wc_first: &mut gp.w_cf1,
        wc_second: &mut gp.w_cf2,
        bias: &mut gp.b_f,
    };
    gate_backward(&forget_w, &mut forget_g, x, y, &da_f1, gx, gy);
    gate_backward(&forget_w, &mut forget_g, y, x, &da_f2, gy, gx);
}
