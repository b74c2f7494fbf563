//! A second, deliberately naive evaluation of the training objective.
//!
//! Written straight from the composition equations with plain index loops and
//! generic over the scalar type, so it shares no code with the production
//! forward pass. With [`DoubleDouble`] (about 32 significant digits) it makes
//! central differences at `h = 1e-5` accurate well below the `f64` rounding
//! floor, which is what lets tiny gradient entries be checked in relative terms.

use std::ops::{Add, Div, Mul, Neg, Sub};

use twofloat::TwoFloat;

use crate::model::{Composition, EncodedTree, ModelParams, NodeKind, Untied};
use crate::tensor::{ActivationKind, Matrix};

/// The arithmetic the reference objective needs.
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn of(x: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Double-double scalar: `twofloat` arithmetic with full-precision `exp`/`ln`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DoubleDouble(pub TwoFloat);

macro_rules! dd_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr for DoubleDouble {
            type Output = Self;
            #[inline]
            fn $f(self, rhs: Self) -> Self {
                DoubleDouble(self.0 $op rhs.0)
            }
        }
    };
}
dd_op!(Add, add, +);
dd_op!(Sub, sub, -);
dd_op!(Mul, mul, *);

impl Div for DoubleDouble {
    type Output = Self;
    /// Long division by the leading word; `twofloat`'s own quotient only
    /// keeps about `f64` accuracy in some cases.
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.0, rhs.0);
        let q1 = a.hi() / b.hi();
        let r = a - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        DoubleDouble(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleDouble(-self.0)
    }
}

impl Real for DoubleDouble {
    fn of(x: f64) -> Self {
        DoubleDouble(TwoFloat::from(x))
    }

    fn exp(self) -> Self {
        // e^x = 2^k · (e^(r/1024))^1024 with x = k·ln2 + r
        const SQUARINGS: i32 = 10;
        let x = self.0;
        if x.hi() > 700.0 {
            return DoubleDouble(TwoFloat::from(f64::INFINITY));
        }
        if x.hi() < -700.0 {
            return Self::of(0.0);
        }
        let k = (x.hi() / std::f64::consts::LN_2).round();
        let r = (x - twofloat::consts::LN_2 * TwoFloat::from(k))
            * TwoFloat::from(2f64.powi(-SQUARINGS));
        let mut term = TwoFloat::from(1.0);
        let mut sum = TwoFloat::from(1.0);
        for n in 1..=12 {
            term = (DoubleDouble(term * r) / Self::of(n as f64)).0;
            sum += term;
        }
        for _ in 0..SQUARINGS {
            sum = sum * sum;
        }
        DoubleDouble(sum * TwoFloat::from(2f64.powi(k as i32)))
    }

    fn ln(self) -> Self {
        // Newton on e^y = x, starting from the f64 logarithm
        let mut y = Self::of(self.0.hi().ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Self::of(1.0);
        }
        y
    }

    fn abs(self) -> Self {
        if self.0.hi() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn to_f64(self) -> f64 {
        self.0.hi() + self.0.lo()
    }
}

fn sigmoid<R: Real>(x: R) -> R {
    R::of(1.0) / (R::of(1.0) + (-x).exp())
}

fn activate<R: Real>(kind: ActivationKind, x: R) -> R {
    match kind {
        ActivationKind::Sigmoid => sigmoid(x),
        ActivationKind::Tanh => R::of(1.0) - R::of(2.0) / ((R::of(2.0) * x).exp() + R::of(1.0)),
        ActivationKind::Softsign => x / (R::of(1.0) + x.abs()),
    }
}

/// `acc += m · v`
fn mul_add<R: Real>(m: &Matrix, v: &[R], acc: &mut [R]) {
    for (i, a) in acc.iter_mut().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            *a = *a + R::of(m[(i, j)]) * x;
        }
    }
}

fn lift<R: Real>(v: &[f64]) -> Vec<R> {
    v.iter().map(|&x| R::of(x)).collect()
}

fn pick(w: &Untied, leaf: bool) -> &Matrix {
    if leaf {
        &w.leaf
    } else {
        &w.inner
    }
}

struct Node<R> {
    leaf: bool,
    h: Vec<R>,
    c: Vec<R>,
}

/// `−log softmax(W·h + b)[label]`
fn node_loss<R: Real>(w: &Matrix, b: &[f64], h: &[R], label: usize) -> R {
    let mut z: Vec<R> = lift(b);
    mul_add(w, h, &mut z);
    let mut m = z[0];
    for &v in &z {
        if v > m {
            m = v;
        }
    }
    let mut s = R::of(0.0);
    for &v in &z {
        s = s + (v - m).exp();
    }
    m + s.ln() - z[label]
}

fn tree_loss<R: Real>(tree: &EncodedTree, p: &ModelParams) -> R {
    let d = p.d();
    let mut nodes: Vec<Node<R>> = Vec::with_capacity(tree.nodes.len());
    let mut loss = R::of(0.0);
    for n in &tree.nodes {
        let node = match n.kind {
            NodeKind::Leaf { word } => Node {
                leaf: true,
                h: lift(p.embeddings.row(word)),
                c: vec![R::of(0.0); d],
            },
            NodeKind::Inner { left, right } => {
                let (x, y) = (&nodes[left], &nodes[right]);
                match &p.composition {
                    Composition::Rnn(q) => {
                        let mut a: Vec<R> = lift(&q.b);
                        mul_add(pick(&q.w1, x.leaf), &x.h, &mut a);
                        mul_add(pick(&q.w2, y.leaf), &y.h, &mut a);
                        Node {
                            leaf: false,
                            h: a.into_iter().map(|v| activate(q.activation, v)).collect(),
                            c: vec![R::of(0.0); d],
                        }
                    }
                    Composition::Lstm(q) => {
                        // gate(first, second) = σ(W1·first.h + W2·second.h + Wc1·first.c + Wc2·second.c + b)
                        let gate = |w1: &Untied,
                                    w2: &Untied,
                                    wc1: &Matrix,
                                    wc2: &Matrix,
                                    b: &[f64],
                                    first: &Node<R>,
                                    second: &Node<R>| {
                            let mut z: Vec<R> = lift(b);
                            mul_add(pick(w1, first.leaf), &first.h, &mut z);
                            mul_add(pick(w2, second.leaf), &second.h, &mut z);
                            mul_add(wc1, &first.c, &mut z);
                            mul_add(wc2, &second.c, &mut z);
                            z.into_iter().map(sigmoid).collect::<Vec<R>>()
                        };
                        let i1 = gate(&q.w_i1, &q.w_i2, &q.w_ci1, &q.w_ci2, &q.b_i, x, y);
                        let i2 = gate(&q.w_i1, &q.w_i2, &q.w_ci1, &q.w_ci2, &q.b_i, y, x);
                        let f1 = gate(&q.w_f1, &q.w_f2, &q.w_cf1, &q.w_cf2, &q.b_f, x, y);
                        let f2 = gate(&q.w_f1, &q.w_f2, &q.w_cf1, &q.w_cf2, &q.b_f, y, x);
                        let mut ux = vec![R::of(0.0); d];
                        let mut uy = vec![R::of(0.0); d];
                        mul_add(pick(&q.w_c1, x.leaf), &x.h, &mut ux);
                        mul_add(pick(&q.w_c2, y.leaf), &y.h, &mut uy);
                        let c: Vec<R> = (0..d)
                            .map(|k| {
                                let cand = ux[k] * i1[k] + uy[k] * i2[k] + R::of(q.b_c[k]);
                                f1[k] * x.c[k] + f2[k] * y.c[k] + activate(q.activation, cand)
                            })
                            .collect();
                        let mut o: Vec<R> = lift(&q.b_o);
                        mul_add(pick(&q.w_o1, x.leaf), &x.h, &mut o);
                        mul_add(pick(&q.w_o2, y.leaf), &y.h, &mut o);
                        mul_add(&q.w_co, &c, &mut o);
                        let h = (0..d)
                            .map(|k| sigmoid(o[k]) * activate(q.activation, c[k]))
                            .collect();
                        Node { leaf: false, h, c }
                    }
                }
            }
        };
        if let Some(label) = n.label {
            let s = &p.softmax;
            loss = loss
                + if node.leaf {
                    node_loss(&s.w_leaf, &s.b_leaf, &node.h, label)
                } else {
                    node_loss(&s.w_inner, &s.b_inner, &node.h, label)
                };
        }
        nodes.push(node);
    }
    loss
}

/// The training objective: mean per-sentence loss plus `(λ/2)·‖θ‖²` over trained tensors.
pub fn reference_objective<R: Real>(batch: &[EncodedTree], params: &ModelParams, lambda: f64) -> R {
    let mut data = R::of(0.0);
    for t in batch {
        data = data + tree_loss::<R>(t, params);
    }
    let mut sq = R::of(0.0);
    for t in params.trainable_tensors() {
        for &x in t.data {
            sq = sq + R::of(x) * R::of(x);
        }
    }
    data / R::of(batch.len() as f64) + R::of(0.5 * lambda) * sq
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(x: f64) -> DoubleDouble {
        DoubleDouble::of(x)
    }

    #[test]
    fn exp_and_ln_are_inverse_to_double_double_precision() {
        for &x in &[-30.0, -3.7, -0.5, -1e-3, 0.0, 1e-9, 0.3, 1.0, 2.5, 17.0] {
            let back = dd(x).exp().ln() - dd(x);
            assert!(
                back.to_f64().abs() < 1e-27 * x.abs().max(1.0),
                "{x}: {back:?}"
            );
        }
        for &y in &[1e-8, 0.2, 1.7, 9.0, 1234.5] {
            let back = dd(y).ln().exp() - dd(y);
            assert!(back.to_f64().abs() < 1e-27 * y, "{y}: {back:?}");
        }
    }

    #[test]
    fn exp_and_ln_match_high_precision_values() {
        // hi + lo split of e^0.3 and ln 1.7 at 50 digits (0.3 and 1.7 as f64);
        // ten squarings in exp cost about three of the ~32 digits
        let cases = [
            (dd(0.3).exp(), 1.3498588075760032, -9.447314673432387e-17),
            (dd(1.7).ln(), 0.5306282510621704, -5.076541175216476e-18),
        ];
        for (got, hi, lo) in cases {
            let err = got - DoubleDouble(TwoFloat::new_add(hi, lo));
            assert!(err.to_f64().abs() < 1e-26, "{got:?}");
        }
    }

    #[test]
    fn activations_agree_with_f64() {
        for &x in &[-4.0, -0.7, 0.0, 0.2, 3.1] {
            for kind in ActivationKind::ALL {
                let a = activate(kind, dd(x)).to_f64();
                assert!((a - kind.apply(x)).abs() < 1e-15, "{kind} {x}");
            }
        }
    }
}
