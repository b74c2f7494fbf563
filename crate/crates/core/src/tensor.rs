//! Dense `f64` vectors and row-major matrices, the activation functions and a
//! numerically stable softmax.
//!
//! Shape mismatches inside the model are programming or configuration errors,
//! so the hot-path kernels panic with a message naming both shapes. The
//! `try_` variants report the same condition as a [`ShapeError`].

use std::fmt;
use std::ops::{Deref, DerefMut, Index, IndexMut};

use rand::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("shape mismatch: matrix is {rows}x{cols} but vector has length {len}")]
pub struct ShapeError {
    pub rows: usize,
    pub cols: usize,
    pub len: usize,
}

/// A dense column vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector {
            data: vec![value; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &[f64]) {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }

    pub fn add(&self, other: &Vector) -> Vector {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &[f64]) -> Vector {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        Vector::from_vec(self.data.iter().zip(other).map(|(a, b)| a * b).collect())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        self.data.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Index of the largest entry; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate().skip(1) {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

/// A dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is not `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn try_matvec(&self, v: &[f64]) -> Result<Vector, ShapeError> {
        if v.len() != self.cols {
            return Err(ShapeError {
                rows: self.rows,
                cols: self.cols,
                len: v.len(),
            });
        }
        let mut out = Vector::zeros(self.rows);
        self.matvec_acc(v, &mut out);
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.rows);
        self.matvec_acc(v, &mut out);
        out
    }

    /// `out += self * v`
    pub fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        self.check_cols(v.len());
        assert_eq!(out.len(), self.rows, "output length mismatch");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, v);
        }
    }

    /// `out += selfᵀ * v`
    pub fn tr_matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(
            v.len(),
            self.rows,
            "shape mismatch: transpose of {}x{} applied to length {}",
            self.rows,
            self.cols,
            v.len()
        );
        assert_eq!(out.len(), self.cols, "output length mismatch");
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
    }

    /// `self += a bᵀ`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows, "outer product row mismatch");
        assert_eq!(b.len(), self.cols, "outer product column mismatch");
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ai == 0.0 {
                continue;
            }
            for (r, &bj) in row.iter_mut().zip(b) {
                *r += ai * bj;
            }
        }
    }

    fn check_cols(&self, len: usize) {
        if len != self.cols {
            panic!(
                "{}",
                ShapeError {
                    rows: self.rows,
                    cols: self.cols,
                    len
                }
            );
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler keep independent FMA chains
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `m * v`, checked.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector, ShapeError> {
    m.try_matvec(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Softsign,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Softsign,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Softsign => x / (1.0 + x.abs()),
        }
    }

    /// Derivative evaluated at the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softsign => "softsign",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "softsign" => Ok(ActivationKind::Softsign),
            other => Err(format!(
                "unknown activation `{other}` (expected sigmoid, tanh or softsign)"
            )),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn apply_activation(kind: ActivationKind, v: &[f64]) -> Vector {
    v.iter().map(|&x| kind.apply(x)).collect::<Vec<_>>().into()
}

pub fn activation_derivative(kind: ActivationKind, pre_activation: &[f64]) -> Vector {
    pre_activation
        .iter()
        .map(|&x| kind.derivative(x))
        .collect::<Vec<_>>()
        .into()
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&u| (u - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matvec_examples() {
        let v = Vector::from_vec(vec![3.0, -1.0]);
        assert_eq!(
            matvec(&Matrix::identity(2), &v).unwrap().as_slice(),
            &[3.0, -1.0]
        );
        assert_eq!(
            matvec(&Matrix::zeros(3, 2), &v).unwrap().as_slice(),
            &[0.0, 0.0, 0.0]
        );
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let ones = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(matvec(&m, &ones).unwrap().as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let err = matvec(&Matrix::zeros(3, 2), &Vector::zeros(4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x2") && msg.contains('4'), "{msg}");
    }

    #[test]
    #[should_panic(expected = "3x2")]
    fn unchecked_matvec_panics_on_mismatch() {
        Matrix::zeros(3, 2).matvec(&[1.0; 5]);
    }

    #[test]
    fn transpose_and_outer() {
        let m = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let mut out = vec![0.0; 3];
        m.tr_matvec_acc(&[1.0, -1.0], &mut out);
        assert_eq!(out, vec![-3.0, -3.0, -3.0]);

        let mut g = Matrix::zeros(2, 3);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g.as_slice(), &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
    }

    #[test]
    fn activation_examples() {
        assert_eq!(apply_activation(ActivationKind::Sigmoid, &[0.0])[0], 0.5);
        assert_eq!(apply_activation(ActivationKind::Tanh, &[0.0])[0], 0.0);
        assert_eq!(apply_activation(ActivationKind::Softsign, &[1.0])[0], 0.5);

        assert_eq!(
            activation_derivative(ActivationKind::Sigmoid, &[0.0])[0],
            0.25
        );
        assert_eq!(activation_derivative(ActivationKind::Tanh, &[0.0])[0], 1.0);
        assert_eq!(
            activation_derivative(ActivationKind::Softsign, &[0.0])[0],
            1.0
        );
    }

    #[test]
    fn activation_ranges() {
        for x in [-40.0, -3.0, -0.1, 0.0, 0.2, 5.0, 40.0] {
            let s = ActivationKind::Sigmoid.apply(x);
            assert!(s > 0.0 && s < 1.0 || (x.abs() > 30.0 && (0.0..=1.0).contains(&s)));
            assert!(ActivationKind::Softsign.apply(x).abs() < 1.0);
        }
        assert!(ActivationKind::Tanh.apply(0.5).abs() < 1.0);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0; 5]);
        for &x in p.iter() {
            assert_abs_diff_eq!(x, 0.2, epsilon = 1e-15);
        }
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = softmax(&[1.0f64.ln(), 3.0f64.ln()]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn argmax_ties_go_to_smallest_index() {
        assert_eq!(Vector::from_vec(vec![0.2, 0.2, 0.1]).argmax(), 0);
        assert_eq!(Vector::from_vec(vec![0.1, 0.3, 0.3]).argmax(), 1);
    }

    #[test]
    fn activation_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for kind in ActivationKind::ALL {
            for _ in 0..100 {
                let x: f64 = rng.gen_range(-5.0..=5.0);
                let numeric = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let analytic = kind.derivative(x);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-6, "{kind} at {x}: {analytic} vs {numeric}");
            }
        }
    }

    fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, len)
    }

    proptest! {
        #[test]
        fn softmax_normalizes_and_preserves_argmax(v in finite_vec(1..12)) {
            let p = softmax(&v);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert_eq!(p.argmax(), Vector::from_vec(v).argmax());
        }

        #[test]
        fn softmax_shift_invariant(v in finite_vec(1..12), k in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + k).collect();
            let a = softmax(&v);
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn matvec_distributes(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::uniform(rows, cols, 3.0, &mut rng);
            let a: Vector = (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>().into();
            let b: Vector = (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>().into();
            let lhs = m.matvec(&a.add(&b));
            let rhs = m.matvec(&a).add(&m.matvec(&b));
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
