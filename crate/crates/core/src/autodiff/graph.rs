//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as an append-only node, so node order
//! is already a topological order. [`Graph::backward`] walks the tape once in
//! reverse from a scalar loss, accumulating gradients additively into every
//! parent. Leaves that the loss never touches receive all-zero gradients.
//!
//! ```
//! use gazebc::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let p = g.leaf(Tensor::row(vec![1.0, -2.0, 3.0]));
//! let loss = g.sum_all(p);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(p).data(), &[1.0, 1.0, 1.0]);
//! ```

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, softmax, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add {
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Sub {
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    ConcatRows(Vec<Var>),
    RowGather(Var, Vec<usize>),
    Scale(Var, f64),
    Sum(Vec<Var>),
    SumAll(Var),
    SoftmaxCe {
        logits: Var,
        target: usize,
        weight: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recording of a computation, consumed by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Registers an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 || self.shape(b).len() != 2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    /// Whether `b` can be combined with `a` elementwise, possibly by
    /// broadcasting a single row of `b` over every row of `a`.
    fn broadcast_mode(&self, op: &'static str, a: Var, b: Var) -> Result<bool> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(false)
        } else if tb.rows() == 1 && tb.cols() == ta.cols() && ta.shape().len() == 2 {
            Ok(true)
        } else {
            Err(self.shape_err(op, a, b))
        }
    }

    fn zip_broadcast(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let broadcast = self.broadcast_mode(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = if broadcast {
                    tb.data()[i % cols]
                } else {
                    tb.data()[i]
                };
                f(x, y)
            })
            .collect();
        Ok((Tensor::new(ta.shape().to_vec(), data)?, broadcast))
    }

    /// `a + b`; a single-row `b` is broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, broadcast) = self.zip_broadcast(a, b, "add", |x, y| x + y)?;
        self.push(value, Op::Add { a, b, broadcast }, "add")
    }

    /// `a - b`, broadcasting like [`Graph::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, broadcast) = self.zip_broadcast(a, b, "sub", |x, y| x - y)?;
        self.push(value, Op::Sub { a, b, broadcast }, "sub")
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err("mul", a, b));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let ta = self.value(a);
        Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, f64::tanh)?;
        self.push(value, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, sigmoid)?;
        self.push(value, Op::Sigmoid(a), "sigmoid")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.map(a, |x| x * factor)?;
        self.push(value, Op::Scale(a, factor), "scale")
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::param("concat of zero tensors"))?;
        let cols = self.value(first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(self.shape_err("concat", first, p));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        self.push(value, Op::ConcatRows(parts.to_vec()), "concat")
    }

    /// Selects rows of `a` by index; indices may repeat.
    pub fn row_gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= ta.rows() {
                return Err(Error::Shape {
                    op: "row_gather",
                    lhs: ta.shape().to_vec(),
                    rhs: vec![i],
                });
            }
            data.extend_from_slice(ta.row_slice(i));
        }
        let value = Tensor::new(vec![indices.len(), cols], data)?;
        self.push(value, Op::RowGather(a, indices.to_vec()), "row_gather")
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::param("sum of zero tensors"))?;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            if self.shape(p) != acc.shape() {
                return Err(self.shape_err("sum", first, p));
            }
            acc.add_assign(self.value(p));
        }
        self.push(acc, Op::Sum(parts.to_vec()), "sum")
    }

    /// Sum of every entry, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.nodes.push(Node {
            value: Tensor::scalar(total),
            op: Op::SumAll(a),
        });
        Var(self.nodes.len() - 1)
    }

    /// `weight * -ln softmax(logits)[target]` as a scalar, treating all
    /// entries of `logits` as one flat vector.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        target: usize,
        weight: f64,
    ) -> Result<Var> {
        let tl = self.value(logits);
        if target >= tl.len() {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                lhs: tl.shape().to_vec(),
                rhs: vec![target],
            });
        }
        let probs = softmax(tl.data());
        let max = tl.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + tl.data().iter().map(|u| (u - max).exp()).sum::<f64>().ln();
        let nll = log_z - tl.data()[target];
        let value = Tensor::scalar(weight * nll);
        self.push(
            value,
            Op::SoftmaxCe {
                logits,
                target,
                weight,
                probs,
            },
            "softmax_cross_entropy",
        )
    }

    /// Propagates gradients from a scalar `loss` back to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: lt.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let up = upstream.data();
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    accumulate(&mut grads, *a, ta.shape(), |g| {
                        gemm_nt_acc(up, tb.data(), g, m, n, k)
                    });
                    accumulate(&mut grads, *b, tb.shape(), |g| {
                        gemm_tn_acc(ta.data(), up, g, m, k, n)
                    });
                }
                Op::Add { a, b, broadcast } | Op::Sub { a, b, broadcast } => {
                    let sign = if matches!(node.op, Op::Sub { .. }) {
                        -1.0
                    } else {
                        1.0
                    };
                    accumulate(&mut grads, *a, self.shape(*a), |g| add_into(g, up, 1.0));
                    let cols = node.value.cols();
                    accumulate(&mut grads, *b, self.shape(*b), |g| {
                        if *broadcast {
                            for (i, u) in up.iter().enumerate() {
                                g[i % cols] += sign * u;
                            }
                        } else {
                            add_into(g, up, sign);
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, ta.shape(), |g| {
                        for ((gv, u), y) in g.iter_mut().zip(up).zip(tb.data()) {
                            *gv += u * y;
                        }
                    });
                    accumulate(&mut grads, *b, tb.shape(), |g| {
                        for ((gv, u), x) in g.iter_mut().zip(up).zip(ta.data()) {
                            *gv += u * x;
                        }
                    });
                }
                Op::Tanh(a) => {
                    let out = node.value.data();
                    accumulate(&mut grads, *a, self.shape(*a), |g| {
                        for ((gv, u), y) in g.iter_mut().zip(up).zip(out) {
                            *gv += u * (1.0 - y * y);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let out = node.value.data();
                    accumulate(&mut grads, *a, self.shape(*a), |g| {
                        for ((gv, u), y) in g.iter_mut().zip(up).zip(out) {
                            *gv += u * y * (1.0 - y);
                        }
                    });
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        let slice = &up[offset..offset + len];
                        accumulate(&mut grads, *p, self.shape(*p), |g| add_into(g, slice, 1.0));
                        offset += len;
                    }
                }
                Op::RowGather(a, indices) => {
                    let cols = node.value.cols();
                    accumulate(&mut grads, *a, self.shape(*a), |g| {
                        for (r, &i) in indices.iter().enumerate() {
                            let src = &up[r * cols..(r + 1) * cols];
                            add_into(&mut g[i * cols..(i + 1) * cols], src, 1.0);
                        }
                    });
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, self.shape(*a), |g| add_into(g, up, *factor));
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut grads, *p, self.shape(*p), |g| add_into(g, up, 1.0));
                    }
                }
                Op::SumAll(a) => {
                    let u = up[0];
                    accumulate(&mut grads, *a, self.shape(*a), |g| {
                        for gv in g.iter_mut() {
                            *gv += u;
                        }
                    });
                }
                Op::SoftmaxCe {
                    logits,
                    target,
                    weight,
                    probs,
                } => {
                    let scale = up[0] * weight;
                    accumulate(&mut grads, *logits, self.shape(*logits), |g| {
                        for (j, (gv, p)) in g.iter_mut().zip(probs).enumerate() {
                            let indicator = if j == *target { 1.0 } else { 0.0 };
                            *gv += scale * (p - indicator);
                        }
                    });
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

fn accumulate(
    grads: &mut [Option<Tensor>],
    target: Var,
    shape: &[usize],
    f: impl FnOnce(&mut [f64]),
) {
    let slot = grads[target.0].get_or_insert_with(|| Tensor::zeros(shape));
    f(slot.data_mut());
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf. Leaves the loss does not depend on yield zeros.
    ///
    /// # Panics
    ///
    /// If `v` is an intermediate node, whose gradient is released during the
    /// backward sweep.
    pub fn get(&self, v: Var) -> &Tensor {
        self.grads[v.0]
            .as_ref()
            .expect("gradients are retained for leaf nodes only")
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .expect("gradients are retained for leaf nodes only")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn elementary_values() {
        let mut g = Graph::new();
        let zero = g.leaf(Tensor::row(vec![0.0]));
        let th = g.tanh(zero).unwrap();
        let sg = g.sigmoid(zero).unwrap();
        assert_eq!(g.value(th).data(), &[0.0]);
        assert_eq!(g.value(sg).data(), &[0.5]);
    }

    #[test]
    fn matmul_shape() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[3, 4]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 4]);
    }

    #[test]
    fn matmul_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[2, 4]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("[2, 3]") && err.contains("[2, 4]"), "{err}");
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::row(vec![0.7; 6]));
        let ce = g.softmax_cross_entropy(logits, 2, 1.0).unwrap();
        assert!((g.value(ce).data()[0] - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sum_gives_ones_gradient() {
        let mut g = Graph::new();
        let p = g.leaf(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let loss = g.sum_all(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).data(), &[1.0; 4]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::row(vec![1.0, 2.0]));
        let q = g.leaf(Tensor::row(vec![5.0, 6.0, 7.0]));
        let loss = g.sum_all(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(q).data(), &[0.0; 3]);
    }

    #[test]
    fn reuse_accumulates() {
        // loss = sum(p * p) -> grad 2p
        let mut g = Graph::new();
        let p = g.leaf(Tensor::row(vec![1.5, -2.0]));
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum_all(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).data(), &[3.0, -4.0]);
    }

    #[test]
    fn broadcast_add_sums_rows_in_backward() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[3, 2]));
        let b = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let loss = g.sum_all(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(b).data(), &[3.0, 3.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(g.backward(p).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::row(vec![f64::MAX]));
        let err = g.scale(p, 10.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "scale" }));
    }

    #[test]
    fn gather_scatters_back() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[vec![1.0], vec![2.0], vec![3.0]]));
        let rows = g.row_gather(a, &[2, 0, 2]).unwrap();
        assert_eq!(g.value(rows).data(), &[3.0, 1.0, 3.0]);
        let loss = g.sum_all(rows);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).data(), &[1.0, 0.0, 2.0]);
    }
}
