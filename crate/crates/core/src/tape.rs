//! Record-and-replay reverse-mode differentiation.
//!
//! A [`Graph`] is the computation record of one forward pass: every primitive
//! appends a node whose inputs are strictly earlier nodes, so the node list is
//! already in topological order and [`Graph::backward`] replays it once in
//! reverse.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{self, Tensor};

/// Reference to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// matrix + column, the column added to every column of the matrix
    AddColumn(Var, Var),
    /// tensor times a 1x1 tensor
    ScaleBy(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxCols(Var),
    Concat(Vec<Var>, usize),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherCols(Var, Vec<usize>),
    Sum(Var),
    /// Sum over columns of KL(target || softmax(logits)); `probs` caches the softmax.
    SoftmaxKl {
        logits: Var,
        target: Tensor,
        probs: Tensor,
    },
    /// Sum of binary cross-entropies of sigmoid(logits) against targets.
    BceLogits { logits: Var, targets: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims2() != b.dims2() {
        return dim_err(op, a.shape(), b.shape());
    }
    Ok(())
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    let (r, c) = a.dims2();
    Tensor::matrix(r, c, data).expect("shape checked")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A constant leaf; it receives no gradient outside the graph.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// The node carrying parameter `id`. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        if let Some(v) = self.params[id.0] {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id));
        self.params[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = tensor::transpose(self.value(a));
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = binary(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = binary(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = binary(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Add column `v` (`[r, 1]`) to every column of `m` (`[r, c]`).
    pub fn add_column(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mt, vt) = (self.value(m), self.value(v));
        let (r, c) = mt.dims2();
        if vt.dims2() != (r, 1) {
            return dim_err("add_column", mt.shape(), vt.shape());
        }
        let mut data = mt.data().to_vec();
        for i in 0..r {
            let b = vt.data()[i];
            for x in &mut data[i * c..(i + 1) * c] {
                *x += b;
            }
        }
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, Op::AddColumn(m, v)))
    }

    /// Multiply every entry of `a` by the single entry of `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return dim_err("scale_by", self.value(a).shape(), self.value(s).shape());
        }
        let k = self.value(s).item();
        let (r, c) = self.value(a).dims2();
        let data = self.value(a).data().iter().map(|&x| x * k).collect();
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, Op::ScaleBy(a, s)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = tensor::tanh(self.value(a));
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = tensor::sigmoid(self.value(a));
        self.push(out, Op::Sigmoid(a))
    }

    /// Softmax of every column independently.
    pub fn softmax_cols(&mut self, a: Var) -> Result<Var> {
        let out = tensor::softmax_columns(self.value(a))?;
        Ok(self.push(out, Op::SoftmaxCols(a)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let mut out = tensor::concat(&tensors, axis)?;
        if out.rank() == 1 {
            let n = out.len();
            out = out.reshape(&[n, 1])?;
        }
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if start + len > r {
            return dim_err("slice_rows", t.shape(), &[start, len]);
        }
        let data = t.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::matrix(len, c, data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if start + len > c {
            return dim_err("slice_cols", t.shape(), &[start, len]);
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        let out = Tensor::matrix(r, len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Columns of `a` in the order given by `idx` (repeats allowed).
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if let Some(&bad) = idx.iter().find(|&&j| j >= c) {
            return dim_err("gather_cols", t.shape(), &[bad]);
        }
        let n = idx.len();
        let mut data = vec![0.0; r * n];
        for i in 0..r {
            for (k, &j) in idx.iter().enumerate() {
                data[i * n + k] = t.data()[i * c + j];
            }
        }
        let out = Tensor::matrix(r, n, data)?;
        Ok(self.push(out, Op::GatherCols(a, idx.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Σ_columns KL(target‖softmax(logits)). Gradients equal those of the
    /// cross-entropy; the value is zero when the softmax matches the target.
    pub fn softmax_kl(&mut self, logits: Var, target: Tensor) -> Result<Var> {
        let lt = self.value(logits);
        if lt.dims2() != target.dims2() {
            return dim_err("softmax_kl", lt.shape(), target.shape());
        }
        let (m, n) = lt.dims2();
        let probs = tensor::softmax_columns(lt)?;
        let mut total = 0.0;
        for j in 0..n {
            let col: Vec<f64> = (0..m).map(|i| lt.at(i, j)).collect();
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(col.iter().map(|&x| libm::exp(x - max)).sum::<f64>());
            for i in 0..m {
                let t = target.at(i, j);
                if t > 0.0 {
                    total += t * (libm::log(t) - (col[i] - lse));
                }
            }
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::SoftmaxKl {
                logits,
                target,
                probs,
            },
        ))
    }

    /// Σ_i BCE(sigmoid(logits_i), targets_i), computed from logits for stability.
    pub fn bce_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lt = self.value(logits);
        if lt.len() != targets.len() {
            return dim_err("bce_logits", lt.shape(), &[targets.len()]);
        }
        let total: f64 = lt
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs())))
            .sum();
        Ok(self.push(
            Tensor::scalar(total),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar `loss`. Parameters that do not influence the
    /// loss receive zero gradients.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut result = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (r, x) in result.get_mut(*id).data_mut().iter_mut().zip(&g) {
                        *r += x;
                    }
                }
                Op::MatMul(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (m, k) = at.dims2();
                    let n = bt.cols();
                    let (ad, bd) = (at.data(), bt.data());
                    {
                        let ga = self.grad_buf(&mut grads, *a);
                        for ii in 0..m {
                            let grow = &g[ii * n..(ii + 1) * n];
                            for p in 0..k {
                                let brow = &bd[p * n..(p + 1) * n];
                                let mut s = 0.0;
                                for (x, y) in grow.iter().zip(brow) {
                                    s += x * y;
                                }
                                ga[ii * k + p] += s;
                            }
                        }
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    for ii in 0..m {
                        let grow = &g[ii * n..(ii + 1) * n];
                        for p in 0..k {
                            let aip = ad[ii * k + p];
                            let dst = &mut gb[p * n..(p + 1) * n];
                            for (d, x) in dst.iter_mut().zip(grow) {
                                *d += aip * x;
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = self.value(*a).dims2();
                    let ga = self.grad_buf(&mut grads, *a);
                    for ii in 0..m {
                        for j in 0..n {
                            ga[ii * n + j] += g[j * m + ii];
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(self.grad_buf(&mut grads, *a), &g, 1.0);
                    add_into(self.grad_buf(&mut grads, *b), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(self.grad_buf(&mut grads, *a), &g, 1.0);
                    add_into(self.grad_buf(&mut grads, *b), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(bv) {
                        *d += x * y;
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    for ((d, x), y) in gb.iter_mut().zip(&g).zip(av) {
                        *d += x * y;
                    }
                }
                Op::AddColumn(m, v) => {
                    let (r, c) = out.dims2();
                    add_into(self.grad_buf(&mut grads, *m), &g, 1.0);
                    let gv = self.grad_buf(&mut grads, *v);
                    for ii in 0..r {
                        gv[ii] += g[ii * c..(ii + 1) * c].iter().sum::<f64>();
                    }
                }
                Op::ScaleBy(a, s) => {
                    let k = self.value(*s).item();
                    let av = self.value(*a).data();
                    add_into(self.grad_buf(&mut grads, *a), &g, k);
                    let dot: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                    self.grad_buf(&mut grads, *s)[0] += dot;
                }
                Op::Scale(a, k) => add_into(self.grad_buf(&mut grads, *a), &g, *k),
                Op::Tanh(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *d += x * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *d += x * y * (1.0 - y);
                    }
                }
                Op::SoftmaxCols(a) => {
                    let (m, n) = out.dims2();
                    let y = out.data();
                    let ga = self.grad_buf(&mut grads, *a);
                    for j in 0..n {
                        let mut dot = 0.0;
                        for ii in 0..m {
                            dot += g[ii * n + j] * y[ii * n + j];
                        }
                        for ii in 0..m {
                            let k = ii * n + j;
                            ga[k] += y[k] * (g[k] - dot);
                        }
                    }
                }
                Op::Concat(parts, axis) => {
                    let (_, cols) = out.dims2();
                    let mut offset = 0;
                    for p in parts {
                        let (pr, pc) = self.value(*p).dims2();
                        let gp = self.grad_buf(&mut grads, *p);
                        if *axis == 0 {
                            add_into(gp, &g[offset * cols..(offset + pr) * cols], 1.0);
                            offset += pr;
                        } else {
                            for ii in 0..pr {
                                let src = &g[ii * cols + offset..ii * cols + offset + pc];
                                add_into(&mut gp[ii * pc..(ii + 1) * pc], src, 1.0);
                            }
                            offset += pc;
                        }
                    }
                }
                Op::SliceRows(a, start) => {
                    let (len, c) = out.dims2();
                    let ga = self.grad_buf(&mut grads, *a);
                    add_into(&mut ga[start * c..(start + len) * c], &g, 1.0);
                }
                Op::SliceCols(a, start) => {
                    let (r, len) = out.dims2();
                    let c = self.value(*a).cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for ii in 0..r {
                        let dst = &mut ga[ii * c + start..ii * c + start + len];
                        add_into(dst, &g[ii * len..(ii + 1) * len], 1.0);
                    }
                }
                Op::GatherCols(a, idx) => {
                    let (r, n) = out.dims2();
                    let c = self.value(*a).cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for ii in 0..r {
                        for (k, &j) in idx.iter().enumerate() {
                            ga[ii * c + j] += g[ii * n + k];
                        }
                    }
                }
                Op::Sum(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for d in ga.iter_mut() {
                        *d += g[0];
                    }
                }
                Op::SoftmaxKl {
                    logits,
                    target,
                    probs,
                } => {
                    let gl = self.grad_buf(&mut grads, *logits);
                    for ((d, p), t) in gl.iter_mut().zip(probs.data()).zip(target.data()) {
                        *d += g[0] * (p - t);
                    }
                }
                Op::BceLogits { logits, targets } => {
                    let z = self.value(*logits).data();
                    let gl = self.grad_buf(&mut grads, *logits);
                    for ((d, &zi), &y) in gl.iter_mut().zip(z).zip(targets) {
                        *d += g[0] * (tensor::sigmoid_scalar(zi) - y);
                    }
                }
            }
        }
        Ok(result)
    }

    fn grad_buf<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> &'a mut Vec<f64> {
        grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()])
    }
}

fn add_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}
