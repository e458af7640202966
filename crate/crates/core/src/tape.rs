//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Tape`] holding its forward value
//! and the handles of its inputs, so node indices are a topological order by
//! construction. [`Tape::backward`] walks the nodes once, in reverse, and
//! accumulates gradients into the leaves created with `requires_grad`.
//!
//! ```
//! use ltae_core::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
//! let x = tape.constant(Tensor::vector(vec![3.0, 4.0]));
//! let wx = tape.mul(w, x).unwrap();
//! let loss = tape.sum(wx);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap().data(), &[3.0, 4.0]);
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice { src: Var, axis: usize, start: usize },
    SumAll(Var),
    SumAxis(Var, usize),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Softmax(Var, f64),
    LogSoftmax(Var),
    SegmentMean(Var, Vec<usize>),
    RepeatRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation trace.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    // Accumulated gradients of leaf nodes, indexed like `nodes`.
    grads: Vec<Option<Tensor>>,
}

/// Splits `shape` around `axis` into (outer, extent, inner) strides.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn row_softmax(x: &[f64], scale: f64, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row
            .iter()
            .map(|&v| scale * v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (scale * v - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            let brow = &b[k * p..(k + 1) * p];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input. Gradients are accumulated for it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, value: Tensor, op: Op, src: Var) -> Var {
        let rg = self.nodes[src.0].requires_grad;
        self.push(value, op, rg)
    }

    fn push_binary(&mut self, value: Tensor, op: Op, a: Var, b: Var) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    /// Matrix product of `[m×n]` and `[n×p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(dim_err("matmul", ta, tb));
        }
        let (m, n, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = matmul_raw(ta.data(), tb.data(), m, n, p);
        let value = Tensor::new(vec![m, p], out)?;
        Ok(self.push_binary(value, Op::MatMul(a, b), a, b))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(op, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push_binary(value, Op::Add(a, b), a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push_binary(value, Op::Sub(a, b), a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push_binary(value, Op::Mul(a, b), a, b))
    }

    /// Adds a length-`n` vector to every row of an `[m×n]` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tx.rank() != 2 || tr.len() != tx.cols() {
            return Err(dim_err("add_row", tx, tr));
        }
        let cols = tx.cols();
        let mut data = tx.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (d, &r) in chunk.iter_mut().zip(tr.data()) {
                *d += r;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push_binary(value, Op::AddRow(x, row), x, row))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push_unary(value, Op::Scale(x, factor), x)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transposed()?;
        Ok(self.push_unary(value, Op::Transpose(x), x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push_unary(value, Op::Reshape(x), x))
    }

    /// Concatenates tensors of equal rank along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::Contract(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        let mut extent = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(dim_err("concat", self.value(*first), self.value(p)));
            }
            extent += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = extent;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * extent * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let rg = parts.iter().any(|p| self.nodes[p.0].requires_grad);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Takes `len` consecutive entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() || len == 0 || start + len > t.shape()[axis] {
            return Err(Error::Contract(format!(
                "slice [{start}, {}) on axis {axis} out of range for {:?}",
                start + len,
                t.shape()
            )));
        }
        let (outer, extent, inner) = split_axis(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, data)?;
        Ok(self.push_unary(
            value,
            Op::Slice {
                src: x,
                axis,
                start,
            },
            x,
        ))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push_unary(Tensor::scalar(total), Op::SumAll(x), x)
    }

    /// Sum along `axis`, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(Error::Contract(format!(
                "axis {axis} out of range for {:?}",
                t.shape()
            )));
        }
        let (outer, extent, inner) = split_axis(t.shape(), axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let src = &t.data()[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                for (d, &s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, data)?;
        Ok(self.push_unary(value, Op::SumAxis(x, axis), x))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = self
            .value(x)
            .shape()
            .get(axis)
            .copied()
            .ok_or_else(|| Error::Contract(format!("axis {axis} out of range")))?;
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push_unary(value, Op::Relu(x), x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push_unary(value, Op::Exp(x), x)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::ln);
        self.push_unary(value, Op::Log(x), x)
    }

    /// Square root; its derivative is taken as zero where the output is zero.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0).sqrt());
        self.push_unary(value, Op::Sqrt(x), x)
    }

    /// Row-wise `softmax(scale * x)` over the last axis, stabilized by
    /// subtracting the row maximum.
    pub fn softmax(&mut self, x: Var, scale: f64) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 || t.rank() > 2 {
            return Err(Error::Dimension {
                op: "softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        if !(scale > 0.0) {
            return Err(Error::Contract(format!(
                "softmax scale must be positive, got {scale}"
            )));
        }
        let data = row_softmax(t.data(), scale, t.cols());
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push_unary(value, Op::Softmax(x, scale), x))
    }

    /// Row-wise log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 || t.rank() > 2 {
            return Err(Error::Dimension {
                op: "log_softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        let cols = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push_unary(value, Op::LogSoftmax(x), x))
    }

    /// Averages consecutive row segments of an `[R×D]` matrix, giving
    /// `[segments×D]`. Segment lengths must be positive and sum to `R`.
    pub fn segment_mean(&mut self, x: Var, lens: &[usize]) -> Result<Var> {
        let t = self.value(x);
        check_segments(t, lens, "segment_mean")?;
        let d = t.cols();
        let mut data = vec![0.0; lens.len() * d];
        let mut row = 0;
        for (s, &n) in lens.iter().enumerate() {
            let dst = &mut data[s * d..(s + 1) * d];
            for r in row..row + n {
                for (o, &v) in dst.iter_mut().zip(&t.data()[r * d..(r + 1) * d]) {
                    *o += v;
                }
            }
            dst.iter_mut().for_each(|o| *o /= n as f64);
            row += n;
        }
        let value = Tensor::matrix(lens.len(), d, data)?;
        Ok(self.push_unary(value, Op::SegmentMean(x, lens.to_vec()), x))
    }

    /// Inverse of [`Tape::segment_mean`]'s reduction: repeats row `s` of an
    /// `[S×D]` matrix `lens[s]` times.
    pub fn repeat_rows(&mut self, x: Var, lens: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 || t.rows() != lens.len() || lens.contains(&0) {
            return Err(Error::Contract(format!(
                "repeat_rows: {:?} with {} segments",
                t.shape(),
                lens.len()
            )));
        }
        let d = t.cols();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(total * d);
        for (s, &n) in lens.iter().enumerate() {
            for _ in 0..n {
                data.extend_from_slice(&t.data()[s * d..(s + 1) * d]);
            }
        }
        let value = Tensor::matrix(total, d, data)?;
        Ok(self.push_unary(value, Op::RepeatRows(x, lens.to_vec()), x))
    }

    /// Propagates `∂loss/∂·` back to every leaf created with `requires_grad`.
    ///
    /// Gradients accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.nodes[loss.0].value.shape().to_vec();
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {loss_shape:?}"
            )));
        }
        let Tape { nodes, grads } = self;
        let mut pending: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Tensor::full(&loss_shape, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let gd = g.data();
            match &node.op {
                Op::Leaf => accumulate(&mut grads[i], g.clone()),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, n, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if nodes[a.0].requires_grad {
                        // g · bᵀ
                        let mut ga = vec![0.0; m * n];
                        for r in 0..m {
                            for k in 0..n {
                                let brow = &tb.data()[k * p..(k + 1) * p];
                                ga[r * n + k] = gd[r * p..(r + 1) * p]
                                    .iter()
                                    .zip(brow)
                                    .map(|(x, y)| x * y)
                                    .sum();
                            }
                        }
                        send(&mut pending, *a, ta.shape(), ga);
                    }
                    if nodes[b.0].requires_grad {
                        // aᵀ · g
                        let mut gb = vec![0.0; n * p];
                        for r in 0..m {
                            for k in 0..n {
                                let aik = ta.data()[r * n + k];
                                for (o, &gv) in gb[k * p..(k + 1) * p]
                                    .iter_mut()
                                    .zip(&gd[r * p..(r + 1) * p])
                                {
                                    *o += aik * gv;
                                }
                            }
                        }
                        send(&mut pending, *b, tb.shape(), gb);
                    }
                }
                Op::Add(a, b) => {
                    send(&mut pending, *a, g.shape(), gd.to_vec());
                    send(&mut pending, *b, g.shape(), gd.to_vec());
                }
                Op::Sub(a, b) => {
                    send(&mut pending, *a, g.shape(), gd.to_vec());
                    send(&mut pending, *b, g.shape(), gd.iter().map(|v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let ga = gd.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    let gb = gd.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    send(&mut pending, *a, g.shape(), ga);
                    send(&mut pending, *b, g.shape(), gb);
                }
                Op::AddRow(x, row) => {
                    let cols = g.cols();
                    let mut gr = vec![0.0; cols];
                    for chunk in gd.chunks(cols) {
                        for (o, &v) in gr.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    send(&mut pending, *x, g.shape(), gd.to_vec());
                    send(&mut pending, *row, nodes[row.0].value.shape(), gr);
                }
                Op::Scale(x, f) => {
                    send(
                        &mut pending,
                        *x,
                        g.shape(),
                        gd.iter().map(|v| v * f).collect(),
                    );
                }
                Op::Transpose(x) => {
                    let gt = g.transposed()?;
                    let shape = gt.shape().to_vec();
                    send(&mut pending, *x, &shape, gt.into_data());
                }
                Op::Reshape(x) => {
                    send(&mut pending, *x, nodes[x.0].value.shape(), gd.to_vec());
                }
                Op::Concat(parts, axis) => {
                    let (outer, _, inner) = split_axis(g.shape(), *axis);
                    let mut offset = 0;
                    for &p in parts {
                        let shape = nodes[p.0].value.shape();
                        let block = shape[*axis] * inner;
                        let total = g.shape()[*axis] * inner;
                        let mut gp = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            let base = o * total + offset;
                            gp.extend_from_slice(&gd[base..base + block]);
                        }
                        offset += block;
                        send(&mut pending, p, shape, gp);
                    }
                }
                Op::Slice { src, axis, start } => {
                    let shape = nodes[src.0].value.shape();
                    let (outer, extent, inner) = split_axis(shape, *axis);
                    let len = g.shape()[*axis];
                    let mut gs = vec![0.0; outer * extent * inner];
                    for o in 0..outer {
                        let base = o * extent * inner + start * inner;
                        gs[base..base + len * inner]
                            .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                    }
                    send(&mut pending, *src, shape, gs);
                }
                Op::SumAll(x) => {
                    let t = &nodes[x.0].value;
                    send(&mut pending, *x, t.shape(), vec![gd[0]; t.len()]);
                }
                Op::SumAxis(x, axis) => {
                    let shape = nodes[x.0].value.shape();
                    let (outer, extent, inner) = split_axis(shape, *axis);
                    let mut gs = Vec::with_capacity(outer * extent * inner);
                    for o in 0..outer {
                        for _ in 0..extent {
                            gs.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
                        }
                    }
                    send(&mut pending, *x, shape, gs);
                }
                Op::Relu(x) => {
                    let t = &nodes[x.0].value;
                    let gx = gd
                        .iter()
                        .zip(t.data())
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    send(&mut pending, *x, t.shape(), gx);
                }
                Op::Exp(x) => {
                    let gx = gd
                        .iter()
                        .zip(node.value.data())
                        .map(|(a, b)| a * b)
                        .collect();
                    send(&mut pending, *x, g.shape(), gx);
                }
                Op::Log(x) => {
                    let t = &nodes[x.0].value;
                    let gx = gd.iter().zip(t.data()).map(|(a, b)| a / b).collect();
                    send(&mut pending, *x, g.shape(), gx);
                }
                Op::Sqrt(x) => {
                    let gx = gd
                        .iter()
                        .zip(node.value.data())
                        .map(|(&gv, &y)| if y > 0.0 { gv / (2.0 * y) } else { 0.0 })
                        .collect();
                    send(&mut pending, *x, g.shape(), gx);
                }
                Op::Softmax(x, scale) => {
                    let cols = g.cols();
                    let y = node.value.data();
                    let mut gx = vec![0.0; y.len()];
                    for ((yr, gr), out) in
                        y.chunks(cols).zip(gd.chunks(cols)).zip(gx.chunks_mut(cols))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                            *o = scale * yv * (gv - dot);
                        }
                    }
                    send(&mut pending, *x, g.shape(), gx);
                }
                Op::LogSoftmax(x) => {
                    let cols = g.cols();
                    let y = node.value.data();
                    let mut gx = vec![0.0; y.len()];
                    for ((yr, gr), out) in
                        y.chunks(cols).zip(gd.chunks(cols)).zip(gx.chunks_mut(cols))
                    {
                        let total: f64 = gr.iter().sum();
                        for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                            *o = gv - yv.exp() * total;
                        }
                    }
                    send(&mut pending, *x, g.shape(), gx);
                }
                Op::SegmentMean(x, lens) => {
                    let d = g.cols();
                    let shape = nodes[x.0].value.shape();
                    let mut gx = Vec::with_capacity(shape[0] * d);
                    for (s, &n) in lens.iter().enumerate() {
                        let scaled: Vec<f64> = gd[s * d..(s + 1) * d]
                            .iter()
                            .map(|v| v / n as f64)
                            .collect();
                        for _ in 0..n {
                            gx.extend_from_slice(&scaled);
                        }
                    }
                    send(&mut pending, *x, shape, gx);
                }
                Op::RepeatRows(x, lens) => {
                    let d = g.cols();
                    let shape = nodes[x.0].value.shape();
                    let mut gx = vec![0.0; lens.len() * d];
                    let mut row = 0;
                    for (s, &n) in lens.iter().enumerate() {
                        for r in row..row + n {
                            for (o, &v) in gx[s * d..(s + 1) * d]
                                .iter_mut()
                                .zip(&gd[r * d..(r + 1) * d])
                            {
                                *o += v;
                            }
                        }
                        row += n;
                    }
                    send(&mut pending, *x, shape, gx);
                }
            }
        }
        Ok(())
    }
}

fn check_segments(t: &Tensor, lens: &[usize], op: &str) -> Result<()> {
    let total: usize = lens.iter().sum();
    if t.rank() != 2 || lens.is_empty() || lens.contains(&0) || total != t.rows() {
        return Err(Error::Contract(format!(
            "{op}: segments {lens:?} do not partition the rows of {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

fn send(pending: &mut [Option<Tensor>], to: Var, shape: &[usize], data: Vec<f64>) {
    let g = Tensor::new(shape.to_vec(), data).expect("gradient shape matches its node");
    accumulate(&mut pending[to.0], g);
}
