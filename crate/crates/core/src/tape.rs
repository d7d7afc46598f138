//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value and the operation that produced it. [`Tape::backward`] walks the
//! nodes in reverse creation order, which is a valid topological order since
//! an operation can only reference nodes that already exist.
//!
//! Nodes created by [`Tape::constant`] or [`Tape::detach`] are not
//! differentiable; gradient never flows into them or through them. A tape
//! built with [`Tape::no_grad`] records values only, which is what the
//! evaluation path uses.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, matmul_into, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Affine { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Concat(Vec<Var>),
    MeanAxis { x: Var, axis: usize },
    Sum(Var),
    Mean(Var),
    GroupMeanRows { x: Var, group: usize },
    RepeatRows { x: Var, times: usize },
    Slice { x: Var, start: usize, end: usize },
    Clamp { x: Var, lo: f64, hi: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    differentiable: bool,
}

/// One recorded forward pass.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            record: true,
        }
    }

    /// A tape that computes values only; every node is a constant.
    pub fn no_grad() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let differentiable = self.record;
        let op = if differentiable { Op::Leaf } else { Op::Constant };
        self.push_raw(value, op, differentiable)
    }

    /// Input that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Constant, false)
    }

    /// Copy of `v` cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_differentiable(&self, v: Var) -> bool {
        self.nodes[v.0].differentiable
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push_raw(&mut self, value: Tensor, op: Op, differentiable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            differentiable,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let differentiable = self.record && inputs.iter().any(|v| self.nodes[v.0].differentiable);
        let op = if differentiable { op } else { Op::Constant };
        self.push_raw(value, op, differentiable)
    }

    // ---- operations -------------------------------------------------------

    /// `a (n x k) * b (k x m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `x W^T + b` for `x: (.., in)`, `W: (out, in)`, `b: (out)`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sw.len() != 2 || sx.is_empty() || *sx.last().unwrap() != sw[1] {
            return Err(Error::shape("affine", sx, sw));
        }
        let out_dim = sw[0];
        let bias_len: usize = sb.iter().product();
        if bias_len != out_dim {
            return Err(Error::shape("affine", sw, sb));
        }
        let in_dim = sw[1];
        let rows = self.value(x).rows();
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xr = &xv[r * in_dim..(r + 1) * in_dim];
            let orow = &mut out[r * out_dim..(r + 1) * out_dim];
            for (o, (ov, bo)) in orow.iter_mut().zip(bv).enumerate() {
                *ov = bo + dot(xr, &wv[o * in_dim..(o + 1) * in_dim]);
            }
        }
        let mut shape = sx.to_vec();
        *shape.last_mut().unwrap() = out_dim;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Affine { x, w, b }, &[x, w, b]))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if tb.is_scalar() {
            let y = tb.item();
            Ok(ta.map(|x| f(x, y)))
        } else if ta.is_scalar() {
            let x = ta.item();
            Ok(tb.map(|y| f(x, y)))
        } else {
            Err(Error::shape(name, ta.shape(), tb.shape()))
        }
    }

    /// Elementwise sum; either side may be a one-element tensor.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        match act {
            Activation::Identity => a,
            Activation::Relu => self.relu(a),
            Activation::Tanh => self.tanh(a),
            Activation::Sigmoid => self.sigmoid(a),
        }
    }

    /// Concatenation along the last axis; leading extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyInput("concat"))?;
        let lead = self.shape(first)[..self.shape(first).len().saturating_sub(1)].to_vec();
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(Error::shape("concat", self.shape(first), s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Mean over `axis`; the axis is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(Error::shape("mean_axis", &s, &[axis]));
        }
        let (outer, n, inner) = split_axis(&s, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &xv[(o * n + k) * inner..(o * n + k + 1) * inner];
                axpy(1.0, src, &mut out[o * inner..(o + 1) * inner]);
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let mut shape = s.clone();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MeanAxis { x, axis }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(v, Op::Mean(x), &[x])
    }

    /// Mean over consecutive blocks of `group` rows: `(g*k, c) -> (k, c)`.
    pub fn group_mean_rows(&mut self, x: Var, group: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if group == 0 || rows % group != 0 || t.shape().len() != 2 {
            return Err(Error::shape("group_mean_rows", t.shape(), &[group]));
        }
        let k = rows / group;
        // Each column is summed in sorted order so the mean is bitwise
        // invariant to the order of rows within a group.
        let mut out = vec![0.0; k * cols];
        let xv = t.data();
        let inv = 1.0 / group as f64;
        let mut column = Vec::with_capacity(group);
        for g in 0..k {
            for c in 0..cols {
                column.clear();
                column.extend((g * group..(g + 1) * group).map(|r| xv[r * cols + c]));
                column.sort_unstable_by(f64::total_cmp);
                out[g * cols + c] = column.iter().sum::<f64>() * inv;
            }
        }
        let value = Tensor::new(vec![k, cols], out)?;
        Ok(self.push(value, Op::GroupMeanRows { x, group }, &[x]))
    }

    /// Tile a `(r, c)` block `times` times along rows.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || times == 0 {
            return Err(Error::shape("repeat_rows", t.shape(), &[times]));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(r * c * times);
        for _ in 0..times {
            out.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![r * times, c], out)?;
        Ok(self.push(value, Op::RepeatRows { x, times }, &[x]))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let cols = t.cols();
        if t.shape().is_empty() || start >= end || end > cols {
            return Err(Error::shape("slice", t.shape(), &[start, end]));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(t.rows() * w);
        for r in 0..t.rows() {
            out.extend_from_slice(&t.data()[r * cols + start..r * cols + end]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = w;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Slice { x, start, end }, &[x]))
    }

    /// Hard clamp into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo <= hi) {
            return Err(Error::Contract(format!("clamp bounds [{lo}, {hi}] are inverted")));
        }
        let v = self.value(x).map(|a| a.clamp(lo, hi));
        Ok(self.push(v, Op::Clamp { x, lo, hi }, &[x]))
    }

    // ---- backward ---------------------------------------------------------

    /// Accumulates `d root / d node` into the gradient slot of every
    /// differentiable node reachable from `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rt = self.value(root);
        if !rt.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                rt.shape()
            )));
        }
        if !self.nodes[root.0].differentiable {
            return Err(Error::Contract("backward root is not attached to the graph".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            let node = &self.nodes[i];
            match &mut self.grads[i] {
                Some(acc) => axpy(1.0, &g, acc.data_mut()),
                slot @ None => {
                    *slot = Some(Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"));
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let nodes = &self.nodes;
        // Adds `contrib` into the adjoint of `v` if it is differentiable.
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].differentiable {
                return;
            }
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = G B^T
                send(*a, &mut |da| {
                    for r in 0..n {
                        let gr = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            da[r * k + p] += dot(gr, &tb.data()[p * m..(p + 1) * m]);
                        }
                    }
                });
                // dB = A^T G
                send(*b, &mut |db| {
                    for r in 0..n {
                        let gr = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let a_rp = ta.data()[r * k + p];
                            if a_rp != 0.0 {
                                axpy(a_rp, gr, &mut db[p * m..(p + 1) * m]);
                            }
                        }
                    }
                });
            }
            Op::Affine { x, w, b } => {
                let (tx, tw) = (&nodes[x.0].value, &nodes[w.0].value);
                let (out_dim, in_dim) = (tw.shape()[0], tw.shape()[1]);
                let rows = tx.rows();
                send(*x, &mut |dx| {
                    for r in 0..rows {
                        let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            if go != 0.0 {
                                axpy(go, &tw.data()[o * in_dim..(o + 1) * in_dim], dxr);
                            }
                        }
                    }
                });
                send(*w, &mut |dw| {
                    for r in 0..rows {
                        let xr = &tx.data()[r * in_dim..(r + 1) * in_dim];
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            if go != 0.0 {
                                axpy(go, xr, &mut dw[o * in_dim..(o + 1) * in_dim]);
                            }
                        }
                    }
                });
                send(*b, &mut |db| {
                    for r in 0..rows {
                        axpy(1.0, &g[r * out_dim..(r + 1) * out_dim], db);
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                send(*a, &mut |da| reduce_into(da, g, 1.0));
                send(*b, &mut |db| reduce_into(db, g, sign));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                send(*a, &mut |da| mul_grad_into(da, g, tb));
                send(*b, &mut |db| mul_grad_into(db, g, ta));
            }
            Op::Scale(a, c) => send(*a, &mut |da| axpy(*c, g, da)),
            Op::AddScalar(a) => send(*a, &mut |da| axpy(1.0, g, da)),
            Op::Sigmoid(a) => send(*a, &mut |da| {
                for ((d, &gi), &y) in da.iter_mut().zip(g).zip(out) {
                    *d += gi * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => send(*a, &mut |da| {
                for ((d, &gi), &y) in da.iter_mut().zip(g).zip(out) {
                    *d += gi * (1.0 - y * y);
                }
            }),
            Op::Relu(a) => {
                let x = nodes[a.0].value.data();
                send(*a, &mut |da| {
                    for ((d, &gi), &xi) in da.iter_mut().zip(g).zip(x) {
                        if xi > 0.0 {
                            *d += gi;
                        }
                    }
                })
            }
            Op::Exp(a) => send(*a, &mut |da| {
                for ((d, &gi), &y) in da.iter_mut().zip(g).zip(out) {
                    *d += gi * y;
                }
            }),
            Op::Log(a) => {
                let x = nodes[a.0].value.data();
                send(*a, &mut |da| {
                    for ((d, &gi), &xi) in da.iter_mut().zip(g).zip(x) {
                        *d += gi / xi;
                    }
                })
            }
            Op::Square(a) => {
                let x = nodes[a.0].value.data();
                send(*a, &mut |da| {
                    for ((d, &gi), &xi) in da.iter_mut().zip(g).zip(x) {
                        *d += 2.0 * gi * xi;
                    }
                })
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].value.cols();
                    send(*p, &mut |dp| {
                        for r in 0..rows {
                            axpy(1.0, &g[r * total + offset..r * total + offset + w], &mut dp[r * w..(r + 1) * w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::MeanAxis { x, axis } => {
                let (outer, n, inner) = split_axis(nodes[x.0].value.shape(), *axis);
                let inv = 1.0 / n as f64;
                send(*x, &mut |dx| {
                    for o in 0..outer {
                        let go = &g[o * inner..(o + 1) * inner];
                        for k in 0..n {
                            axpy(inv, go, &mut dx[(o * n + k) * inner..(o * n + k + 1) * inner]);
                        }
                    }
                });
            }
            Op::Sum(x) => send(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let inv = g[0] / nodes[x.0].value.len() as f64;
                send(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += inv));
            }
            Op::GroupMeanRows { x, group } => {
                let cols = node.value.cols();
                let k = node.value.rows();
                let inv = 1.0 / *group as f64;
                send(*x, &mut |dx| {
                    for gi in 0..k {
                        let go = &g[gi * cols..(gi + 1) * cols];
                        for r in gi * group..(gi + 1) * group {
                            axpy(inv, go, &mut dx[r * cols..(r + 1) * cols]);
                        }
                    }
                });
            }
            Op::RepeatRows { x, times } => {
                let block = nodes[x.0].value.len();
                send(*x, &mut |dx| {
                    for t in 0..*times {
                        axpy(1.0, &g[t * block..(t + 1) * block], dx);
                    }
                });
            }
            Op::Slice { x, start, end } => {
                let cols = nodes[x.0].value.cols();
                let w = end - start;
                let rows = node.value.rows();
                send(*x, &mut |dx| {
                    for r in 0..rows {
                        axpy(1.0, &g[r * w..(r + 1) * w], &mut dx[r * cols + start..r * cols + end]);
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = nodes[x.0].value.data();
                send(*x, &mut |dx| {
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        if xi >= *lo && xi <= *hi {
                            *d += gi;
                        }
                    }
                });
            }
        }
    }
}

/// Gradient of a broadcasting binary op w.r.t. one operand: equal shapes
/// pass through, a one-element operand receives the sum.
fn reduce_into(dst: &mut [f64], g: &[f64], sign: f64) {
    if dst.len() == g.len() {
        axpy(sign, g, dst);
    } else {
        dst[0] += sign * g.iter().sum::<f64>();
    }
}

fn mul_grad_into(dst: &mut [f64], g: &[f64], other: &Tensor) {
    let o = other.data();
    match (dst.len() == g.len(), o.len() == g.len()) {
        (true, true) => {
            for ((d, &gi), &oi) in dst.iter_mut().zip(g).zip(o) {
                *d += gi * oi;
            }
        }
        (true, false) => axpy(o[0], g, dst),
        (false, true) => dst[0] += dot(g, o),
        (false, false) => dst[0] += g.iter().sum::<f64>() * o[0],
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
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

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, vals: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], vals.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::eye(3));
        let m = t.leaf(mat(3, 3, &[1.0, -2.0, 3.0, 4.0, 5.5, 6.0, -7.0, 8.0, 9.0]));
        let r = t.matmul(i, m).unwrap();
        assert_eq!(t.value(r), t.value(m));
    }

    #[test]
    fn analytic_activations_at_zero() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::zeros(&[2, 3]));
        let th = t.tanh(z);
        let sg = t.sigmoid(z);
        assert!(t.value(th).data().iter().all(|&v| v == 0.0));
        assert!(t.value(sg).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn clamp_values() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(&[-0.7, 0.1, 0.9]));
        let c = t.clamp(x, -0.5, 0.5).unwrap();
        assert_eq!(t.value(c).data(), &[-0.5, 0.1, 0.5]);
        let s = t.sum(c);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.square(x);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn bilinear_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::vector(&[1.0, 2.0, 3.0]));
        let b = t.leaf(Tensor::vector(&[-4.0, 0.5, 2.0]));
        let p = t.mul(a, b).unwrap();
        let s = t.sum(p);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap().data(), t.value(b).data());
        assert_eq!(t.grad(b).unwrap().data(), t.value(a).data());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::vector(&[1.0, 2.0]));
        let b = t.square(a);
        assert!(matches!(t.backward(b), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2, 3]));
        let b = t.leaf(Tensor::zeros(&[2, 2]));
        match t.matmul(a, b) {
            Err(Error::InvalidShape { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(t.add(a, b).is_err());
    }

    #[test]
    fn accumulation_doubles() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(&[0.3, -1.2]));
        let e = t.exp(x);
        let s = t.sum(e);
        t.backward(s).unwrap();
        let once = t.grad(x).unwrap().clone();
        t.backward(s).unwrap();
        let twice = t.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(&[1.0, 2.0]));
        let y = t.square(x);
        let d = t.detach(y);
        let z = t.mul(d, x).unwrap();
        let s = t.sum(z);
        t.backward(s).unwrap();
        // only the direct path: d(sum(c * x))/dx = c = x^2
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 4.0]);
        assert!(t.grad(d).is_none());
        assert!(t.grad(y).is_none());
    }

    #[test]
    fn no_grad_tape_is_all_constant() {
        let mut t = Tape::no_grad();
        let x = t.leaf(Tensor::scalar(2.0));
        let y = t.square(x);
        assert!(!t.is_differentiable(y));
        assert!(t.backward(y).is_err());
        assert_eq!(t.value(y).item(), 4.0);
    }

    #[test]
    fn group_mean_and_repeat() {
        let mut t = Tape::new();
        let x = t.leaf(mat(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let g = t.group_mean_rows(x, 2).unwrap();
        assert_eq!(t.value(g).data(), &[2.0, 3.0, 6.0, 7.0]);
        let r = t.repeat_rows(g, 2).unwrap();
        assert_eq!(t.shape(r), &[4, 2]);
        let m = t.mean_axis(x, 0).unwrap();
        assert_eq!(t.value(m).data(), &[4.0, 5.0]);
        let c = t.concat(&[x, x]).unwrap();
        assert_eq!(t.shape(c), &[4, 4]);
        let sl = t.slice(c, 1, 3).unwrap();
        assert_eq!(&t.value(sl).data()[..2], &[2.0, 1.0]);
    }
}
