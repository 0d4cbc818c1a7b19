use alloc::vec;
use alloc::vec::Vec;

use super::{AutodiffError, ParamStore, Tensor};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const,
    Param { store: usize, index: usize },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice { input: NodeId, start: usize },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Embedding { table: NodeId, row: usize },
    Mean(NodeId),
    Sum(NodeId),
    Abs(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    RoundThrough(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    /// Empty for `Param` nodes, whose value lives in the borrowed store.
    value: Tensor,
    requires_grad: bool,
}

/// Gradient buffers for the trainable stores of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    stores: Vec<Option<ParamStore>>,
}

impl Gradients {
    /// One zeroed buffer per store flagged in `trainable`.
    pub fn new(stores: &[&ParamStore], trainable: &[bool]) -> Self {
        Gradients {
            stores: stores
                .iter()
                .zip(trainable)
                .map(|(s, &t)| t.then(|| s.zeros_like()))
                .collect(),
        }
    }

    pub fn store(&self, index: usize) -> Option<&ParamStore> {
        self.stores.get(index).and_then(Option::as_ref)
    }

    pub fn store_mut(&mut self, index: usize) -> Option<&mut ParamStore> {
        self.stores.get_mut(index).and_then(Option::as_mut)
    }

    pub fn zero(&mut self) {
        self.stores.iter_mut().flatten().for_each(ParamStore::zero);
    }

    /// Adds `other` elementwise.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.stores.iter_mut().zip(&other.stores) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for i in 0..a.len() {
                    for (x, y) in a.get_mut(i).data_mut().iter_mut().zip(b.get(i).data()) {
                        *x += *y;
                    }
                }
            }
        }
    }
}

/// A recorded computation over borrowed parameter stores.
pub struct Graph<'a> {
    stores: Vec<&'a ParamStore>,
    trainable: Vec<bool>,
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn is_scalar(t: &Tensor) -> bool {
    t.rank() == 0
}

impl<'a> Graph<'a> {
    /// Every store is trainable.
    pub fn new(stores: &[&'a ParamStore]) -> Self {
        Graph::with_trainable(stores, &vec![true; stores.len()])
    }

    /// `trainable[i]` says whether gradients flow into `stores[i]`.
    pub fn with_trainable(stores: &[&'a ParamStore], trainable: &[bool]) -> Self {
        assert_eq!(stores.len(), trainable.len());
        Graph {
            stores: stores.to_vec(),
            trainable: trainable.to_vec(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.ix()];
        match node.op {
            Op::Param { store, index } => self.stores[store].get(index),
            _ => &node.value,
        }
    }

    /// First element of a node's value; meant for scalars.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId((self.nodes.len() - 1) as u32)
    }

    fn req(&self, id: NodeId) -> bool {
        self.nodes[id.ix()].requires_grad
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Const, t, false)
    }

    pub fn param(&mut self, store: usize, index: usize) -> NodeId {
        let req = self.trainable[store];
        self.push(Op::Param { store, index }, Tensor::scalar(0.0), req)
    }

    /// `[m,k]·[k,n] → [m,n]`; a rank-1 `[k]` left operand gives `[n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, rank1) = match av.shape() {
            [k] => (1, *k, true),
            [m, k] => (*m, *k, false),
            s => return Err(mismatch("matmul", s, bv.shape())),
        };
        let n = match bv.shape() {
            [kb, n] if *kb == k => *n,
            s => return Err(mismatch("matmul", av.shape(), s)),
        };
        let mut out = vec![0.0; m * n];
        for (arow, orow) in av.data().chunks_exact(k).zip(out.chunks_exact_mut(n)) {
            for (&s, brow) in arow.iter().zip(bv.data().chunks_exact(n)) {
                if s != 0.0 {
                    for (o, &bb) in orow.iter_mut().zip(brow) {
                        *o += s * bb;
                    }
                }
            }
        }
        let shape = if rank1 { vec![n] } else { vec![m, n] };
        let req = self.req(a) || self.req(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(shape, out)?, req))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let value = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if is_scalar(bv) {
            let y = bv.data()[0];
            Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| f(x, y)).collect())?
        } else if is_scalar(av) {
            let x = av.data()[0];
            Tensor::new(bv.shape().to_vec(), bv.data().iter().map(|&y| f(x, y)).collect())?
        } else {
            return Err(mismatch(name, av.shape(), bv.shape()));
        };
        let req = self.req(a) || self.req(b);
        Ok(self.push(op, value, req))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Concatenation along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let first = self.value(*parts.first().ok_or_else(|| mismatch("concat", &[], &[]))?);
        let lead: Vec<usize> = first.shape()[..first.rank().saturating_sub(1)].to_vec();
        if first.rank() == 0 {
            return Err(mismatch("concat", first.shape(), &[]));
        }
        let outer: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(mismatch("concat", first.shape(), s));
            }
            widths.push(s[lead.len()]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let req = parts.iter().any(|&p| self.req(p));
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::new(shape, data)?, req))
    }

    /// `len` entries of the last axis starting at `start`.
    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        let v = self.value(input);
        let Some((&last, lead)) = v.shape().split_last() else {
            return Err(mismatch("slice", v.shape(), &[start, len]));
        };
        if start + len > last {
            return Err(mismatch("slice", v.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(v.len() / last.max(1) * len);
        for row in v.data().chunks_exact(last) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = lead.to_vec();
        shape.push(len);
        let req = self.req(input);
        Ok(self.push(Op::Slice { input, start }, Tensor::new(shape, data)?, req))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(a);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        let req = self.req(a);
        self.push(op, value, req)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::tanh, Op::Tanh(a))
    }

    /// Absolute value. The backward pass uses the right derivative (+1) at
    /// zero so that entries sitting exactly at zero can still move.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::abs, Op::Abs(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    /// Rounds to the nearest integer going forward but passes the gradient
    /// through unchanged (straight-through estimator). Not a true
    /// derivative, so it has no finite-difference check.
    pub fn round_through(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::round, Op::RoundThrough(a))
    }

    /// Row `row` of a `[rows, dim]` table.
    pub fn embedding(&mut self, table: NodeId, row: usize) -> Result<NodeId, AutodiffError> {
        let t = self.value(table);
        let [rows, dim] = *t.shape() else {
            return Err(mismatch("embedding", t.shape(), &[row]));
        };
        if row >= rows {
            return Err(AutodiffError::IndexOutOfRange {
                op: "embedding",
                index: row,
                len: rows,
            });
        }
        let value = Tensor::vector(t.data()[row * dim..(row + 1) * dim].to_vec());
        let req = self.req(table);
        Ok(self.push(Op::Embedding { table, row }, value, req))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let req = self.req(a);
        self.push(Op::Sum(a), Tensor::scalar(s), req)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let req = self.req(a);
        self.push(Op::Mean(a), Tensor::scalar(s), req)
    }

    fn grad_buf<'g>(
        &self,
        id: NodeId,
        node_grads: &'g mut [Vec<f64>],
        grads: &'g mut Gradients,
    ) -> Option<&'g mut [f64]> {
        let node = &self.nodes[id.ix()];
        if !node.requires_grad {
            return None;
        }
        match node.op {
            Op::Param { store, index } => grads
                .store_mut(store)
                .map(|s| s.get_mut(index).data_mut()),
            _ => {
                let buf = &mut node_grads[id.ix()];
                if buf.is_empty() {
                    *buf = vec![0.0; node.value.len()];
                }
                Some(&mut buf[..])
            }
        }
    }

    /// Accumulates d`loss`/d(parameter) into `grads` for every trainable
    /// store. Intermediate gradients start at zero on every call; `grads`
    /// is added to, so callers zero it between batches.
    pub fn backward(&self, loss: NodeId, grads: &mut Gradients) -> Result<(), AutodiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        for (i, s) in self.stores.iter().enumerate() {
            if self.trainable[i] {
                match grads.store(i) {
                    Some(g) if g.same_layout(s) => {}
                    _ => return Err(AutodiffError::StoreMismatch),
                }
            }
        }
        let mut node_grads: Vec<Vec<f64>> = vec![Vec::new(); loss.ix() + 1];
        if !self.req(loss) {
            return Ok(());
        }
        node_grads[loss.ix()] = vec![1.0];

        for i in (0..=loss.ix()).rev() {
            if node_grads[i].is_empty() {
                continue;
            }
            let gout = core::mem::take(&mut node_grads[i]);
            let node = &self.nodes[i];
            match node.op {
                Op::Const => {}
                Op::Param { store, index } => {
                    if let Some(g) = grads.store_mut(store) {
                        for (x, y) in g.get_mut(index).data_mut().iter_mut().zip(&gout) {
                            *x += *y;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    let n = bv.shape()[1];
                    let k = bv.shape()[0];
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        for (garow, grow) in ga.chunks_exact_mut(k).zip(gout.chunks_exact(n)) {
                            for (gk, brow) in garow.iter_mut().zip(bv.data().chunks_exact(n)) {
                                *gk += dot(brow, grow);
                            }
                        }
                    }
                    if let Some(gb) = self.grad_buf(b, &mut node_grads, grads) {
                        for (arow, grow) in av.data().chunks_exact(k).zip(gout.chunks_exact(n)) {
                            for (&s, gbrow) in arow.iter().zip(gb.chunks_exact_mut(n)) {
                                if s != 0.0 {
                                    for (x, &y) in gbrow.iter_mut().zip(grow) {
                                        *x += s * y;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        accumulate_broadcast(ga, &gout, 1.0);
                    }
                    if let Some(gb) = self.grad_buf(b, &mut node_grads, grads) {
                        accumulate_broadcast(gb, &gout, sign);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(a).data(), self.value(b).data());
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        mul_backward(ga, &gout, bv);
                    }
                    if let Some(gb) = self.grad_buf(b, &mut node_grads, grads) {
                        mul_backward(gb, &gout, av);
                    }
                }
                Op::Concat(ref parts) => {
                    let total = *node.value.shape().last().expect("rank >= 1");
                    let mut offset = 0;
                    for &p in parts {
                        let w = *self.value(p).shape().last().expect("rank >= 1");
                        if let Some(gp) = self.grad_buf(p, &mut node_grads, grads) {
                            for (gprow, grow) in gp.chunks_exact_mut(w).zip(gout.chunks_exact(total)) {
                                for (x, &y) in gprow.iter_mut().zip(&grow[offset..offset + w]) {
                                    *x += y;
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::Slice { input, start } => {
                    let last = *self.value(input).shape().last().expect("rank >= 1");
                    let len = *node.value.shape().last().expect("rank >= 1");
                    if let Some(gi) = self.grad_buf(input, &mut node_grads, grads) {
                        for (girow, grow) in gi.chunks_exact_mut(last).zip(gout.chunks_exact(len)) {
                            for (x, &y) in girow[start..start + len].iter_mut().zip(grow) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        for ((x, &g), &s) in ga.iter_mut().zip(&gout).zip(node.value.data()) {
                            *x += g * s * (1.0 - s);
                        }
                    }
                }
                Op::Tanh(a) => {
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        for ((x, &g), &t) in ga.iter_mut().zip(&gout).zip(node.value.data()) {
                            *x += g * (1.0 - t * t);
                        }
                    }
                }
                Op::Abs(a) => {
                    let av = self.value(a).data();
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        for ((x, &g), &v) in ga.iter_mut().zip(&gout).zip(av) {
                            *x += if v < 0.0 { -g } else { g };
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        for (x, &g) in ga.iter_mut().zip(&gout) {
                            *x += c * g;
                        }
                    }
                }
                Op::AddScalar(a) | Op::RoundThrough(a) => {
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        for (x, &g) in ga.iter_mut().zip(&gout) {
                            *x += g;
                        }
                    }
                }
                Op::Embedding { table, row } => {
                    let dim = node.value.len();
                    if let Some(gt) = self.grad_buf(table, &mut node_grads, grads) {
                        for (x, &g) in gt[row * dim..(row + 1) * dim].iter_mut().zip(&gout) {
                            *x += g;
                        }
                    }
                }
                Op::Sum(a) | Op::Mean(a) => {
                    let n = self.value(a).len();
                    let g = if matches!(node.op, Op::Mean(_)) {
                        gout[0] / n as f64
                    } else {
                        gout[0]
                    };
                    if let Some(ga) = self.grad_buf(a, &mut node_grads, grads) {
                        ga.iter_mut().for_each(|x| *x += g);
                    }
                }
            }
        }
        Ok(())
    }
}

/// `target += sign * gout`, summing `gout` when `target` is a broadcast scalar.
/// Dot product with eight independent partial sums, so the reduction is
/// not serialized on floating-point add latency.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn accumulate_broadcast(target: &mut [f64], gout: &[f64], sign: f64) {
    if target.len() == gout.len() {
        for (x, &g) in target.iter_mut().zip(gout) {
            *x += sign * g;
        }
    } else {
        target[0] += sign * gout.iter().sum::<f64>();
    }
}

/// Gradient of one factor of an elementwise product, with scalar broadcast on
/// either side.
fn mul_backward(target: &mut [f64], gout: &[f64], other: &[f64]) {
    if target.len() == gout.len() {
        if other.len() == gout.len() {
            for ((x, &g), &o) in target.iter_mut().zip(gout).zip(other) {
                *x += g * o;
            }
        } else {
            for (x, &g) in target.iter_mut().zip(gout) {
                *x += g * other[0];
            }
        }
    } else {
        target[0] += gout.iter().zip(other).map(|(g, o)| g * o).sum::<f64>();
    }
}

#[cfg(test)]
mod tests;
