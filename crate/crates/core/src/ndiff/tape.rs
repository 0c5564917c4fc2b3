//! Reverse-mode gradient tape over the primitives in [`super::ops`].
//!
//! Nodes are appended in evaluation order; `backward` sweeps them once in
//! reverse. Leaves borrow their values so registering large parameter
//! tables costs nothing.

use std::borrow::Cow;

use super::array::DenseArray;
use super::ops::{self, Padding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Conv1d { x: NodeId, k: NodeId, b: NodeId, pad: Padding },
    MaxPool { x: NodeId, argmax: Vec<usize> },
    TimeMax { x: NodeId, argmax: Vec<usize> },
    Relu { x: NodeId },
    Embedding { table: NodeId, idx: usize },
    Cosine { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    AddConst { x: NodeId },
    Scale { x: NodeId, factor: f64 },
    SumAll { xs: Vec<NodeId> },
    SumSquares { x: NodeId },
    SigmoidBce { logits: NodeId, targets: Vec<f64> },
}

struct Node<'a> {
    value: Cow<'a, DenseArray>,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive applications.
#[derive(Default)]
pub struct GradTape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients from one reverse sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseArray> {
        self.grads[id.0].as_ref()
    }

    /// Takes the gradient of `id`, or zeros of `shape` if nothing reached it.
    pub fn take_or_zeros(&mut self, id: NodeId, shape: &[usize]) -> DenseArray {
        self.grads[id.0]
            .take()
            .unwrap_or_else(|| DenseArray::zeros(shape))
    }
}

impl<'a> GradTape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseArray {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    fn push(&mut self, value: DenseArray, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: &'a DenseArray) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a borrowed leaf that receives no gradient.
    pub fn input(&mut self, value: &'a DenseArray) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: DenseArray) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::affine(self.value(x), self.value(w), self.value(b))?;
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::Affine { x, w, b }, ng))
    }

    pub fn conv1d(&mut self, x: NodeId, k: NodeId, b: NodeId, pad: Padding) -> Result<NodeId> {
        let out = ops::conv1d(self.value(x), self.value(k), self.value(b), pad)?;
        let ng = self.ng(&[x, k, b]);
        Ok(self.push(out, Op::Conv1d { x, k, b, pad }, ng))
    }

    pub fn maxpool1d(&mut self, x: NodeId, width: usize) -> Result<NodeId> {
        let (out, argmax) = ops::maxpool1d(self.value(x), width)?;
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::MaxPool { x, argmax }, ng))
    }

    /// Max over the whole time axis of a `[c, t]` array, giving a `[c]` vector.
    pub fn time_max(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x).shape()[1];
        let (out, argmax) = ops::maxpool1d(self.value(x), t)?;
        let c = out.len();
        let out = out.reshape(vec![c])?;
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::TimeMax { x, argmax }, ng))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = ops::relu(self.value(x));
        let ng = self.ng(&[x]);
        self.push(out, Op::Relu { x }, ng)
    }

    pub fn embedding(&mut self, table: NodeId, idx: usize) -> Result<NodeId> {
        let out = ops::embedding_lookup(self.value(table), idx)?;
        let ng = self.ng(&[table]);
        Ok(self.push(out, Op::Embedding { table, idx }, ng))
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let c = ops::cosine(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(DenseArray::scalar(c), Op::Cosine { a, b }, ng))
    }

    /// `a - b`, elementwise.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Error::Dimension(format!(
                "sub: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let out = DenseArray::from_parts_unchecked(va.shape().to_vec(), data);
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Sub { a, b }, ng))
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e + c).collect();
        let out = DenseArray::from_parts_unchecked(v.shape().to_vec(), data);
        let ng = self.ng(&[x]);
        self.push(out, Op::AddConst { x }, ng)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let mut out = self.value(x).clone();
        out.scale(factor);
        let ng = self.ng(&[x]);
        self.push(out, Op::Scale { x, factor }, ng)
    }

    /// Scalar sum of every element of every input.
    pub fn sum_all(&mut self, xs: &[NodeId]) -> NodeId {
        let s = xs
            .iter()
            .map(|&x| self.value(x).data().iter().sum::<f64>())
            .sum();
        let ng = self.ng(xs);
        self.push(DenseArray::scalar(s), Op::SumAll { xs: xs.to_vec() }, ng)
    }

    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum_squares();
        let ng = self.ng(&[x]);
        self.push(DenseArray::scalar(s), Op::SumSquares { x }, ng)
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets.
    pub fn sigmoid_bce(&mut self, logits: NodeId, targets: &[f64]) -> Result<NodeId> {
        let z = self.value(logits);
        if z.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "bce: {} logits vs {} targets",
                z.len(),
                targets.len()
            )));
        }
        // log(1 + e^z) - y z, computed stably
        let n = z.len() as f64;
        let loss = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&zi, &y)| zi.max(0.0) - zi * y + (-zi.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let ng = self.ng(&[logits]);
        Ok(self.push(
            DenseArray::scalar(loss),
            Op::SigmoidBce {
                logits,
                targets: targets.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<DenseArray>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseArray::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut acc = |id: NodeId, delta: DenseArray| {
                if !self.nodes[id.0].needs_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(existing) => existing.axpy(1.0, &delta),
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Affine { x, w, b } => {
                    let (gx, gw, gb) = ops::affine_backward(self.value(*x), self.value(*w), &g);
                    acc(*x, gx);
                    acc(*w, gw);
                    acc(*b, gb);
                }
                Op::Conv1d { x, k, b, pad } => {
                    let want_dx = self.nodes[x.0].needs_grad;
                    let (gx, gk, gb) =
                        ops::conv1d_backward(self.value(*x), self.value(*k), *pad, &g, want_dx);
                    if let Some(gx) = gx {
                        acc(*x, gx);
                    }
                    acc(*k, gk);
                    acc(*b, gb);
                }
                Op::MaxPool { x, argmax } | Op::TimeMax { x, argmax } => {
                    let gx = ops::maxpool1d_backward(self.value(*x).shape(), argmax, &g);
                    acc(*x, gx);
                }
                Op::Relu { x } => acc(*x, ops::relu_backward(self.value(*x), &g)),
                Op::Embedding { table, idx } => {
                    acc(
                        *table,
                        ops::embedding_backward(self.value(*table).shape(), *idx, &g),
                    );
                }
                Op::Cosine { a, b } => {
                    let (ga, gb) =
                        ops::cosine_backward(self.value(*a), self.value(*b), g.data()[0]);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Sub { a, b } => {
                    let mut neg = g.clone();
                    neg.scale(-1.0);
                    acc(*a, g);
                    acc(*b, neg);
                }
                Op::AddConst { x } => acc(*x, g),
                Op::Scale { x, factor } => {
                    let mut gs = g;
                    gs.scale(*factor);
                    acc(*x, gs);
                }
                Op::SumAll { xs } => {
                    let s = g.data()[0];
                    for &x in xs {
                        acc(x, DenseArray::filled(self.value(x).shape(), s));
                    }
                }
                Op::SumSquares { x } => {
                    let mut gx = self.value(*x).clone();
                    gx.scale(2.0 * g.data()[0]);
                    acc(*x, gx);
                }
                Op::SigmoidBce { logits, targets } => {
                    let z = self.value(*logits);
                    let s = g.data()[0] / z.len() as f64;
                    let data = z
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&zi, &y)| s * (sigmoid(zi) - y))
                        .collect();
                    acc(
                        *logits,
                        DenseArray::from_parts_unchecked(z.shape().to_vec(), data),
                    );
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
