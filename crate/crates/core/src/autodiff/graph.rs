//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in creation order, so the node vector is already a
//! topological order and `backward` simply walks it in reverse.

use super::activation::{gelu, gelu_prime, gelu_second, sigmoid};
use super::tensor::Tensor;
use crate::error::{DialError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>, usize),
    Transpose(NodeId),
    Gelu(NodeId),
    GeluPrime(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    LogSigmoid(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    Square(NodeId),
    Norm(NodeId),
    RowNorms(NodeId),
    SliceRows(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Concat(..) => "concat",
            Op::Transpose(..) => "transpose",
            Op::Gelu(..) => "gelu",
            Op::GeluPrime(..) => "gelu_prime",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::LogSigmoid(..) => "log_sigmoid",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::Square(..) => "square",
            Op::Norm(..) => "norm",
            Op::RowNorms(..) => "row_norms",
            Op::SliceRows(..) => "slice_rows",
            Op::GatherRows(..) => "gather_rows",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

impl Node {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn op_name(&self) -> &'static str {
        self.op.name()
    }
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of a backward pass: one optional gradient per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient w.r.t. `id`; zeros when the node was never reached.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
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

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(DialError::UnknownNode(id.0))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        id
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(DialError::UnknownNode(id.0))
        }
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        self.check(a)?;
        let value = self.value(a).map(f);
        let rg = self.any_grad(&[a]);
        Ok(self.push(op, value, rg))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let name = op.name();
        let value = self.value(a).zip_map(self.value(b), name, f)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(op, value, rg))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` bias vector to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(bias)?;
        let (av, bv) = (self.value(a), self.value(bias));
        if av.rank() != 2 || bv.rank() != 1 || av.shape()[1] != bv.shape()[0] {
            return Err(DialError::Shape {
                op: "add_bias",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let n = bv.len();
        let mut out = av.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % n];
        }
        let rg = self.any_grad(&[a, bias]);
        Ok(self.push(Op::AddBias(a, bias), out, rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(DialError::Empty("concat inputs"));
        }
        for &id in inputs {
            self.check(id)?;
        }
        let first = self.value(inputs[0]).shape().to_vec();
        if first.len() != 2 || axis > 1 {
            return Err(DialError::Shape {
                op: "concat",
                lhs: first,
                rhs: vec![axis],
            });
        }
        let other_axis = 1 - axis;
        for &id in &inputs[1..] {
            let s = self.value(id).shape();
            if s.len() != 2 || s[other_axis] != first[other_axis] {
                return Err(DialError::Shape {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
        }
        let value = if axis == 0 {
            let rows: usize = inputs.iter().map(|&id| self.value(id).shape()[0]).sum();
            let mut data = Vec::with_capacity(rows * first[1]);
            for &id in inputs {
                data.extend_from_slice(self.value(id).data());
            }
            Tensor::new(vec![rows, first[1]], data)?
        } else {
            let m = first[0];
            let cols: usize = inputs.iter().map(|&id| self.value(id).shape()[1]).sum();
            let mut data = Vec::with_capacity(m * cols);
            for i in 0..m {
                for &id in inputs {
                    data.extend_from_slice(self.value(id).row(i));
                }
            }
            Tensor::new(vec![m, cols], data)?
        };
        let rg = self.any_grad(inputs);
        Ok(self.push(Op::Concat(inputs.to_vec(), axis), value, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.value(a).transpose()?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::Transpose(a), value, rg))
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Gelu(a), gelu)
    }

    /// Elementwise derivative of gelu; differentiable through gelu''.
    pub fn gelu_prime(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::GeluPrime(a), gelu_prime)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn log_sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::LogSigmoid(a), log_sigmoid)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a);
        if v.is_empty() {
            return Err(DialError::Empty("mean"));
        }
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::Mean(a), value, rg))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::Sum(a), value, rg))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// `sqrt(sum(a^2) + eps)` over all elements.
    pub fn euclidean_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.check(a)?;
        if eps <= 0.0 {
            return Err(DialError::InvalidArgument(format!("norm eps must be > 0, got {eps}")));
        }
        let v = self.value(a);
        let value = Tensor::scalar((v.data().iter().map(|x| x * x).sum::<f64>() + eps).sqrt());
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::Norm(a), value, rg))
    }

    /// Per-row `sqrt(sum(row^2) + eps)`; `[m, n] -> [m]`.
    pub fn row_norms(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.check(a)?;
        if eps <= 0.0 {
            return Err(DialError::InvalidArgument(format!("norm eps must be > 0, got {eps}")));
        }
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(DialError::Shape {
                op: "row_norms",
                lhs: v.shape().to_vec(),
                rhs: vec![],
            });
        }
        let norms = (0..v.rows())
            .map(|i| (v.row(i).iter().map(|x| x * x).sum::<f64>() + eps).sqrt())
            .collect();
        let value = Tensor::vector(norms);
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::RowNorms(a), value, rg))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a);
        if v.rank() != 2 || start > end || end > v.shape()[0] {
            return Err(DialError::Shape {
                op: "slice_rows",
                lhs: v.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let c = v.shape()[1];
        let value = Tensor::new(vec![end - start, c], v.data()[start * c..end * c].to_vec())?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::SliceRows(a, start), value, rg))
    }

    /// Rows picked by index (repeats allowed); `[m, n] -> [k, n]`.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a);
        if v.rank() != 2 || indices.iter().any(|&i| i >= v.shape()[0]) {
            return Err(DialError::Shape {
                op: "gather_rows",
                lhs: v.shape().to_vec(),
                rhs: vec![indices.iter().copied().max().unwrap_or(0)],
            });
        }
        let c = v.shape()[1];
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(v.row(i));
        }
        let value = Tensor::new(vec![indices.len(), c], data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::GatherRows(a, indices.to_vec()), value, rg))
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss)?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(DialError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads)?;
            grads[i] = Some(upstream);
        }

        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) -> Result<()> {
        if !self.nodes[id.0].requires_grad {
            return Ok(());
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let bt = self.value(*b).transpose()?;
                    self.accumulate(grads, *a, up.matmul(&bt)?)?;
                }
                if self.requires_grad(*b) {
                    let at = self.value(*a).transpose()?;
                    self.accumulate(grads, *b, at.matmul(up)?)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone())?;
                self.accumulate(grads, *b, up.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, up.clone())?;
                self.accumulate(grads, *b, up.map(|g| -g))?;
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, up.zip_map(self.value(*b), "mul", |g, y| g * y)?)?;
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, up.zip_map(self.value(*a), "mul", |g, x| g * x)?)?;
                }
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, up.clone())?;
                if self.requires_grad(*bias) {
                    let n = up.cols();
                    let mut col = vec![0.0; n];
                    for i in 0..up.rows() {
                        for (c, g) in col.iter_mut().zip(up.row(i)) {
                            *c += g;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::vector(col))?;
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, up.map(|g| c * g))?;
            }
            Op::Concat(inputs, axis) => {
                let mut offset = 0;
                for &id in inputs {
                    let s = self.value(id).shape();
                    let g = if *axis == 0 {
                        let c = s[1];
                        Tensor::new(s.to_vec(), up.data()[offset * c..(offset + s[0]) * c].to_vec())?
                    } else {
                        let mut data = Vec::with_capacity(s[0] * s[1]);
                        for i in 0..s[0] {
                            data.extend_from_slice(&up.row(i)[offset..offset + s[1]]);
                        }
                        Tensor::new(s.to_vec(), data)?
                    };
                    offset += s[*axis];
                    self.accumulate(grads, id, g)?;
                }
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, up.transpose()?)?;
            }
            Op::Gelu(a) => {
                let g = up.zip_map(self.value(*a), "gelu", |g, x| g * gelu_prime(x))?;
                self.accumulate(grads, *a, g)?;
            }
            Op::GeluPrime(a) => {
                let g = up.zip_map(self.value(*a), "gelu_prime", |g, x| g * gelu_second(x))?;
                self.accumulate(grads, *a, g)?;
            }
            Op::Relu(a) => {
                let g = up.zip_map(self.value(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accumulate(grads, *a, g)?;
            }
            Op::Sigmoid(a) => {
                let g = up.zip_map(&node.value, "sigmoid", |g, s| g * s * (1.0 - s))?;
                self.accumulate(grads, *a, g)?;
            }
            Op::LogSigmoid(a) => {
                let g = up.zip_map(self.value(*a), "log_sigmoid", |g, x| g * sigmoid(-x))?;
                self.accumulate(grads, *a, g)?;
            }
            Op::Mean(a) => {
                let v = self.value(*a);
                let g = up.item()? / v.len() as f64;
                self.accumulate(grads, *a, Tensor::full(v.shape(), g))?;
            }
            Op::Sum(a) => {
                let v = self.value(*a);
                self.accumulate(grads, *a, Tensor::full(v.shape(), up.item()?))?;
            }
            Op::Square(a) => {
                let g = up.zip_map(self.value(*a), "square", |g, x| 2.0 * x * g)?;
                self.accumulate(grads, *a, g)?;
            }
            Op::Norm(a) => {
                let n = node.value.item()?;
                let scale = up.item()? / n;
                self.accumulate(grads, *a, self.value(*a).map(|x| x * scale))?;
            }
            Op::RowNorms(a) => {
                let v = self.value(*a);
                let c = v.cols();
                let mut out = v.clone();
                for (i, chunk) in out.data_mut().chunks_mut(c).enumerate() {
                    let s = up.data()[i] / node.value.data()[i];
                    for x in chunk {
                        *x *= s;
                    }
                }
                self.accumulate(grads, *a, out)?;
            }
            Op::SliceRows(a, start) => {
                let v = self.value(*a);
                let c = v.cols();
                let mut full = Tensor::zeros(v.shape());
                full.data_mut()[start * c..start * c + up.len()].copy_from_slice(up.data());
                self.accumulate(grads, *a, full)?;
            }
            Op::GatherRows(a, indices) => {
                let v = self.value(*a);
                let c = v.cols();
                let mut full = Tensor::zeros(v.shape());
                let fd = full.data_mut();
                for (k, &i) in indices.iter().enumerate() {
                    for (dst, g) in fd[i * c..(i + 1) * c].iter_mut().zip(up.row(k)) {
                        *dst += g;
                    }
                }
                self.accumulate(grads, *a, full)?;
            }
        }
        Ok(())
    }
}

/// Numerically stable `log(sigmoid(x))`.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}
