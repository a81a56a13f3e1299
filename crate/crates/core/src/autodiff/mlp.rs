//! Feed-forward chains bound into a [`Graph`], and the symbolic input
//! gradient used by the gradient penalty.
//!
//! The penalty needs `d/dpsi ||grad_z d_psi(z)||`. Rather than general
//! second-order autodiff, `input_gradient_graph` writes `grad_z d(z)` out as
//! ordinary graph nodes (transposed weights and activation-derivative
//! scalings), so one first-order backward pass reaches the parameters.

use super::activation::Activation;
use super::graph::{Graph, NodeId};
use crate::error::{DialError, Result};

#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub weight: NodeId,
    pub bias: Option<NodeId>,
}

/// How the last hidden state becomes a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// The last layer is affine with a single output and no activation.
    Affine,
    /// `0.5 * ||h||^2` of the final (activated) layer; test fixture.
    HalfSquaredNorm,
    /// No reduction; the chain output is returned as-is.
    None,
}

/// An MLP whose parameters already live in a graph.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<BoundLayer>,
    pub activation: Activation,
    pub readout: Readout,
}

impl BoundMlp {
    /// Whether layer `i` is followed by the activation.
    fn activated(&self, i: usize) -> bool {
        match self.readout {
            Readout::Affine => i + 1 < self.layers.len(),
            Readout::HalfSquaredNorm | Readout::None => true,
        }
    }
}

fn activate(g: &mut Graph, act: Activation, h: NodeId) -> Result<NodeId> {
    match act {
        Activation::Gelu => g.gelu(h),
        Activation::Relu => g.relu(h),
        Activation::Identity => Ok(h),
    }
}

fn affine(g: &mut Graph, layer: &BoundLayer, x: NodeId) -> Result<NodeId> {
    let h = g.matmul(x, layer.weight)?;
    match layer.bias {
        Some(b) => g.add_bias(h, b),
        None => Ok(h),
    }
}

/// Forward pass; also returns every pre-activation node in layer order.
pub fn mlp_forward_traced(g: &mut Graph, mlp: &BoundMlp, z: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
    let mut pre = Vec::with_capacity(mlp.layers.len());
    let mut h = z;
    for (i, layer) in mlp.layers.iter().enumerate() {
        let a = affine(g, layer, h)?;
        pre.push(a);
        h = if mlp.activated(i) {
            activate(g, mlp.activation, a)?
        } else {
            a
        };
    }
    let out = match mlp.readout {
        Readout::Affine | Readout::None => h,
        Readout::HalfSquaredNorm => {
            let sq = g.square(h)?;
            // per-row 0.5 * ||h||^2 as an [m, 1] column
            let cols = g.value(h).cols();
            let ones = g.constant(super::Tensor::full(&[cols, 1], 0.5));
            g.matmul(sq, ones)?
        }
    };
    Ok((out, pre))
}

pub fn mlp_forward(g: &mut Graph, mlp: &BoundMlp, z: NodeId) -> Result<NodeId> {
    mlp_forward_traced(g, mlp, z).map(|(out, _)| out)
}

/// Row-wise `grad_z d(z)` for a scalar-output MLP over a batch `z: [m, n]`,
/// returned as an `[m, n]` node that is differentiable in the parameters.
pub fn input_gradient_graph(g: &mut Graph, mlp: &BoundMlp, z: NodeId) -> Result<NodeId> {
    if mlp.readout == Readout::None {
        return Err(DialError::InvalidArgument(
            "input gradient needs a scalar readout".into(),
        ));
    }
    if mlp.layers.is_empty() {
        return Err(DialError::InvalidArgument("mlp has no layers".into()));
    }
    let act = mlp.activation;
    if !act.has_second_derivative() && (0..mlp.layers.len()).any(|i| mlp.activated(i)) {
        return Err(DialError::NoSecondDerivative(act.name()));
    }

    let rows = g.value(z).rows();
    let (_, pre) = mlp_forward_traced(g, mlp, z)?;

    // seed: gradient of the scalar w.r.t. the last state the loop starts from
    let (mut grad, top) = match mlp.readout {
        Readout::Affine => {
            let last = mlp.layers[mlp.layers.len() - 1];
            if g.value(last.weight).cols() != 1 {
                return Err(DialError::Shape {
                    op: "input_gradient_graph",
                    lhs: g.value(last.weight).shape().to_vec(),
                    rhs: vec![1],
                });
            }
            let ones = g.constant(super::Tensor::full(&[rows, 1], 1.0));
            let wt = g.transpose(last.weight)?;
            (g.matmul(ones, wt)?, mlp.layers.len() - 1)
        }
        Readout::HalfSquaredNorm => {
            let top_pre = pre[pre.len() - 1];
            (activate(g, act, top_pre)?, mlp.layers.len())
        }
        Readout::None => unreachable!(),
    };

    for i in (0..top).rev() {
        if mlp.activated(i) {
            let scaled = match act {
                Activation::Gelu => {
                    let d = g.gelu_prime(pre[i])?;
                    Some(g.mul(grad, d)?)
                }
                Activation::Identity => None,
                Activation::Relu => return Err(DialError::NoSecondDerivative(act.name())),
            };
            if let Some(s) = scaled {
                grad = s;
            }
        }
        let wt = g.transpose(mlp.layers[i].weight)?;
        grad = g.matmul(grad, wt)?;
    }
    Ok(grad)
}
