//! Shared embedder, linear reward head and MLP domain critic.
//!
//! Both heads read the same embedding: `reward = phi . embed(x, y)` and
//! `critic = psi_mlp(embed(x, y))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{mlp_forward, Activation, BoundLayer, BoundMlp, Graph, NodeId, Readout, Tensor};
use crate::error::{DialError, Result};
use crate::linalg::spectral_norm;

/// A prompt/response pair reduced to feature vectors. The model consumes
/// `concat(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Example {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v
    }
}

/// Stacks examples into an `[m, dx + dy]` input matrix.
pub fn batch_matrix(examples: &[Example]) -> Result<Tensor> {
    let first = examples.first().ok_or(DialError::Empty("example batch"))?;
    let d = first.dim();
    let mut data = Vec::with_capacity(examples.len() * d);
    for ex in examples {
        if ex.dim() != d {
            return Err(DialError::Shape {
                op: "batch",
                lhs: vec![d],
                rhs: vec![ex.dim()],
            });
        }
        data.extend_from_slice(&ex.x);
        data.extend_from_slice(&ex.y);
    }
    Tensor::new(vec![examples.len(), d], data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearRepr", into = "LinearRepr")]
pub struct Linear {
    /// `[fan_in, fan_out]`, stored as rows.
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// On-disk form: weight as nested rows, bias as a flat array or null.
#[derive(Serialize, Deserialize)]
struct LinearRepr {
    weight: Vec<Vec<f64>>,
    bias: Option<Vec<f64>>,
}

impl From<Linear> for LinearRepr {
    fn from(l: Linear) -> Self {
        Self {
            weight: l.weight.to_rows(),
            bias: l.bias.map(Tensor::into_data),
        }
    }
}

impl TryFrom<LinearRepr> for Linear {
    type Error = DialError;

    fn try_from(r: LinearRepr) -> Result<Self> {
        let weight = Tensor::from_rows(&r.weight)?;
        if weight.shape()[0] == 0 || weight.shape()[1] == 0 {
            return Err(DialError::InvalidArgument("empty weight matrix".into()));
        }
        let bias = match r.bias {
            Some(b) if b.len() != weight.shape()[1] => {
                return Err(DialError::Shape {
                    op: "bias",
                    lhs: weight.shape().to_vec(),
                    rhs: vec![b.len()],
                })
            }
            Some(b) => Some(Tensor::vector(b)),
            None => None,
        };
        Ok(Self { weight, bias })
    }
}

impl Linear {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Symmetric uniform init with `a = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, bias: bool, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
        Self {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("sized by construction"),
            bias: bias.then(|| Tensor::zeros(&[fan_out])),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, bias: bool) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: bias.then(|| Tensor::zeros(&[fan_out])),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            let n = b.len();
            for (i, v) in h.data_mut().iter_mut().enumerate() {
                *v += b.data()[i % n];
            }
        }
        Ok(h)
    }
}

/// Chain of affine layers with a shared activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub activation: Activation,
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(activation: Activation, layers: Vec<Linear>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(DialError::Shape {
                    op: "mlp",
                    lhs: pair[0].weight.shape().to_vec(),
                    rhs: pair[1].weight.shape().to_vec(),
                });
            }
        }
        Ok(Self { activation, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Linear::fan_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::fan_out)
    }

    fn random<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        let layers = sizes.windows(2).map(|w| Linear::init(w[0], w[1], true, rng)).collect();
        Self { activation, layers }
    }

    /// Plain forward pass; `activate_last` decides whether the final layer
    /// is followed by the activation.
    pub fn forward(&self, x: &Tensor, activate_last: bool) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(DialError::Shape {
                op: "mlp_input",
                lhs: x.shape().to_vec(),
                rhs: vec![self.input_dim()],
            });
        }
        let mut h = x.clone();
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if activate_last || i + 1 < n {
                h = h.map(|v| self.activation.apply(v));
            }
        }
        Ok(h)
    }

    fn bind(&self, g: &mut Graph, trainable: bool, readout: Readout) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                weight: g.leaf(l.weight.clone(), trainable),
                bias: l.bias.as_ref().map(|b| g.leaf(b.clone(), trainable)),
            })
            .collect();
        BoundMlp {
            layers,
            activation: self.activation,
            readout,
        }
    }

    fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(&l.weight).chain(l.bias.as_ref()))
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| std::iter::once(&mut l.weight).chain(l.bias.as_mut()))
    }
}

/// Architecture sizes. Desk defaults: embedder `in -> 64 -> 32`, critic
/// `32 -> 32 -> 16 -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub embed_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            embed_hidden: vec![64],
            embed_dim: 32,
            critic_hidden: vec![32, 16],
            activation: Activation::Gelu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 {
            return Err(DialError::Config("input_dim and embed_dim must be >= 1".into()));
        }
        if self.embed_hidden.iter().chain(&self.critic_hidden).any(|&w| w == 0) {
            return Err(DialError::Config("layer widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Embedder parameters (theta). Every layer, including the last, is activated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbedderParams(pub Mlp);

/// Reward head (phi): one weight per embedding coordinate, no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardHeadParams(pub Vec<f64>);

/// Critic head (psi): hidden gelu layers then a scalar affine output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CriticParams(pub Mlp);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Embedder,
    Reward,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: EmbedderParams,
    pub phi: RewardHeadParams,
    pub psi: CriticParams,
}

/// Graph handles for one binding of [`ModelParams`].
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub embedder: BoundMlp,
    pub reward: NodeId,
    pub critic: BoundMlp,
}

impl BoundModel {
    pub fn group_nodes(&self, group: ParamGroup) -> Vec<NodeId> {
        let mlp_nodes = |m: &BoundMlp| {
            m.layers
                .iter()
                .flat_map(|l| std::iter::once(l.weight).chain(l.bias))
                .collect::<Vec<_>>()
        };
        match group {
            ParamGroup::Embedder => mlp_nodes(&self.embedder),
            ParamGroup::Reward => vec![self.reward],
            ParamGroup::Critic => mlp_nodes(&self.critic),
        }
    }

    /// Leaf nodes of every group enabled in `t`: embedder, reward, critic.
    pub fn trainable_nodes(&self, t: Trainable) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (on, group) in [
            (t.embedder, ParamGroup::Embedder),
            (t.reward, ParamGroup::Reward),
            (t.critic, ParamGroup::Critic),
        ] {
            if on {
                out.extend(self.group_nodes(group));
            }
        }
        out
    }

    /// `[m, d_in] -> [m, embed_dim]`.
    pub fn embed(&self, g: &mut Graph, input: NodeId) -> Result<NodeId> {
        mlp_forward(g, &self.embedder, input)
    }

    /// Embeddings `[m, e] -> rewards [m, 1]`.
    pub fn reward_from_embedding(&self, g: &mut Graph, emb: NodeId) -> Result<NodeId> {
        g.matmul(emb, self.reward)
    }

    /// Embeddings `[m, e] -> critic scores [m, 1]`.
    pub fn critic_from_embedding(&self, g: &mut Graph, emb: NodeId) -> Result<NodeId> {
        mlp_forward(g, &self.critic, emb)
    }
}

/// Which parameter groups become trainable leaves in a binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub embedder: bool,
    pub reward: bool,
    pub critic: bool,
}

impl Trainable {
    pub const NONE: Self = Self {
        embedder: false,
        reward: false,
        critic: false,
    };
    pub const CRITIC: Self = Self {
        embedder: false,
        reward: false,
        critic: true,
    };
    pub const MAIN: Self = Self {
        embedder: true,
        reward: true,
        critic: false,
    };
    pub const ALL: Self = Self {
        embedder: true,
        reward: true,
        critic: true,
    };
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![cfg.input_dim];
        sizes.extend(&cfg.embed_hidden);
        sizes.push(cfg.embed_dim);
        let theta = EmbedderParams(Mlp::random(&sizes, cfg.activation, rng));

        let phi_layer = Linear::init(cfg.embed_dim, 1, false, rng);
        let phi = RewardHeadParams(phi_layer.weight.into_data());

        let mut csizes = vec![cfg.embed_dim];
        csizes.extend(&cfg.critic_hidden);
        csizes.push(1);
        let psi = CriticParams(Mlp::random(&csizes, cfg.activation, rng));
        Ok(Self { theta, phi, psi })
    }

    /// All weights and biases zero.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![cfg.input_dim];
        sizes.extend(&cfg.embed_hidden);
        sizes.push(cfg.embed_dim);
        let mut csizes = vec![cfg.embed_dim];
        csizes.extend(&cfg.critic_hidden);
        csizes.push(1);
        let zeros = |s: &[usize]| {
            Mlp::new(
                cfg.activation,
                s.windows(2).map(|w| Linear::zeros(w[0], w[1], true)).collect(),
            )
        };
        Ok(Self {
            theta: EmbedderParams(zeros(&sizes)?),
            phi: RewardHeadParams(vec![0.0; cfg.embed_dim]),
            psi: CriticParams(zeros(&csizes)?),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.theta.0.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.theta.0.output_dim()
    }

    /// Checks that embedder output, reward input and critic input agree.
    pub fn validate(&self) -> Result<()> {
        let e = self.embed_dim();
        if self.phi.0.len() != e || self.psi.0.input_dim() != e || self.psi.0.output_dim() != 1 {
            return Err(DialError::Shape {
                op: "model_heads",
                lhs: vec![e],
                rhs: vec![self.phi.0.len(), self.psi.0.input_dim(), self.psi.0.output_dim()],
            });
        }
        let all_finite = self.tensors().all(Tensor::is_finite) && self.phi.0.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(DialError::InvalidArgument("non-finite parameter".into()));
        }
        Ok(())
    }

    fn phi_tensor(&self) -> Tensor {
        Tensor::new(vec![self.phi.0.len(), 1], self.phi.0.clone()).expect("column vector")
    }

    pub fn bind(&self, g: &mut Graph, trainable: Trainable) -> BoundModel {
        let embedder = self.theta.0.bind(g, trainable.embedder, Readout::None);
        let reward = g.leaf(self.phi_tensor(), trainable.reward);
        let critic = self.psi.0.bind(g, trainable.critic, Readout::Affine);
        BoundModel {
            embedder,
            reward,
            critic,
        }
    }

    /// Embeddings for a batch, `[m, embed_dim]`.
    pub fn embed_batch(&self, input: &Tensor) -> Result<Tensor> {
        self.theta.0.forward(input, true)
    }

    pub fn embed(&self, example: &Example) -> Result<Vec<f64>> {
        let t = Tensor::new(vec![1, example.dim()], example.features())?;
        Ok(self.embed_batch(&t)?.into_data())
    }

    pub fn rewards_from_embeddings(&self, emb: &Tensor) -> Result<Vec<f64>> {
        Ok(emb.matmul(&self.phi_tensor())?.into_data())
    }

    pub fn critic_from_embeddings(&self, emb: &Tensor) -> Result<Vec<f64>> {
        Ok(self.psi.0.forward(emb, false)?.into_data())
    }

    pub fn reward_batch(&self, examples: &[Example]) -> Result<Vec<f64>> {
        let emb = self.embed_batch(&batch_matrix(examples)?)?;
        self.rewards_from_embeddings(&emb)
    }

    pub fn critic_batch(&self, examples: &[Example]) -> Result<Vec<f64>> {
        let emb = self.embed_batch(&batch_matrix(examples)?)?;
        self.critic_from_embeddings(&emb)
    }

    pub fn reward_score(&self, example: &Example) -> Result<f64> {
        Ok(self.reward_batch(std::slice::from_ref(example))?[0])
    }

    pub fn critic_score(&self, example: &Example) -> Result<f64> {
        Ok(self.critic_batch(std::slice::from_ref(example))?[0])
    }

    /// Upper bound on the Lipschitz constant of `r(z) = phi . embed(z)` in
    /// the Euclidean metric: `|phi| * prod sigma_max(W) * L_act^layers`.
    pub fn lipschitz_upper_bound(&self) -> Result<f64> {
        let mut k = crate::linalg::norm(&self.phi.0);
        let l_act = self.theta.0.activation.lipschitz();
        for layer in &self.theta.0.layers {
            let sigma = match spectral_norm(&layer.weight) {
                Ok(s) => s,
                // Frobenius norm still bounds sigma_max from above
                Err(DialError::NoConvergence { .. }) => {
                    log::warn!("power iteration did not converge; using Frobenius norm");
                    layer.weight.l2_norm()
                }
                Err(e) => return Err(e),
            };
            k *= sigma * l_act;
        }
        Ok(k)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.theta.0.tensors().chain(self.psi.0.tensors())
    }

    /// Mutable parameter tensors of one group, in binding order.
    pub fn group_tensors_mut(&mut self, group: ParamGroup) -> Vec<&mut [f64]> {
        match group {
            ParamGroup::Embedder => self.theta.0.tensors_mut().map(|t| t.data_mut()).collect(),
            ParamGroup::Reward => vec![self.phi.0.as_mut_slice()],
            ParamGroup::Critic => self.psi.0.tensors_mut().map(|t| t.data_mut()).collect(),
        }
    }

    /// Mutable tensors of every group enabled in `t`, matching
    /// [`BoundModel::trainable_nodes`].
    pub fn trainable_tensors_mut(&mut self, t: Trainable) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if t.embedder {
            out.extend(self.theta.0.tensors_mut().map(|t| t.data_mut()));
        }
        if t.reward {
            out.push(self.phi.0.as_mut_slice());
        }
        if t.critic {
            out.extend(self.psi.0.tensors_mut().map(|t| t.data_mut()));
        }
        out
    }

    /// Bitwise fingerprint of one parameter group.
    pub fn checksum(&self, group: ParamGroup) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut feed = |d: &[f64]| d.iter().for_each(|v| v.to_bits().hash(&mut h));
        match group {
            ParamGroup::Embedder => self.theta.0.tensors().for_each(|t| feed(t.data())),
            ParamGroup::Reward => feed(&self.phi.0),
            ParamGroup::Critic => self.psi.0.tensors().for_each(|t| feed(t.data())),
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            embed_hidden: vec![5],
            embed_dim: 4,
            critic_hidden: vec![6, 3],
            activation: Activation::Gelu,
        }
    }

    fn ex(v: &[f64]) -> Example {
        Example::new(vec![], v.to_vec())
    }

    #[test]
    fn zero_params_embed_to_zero() {
        let p = ModelParams::zeros(&cfg()).unwrap();
        let e = p.embed(&ex(&[0.3, -2.0, 7.0])).unwrap();
        assert_eq!(e, vec![0.0; 4]);
        assert_eq!(p.reward_score(&ex(&[1.0, 1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(p.critic_score(&ex(&[1.0, 1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn identity_embedder_returns_input() {
        let mut p = ModelParams::zeros(&ModelConfig {
            input_dim: 3,
            embed_hidden: vec![],
            embed_dim: 3,
            critic_hidden: vec![2],
            activation: Activation::Identity,
        })
        .unwrap();
        p.theta.0.layers[0].weight = Tensor::eye(3);
        let v = [0.5, -1.25, 4.0];
        assert_eq!(p.embed(&ex(&v)).unwrap(), v.to_vec());
    }

    #[test]
    fn reward_head_is_linear_in_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::init(&cfg(), &mut rng).unwrap();
        let e = ex(&[0.2, 0.1, -0.4]);
        let emb = p.embed(&e).unwrap();

        p.phi.0 = vec![0.0; 4];
        assert_eq!(p.reward_score(&e).unwrap(), 0.0);

        p.phi.0 = vec![1.0, 0.0, 0.0, 0.0];
        assert_eq!(p.reward_score(&e).unwrap(), emb[0]);

        p.phi.0 = vec![0.3, -0.2, 0.7, 0.1];
        let r = p.reward_score(&e).unwrap();
        p.phi.0.iter_mut().for_each(|v| *v *= 2.5);
        assert!((p.reward_score(&e).unwrap() - 2.5 * r).abs() < 1e-15);
    }

    #[test]
    fn zero_critic_output_layer_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = ModelParams::init(&cfg(), &mut rng).unwrap();
        let last = p.psi.0.layers.last_mut().unwrap();
        last.weight = Tensor::zeros(last.weight.shape());
        for v in [[1.0, 2.0, 3.0], [-9.0, 0.0, 0.5]] {
            assert_eq!(p.critic_score(&ex(&v)).unwrap(), 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = ModelParams::zeros(&cfg()).unwrap();
        assert!(p.embed(&ex(&[1.0, 2.0])).is_err());
        assert!(batch_matrix(&[ex(&[1.0]), ex(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn init_uses_glorot_range_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::init(&cfg(), &mut rng).unwrap();
        let l0 = &p.theta.0.layers[0];
        let a = (6.0f64 / 8.0).sqrt();
        assert!(l0.weight.data().iter().all(|v| v.abs() < a));
        assert!(l0.bias.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
        p.validate().unwrap();
    }

    #[test]
    fn lipschitz_identity_case() {
        let mut p = ModelParams::zeros(&ModelConfig {
            input_dim: 2,
            embed_hidden: vec![],
            embed_dim: 2,
            critic_hidden: vec![2],
            activation: Activation::Identity,
        })
        .unwrap();
        p.theta.0.layers[0].weight = Tensor::eye(2);
        p.phi.0 = vec![1.0, 0.0];
        assert_eq!(p.lipschitz_upper_bound().unwrap(), 1.0);
        p.phi.0 = vec![2.0, 0.0];
        assert_eq!(p.lipschitz_upper_bound().unwrap(), 2.0);
    }
}
