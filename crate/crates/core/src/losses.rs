//! Preference loss, critic score gap, gradient penalty and the two
//! composite objectives of the alternating update.
//!
//! Graph builders (`*_node`) are used by the trainer; the plain functions
//! evaluate the same quantities on frozen parameters.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{input_gradient_graph, Graph, NodeId, Tensor, NORM_EPS};
use crate::data::PreferenceTriple;
use crate::error::{DialError, Result};
use crate::model::{batch_matrix, BoundModel, Example, ModelParams, Trainable};

/// Every loss component measured in one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBundle {
    pub src_loss: f64,
    pub wd_gap: f64,
    pub grad_penalty: f64,
    pub critic_loss: f64,
    pub embedder_da_loss: f64,
}

impl LossBundle {
    /// First non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("src_loss", self.src_loss),
            ("wd_gap", self.wd_gap),
            ("grad_penalty", self.grad_penalty),
            ("critic_loss", self.critic_loss),
            ("embedder_da_loss", self.embedder_da_loss),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// Source triples flattened for one forward pass: rows are every chosen
/// response followed by every rejected response.
#[derive(Debug, Clone)]
pub struct SourceBatch {
    pub input: Tensor,
    pub n_chosen: usize,
    /// For each (chosen, rejected) pair, the row of its chosen response.
    pub chosen_of_pair: Vec<usize>,
}

impl SourceBatch {
    pub fn from_triples(triples: &[PreferenceTriple]) -> Result<Self> {
        if triples.is_empty() {
            return Err(DialError::Empty("preference batch"));
        }
        let mut examples: Vec<Example> = triples.iter().map(PreferenceTriple::chosen).collect();
        let mut chosen_of_pair = Vec::new();
        for (i, t) in triples.iter().enumerate() {
            if t.y_neg.is_empty() {
                return Err(DialError::InvalidArgument(format!(
                    "triple {i} has no rejected response"
                )));
            }
            examples.extend(t.rejected());
            chosen_of_pair.extend(std::iter::repeat_n(i, t.y_neg.len()));
        }
        Ok(Self {
            input: batch_matrix(&examples)?,
            n_chosen: triples.len(),
            chosen_of_pair,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.chosen_of_pair.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_chosen + self.n_pairs()
    }
}

/// `-mean(log sigmoid(margin))` over per-pair reward margins.
pub fn preference_loss_from_margins(margins: &[f64]) -> Result<f64> {
    if margins.is_empty() {
        return Err(DialError::Empty("margins"));
    }
    let s: f64 = margins.iter().map(|&m| -crate::autodiff::log_sigmoid(m)).sum();
    Ok(s / margins.len() as f64)
}

/// Bradley-Terry loss node from source-batch embeddings `[n_rows, e]`.
pub fn source_loss_node(g: &mut Graph, model: &BoundModel, emb_src: NodeId, batch: &SourceBatch) -> Result<NodeId> {
    let rewards = model.reward_from_embedding(g, emb_src)?;
    let chosen = g.gather_rows(rewards, &batch.chosen_of_pair)?;
    let rejected = g.slice_rows(rewards, batch.n_chosen, batch.n_rows())?;
    let margin = g.sub(chosen, rejected)?;
    let ls = g.log_sigmoid(margin)?;
    let m = g.mean(ls)?;
    g.scale(m, -1.0)
}

/// `mean critic(src) - mean critic(tgt)` from embedding nodes.
pub fn gap_node(g: &mut Graph, model: &BoundModel, emb_src: NodeId, emb_tgt: NodeId) -> Result<NodeId> {
    let cs = model.critic_from_embedding(g, emb_src)?;
    let ct = model.critic_from_embedding(g, emb_tgt)?;
    let ms = g.mean(cs)?;
    let mt = g.mean(ct)?;
    g.sub(ms, mt)
}

/// `mean_i (||grad d(z_i)|| - 1)^2` over interpolate rows.
pub fn penalty_node(g: &mut Graph, model: &BoundModel, interpolates: NodeId) -> Result<NodeId> {
    let grad = input_gradient_graph(g, &model.critic, interpolates)?;
    let norms = g.row_norms(grad, NORM_EPS)?;
    let ones = g.constant(Tensor::full(g.value(norms).shape(), 1.0));
    let resid = g.sub(norms, ones)?;
    let sq = g.square(resid)?;
    g.mean(sq)
}

/// Random interpolates `eps * z_src + (1 - eps) * z_tgt` between embedding rows.
///
/// Pairing: equal sizes pair source row `i` with a permuted target row; when
/// sizes differ, the larger side is walked in order and the smaller side is
/// sampled with replacement. One fresh `eps ~ U(0, 1)` per pair.
pub fn interpolate<R: Rng + ?Sized>(src: &Tensor, tgt: &Tensor, rng: &mut R) -> Result<Tensor> {
    let (ns, nt) = (src.rows(), tgt.rows());
    if src.is_empty() || tgt.is_empty() {
        return Err(DialError::Empty("interpolation batch"));
    }
    if src.cols() != tgt.cols() {
        return Err(DialError::Shape {
            op: "interpolate",
            lhs: src.shape().to_vec(),
            rhs: tgt.shape().to_vec(),
        });
    }
    let pairs: Vec<(usize, usize)> = if ns == nt {
        let mut perm: Vec<usize> = (0..nt).collect();
        perm.shuffle(rng);
        (0..ns).zip(perm).collect()
    } else if ns > nt {
        (0..ns).map(|i| (i, rng.random_range(0..nt))).collect()
    } else {
        (0..nt).map(|j| (rng.random_range(0..ns), j)).collect()
    };
    let c = src.cols();
    let mut data = Vec::with_capacity(pairs.len() * c);
    for (i, j) in pairs {
        let eps: f64 = rng.random();
        data.extend(
            src.row(i)
                .iter()
                .zip(tgt.row(j))
                .map(|(a, b)| eps * a + (1.0 - eps) * b),
        );
    }
    Tensor::new(vec![data.len() / c, c], data)
}

pub fn critic_objective(gap: f64, penalty: f64, lambda_gp: f64) -> Result<f64> {
    if lambda_gp < 0.0 {
        return Err(DialError::Config(format!("lambda_gp must be >= 0, got {lambda_gp}")));
    }
    Ok(-gap + lambda_gp * penalty)
}

pub fn embedder_objective(src_loss: f64, gap: f64, lambda_da: f64) -> Result<f64> {
    if lambda_da < 0.0 {
        return Err(DialError::Config(format!("lambda_da must be >= 0, got {lambda_da}")));
    }
    Ok(src_loss + lambda_da * gap)
}

/// Bradley-Terry loss on frozen parameters; all rejected responses count.
pub fn source_preference_loss(params: &ModelParams, triples: &[PreferenceTriple]) -> Result<f64> {
    let batch = SourceBatch::from_triples(triples)?;
    let mut g = Graph::new();
    let model = params.bind(&mut g, Trainable::NONE);
    let x = g.constant(batch.input.clone());
    let emb = model.embed(&mut g, x)?;
    let loss = source_loss_node(&mut g, &model, emb, &batch)?;
    g.value(loss).item()
}

pub fn wasserstein_gap(params: &ModelParams, src: &[Example], tgt: &[Example]) -> Result<f64> {
    if src.is_empty() || tgt.is_empty() {
        return Err(DialError::Empty("wasserstein_gap batch"));
    }
    let cs = params.critic_batch(src)?;
    let ct = params.critic_batch(tgt)?;
    Ok(cs.iter().sum::<f64>() / cs.len() as f64 - ct.iter().sum::<f64>() / ct.len() as f64)
}

pub fn gradient_penalty<R: Rng + ?Sized>(
    params: &ModelParams,
    src: &[Example],
    tgt: &[Example],
    rng: &mut R,
) -> Result<f64> {
    if src.is_empty() || tgt.is_empty() {
        return Err(DialError::Empty("gradient_penalty batch"));
    }
    let es = params.embed_batch(&batch_matrix(src)?)?;
    let et = params.embed_batch(&batch_matrix(tgt)?)?;
    let interp = interpolate(&es, &et, rng)?;
    let mut g = Graph::new();
    let model = params.bind(&mut g, Trainable::NONE);
    let z = g.constant(interp);
    let p = penalty_node(&mut g, &model, z)?;
    g.value(p).item()
}
