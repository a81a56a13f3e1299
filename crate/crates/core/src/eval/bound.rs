use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tensor};
use crate::data::{group_by_context, TruthRecord};
use crate::datagen::stream;
use crate::error::{DialError, Result};
use crate::model::{batch_matrix, Example, ModelParams};
use crate::oracle::{w1_exact_assignment, EmpiricalDistribution};

/// Lipschitz constant of the logistic sigmoid.
pub const L_SIGMA: f64 = 0.25;

/// Indices of a winning and a losing record sharing a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderedPair {
    pub win: usize,
    pub lose: usize,
}

/// Every ordered pair within each context whose ground truth differs,
/// oriented by `f`. Pairs with equal `f` have no winner and are left out.
pub fn ordered_pairs(records: &[TruthRecord]) -> Vec<OrderedPair> {
    let mut out = Vec::new();
    for g in group_by_context(records) {
        for &i in &g {
            for &j in &g {
                if records[i].f > records[j].f {
                    out.push(OrderedPair { win: i, lose: j });
                }
            }
        }
    }
    out
}

/// Mean of `sigmoid(r(lose) - r(win))` over `pairs`, given rewards `r`.
pub fn expected_disagreement(rewards: &[f64], pairs: &[OrderedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(DialError::Empty("expected_disagreement"));
    }
    let total: f64 = pairs.iter().map(|p| sigmoid(rewards[p.lose] - rewards[p.win])).sum();
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "eps_S")]
    pub eps_s: f64,
    #[serde(rename = "eps_T")]
    pub eps_t: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L_sigma")]
    pub l_sigma: f64,
    /// Exact W1 between the samples in the concatenated `(x, y)` metric.
    #[serde(rename = "W1")]
    pub w1: f64,
    pub rhs: f64,
    pub holds: bool,
    pub extras: BoundExtras,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundExtras {
    /// Exact W1 between the embedded samples.
    pub w1_embedding: f64,
    pub n: usize,
    pub pairs_src: usize,
    pub pairs_tgt: usize,
}

fn points(records: &[TruthRecord]) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.example().features()).collect()
}

/// Evaluates both sides of the domain-transfer bound on equal-size samples.
pub fn theorem1_check(params: &ModelParams, src: &[TruthRecord], tgt: &[TruthRecord]) -> Result<BoundReport> {
    if src.len() != tgt.len() {
        return Err(DialError::SizeMismatch(src.len(), tgt.len()));
    }
    let examples = |rs: &[TruthRecord]| -> Vec<Example> { rs.iter().map(TruthRecord::example).collect() };
    let (ex_s, ex_t) = (examples(src), examples(tgt));
    let emb_s = params.embed_batch(&batch_matrix(&ex_s)?)?;
    let emb_t = params.embed_batch(&batch_matrix(&ex_t)?)?;
    let r_s = params.rewards_from_embeddings(&emb_s)?;
    let r_t = params.rewards_from_embeddings(&emb_t)?;

    let pairs_s = ordered_pairs(src);
    let pairs_t = ordered_pairs(tgt);
    let eps_s = expected_disagreement(&r_s, &pairs_s)?;
    let eps_t = expected_disagreement(&r_t, &pairs_t)?;
    let k = params.lipschitz_upper_bound()?;
    let w1 = w1_exact_assignment(
        &EmpiricalDistribution::new(points(src))?,
        &EmpiricalDistribution::new(points(tgt))?,
    )?;
    let w1_embedding = w1_exact_assignment(
        &EmpiricalDistribution::new(emb_s.to_rows())?,
        &EmpiricalDistribution::new(emb_t.to_rows())?,
    )?;
    let rhs = eps_s + 2.0 * k * L_SIGMA * w1;
    let report = BoundReport {
        eps_s,
        eps_t,
        k,
        l_sigma: L_SIGMA,
        w1,
        rhs,
        holds: eps_t <= rhs + 1e-9,
        extras: BoundExtras {
            w1_embedding,
            n: src.len(),
            pairs_src: pairs_s.len(),
            pairs_tgt: pairs_t.len(),
        },
    };
    if [eps_s, eps_t, k, w1, rhs].iter().any(|v| !v.is_finite()) {
        return Err(DialError::NonFinite {
            step: 0,
            component: "bound_report",
        });
    }
    Ok(report)
}

fn gaussian<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Samples `n_triples` pairs of triplets `(x, y, y')` and returns the largest
/// ratio `|g_r(t) - g_r(t')| / (2 K L_sigma rho~(t, t'))`. The first
/// `context_dim` input coordinates are the shared context `x`.
///
/// Half the pairs are independent draws, half are local perturbations at
/// scales from `1e-3` to `1`.
pub fn lemma1_check(params: &ModelParams, context_dim: usize, n_triples: usize, seed: u64) -> Result<f64> {
    let d = params.input_dim();
    if context_dim >= d {
        return Err(DialError::InvalidArgument(format!(
            "context_dim {context_dim} leaves no response coordinates in {d} inputs"
        )));
    }
    let dy = d - context_dim;
    let k = params.lipschitz_upper_bound()?;
    let mut rng = stream(seed, 0);
    let scales = [1e-3, 1e-2, 1e-1, 1.0];

    // rows: (x, y), (x, y'), (xb, yb), (xb, yb') per pair
    let mut rows = Vec::with_capacity(4 * n_triples);
    for i in 0..n_triples {
        let x = gaussian(context_dim, &mut rng);
        let y = gaussian(dy, &mut rng);
        let y2 = gaussian(dy, &mut rng);
        let (xb, yb, yb2) = if i % 2 == 0 {
            (
                gaussian(context_dim, &mut rng),
                gaussian(dy, &mut rng),
                gaussian(dy, &mut rng),
            )
        } else {
            let s = scales[(i / 2) % scales.len()];
            let jitter = |v: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                v.iter()
                    .map(|a| {
                        let e: f64 = StandardNormal.sample(rng);
                        a + s * e
                    })
                    .collect::<Vec<f64>>()
            };
            (jitter(&x, &mut rng), jitter(&y, &mut rng), jitter(&y2, &mut rng))
        };
        rows.push([x.as_slice(), &y].concat());
        rows.push([x.as_slice(), &y2].concat());
        rows.push([xb.as_slice(), &yb].concat());
        rows.push([xb.as_slice(), &yb2].concat());
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let r = params.rewards_from_embeddings(&params.embed_batch(&Tensor::from_rows(&rows)?)?)?;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..n_triples {
        let b = 4 * i;
        let g = sigmoid(r[b] - r[b + 1]);
        let gb = sigmoid(r[b + 2] - r[b + 3]);
        let rho = dist(&rows[b], &rows[b + 2]) + dist(&rows[b + 1], &rows[b + 3]);
        let diff = (g - gb).abs();
        let ratio = if rho == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / (2.0 * k * L_SIGMA * rho)
        };
        worst = worst.max(ratio);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;

    fn params(seed: u64, activation: crate::autodiff::Activation) -> ModelParams {
        let cfg = ModelConfig {
            input_dim: 3,
            embed_hidden: vec![8],
            embed_dim: 5,
            critic_hidden: vec![4],
            activation,
        };
        ModelParams::init(&cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn rec(y: Vec<f64>, f: f64) -> TruthRecord {
        TruthRecord { x: vec![], y, f }
    }

    #[test]
    fn disagreement_examples() {
        let pairs = [OrderedPair { win: 0, lose: 1 }];
        assert_eq!(expected_disagreement(&[0.0, 0.0], &pairs).unwrap(), 0.5);
        // systematically wrong by 1
        let e = expected_disagreement(&[0.0, 1.0], &pairs).unwrap();
        assert!((e - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!(expected_disagreement(&[1e6, 0.0], &pairs).unwrap() < 1e-12);
        assert!(expected_disagreement(&[0.0], &[]).is_err());
    }

    #[test]
    fn pairs_follow_ground_truth() {
        let rs = vec![rec(vec![0.0], 1.0), rec(vec![1.0], 0.0), rec(vec![2.0], 0.0)];
        let p = ordered_pairs(&rs);
        assert_eq!(
            p,
            vec![OrderedPair { win: 0, lose: 1 }, OrderedPair { win: 0, lose: 2 }]
        );
    }

    #[test]
    fn same_sample_has_zero_w1() {
        let p = params(1, Default::default());
        let rs: Vec<TruthRecord> = (0..10)
            .map(|i| rec(vec![i as f64 * 0.3, -0.2 * i as f64, 1.0], (i % 2) as f64))
            .collect();
        let rep = theorem1_check(&p, &rs, &rs).unwrap();
        assert_eq!(rep.w1, 0.0);
        assert_eq!(rep.eps_s, rep.eps_t);
        assert!(rep.holds);
        assert!(theorem1_check(&p, &rs, &rs[..4]).is_err());

        let mut z = p.clone();
        z.phi.0.iter_mut().for_each(|v| *v = 0.0);
        let other: Vec<TruthRecord> = rs
            .iter()
            .map(|r| rec(vec![r.y[0] + 1.0, r.y[1], r.y[2]], r.f))
            .collect();
        let rep = theorem1_check(&z, &rs, &other).unwrap();
        assert_eq!((rep.eps_s, rep.eps_t), (0.5, 0.5));
        assert!(rep.holds && (rep.w1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lemma_ratio_bounded() {
        for seed in 0..3 {
            let p = params(seed, Default::default());
            let worst = lemma1_check(&p, 1, 2000, seed).unwrap();
            assert!(worst <= 1.0, "seed {seed}: {worst}");
            assert!(worst > 0.0);
        }
        // linear embedder: r is exactly linear, bound is 2|w| L_sigma rho
        let p = params(4, crate::autodiff::Activation::Identity);
        assert!(lemma1_check(&p, 0, 2000, 4).unwrap() <= 1.0);
        assert!(lemma1_check(&p, 3, 10, 0).is_err());
    }
}
