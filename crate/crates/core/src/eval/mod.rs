//! Accuracy and correlation metrics, the bound verifiers, and the PCA
//! projection of embeddings.

mod bound;
mod pca;

pub use bound::{
    expected_disagreement, lemma1_check, ordered_pairs, theorem1_check, BoundReport, OrderedPair, L_SIGMA,
};
pub use pca::{pca_2d, project_embeddings, write_embeddings_csv, Projection, ProjectionRow};

use crate::data::{group_by_context, PreferenceTriple, TruthRecord};
use crate::error::{DialError, Result};
use crate::model::{Example, ModelParams};

fn pair_credit(pos: f64, neg: f64) -> f64 {
    if pos > neg {
        1.0
    } else if pos == neg {
        0.5
    } else {
        0.0
    }
}

/// Rewards for every chosen and rejected response, one forward pass.
fn triple_rewards(params: &ModelParams, triples: &[PreferenceTriple]) -> Result<Vec<(f64, Vec<f64>)>> {
    let examples: Vec<Example> = triples
        .iter()
        .flat_map(|t| std::iter::once(t.chosen()).chain(t.rejected()))
        .collect();
    let r = params.reward_batch(&examples)?;
    let mut out = Vec::with_capacity(triples.len());
    let mut k = 0;
    for t in triples {
        let pos = r[k];
        let neg = r[k + 1..k + 1 + t.n_pairs()].to_vec();
        k += 1 + t.n_pairs();
        out.push((pos, neg));
    }
    Ok(out)
}

/// Pairwise accuracy: each (chosen, rejected) pair scores 1 when the chosen
/// reward is higher, 0.5 on an exact tie.
pub fn preference_accuracy(params: &ModelParams, triples: &[PreferenceTriple]) -> Result<f64> {
    if triples.iter().all(|t| t.y_neg.is_empty()) {
        return Err(DialError::Empty("preference_accuracy"));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (pos, negs) in triple_rewards(params, triples)? {
        for neg in negs {
            total += pair_credit(pos, neg);
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Top-1 accuracy: a triple counts when the chosen response has the highest
/// reward; ties at the maximum share the credit.
pub fn top1_accuracy(params: &ModelParams, triples: &[PreferenceTriple]) -> Result<f64> {
    if triples.is_empty() {
        return Err(DialError::Empty("top1_accuracy"));
    }
    let mut total = 0.0;
    for (pos, negs) in triple_rewards(params, triples)? {
        if negs.iter().all(|&n| n <= pos) {
            let ties = negs.iter().filter(|&&n| n == pos).count();
            total += 1.0 / (1 + ties) as f64;
        }
    }
    Ok(total / triples.len() as f64)
}

/// Pairwise accuracy over ground-truth records: every pair within a context
/// whose `f` values differ.
pub fn truth_pairwise_accuracy(params: &ModelParams, records: &[TruthRecord]) -> Result<f64> {
    let examples: Vec<Example> = records.iter().map(TruthRecord::example).collect();
    if examples.is_empty() {
        return Err(DialError::Empty("truth_pairwise_accuracy"));
    }
    let r = params.reward_batch(&examples)?;
    truth_pairwise_accuracy_from_scores(records, &r)
}

pub fn truth_pairwise_accuracy_from_scores(records: &[TruthRecord], r: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for p in ordered_pairs(records) {
        total += pair_credit(r[p.win], r[p.lose]);
        n += 1;
    }
    if n == 0 {
        return Err(DialError::Degenerate("no pair with differing ground truth"));
    }
    Ok(total / n as f64)
}

/// Top-1 accuracy per context group of ground-truth records.
pub fn truth_top1_accuracy(params: &ModelParams, records: &[TruthRecord]) -> Result<f64> {
    let examples: Vec<Example> = records.iter().map(TruthRecord::example).collect();
    if examples.is_empty() {
        return Err(DialError::Empty("truth_top1_accuracy"));
    }
    let r = params.reward_batch(&examples)?;
    truth_top1_accuracy_from_scores(records, &r)
}

pub fn truth_top1_accuracy_from_scores(records: &[TruthRecord], r: &[f64]) -> Result<f64> {
    let groups = group_by_context(records);
    if groups.is_empty() {
        return Err(DialError::Empty("truth_top1_accuracy"));
    }
    let mut total = 0.0;
    for g in &groups {
        let best_r = g.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
        let best_f = g.iter().map(|&i| records[i].f).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = g.iter().copied().filter(|&i| r[i] == best_r).collect();
        let hits = tied.iter().filter(|&&i| records[i].f == best_f).count();
        total += hits as f64 / tied.len() as f64;
    }
    Ok(total / groups.len() as f64)
}

fn pearson_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(DialError::Degenerate("zero variance"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties get the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `(pearson_r, spearman_rho)`.
pub fn correlations(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(DialError::SizeMismatch(pred.len(), truth.len()));
    }
    if pred.len() < 3 {
        return Err(DialError::InvalidArgument(format!(
            "correlations need n >= 3, got {}",
            pred.len()
        )));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(DialError::InvalidArgument("non-finite score".into()));
    }
    let r = pearson_raw(pred, truth)?;
    let rho = pearson_raw(&average_ranks(pred), &average_ranks(truth))?;
    Ok((r, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;

    fn small_params(seed: u64) -> ModelParams {
        let cfg = ModelConfig {
            input_dim: 2,
            embed_hidden: vec![8],
            embed_dim: 4,
            critic_hidden: vec![4],
            ..ModelConfig::default()
        };
        ModelParams::init(&cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn triple(p: f64, n: &[f64]) -> PreferenceTriple {
        PreferenceTriple {
            x: vec![],
            y_pos: vec![p, 0.0],
            y_neg: n.iter().map(|&v| vec![v, 0.0]).collect(),
        }
    }

    #[test]
    fn constant_reward_scores_half() {
        let mut p = small_params(0);
        p.phi.0.iter_mut().for_each(|v| *v = 0.0);
        let ts = vec![triple(1.0, &[0.0, 2.0]), triple(-1.0, &[3.0])];
        assert_eq!(preference_accuracy(&p, &ts).unwrap(), 0.5);
        // four-way tie: one fifth of the credit
        let ts = vec![triple(1.0, &[0.0, 2.0, 3.0, 4.0])];
        assert!((top1_accuracy(&p, &ts).unwrap() - 0.2).abs() < 1e-15);
        assert!(preference_accuracy(&p, &[]).is_err());
    }

    #[test]
    fn accuracy_is_rank_invariant() {
        let p = small_params(3);
        let ts: Vec<PreferenceTriple> = (0..20)
            .map(|i| triple(i as f64 * 0.1, &[-(i as f64) * 0.07, 0.3]))
            .collect();
        let a = preference_accuracy(&p, &ts).unwrap();
        let mut q = p.clone();
        // doubling is exact in floating point, so every comparison survives
        q.phi.0.iter_mut().for_each(|v| *v *= 2.0);
        assert_eq!(preference_accuracy(&q, &ts).unwrap(), a);
    }

    #[test]
    fn truth_accuracy_matches_manual() {
        let rec = |y: f64, f: f64| TruthRecord {
            x: vec![],
            y: vec![y],
            f,
        };
        let rs = vec![rec(0.0, 1.0), rec(1.0, 0.0), rec(2.0, 0.0)];
        // r = y: chosen (y=0) loses to both rejected
        assert_eq!(truth_pairwise_accuracy_from_scores(&rs, &[0.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(
            truth_pairwise_accuracy_from_scores(&rs, &[5.0, 1.0, 5.0]).unwrap(),
            0.75
        );
        assert_eq!(truth_top1_accuracy_from_scores(&rs, &[5.0, 1.0, 5.0]).unwrap(), 0.5);
        let same = vec![rec(0.0, 1.0), rec(1.0, 1.0)];
        assert!(truth_pairwise_accuracy_from_scores(&same, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_examples() {
        let t = [0.1, 0.5, -2.0, 3.0, 1.2];
        let (r, rho) = correlations(&t, &t).unwrap();
        assert!((r - 1.0).abs() < 1e-12 && (rho - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        let (r, rho) = correlations(&neg, &t).unwrap();
        assert!((r + 1.0).abs() < 1e-12 && (rho + 1.0).abs() < 1e-12);
        let ex: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        let (r, rho) = correlations(&ex, &t).unwrap();
        assert!(r < 1.0 && (rho - 1.0).abs() < 1e-12);
        assert!(matches!(
            correlations(&[1.0, 1.0, 1.0], &t[..3]),
            Err(DialError::Degenerate(_))
        ));
        assert!(correlations(&t[..2], &t[..2]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
