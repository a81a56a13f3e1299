//! Synthetic source/target domain pairs with known ground-truth rewards.

mod moons;
mod odd_one_out;

pub use moons::{arc_distance, gen_two_moons, moon_label, moon_point, MoonShift, TwoMoonsConfig, DEFAULT_ARC_START};
pub use odd_one_out::{gen_odd_one_out, nearest_category, OddOneOutConfig, ODD_ITEMS};

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{group_by_context, DomainRole, PreferenceTriple, TruthRecord};
use crate::error::{DialError, Result};

/// Independent ChaCha stream `k` derived from `seed`.
pub fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Closed-form ground-truth reward `f(x, y)` for a generated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum GroundTruthScorer {
    TwoMoons { shift: MoonShift },
    OddOneOut { centers: Vec<Vec<f64>> },
}

impl GroundTruthScorer {
    pub fn task(&self) -> &'static str {
        match self {
            GroundTruthScorer::TwoMoons { .. } => "two_moons",
            GroundTruthScorer::OddOneOut { .. } => "odd_one_out",
        }
    }

    /// `f(x, y)`; target-domain points are mapped back to the source frame
    /// first.
    pub fn score(&self, role: DomainRole, x: &[f64], y: &[f64]) -> f64 {
        match self {
            GroundTruthScorer::TwoMoons { shift } => {
                let p = [y[0], y[1]];
                let p = match role {
                    DomainRole::Source => p,
                    DomainRole::Target => shift.inverse(p),
                };
                moon_label(p)
            }
            GroundTruthScorer::OddOneOut { centers } => odd_one_out::odd_score(centers, x, y),
        }
    }
}

pub type Points = Vec<Vec<f64>>;

/// `n` samples each from `N(0, I)` and `N(m e_1, I)`.
///
/// The two samples come from independent streams of `seed`.
pub fn gen_gaussian_pair(dim: usize, mean_shift: f64, n: usize, seed: u64) -> Result<(Points, Points)> {
    if dim < 1 || n < 2 {
        return Err(DialError::InvalidArgument(format!(
            "gaussian pair needs dim >= 1 and n >= 2, got dim={dim} n={n}"
        )));
    }
    if !mean_shift.is_finite() {
        return Err(DialError::InvalidArgument("mean_shift must be finite".into()));
    }
    Ok((
        gaussian_sample(dim, 0.0, n, &mut stream(seed, 0)),
        gaussian_sample(dim, mean_shift, n, &mut stream(seed, 1)),
    ))
}

fn gaussian_sample(dim: usize, shift: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            v[0] += shift;
            v
        })
        .collect()
}

/// Builds triples from integer-scored examples by pairing neighbouring
/// levels within each context. Every example at level `l + 1` is chosen
/// once against a random example at level `l`.
pub fn scores_to_preferences(scored: &[(TruthRecord, i64)], seed: u64) -> Vec<PreferenceTriple> {
    let records: Vec<TruthRecord> = scored.iter().map(|(r, _)| r.clone()).collect();
    let mut rng = stream(seed, 0);
    let mut out = Vec::new();
    for group in group_by_context(&records) {
        let mut levels: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for &i in &group {
            levels.entry(scored[i].1).or_default().push(i);
        }
        for (&level, members) in &levels {
            let Some(lower) = levels.get(&(level - 1)) else {
                if levels.keys().next() != Some(&level) {
                    log::warn!("score level {level} has no adjacent lower level; skipped");
                }
                continue;
            };
            for &i in members {
                let j = *lower.choose(&mut rng).expect("non-empty level");
                out.push(PreferenceTriple {
                    x: records[i].x.clone(),
                    y_pos: records[i].y.clone(),
                    y_neg: vec![records[j].y.clone()],
                });
            }
        }
    }
    out
}
