use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stream, GroundTruthScorer};
use crate::data::{DomainDataset, DomainRole, PreferenceTriple, TruthRecord};
use crate::error::{DialError, Result};
use crate::model::Example;

/// Items per instance: four from the base category and one odd item.
pub const ODD_ITEMS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddOneOutConfig {
    pub categories: usize,
    pub items_per_cat: usize,
    pub src_base_cat: usize,
    pub tgt_base_cat: usize,
    /// Instances per domain.
    pub n: usize,
    pub dim: usize,
    pub cluster_sd: f64,
    /// Centres sit at `center_scale * e_k`.
    pub center_scale: f64,
    pub seed: u64,
}

impl OddOneOutConfig {
    pub fn new(
        categories: usize,
        items_per_cat: usize,
        src_base_cat: usize,
        tgt_base_cat: usize,
        n: usize,
        seed: u64,
    ) -> Self {
        Self {
            categories,
            items_per_cat,
            src_base_cat,
            tgt_base_cat,
            n,
            dim: 8,
            cluster_sd: 0.15,
            center_scale: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DialError::InvalidArgument(m));
        if self.categories < 2 {
            return bad(format!("need >= 2 categories, got {}", self.categories));
        }
        if self.categories > self.dim {
            return bad(format!(
                "{} categories do not fit basis centres in R^{}",
                self.categories, self.dim
            ));
        }
        if self.items_per_cat < ODD_ITEMS - 1 {
            return bad(format!(
                "need >= {} items per category, got {}",
                ODD_ITEMS - 1,
                self.items_per_cat
            ));
        }
        if self.src_base_cat >= self.categories || self.tgt_base_cat >= self.categories {
            return bad("base category out of range".into());
        }
        if self.src_base_cat == self.tgt_base_cat {
            return bad("source and target base categories must differ".into());
        }
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.cluster_sd.is_nan() || self.cluster_sd < 0.0 || self.center_scale.is_nan() || self.center_scale <= 0.0 {
            return bad("cluster_sd must be >= 0 and center_scale > 0".into());
        }
        Ok(())
    }
}

/// Index of the closest centre.
pub fn nearest_category(centers: &[Vec<f64>], v: &[f64]) -> usize {
    let d2 = |c: &Vec<f64>| c.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    (0..centers.len())
        .min_by(|&a, &b| d2(&centers[a]).total_cmp(&d2(&centers[b])))
        .unwrap_or(0)
}

/// `1` when `y` is the item of `x` whose category differs from the others.
pub(super) fn odd_score(centers: &[Vec<f64>], x: &[f64], y: &[f64]) -> f64 {
    let d = y.len();
    if d == 0 || !x.len().is_multiple_of(d) {
        return 0.0;
    }
    let cats: Vec<usize> = x.chunks(d).map(|it| nearest_category(centers, it)).collect();
    let mut counts = vec![0usize; centers.len()];
    for &c in &cats {
        counts[c] += 1;
    }
    let majority = (0..counts.len()).max_by_key(|&c| counts[c]).unwrap_or(0);
    f64::from(u8::from(nearest_category(centers, y) != majority))
}

fn item_pools(cfg: &OddOneOutConfig, centers: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<Vec<f64>>>> {
    let normal = Normal::new(0.0, cfg.cluster_sd).map_err(|e| DialError::InvalidArgument(e.to_string()))?;
    let mut pools = Vec::with_capacity(cfg.categories);
    for (k, c) in centers.iter().enumerate() {
        let mut pool = Vec::with_capacity(cfg.items_per_cat);
        while pool.len() < cfg.items_per_cat {
            let item: Vec<f64> = c.iter().map(|m| m + normal.sample(rng)).collect();
            // keep the closed-form scorer exact
            if nearest_category(centers, &item) == k {
                pool.push(item);
            }
        }
        pools.push(pool);
    }
    Ok(pools)
}

struct Instance {
    items: Vec<Vec<f64>>,
    odd: usize,
}

impl Instance {
    fn context(&self) -> Vec<f64> {
        self.items.concat()
    }
}

fn sample_instance(pools: &[Vec<Vec<f64>>], base: usize, rng: &mut ChaCha8Rng) -> Instance {
    let picks = index::sample(rng, pools[base].len(), ODD_ITEMS - 1);
    let mut items: Vec<(Vec<f64>, bool)> = picks.iter().map(|i| (pools[base][i].clone(), false)).collect();
    let mut odd_cat = rng.random_range(0..pools.len() - 1);
    if odd_cat >= base {
        odd_cat += 1;
    }
    let odd_item = pools[odd_cat][rng.random_range(0..pools[odd_cat].len())].clone();
    items.push((odd_item, true));
    items.shuffle(rng);
    let odd = items.iter().position(|(_, o)| *o).expect("odd item present");
    Instance {
        items: items.into_iter().map(|(v, _)| v).collect(),
        odd,
    }
}

/// Pick-the-odd-item task. Each category is a Gaussian cluster of fixed
/// items; source instances use `src_base_cat` as the majority category and
/// target instances use `tgt_base_cat`.
pub fn gen_odd_one_out(cfg: &OddOneOutConfig) -> Result<(DomainDataset, DomainDataset, GroundTruthScorer)> {
    cfg.validate()?;
    let centers: Vec<Vec<f64>> = (0..cfg.categories)
        .map(|k| {
            let mut c = vec![0.0; cfg.dim];
            c[k] = cfg.center_scale;
            c
        })
        .collect();
    let pools = item_pools(cfg, &centers, &mut stream(cfg.seed, 0))?;
    let scorer = GroundTruthScorer::OddOneOut { centers };

    let mut src_rng = stream(cfg.seed, 1);
    let src_inst: Vec<Instance> = (0..cfg.n)
        .map(|_| sample_instance(&pools, cfg.src_base_cat, &mut src_rng))
        .collect();
    let mut tgt_rng = stream(cfg.seed, 2);
    let tgt_inst: Vec<Instance> = (0..cfg.n)
        .map(|_| sample_instance(&pools, cfg.tgt_base_cat, &mut tgt_rng))
        .collect();

    let flatten = |inst: &[Instance]| -> (Vec<Example>, Vec<TruthRecord>) {
        let mut ex = Vec::new();
        let mut tr = Vec::new();
        for it in inst {
            let x = it.context();
            for (k, y) in it.items.iter().enumerate() {
                ex.push(Example::new(x.clone(), y.clone()));
                tr.push(TruthRecord {
                    x: x.clone(),
                    y: y.clone(),
                    f: f64::from(u8::from(k == it.odd)),
                });
            }
        }
        (ex, tr)
    };

    let triples = src_inst
        .iter()
        .map(|it| PreferenceTriple {
            x: it.context(),
            y_pos: it.items[it.odd].clone(),
            y_neg: it
                .items
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != it.odd)
                .map(|(_, v)| v.clone())
                .collect(),
        })
        .collect();
    let (src_ex, src_truth) = flatten(&src_inst);
    let (tgt_ex, tgt_truth) = flatten(&tgt_inst);
    Ok((
        DomainDataset {
            role: DomainRole::Source,
            examples: src_ex,
            truth: src_truth,
            preference_triples: triples,
        },
        DomainDataset {
            role: DomainRole::Target,
            examples: tgt_ex,
            truth: tgt_truth,
            preference_triples: Vec::new(),
        },
        scorer,
    ))
}
