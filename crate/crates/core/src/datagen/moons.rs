use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stream, GroundTruthScorer};
use crate::data::{DomainDataset, DomainRole, PreferenceTriple, TruthRecord};
use crate::error::{DialError, Result};
use crate::model::Example;

/// How the target domain differs from the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MoonShift {
    /// Source covers only `arc_fraction` of each moon's parameter range,
    /// starting at `arc_start` (both as fractions of the half-turn); the
    /// target covers the full moons.
    FewshotSubsample {
        arc_fraction: f64,
        arc_start: f64,
    },
    /// Target is the full dataset rotated about the centre `(0.5, 0.25)`.
    Rotate {
        degrees: f64,
    },
    Translate {
        dx: f64,
        dy: f64,
    },
}

impl MoonShift {
    pub fn fewshot() -> Self {
        MoonShift::FewshotSubsample {
            arc_fraction: 0.4,
            arc_start: DEFAULT_ARC_START,
        }
    }
}

/// Where the few-shot arc begins, as a fraction of the half-turn.
pub const DEFAULT_ARC_START: f64 = 0.0;
const CENTRE: [f64; 2] = [0.5, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoMoonsConfig {
    pub n_src: usize,
    pub n_tgt: usize,
    pub shift: MoonShift,
    pub noise_sd: f64,
    pub seed: u64,
}

impl TwoMoonsConfig {
    pub fn new(n_src: usize, n_tgt: usize, shift: MoonShift, seed: u64) -> Self {
        Self {
            n_src,
            n_tgt,
            shift,
            noise_sd: 0.1,
            seed,
        }
    }
}

/// Noise-free point of moon `class` at parameter `t` in `[0, pi]`.
pub fn moon_point(class: u8, t: f64) -> [f64; 2] {
    if class == 0 {
        [t.cos(), t.sin()]
    } else {
        [1.0 - t.cos(), 0.5 - t.sin()]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance from `p` to the noise-free arc of moon `class`.
pub fn arc_distance(class: u8, p: [f64; 2]) -> f64 {
    let (c, upper) = if class == 0 {
        ([0.0, 0.0], true)
    } else {
        ([1.0, 0.5], false)
    };
    let q = [p[0] - c[0], p[1] - c[1]];
    let on_side = if upper { q[1] >= 0.0 } else { q[1] <= 0.0 };
    if on_side {
        ((q[0] * q[0] + q[1] * q[1]).sqrt() - 1.0).abs()
    } else {
        dist(q, [1.0, 0.0]).min(dist(q, [-1.0, 0.0]))
    }
}

/// Ground truth: `1` when `p` is closer to moon 1's arc than to moon 0's.
pub fn moon_label(p: [f64; 2]) -> f64 {
    if arc_distance(1, p) < arc_distance(0, p) {
        1.0
    } else {
        0.0
    }
}

fn rotate(p: [f64; 2], radians: f64) -> [f64; 2] {
    let (s, c) = radians.sin_cos();
    let q = [p[0] - CENTRE[0], p[1] - CENTRE[1]];
    [c * q[0] - s * q[1] + CENTRE[0], s * q[0] + c * q[1] + CENTRE[1]]
}

impl MoonShift {
    /// Maps a source-frame point into the target frame.
    pub fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            MoonShift::FewshotSubsample { .. } => p,
            MoonShift::Rotate { degrees } => rotate(p, degrees.to_radians()),
            MoonShift::Translate { dx, dy } => [p[0] + dx, p[1] + dy],
        }
    }

    pub fn inverse(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            MoonShift::FewshotSubsample { .. } => p,
            MoonShift::Rotate { degrees } => rotate(p, -degrees.to_radians()),
            MoonShift::Translate { dx, dy } => [p[0] - dx, p[1] - dy],
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MoonShift::FewshotSubsample {
                arc_fraction,
                arc_start,
            } => {
                let ok = arc_fraction > 0.0
                    && arc_fraction <= 1.0
                    && arc_start >= 0.0
                    && arc_start + arc_fraction <= 1.0 + 1e-12;
                if ok {
                    Ok(())
                } else {
                    Err(DialError::InvalidArgument(format!(
                        "few-shot arc [{arc_start}, {arc_start}+{arc_fraction}] must lie in [0, 1]"
                    )))
                }
            }
            MoonShift::Rotate { degrees } if degrees.is_finite() => Ok(()),
            MoonShift::Translate { dx, dy } if dx.is_finite() && dy.is_finite() => Ok(()),
            _ => Err(DialError::InvalidArgument(format!("invalid shift {self:?}"))),
        }
    }
}

/// Samples `n` labelled points, half per moon, with `t` uniform on
/// `[lo, hi] * pi`.
fn sample_moons<R: Rng>(n: usize, lo: f64, hi: f64, noise: f64, rng: &mut R) -> Result<Vec<([f64; 2], u8)>> {
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| DialError::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        let t = std::f64::consts::PI * (lo + (hi - lo) * rng.random::<f64>());
        let mut p = moon_point(class, t);
        if noise > 0.0 {
            p[0] += normal.sample(rng);
            p[1] += normal.sample(rng);
        }
        out.push((p, class));
    }
    Ok(out)
}

/// Pairs every `f = 1` point with an `f = 0` point (cycling the shorter list).
pub(crate) fn pair_by_label<R: Rng>(points: &[[f64; 2]], labels: &[f64], rng: &mut R) -> Vec<PreferenceTriple> {
    let mut pos: Vec<usize> = (0..points.len()).filter(|&i| labels[i] > 0.5).collect();
    let mut neg: Vec<usize> = (0..points.len()).filter(|&i| labels[i] <= 0.5).collect();
    if pos.is_empty() || neg.is_empty() {
        return Vec::new();
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    let m = pos.len().max(neg.len());
    (0..m)
        .map(|k| PreferenceTriple {
            x: Vec::new(),
            y_pos: points[pos[k % pos.len()]].to_vec(),
            y_neg: vec![points[neg[k % neg.len()]].to_vec()],
        })
        .collect()
}

/// Two interleaving half-circles. Class (ground truth) is the nearer moon
/// arc, evaluated in the source frame. Source preferences prefer moon 1.
pub fn gen_two_moons(cfg: &TwoMoonsConfig) -> Result<(DomainDataset, DomainDataset, GroundTruthScorer)> {
    if cfg.n_src < 4 || cfg.n_tgt < 4 {
        return Err(DialError::InvalidArgument(format!(
            "two-moons needs n >= 4 per domain, got {} / {}",
            cfg.n_src, cfg.n_tgt
        )));
    }
    if cfg.noise_sd.is_nan() || cfg.noise_sd < 0.0 {
        return Err(DialError::InvalidArgument("noise_sd must be >= 0".into()));
    }
    cfg.shift.validate()?;
    let scorer = GroundTruthScorer::TwoMoons { shift: cfg.shift };

    let (lo, hi) = match cfg.shift {
        MoonShift::FewshotSubsample {
            arc_fraction,
            arc_start,
        } => (arc_start, arc_start + arc_fraction),
        _ => (0.0, 1.0),
    };
    let mut src_rng = stream(cfg.seed, 0);
    let src_pts: Vec<[f64; 2]> = sample_moons(cfg.n_src, lo, hi, cfg.noise_sd, &mut src_rng)?
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let src_labels: Vec<f64> = src_pts.iter().map(|&p| moon_label(p)).collect();
    let mut pair_rng = stream(cfg.seed, 1);
    let triples = pair_by_label(&src_pts, &src_labels, &mut pair_rng);
    if triples.is_empty() {
        return Err(DialError::Degenerate("source sample holds a single class"));
    }

    let mut tgt_rng = stream(cfg.seed, 2);
    let tgt_pts: Vec<[f64; 2]> = sample_moons(cfg.n_tgt, 0.0, 1.0, cfg.noise_sd, &mut tgt_rng)?
        .into_iter()
        .map(|(p, _)| cfg.shift.forward(p))
        .collect();

    let src = DomainDataset {
        role: DomainRole::Source,
        examples: src_pts.iter().map(|p| Example::new(vec![], p.to_vec())).collect(),
        truth: src_pts
            .iter()
            .zip(&src_labels)
            .map(|(p, &f)| TruthRecord {
                x: vec![],
                y: p.to_vec(),
                f,
            })
            .collect(),
        preference_triples: triples,
    };
    let tgt = DomainDataset {
        role: DomainRole::Target,
        examples: tgt_pts.iter().map(|p| Example::new(vec![], p.to_vec())).collect(),
        truth: tgt_pts
            .iter()
            .map(|p| TruthRecord {
                x: vec![],
                y: p.to_vec(),
                f: scorer.score(DomainRole::Target, &[], p),
            })
            .collect(),
        preference_triples: Vec::new(),
    };
    Ok((src, tgt, scorer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::to_jsonl;
    use crate::oracle::{w1_exact_assignment, EmpiricalDistribution};

    #[test]
    fn labels_match_generating_moon_without_noise() {
        for i in 0..=100 {
            let t = std::f64::consts::PI * i as f64 / 100.0;
            assert_eq!(moon_label(moon_point(0, t)), 0.0, "t={t}");
            assert_eq!(moon_label(moon_point(1, t)), 1.0, "t={t}");
        }
    }

    #[test]
    fn identical_supports_have_zero_w1() {
        let cfg = TwoMoonsConfig {
            n_src: 40,
            n_tgt: 40,
            shift: MoonShift::Rotate { degrees: 0.0 },
            noise_sd: 0.0,
            seed: 3,
        };
        let (src, _, _) = gen_two_moons(&cfg).unwrap();
        let pts: Vec<Vec<f64>> = src.examples.iter().map(|e| e.y.clone()).collect();
        let p = EmpiricalDistribution::new(pts).unwrap();
        assert_eq!(w1_exact_assignment(&p, &p).unwrap(), 0.0);
        // and every noiseless point sits on its own arc
        for e in &src.examples {
            let p = [e.y[0], e.y[1]];
            assert!(arc_distance(0, p).min(arc_distance(1, p)) < 1e-12);
        }
    }

    #[test]
    fn half_turn_swaps_moon_families() {
        let s = MoonShift::Rotate { degrees: 180.0 };
        for i in 0..=20 {
            let t = std::f64::consts::PI * i as f64 / 20.0;
            let p = s.forward(moon_point(0, t));
            assert!(arc_distance(1, p) < 1e-12, "t={t}");
            let q = s.forward(moon_point(1, t));
            assert!(arc_distance(0, q) < 1e-12, "t={t}");
        }
    }

    #[test]
    fn fewshot_covers_only_the_arc() {
        let cfg = TwoMoonsConfig {
            n_src: 200,
            n_tgt: 50,
            shift: MoonShift::FewshotSubsample {
                arc_fraction: 0.4,
                arc_start: 0.0,
            },
            noise_sd: 0.0,
            seed: 1,
        };
        let (src, _, _) = gen_two_moons(&cfg).unwrap();
        for e in &src.examples {
            // class 0 points have t in [0, 0.4 pi] => y >= 0 and x >= cos(0.4 pi)
            if e.y[1] >= 0.0 && moon_label([e.y[0], e.y[1]]) == 0.0 {
                assert!(e.y[0] >= (0.4 * std::f64::consts::PI).cos() - 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = TwoMoonsConfig::new(500, 500, MoonShift::fewshot(), 7);
        let a = gen_two_moons(&cfg).unwrap();
        let b = gen_two_moons(&cfg).unwrap();
        assert_eq!(
            to_jsonl(&a.0.preference_triples).unwrap(),
            to_jsonl(&b.0.preference_triples).unwrap()
        );
        assert_eq!(to_jsonl(&a.1.truth).unwrap(), to_jsonl(&b.1.truth).unwrap());
    }

    #[test]
    fn invalid_inputs() {
        let mut cfg = TwoMoonsConfig::new(3, 10, MoonShift::fewshot(), 0);
        assert!(gen_two_moons(&cfg).is_err());
        cfg.n_src = 10;
        cfg.shift = MoonShift::FewshotSubsample {
            arc_fraction: 0.8,
            arc_start: 0.5,
        };
        assert!(gen_two_moons(&cfg).is_err());
    }
}
