use dial_core::datagen::{gen_two_moons, MoonShift, TwoMoonsConfig};
use dial_core::eval::{correlations, preference_accuracy};
use dial_core::losses::{source_preference_loss, wasserstein_gap};
use dial_core::model::batch_matrix;
use dial_core::trainer::{train, EvalSets, TrainConfig};
use dial_core::{Activation, Example, ModelConfig, ModelParams, PreferenceTriple};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn seeded(cfg: &ModelConfig, seed: u64) -> ModelParams {
    ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

// frozen from the first run of seed 1234 on the default architecture
const EMBED_HEAD: [f64; 6] = [
    0.025182896020650013,
    0.08475072596694372,
    -0.02016822400136572,
    -0.045092338677796134,
    -0.007081953460856254,
    0.005536256768821908,
];
const EMBED_SQ_NORM: f64 = 0.054060542655186256;
const REWARD: f64 = 0.05285138295132249;
const CRITIC: f64 = -0.00023841782920674132;

#[test]
fn golden_snapshot() {
    let p = seeded(&ModelConfig::default(), 1234);
    let ex = Example::new(vec![], vec![0.3, -0.7]);
    let e = p.embed(&ex).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b.abs().max(1e-3);
    for (a, b) in e.iter().zip(EMBED_HEAD) {
        assert!(close(*a, b), "{a} vs {b}");
    }
    assert!(close(e.iter().map(|v| v * v).sum(), EMBED_SQ_NORM));
    assert!(close(p.reward_score(&ex).unwrap(), REWARD));
    assert!(close(p.critic_score(&ex).unwrap(), CRITIC));
}

fn lipschitz_holds(p: &ModelParams, rng: &mut ChaCha8Rng, pairs: usize, scale: f64) -> f64 {
    let k = p.lipschitz_upper_bound().unwrap();
    let d = p.input_dim();
    let mut worst: f64 = 0.0;
    for i in 0..pairs {
        let z: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        // half far apart, half close together
        let step = if i % 2 == 0 { 1.0 } else { 1e-3 };
        let z2: Vec<f64> = z
            .iter()
            .map(|v| v + step * scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = p
            .reward_batch(&[Example::new(vec![], z.clone()), Example::new(vec![], z2.clone())])
            .unwrap();
        let dist = z.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ratio = (r[0] - r[1]).abs() / (k * dist);
        assert!(ratio <= 1.0 + 1e-12, "ratio {ratio}");
        worst = worst.max(ratio);
    }
    worst
}

#[test]
fn lipschitz_bound_never_violated_on_1000_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..5 {
        let cfg = ModelConfig {
            input_dim: 3 + seed as usize,
            ..ModelConfig::default()
        };
        let p = seeded(&cfg, seed);
        lipschitz_holds(&p, &mut rng, 1000, 2.0);
    }
}

#[test]
fn lipschitz_bound_holds_after_training() {
    let (src, tgt, _) = gen_two_moons(&TwoMoonsConfig::new(50, 200, MoonShift::fewshot(), 3)).unwrap();
    let cfg = TrainConfig {
        lr_main: 1e-3,
        lr_critic: 1e-3,
        lambda_da: 0.3,
        batch_src: 16,
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(
        &ModelConfig::default(),
        &cfg,
        &src.preference_triples,
        &tgt.examples,
        &EvalSets::default(),
    )
    .unwrap();
    let worst = lipschitz_holds(&out.params, &mut ChaCha8Rng::seed_from_u64(1), 1000, 1.5);
    assert!(worst > 0.0);
}

#[test]
fn heads_share_the_embedding_dimension() {
    let cfg = ModelConfig {
        input_dim: 5,
        embed_hidden: vec![7, 6],
        embed_dim: 9,
        critic_hidden: vec![4],
        activation: Activation::Gelu,
    };
    let p = seeded(&cfg, 0);
    assert_eq!(p.embed_dim(), 9);
    assert_eq!(p.phi.0.len(), 9);
    assert_eq!(p.psi.0.input_dim(), 9);
    p.validate().unwrap();
}

fn small() -> ModelParams {
    let cfg = ModelConfig {
        input_dim: 2,
        embed_hidden: vec![8],
        embed_dim: 4,
        critic_hidden: vec![6, 4],
        activation: Activation::Gelu,
    };
    seeded(&cfg, 77)
}

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

fn triples() -> impl Strategy<Value = Vec<PreferenceTriple>> {
    prop::collection::vec(
        (vec2(), prop::collection::vec(vec2(), 1..4)).prop_map(|(y_pos, y_neg)| PreferenceTriple {
            x: vec![],
            y_pos,
            y_neg,
        }),
        1..6,
    )
}

fn examples() -> impl Strategy<Value = Vec<Example>> {
    prop::collection::vec(vec2().prop_map(|y| Example::new(vec![], y)), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn source_loss_ignores_a_reward_offset(ts in triples(), offset in vec2()) {
        // linear embedder: moving its bias by b adds phi . b to every reward
        let cfg = ModelConfig {
            input_dim: 2,
            embed_hidden: vec![],
            embed_dim: 2,
            critic_hidden: vec![3],
            activation: Activation::Identity,
        };
        let p = seeded(&cfg, 5);
        let mut q = p.clone();
        let bias = q.theta.0.layers[0].bias.as_mut().unwrap();
        bias.data_mut().iter_mut().zip(&offset).for_each(|(v, o)| *v += o);
        let shift: f64 = p.phi.0.iter().zip(&offset).map(|(a, b)| a * b).sum();
        let ex = ts[0].chosen();
        prop_assert!((q.reward_score(&ex).unwrap() - p.reward_score(&ex).unwrap() - shift).abs() <= 1e-12);
        let base = source_preference_loss(&p, &ts).unwrap();
        let moved = source_preference_loss(&q, &ts).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12, "{base} vs {moved}");
    }

    #[test]
    fn gap_is_antisymmetric(s in examples(), t in examples()) {
        let p = small();
        let ab = wasserstein_gap(&p, &s, &t).unwrap();
        let ba = wasserstein_gap(&p, &t, &s).unwrap();
        prop_assert!((ab + ba).abs() <= 1e-12);
    }

    #[test]
    fn penalty_is_nonnegative(s in examples(), t in examples(), seed in any::<u64>()) {
        let p = small();
        let gp = dial_core::losses::gradient_penalty(&p, &s, &t, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(gp >= 0.0 && gp.is_finite());
    }

    #[test]
    fn accuracy_survives_increasing_transforms(ts in triples(), a in 0.1..5.0f64) {
        // scaling phi by a power of two is an exact, strictly increasing map
        let p = small();
        let mut q = p.clone();
        let k = a.log2().round();
        q.phi.0.iter_mut().for_each(|v| *v *= 2f64.powf(k));
        prop_assert_eq!(preference_accuracy(&p, &ts).unwrap(), preference_accuracy(&q, &ts).unwrap());
    }

    #[test]
    fn correlation_invariances(v in prop::collection::vec(-5.0..5.0f64, 4..30), a in 0.5..3.0f64, b in -2.0..2.0f64) {
        let t: Vec<f64> = (0..v.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        prop_assume!(v.iter().any(|x| *x != v[0]));
        let (r, rho) = correlations(&v, &t).unwrap();
        let affine: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let (r2, _) = correlations(&affine, &t).unwrap();
        prop_assert!((r - r2).abs() <= 1e-9);
        let cubed: Vec<f64> = v.iter().map(|x| x.powi(3) + x).collect();
        let (_, rho2) = correlations(&cubed, &t).unwrap();
        prop_assert!((rho - rho2).abs() <= 1e-12);
    }
}

#[test]
fn embeddings_are_deterministic() {
    let p = small();
    let xs: Vec<Example> = (0..10)
        .map(|i| Example::new(vec![], vec![i as f64 * 0.1, -0.2]))
        .collect();
    let m = batch_matrix(&xs).unwrap();
    let a = p.embed_batch(&m).unwrap();
    let b = p.embed_batch(&m).unwrap();
    assert_eq!(a, b);
}
