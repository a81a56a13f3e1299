use super::*;
use crate::datagen::{gen_two_moons, MoonShift, TwoMoonsConfig};
use crate::losses::wasserstein_gap;

fn small_model() -> ModelConfig {
    ModelConfig {
        input_dim: 2,
        embed_hidden: vec![16],
        embed_dim: 8,
        critic_hidden: vec![8, 8],
        ..ModelConfig::default()
    }
}

fn moons(seed: u64) -> (Vec<PreferenceTriple>, Vec<Example>, Vec<TruthRecord>) {
    let cfg = TwoMoonsConfig::new(40, 60, MoonShift::Rotate { degrees: 30.0 }, seed);
    let (src, tgt, _) = gen_two_moons(&cfg).unwrap();
    (src.preference_triples, tgt.examples, tgt.truth)
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        lr_main: 1e-2,
        lr_critic: 1e-2,
        lambda_da: 0.1,
        batch_src: 8,
        batch_tgt: 8,
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.tensors()
        .flat_map(|t| t.data().to_vec())
        .chain(p.phi.0.iter().copied())
        .map(f64::to_bits)
        .collect()
}

#[test]
fn defaults_follow_reference_hyperparameters() {
    let c = TrainConfig::default();
    assert_eq!((c.lambda_da, c.lambda_gp, c.critic_iters), (0.01, 1.0, 3));
    assert_eq!((c.lr_main, c.lr_critic), (5e-5, 1e-4));
    assert_eq!((c.weight_decay_critic, c.weight_decay_main), (1e-3, 0.0));
    c.validate().unwrap();
}

#[test]
fn invalid_configs() {
    let base = TrainConfig::default();
    for bad in [
        TrainConfig {
            lr_main: 0.0,
            ..base.clone()
        },
        TrainConfig {
            critic_iters: 0,
            ..base.clone()
        },
        TrainConfig {
            batch_tgt: 0,
            ..base.clone()
        },
        TrainConfig {
            lambda_gp: -1.0,
            ..base.clone()
        },
        TrainConfig {
            critic_enabled: false,
            ..base.clone()
        },
    ] {
        assert!(matches!(bad.validate(), Err(DialError::Config(_))), "{bad:?}");
    }
    let unknown: std::result::Result<TrainConfig, _> = serde_json::from_str("{\"lamda_da\": 1}");
    assert!(unknown.is_err());
}

#[test]
fn zero_epochs_returns_initial_params() {
    let (s, t, _) = moons(1);
    let cfg = TrainConfig {
        epochs: 0,
        ..quick_cfg()
    };
    let out = train(&small_model(), &cfg, &s, &t, &EvalSets::default()).unwrap();
    let init = Trainer::new(small_model(), cfg).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.params, init.params);
}

#[test]
fn runs_are_bit_identical() {
    let (s, t, _) = moons(2);
    let run = || {
        let mut tr = Trainer::new(small_model(), quick_cfg()).unwrap();
        let mut losses = Vec::new();
        for k in 0..10 {
            let bs = &s[k..k + 8];
            let bt = &t[k..k + 8];
            losses.push(tr.train_step(bs, bt).unwrap());
        }
        (bits(&tr.params), losses)
    };
    assert_eq!(run(), run());
}

#[test]
fn src_pref_matches_dial_without_critic() {
    let (s, t, truth) = moons(3);
    let evals = EvalSets {
        src: None,
        tgt: Some(EvalSet {
            records: truth,
            metric: AccuracyMetric::Pairwise,
        }),
    };
    let a = TrainConfig {
        method: Method::SrcPref,
        ..quick_cfg()
    };
    let b = TrainConfig {
        lambda_da: 0.0,
        critic_enabled: false,
        ..quick_cfg()
    };
    let ra = train(&small_model(), &a, &s, &t, &evals).unwrap();
    let rb = train(&small_model(), &b, &s, &t, &evals).unwrap();
    assert_eq!(bits(&ra.params), bits(&rb.params));
    let rows = |h: &[StepRecord]| h.iter().map(StepRecord::csv_row).collect::<Vec<_>>();
    assert_eq!(rows(&ra.history), rows(&rb.history));
}

#[test]
fn no_alignment_weight_leaves_reward_path_untouched_by_critic() {
    // with lambda_da = 0 the critic still trains but theta/phi follow the
    // pure preference trajectory
    let (s, t, _) = moons(4);
    let plain = TrainConfig {
        method: Method::SrcPref,
        ..quick_cfg()
    };
    let with_critic = TrainConfig {
        lambda_da: 0.0,
        lambda_gp: 0.0,
        critic_iters: 1,
        ..quick_cfg()
    };
    let ra = train(&small_model(), &plain, &s, &t, &EvalSets::default()).unwrap();
    let rb = train(&small_model(), &with_critic, &s, &t, &EvalSets::default()).unwrap();
    assert_eq!(ra.params.theta, rb.params.theta);
    assert_eq!(ra.params.phi, rb.params.phi);
    assert_ne!(ra.params.psi, rb.params.psi);
}

#[test]
fn zero_model_stays_zero() {
    let (s, t, _) = moons(5);
    let p = ModelParams::zeros(&small_model()).unwrap();
    let mut tr = Trainer::with_params(small_model(), quick_cfg(), p.clone()).unwrap();
    tr.train_step(&s[..4], &t[..4]).unwrap();
    assert_eq!(tr.params, p);
}

#[test]
fn critic_phase_widens_gap_on_frozen_embeddings() {
    let (s, t, _) = moons(6);
    let mut p = Trainer::new(small_model(), quick_cfg()).unwrap().params;
    let src_ex: Vec<Example> = s
        .iter()
        .flat_map(|tr| std::iter::once(tr.chosen()).chain(tr.rejected()))
        .collect();
    let start = wasserstein_gap(&p, &src_ex, &t).unwrap();
    let batch = SourceBatch::from_triples(&s).unwrap();
    let tgt_input = batch_matrix(&t).unwrap();
    let cfg = TrainConfig {
        critic_iters: 50,
        ..quick_cfg()
    };
    let mut opt = OptimizerState::new(&sizes(&mut p, Trainable::CRITIC));
    let theta = p.theta.clone();
    let mut rng = stream(0, 1);
    let mut b = LossBundle::default();
    critic_phase(&mut p, &mut opt, &cfg, &batch.input, &tgt_input, &mut rng, 1, &mut b).unwrap();
    assert_eq!(p.theta, theta);
    let end = wasserstein_gap(&p, &src_ex, &t).unwrap();
    assert!(end >= start, "gap went from {start} to {end}");
}

#[test]
fn non_finite_loss_aborts_with_step() {
    let mut tr = Trainer::new(small_model(), quick_cfg()).unwrap();
    let s = vec![PreferenceTriple {
        x: vec![],
        y_pos: vec![f64::MAX, f64::MAX],
        y_neg: vec![vec![-f64::MAX, 0.0]],
    }];
    let t = vec![Example::new(vec![], vec![0.0, 0.0])];
    match tr.train_step(&s, &t) {
        Err(DialError::NonFinite { step, .. }) => assert_eq!(step, 1),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let (s, t, _) = moons(7);
    let cfg = quick_cfg();
    let straight = train(&small_model(), &cfg, &s, &t, &EvalSets::default()).unwrap();

    let mut tr = Trainer::new(
        small_model(),
        TrainConfig {
            epochs: 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    train_with(&mut tr, &s, &t, &EvalSets::default(), &mut |_| Ok(()), &mut |_| Ok(())).unwrap();
    let ck = tr.checkpoint();
    let json = ck.to_json().unwrap();
    let back = Checkpoint::from_json(&json).unwrap();
    assert_eq!(back, ck);
    assert_eq!(bits(&back.params()), bits(&tr.params));

    let mut resumed = Trainer::from_checkpoint(back).unwrap();
    resumed.cfg.epochs = cfg.epochs;
    let rest = train_with(&mut resumed, &s, &t, &EvalSets::default(), &mut |_| Ok(()), &mut |_| {
        Ok(())
    })
    .unwrap();
    assert_eq!(bits(&rest.params), bits(&straight.params));
    assert_eq!(
        rest.history,
        straight.history[straight.history.len() - rest.history.len()..]
    );
}

#[test]
fn learns_source_preferences() {
    let (s, t, truth) = moons(8);
    let cfg = TrainConfig {
        epochs: 15,
        ..quick_cfg()
    };
    let src_truth = crate::data::truth_from_triples(&s);
    let evals = EvalSets {
        src: Some(EvalSet {
            records: src_truth,
            metric: AccuracyMetric::Pairwise,
        }),
        tgt: Some(EvalSet {
            records: truth,
            metric: AccuracyMetric::Pairwise,
        }),
    };
    let out = train(&small_model(), &cfg, &s, &t, &evals).unwrap();
    let first = out.history[0].losses.src_loss;
    let last = out.final_metrics.last_losses.unwrap().src_loss;
    assert!(last < first, "{first} -> {last}");
    assert!(out.final_metrics.eval_accuracy_src.unwrap() > 0.9);
    // evaluated once per epoch
    assert_eq!(out.history.iter().filter(|r| r.eval_accuracy_tgt.is_some()).count(), 15);
}

#[test]
fn src_pref_needs_no_target_set() {
    let (s, _, _) = moons(9);
    let cfg = TrainConfig {
        method: Method::SrcPref,
        ..quick_cfg()
    };
    let out = train(&small_model(), &cfg, &s, &[], &EvalSets::default()).unwrap();
    // 40 source points pair into 20 triples, batches of 8
    assert_eq!(out.final_metrics.steps, 2 * 3);
    assert!(matches!(
        train(&small_model(), &quick_cfg(), &s, &[], &EvalSets::default()),
        Err(DialError::Empty(_))
    ));
}
