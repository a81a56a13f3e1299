use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dial_core::autodiff::Graph;
use dial_core::datagen::{gen_two_moons, MoonShift, TwoMoonsConfig};
use dial_core::losses::{gap_node, penalty_node, source_loss_node, SourceBatch};
use dial_core::model::{batch_matrix, Trainable};
use dial_core::oracle::hungarian;
use dial_core::{ModelConfig, ModelParams, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn bench_hungarian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hungarian");
    for n in [32usize, 128, 256] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| hungarian::solve(black_box(&cost), n).unwrap())
        });
    }
    group.finish();
}

fn moons(n: usize) -> (Vec<dial_core::PreferenceTriple>, Vec<dial_core::Example>) {
    let (s, t, _) = gen_two_moons(&TwoMoonsConfig::new(n, n, MoonShift::fewshot(), 0)).unwrap();
    (s.preference_triples, t.examples)
}

fn bench_backward(c: &mut Criterion) {
    let cfg = ModelConfig {
        input_dim: 2,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (src, tgt) = moons(64);
    let batch = SourceBatch::from_triples(&src[..16]).unwrap();
    let xt = batch_matrix(&tgt[..32]).unwrap();
    c.bench_function("backward/fused_objective", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let model = params.bind(&mut g, Trainable::ALL);
            let xs = g.constant(batch.input.clone());
            let xt = g.constant(xt.clone());
            let es = model.embed(&mut g, xs).unwrap();
            let et = model.embed(&mut g, xt).unwrap();
            let src_loss = source_loss_node(&mut g, &model, es, &batch).unwrap();
            let gap = gap_node(&mut g, &model, es, et).unwrap();
            let pen = penalty_node(&mut g, &model, et).unwrap();
            let a = g.add(src_loss, gap).unwrap();
            let loss = g.add(a, pen).unwrap();
            black_box(g.backward(loss).unwrap());
        })
    });
}

fn bench_train_step(c: &mut Criterion) {
    let (src, tgt) = moons(200);
    let cfg = ModelConfig {
        input_dim: 2,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        batch_src: 32,
        batch_tgt: 32,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg, tc).unwrap();
    c.bench_function("train_step/dial_two_moons", |b| {
        b.iter(|| black_box(t.train_step(&src[..32], &tgt[..32]).unwrap()))
    });
}

criterion_group!(benches, bench_hungarian, bench_backward, bench_train_step);
criterion_main!(benches);
