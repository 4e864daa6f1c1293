use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dsmt_core::datagen::{generate, make_benchmark};
use dsmt_core::features::{pair_features, rasterize_bev};
use dsmt_core::learning::{loss_and_gradient, prepare_windows, TrainingWindow};
use dsmt_core::scoring::score_graph;
use dsmt_core::solver::solve;
use dsmt_core::{build_graph, track_sequence, CostModel, FeatureConfig, GateConfig, ScorerConfig, TrackingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn standard_scenario() -> dsmt_core::datagen::Scenario {
    generate(&make_benchmark("standard", 0).unwrap()[0]).unwrap()
}

fn model(seed: u64) -> CostModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CostModel::truncated_normal(&FeatureConfig::default(), &ScorerConfig::default(), 1e-3, &mut rng)
}

fn bench_solver(c: &mut Criterion) {
    let s = standard_scenario();
    let mut group = c.benchmark_group("solver");
    for frames in [5usize, 10, 20, 40] {
        let graph = build_graph(&s.seq, 0..frames, &GateConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(frames as u64);
        let costs: Vec<f64> = (0..graph.num_vars()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let graph = graph.with_costs(costs).unwrap();
        group.bench_with_input(BenchmarkId::new("ssp", frames), &graph, |b, g| b.iter(|| solve(black_box(g)).unwrap()));
    }
    group.finish();
}

fn bench_features(c: &mut Criterion) {
    let s = standard_scenario();
    let cfg = FeatureConfig::default();
    let (a, b) = (&s.seq.frames[0][0], &s.seq.frames[1][0]);
    c.bench_function("features/rasterize_bev", |bch| bch.iter(|| rasterize_bev(black_box(&a.box3d), &cfg.bev)));
    c.bench_function("features/pair_features", |bch| {
        bch.iter(|| pair_features(black_box(a), black_box(b), &s.seq.ego[0], &s.seq.camera, &cfg).unwrap())
    });
}

fn bench_scoring_and_training(c: &mut Criterion) {
    let s = standard_scenario();
    let feat = FeatureConfig::default();
    let tracking = TrackingConfig::default();
    let m = model(0);
    let graph = build_graph(&s.seq, 0..s.seq.num_frames(), &tracking.gate).unwrap();
    c.bench_function("scoring/score_graph_40_frames", |b| b.iter(|| score_graph(black_box(&m), &graph, &s.seq, &feat).unwrap()));
    c.bench_function("pipeline/track_sequence_40_frames", |b| {
        b.iter(|| track_sequence(black_box(&m), &s.seq, &feat, &tracking).unwrap())
    });
    let windows: Vec<TrainingWindow> = prepare_windows(&s.seq, &s.gt, &feat, &tracking, 0.5).unwrap();
    let refs: Vec<&TrainingWindow> = windows.iter().collect();
    c.bench_function("learning/loss_and_gradient_one_sequence", |b| {
        b.iter(|| loss_and_gradient(black_box(&m), &refs, &Default::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_solver, bench_features, bench_scoring_and_training
}
criterion_main!(benches);
