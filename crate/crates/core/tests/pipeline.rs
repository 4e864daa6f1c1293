//! Generation, training, tracking and evaluation wired together.

use dsmt_core::assoc::{build_graph, derive_gold, GateConfig};
use dsmt_core::datagen::{generate, make_benchmark, ScenarioConfig};
use dsmt_core::learning::{prepare_windows, structured_loss, train_end_to_end, TrainConfig};
use dsmt_core::metrics::{evaluate, MatchCriterion};
use dsmt_core::types::{decode_trajectories, trajectories_to_boxes};
use dsmt_core::{track_sequence, CostModel, FeatureConfig, ScorerConfig, TrackingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn short_training_lowers_loss_and_tracks_a_held_out_sequence() {
    let feat = FeatureConfig::default();
    let tracking = TrackingConfig::default();
    let scen: Vec<_> = make_benchmark("smoke", 11).unwrap().iter().map(|c| generate(c).unwrap()).collect();
    let windows = prepare_windows(&scen[0].seq, &scen[0].gt, &feat, &tracking, 0.5).unwrap();
    let cfg = TrainConfig { lr: 1e-3, iterations: 30, batch_size: windows.len(), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let init = CostModel::truncated_normal(&feat, &ScorerConfig::default(), cfg.init_std, &mut rng);
    let before = structured_loss(&init, &windows, &cfg.hamming).unwrap();
    let mut logged = 0;
    let out = train_end_to_end(init, &windows, &cfg, |_| logged += 1).unwrap();
    assert_eq!(logged, 30);
    let after = structured_loss(&out.model, &windows, &cfg.hamming).unwrap();
    assert!(after < before, "loss {before} -> {after}");

    let tracked = track_sequence(&out.model, &scen[1].seq, &feat, &tracking).unwrap();
    let report = evaluate(&tracked.boxes, &scen[1].gt, MatchCriterion::default()).unwrap();
    assert!(report.mota > 0.0, "MOTA {}", report.mota);
    let again = track_sequence(&out.model, &scen[1].seq, &feat, &tracking).unwrap();
    assert_eq!(again, tracked);
}

#[test]
fn windowed_tracking_never_crosses_window_boundaries() {
    let feat = FeatureConfig::default();
    let s = generate(&make_benchmark("smoke", 2).unwrap()[0]).unwrap();
    let mut model = CostModel::zeros(&feat, &ScorerConfig::default());
    model.det.layers.last_mut().unwrap().biases[0] = 3.0;
    model.link.fusion.biases[0] = 1.0;
    model.theta_new = -1.0;
    model.theta_end = -1.0;
    let tracking = TrackingConfig { window_length: Some(4), ..Default::default() };
    let out = track_sequence(&model, &s.seq, &feat, &tracking).unwrap();
    for t in &out.trajectories {
        let first = t.entries[0].0;
        let last = t.entries.last().unwrap().0;
        assert_eq!(first / 4, last / 4, "track {} spans frames {first}..={last}", t.track_id);
    }
    let ids: std::collections::HashSet<u64> = out.trajectories.iter().map(|t| t.track_id).collect();
    assert_eq!(ids.len(), out.trajectories.len());
}

#[test]
fn clutter_free_candidates_overlap_ground_truth() {
    let mut matched = 0usize;
    let mut total = 0usize;
    for seed in 0..10 {
        let cfg = ScenarioConfig { clutter_rate: 0.0, sigma_pos: 0.3, seed, ..Default::default() };
        let s = generate(&cfg).unwrap();
        for d in s.seq.frames.iter().flatten() {
            total += 1;
            if s.gt.iter().any(|g| g.frame_idx == d.frame_idx && g.box2d.iou(&d.box2d) > 0.0) {
                matched += 1;
            }
        }
    }
    assert!(matched as f64 >= 0.99 * total as f64, "{matched} of {total}");
}

#[test]
fn gold_of_noisy_data_is_feasible_and_decodes() {
    for cfg in make_benchmark("hard", 5).unwrap().into_iter().take(4) {
        let s = generate(&cfg).unwrap();
        let g = build_graph(&s.seq, 0..s.seq.num_frames(), &GateConfig::default()).unwrap();
        let gold = derive_gold(&g, &s.seq, &s.gt, 0.5);
        assert!(g.check_feasible(&gold.assignment).unwrap().is_feasible());
        let tracks = decode_trajectories(&gold.assignment, &g).unwrap();
        let report = evaluate(&trajectories_to_boxes(&s.seq, &tracks), &s.gt, MatchCriterion::default()).unwrap();
        assert_eq!(report.fp, 0);
        // Misses split trajectories, so only the unmatched boxes are lost.
        assert_eq!(report.fn_, gold.unmatched_gt_count);
    }
}
