//! Inference over whole sequences: window splitting, scoring, solving, and
//! conversion of the decoded trajectories into track boxes.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::{build_graph, AssociationGraph, Assignment, GateConfig};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::scoring::{score_features, CostModel, GraphFeatures};
use crate::solver::{solve_costs, SolverOptions};
use crate::types::{decode_trajectories, Box2D, Box3D, TrackBox, TrackSequence, Trajectory};

/// Settings shared by training and inference for building the association
/// problems of a sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub gate: GateConfig,
    /// Frames per window; `None` treats the whole sequence as one window.
    /// Windows do not overlap.
    pub window_length: Option<usize>,
}

/// Splits `0..num_frames` into consecutive non-overlapping windows.
pub fn split_windows(num_frames: usize, length: Option<usize>) -> Result<Vec<Range<usize>>> {
    if num_frames == 0 {
        return Err(Error::InvalidInput("sequence has no frames".into()));
    }
    let len = match length {
        None => num_frames,
        Some(0) => return Err(Error::Config("window length must be positive".into())),
        Some(l) => l,
    };
    Ok((0..num_frames)
        .step_by(len)
        .map(|s| s..(s + len).min(num_frames))
        .collect())
}

/// 2D and 3D boxes of every layout detection, so decoded assignments can be
/// turned into track boxes without the source sequence.
pub fn layout_boxes(graph: &AssociationGraph, seq: &TrackSequence) -> Vec<(Box2D, Box3D)> {
    graph
        .layout
        .detections
        .iter()
        .map(|n| {
            let d = &seq.frames[n.frame_idx][n.index_in_frame];
            (d.box2d, d.box3d)
        })
        .collect()
}

/// Decodes an assignment into track boxes. Track ids are offset by
/// `id_offset`.
pub fn assignment_boxes(graph: &AssociationGraph, assignment: &Assignment, boxes: &[(Box2D, Box3D)], id_offset: u64) -> Result<Vec<TrackBox>> {
    let tracks = decode_trajectories(assignment, graph)?;
    let mut out = Vec::new();
    for t in &tracks {
        for &(frame_idx, det_id) in &t.entries {
            let j = graph
                .layout
                .index_of(det_id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown detection id {det_id}")))?;
            out.push(TrackBox {
                frame_idx,
                track_id: t.track_id + id_offset,
                box2d: boxes[j].0,
                box3d: boxes[j].1,
                score: 1.0,
            });
        }
    }
    out.sort_by_key(|b| (b.frame_idx, b.track_id));
    Ok(out)
}

/// Result of tracking one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub trajectories: Vec<Trajectory>,
    pub boxes: Vec<TrackBox>,
}

/// Scores and solves every window of `seq`. Track ids are unique across
/// windows; a trajectory never crosses a window boundary.
pub fn track_sequence(model: &CostModel, seq: &TrackSequence, features: &FeatureConfig, cfg: &TrackingConfig) -> Result<TrackOutput> {
    let windows = split_windows(seq.num_frames(), cfg.window_length)?;
    let per_window: Vec<Result<Vec<Trajectory>>> = windows
        .par_iter()
        .map(|w| {
            let graph = build_graph(seq, w.clone(), &cfg.gate)?;
            let feats = GraphFeatures::build(&graph, seq, features);
            let (theta, _) = score_features(model, &graph, &feats)?;
            Ok(solve_costs(&graph, &theta, SolverOptions::default())?.trajectories)
        })
        .collect();
    let mut trajectories = Vec::new();
    for r in per_window {
        for mut t in r? {
            t.track_id = trajectories.len() as u64;
            trajectories.push(t);
        }
    }
    let mut boxes = Vec::new();
    for t in &trajectories {
        for &(frame_idx, det_id) in &t.entries {
            let d = seq
                .find(frame_idx, det_id)
                .ok_or_else(|| Error::InvalidInput(format!("detection {det_id} missing from frame {frame_idx}")))?;
            boxes.push(TrackBox {
                frame_idx,
                track_id: t.track_id,
                box2d: d.box2d,
                box3d: d.box3d,
                score: d.raw_score.unwrap_or(1.0),
            });
        }
    }
    boxes.sort_by_key(|b| (b.frame_idx, b.track_id));
    Ok(TrackOutput { trajectories, boxes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::scoring::ScorerConfig;
    use crate::testutil::{det_at, seq_from_frames};

    #[test]
    fn windows_cover_sequence() {
        assert_eq!(split_windows(5, None).unwrap(), vec![0..5]);
        assert_eq!(split_windows(5, Some(2)).unwrap(), vec![0..2, 2..4, 4..5]);
        assert!(split_windows(0, None).is_err());
        assert!(split_windows(3, Some(0)).is_err());
    }

    #[test]
    fn hand_set_model_links_everything() {
        let frames = (0..4).map(|f| vec![det_at(f as u64, f, 10.0 + 0.5 * f as f64, 0.0)]).collect();
        let seq = seq_from_frames(frames);
        let feat = FeatureConfig::default();
        let mut m = CostModel::zeros(&feat, &ScorerConfig::default());
        m.det.layers.last_mut().unwrap().biases[0] = 1.0;
        m.link.fusion.biases[0] = 1.0;
        m.theta_new = -0.5;
        m.theta_end = -0.5;
        let out = track_sequence(&m, &seq, &feat, &TrackingConfig::default()).unwrap();
        assert_eq!(out.trajectories.len(), 1);
        assert_eq!(out.boxes.len(), 4);

        let cfg = TrackingConfig { window_length: Some(2), ..Default::default() };
        let out = track_sequence(&m, &seq, &feat, &cfg).unwrap();
        assert_eq!(out.trajectories.len(), 2);
        assert_eq!(out.trajectories[1].track_id, 1);
    }
}
