//! Handcrafted pairwise affinities with cross-validated decision thresholds,
//! the reference points for the learned match scorer.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::GateConfig;
use crate::error::{Error, Result};
use crate::features::{pair_features, FeatureConfig};
use crate::hungarian::max_weight_matching;
use crate::scoring::CostModel;
use crate::types::{Detection, TrackBox, TrackSequence};

/// Denominator guard of the chi-square distance.
pub const CHI_SQUARE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityKind {
    Cosine,
    Correlation,
    Bhattacharyya,
    ChiSquare,
    BboxSize,
    BboxPosition,
    BboxOverlap,
    Orientation,
}

impl AffinityKind {
    pub const ALL: [AffinityKind; 8] = [
        AffinityKind::Cosine,
        AffinityKind::Correlation,
        AffinityKind::Bhattacharyya,
        AffinityKind::ChiSquare,
        AffinityKind::BboxSize,
        AffinityKind::BboxPosition,
        AffinityKind::BboxOverlap,
        AffinityKind::Orientation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AffinityKind::Cosine => "cosine",
            AffinityKind::Correlation => "correlation",
            AffinityKind::Bhattacharyya => "bhattacharyya",
            AffinityKind::ChiSquare => "chi_square",
            AffinityKind::BboxSize => "bbox_size",
            AffinityKind::BboxPosition => "bbox_position",
            AffinityKind::BboxOverlap => "bbox_overlap",
            AffinityKind::Orientation => "orientation",
        }
    }

    /// Whether larger raw values mean "more alike". Only the chi-square
    /// distance runs the other way.
    pub fn higher_is_similar(self) -> bool {
        self != AffinityKind::ChiSquare
    }
}

impl fmt::Display for AffinityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AffinityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AffinityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown affinity kind {s:?}")))
    }
}

fn flat(d: &Detection) -> Vec<f64> {
    d.appearance_flat().collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter().map(|x| x / s).collect()
    } else {
        v.to_vec()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na > 0.0 && nb > 0.0 {
        dot / (na * nb)
    } else {
        0.0
    }
}

/// Pearson correlation; 0 when either vector is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let ca: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let cb: Vec<f64> = b.iter().map(|x| x - mb).collect();
    cosine(&ca, &cb)
}

/// Bhattacharyya coefficient of two histograms, normalized to sum 1.
pub fn bhattacharyya(a: &[f64], b: &[f64]) -> f64 {
    let (p, q) = (normalized(a), normalized(b));
    p.iter().zip(&q).map(|(x, y)| (x * y).sqrt()).sum()
}

/// Chi-square distance of two histograms, normalized to sum 1.
pub fn chi_square(a: &[f64], b: &[f64]) -> f64 {
    let (p, q) = (normalized(a), normalized(b));
    p.iter().zip(&q).map(|(x, y)| (x - y) * (x - y) / (x + y + CHI_SQUARE_EPS)).sum()
}

/// Raw affinity value of a detection pair.
pub fn affinity(a: &Detection, b: &Detection, kind: AffinityKind) -> Result<f64> {
    let hist = matches!(kind, AffinityKind::Bhattacharyya | AffinityKind::ChiSquare);
    if hist && a.appearance_flat().chain(b.appearance_flat()).any(|v| v < 0.0) {
        return Err(Error::InvalidInput(format!("{kind} needs nonnegative appearance values")));
    }
    Ok(match kind {
        AffinityKind::Cosine => cosine(&flat(a), &flat(b)),
        AffinityKind::Correlation => correlation(&flat(a), &flat(b)),
        AffinityKind::Bhattacharyya => bhattacharyya(&flat(a), &flat(b)),
        AffinityKind::ChiSquare => chi_square(&flat(a), &flat(b)),
        AffinityKind::BboxSize => {
            let (x, y) = (a.box2d.area(), b.box2d.area());
            x.min(y) / x.max(y)
        }
        AffinityKind::BboxPosition => -a.box3d.center_distance(&b.box3d),
        AffinityKind::BboxOverlap => a.box2d.iou(&b.box2d),
        AffinityKind::Orientation => (a.box3d.yaw - b.box3d.yaw).cos(),
    })
}

/// Affinity oriented so that larger always means "same object".
pub fn oriented_affinity(a: &Detection, b: &Detection, kind: AffinityKind) -> Result<f64> {
    let v = affinity(a, b, kind)?;
    Ok(if kind.higher_is_similar() { v } else { -v })
}

/// A cross-validated decision threshold; a pair is predicted to match when
/// its oriented score is strictly greater than `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub validation_error: f64,
}

/// Misclassification rate at `threshold`.
pub fn error_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let wrong = scores.iter().zip(labels).filter(|(s, l)| (**s > threshold) != **l).count();
    wrong as f64 / scores.len() as f64
}

/// Picks the threshold with the lowest error on the validation scores among
/// candidates taken from the fit scores: every midpoint between consecutive
/// distinct values, plus one value below the minimum and one above the
/// maximum. Ties go to the lowest threshold. An empty validation set falls
/// back to the fit set.
pub fn fit_threshold(fit_scores: &[f64], fit_labels: &[bool], val_scores: &[f64], val_labels: &[bool]) -> Result<ThresholdFit> {
    if fit_scores.len() != fit_labels.len() || val_scores.len() != val_labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    if fit_scores.iter().chain(val_scores).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("affinity score".into()));
    }
    let pos = fit_labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == fit_labels.len() {
        return Err(Error::InvalidInput("threshold fitting needs both classes".into()));
    }
    let (vs, vl) = if val_scores.is_empty() { (fit_scores, fit_labels) } else { (val_scores, val_labels) };

    let mut distinct: Vec<f64> = fit_scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(distinct[0] - 1.0);
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(distinct[distinct.len() - 1] + 1.0);

    // Sweep candidates in increasing order; err(t) = positives with s <= t
    // plus negatives with s > t.
    let mut val: Vec<(f64, bool)> = vs.iter().copied().zip(vl.iter().copied()).collect();
    val.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_neg = val.iter().filter(|p| !p.1).count();
    let (mut i, mut pos_below, mut neg_below) = (0, 0usize, 0usize);
    let mut best: Option<(usize, f64)> = None;
    for &t in &candidates {
        while i < val.len() && val[i].0 <= t {
            if val[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let wrong = pos_below + (total_neg - neg_below);
        if best.is_none_or(|(w, _)| wrong < w) {
            best = Some((wrong, t));
        }
    }
    let (wrong, threshold) = best.expect("at least two candidates");
    Ok(ThresholdFit {
        threshold,
        validation_error: wrong as f64 / val.len() as f64,
    })
}

/// A candidate pair across adjacent frames of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRef {
    pub seq: usize,
    pub frame: usize,
    /// Index of the earlier detection within `frame`.
    pub a: usize,
    /// Index of the later detection within `frame + 1`.
    pub b: usize,
    pub label: bool,
}

/// All adjacent-frame pairs passing `gate`, labeled by `same_object`.
pub fn enumerate_pairs(seq_idx: usize, seq: &TrackSequence, gate: &GateConfig, same_object: impl Fn(&Detection, &Detection) -> bool) -> Vec<PairRef> {
    let mut out = Vec::new();
    for f in 0..seq.num_frames().saturating_sub(1) {
        for (a, da) in seq.frames[f].iter().enumerate() {
            for (b, db) in seq.frames[f + 1].iter().enumerate() {
                if gate.admits(da.box3d.center_distance(&db.box3d)) {
                    out.push(PairRef {
                        seq: seq_idx,
                        frame: f,
                        a,
                        b,
                        label: same_object(da, db),
                    });
                }
            }
        }
    }
    out
}

/// Ground-truth track of every detection that overlaps a label: per frame,
/// maximum-weight matching on 2D IoU, pairs below `iou_threshold`
/// discarded. Indexed as `[frame][index in frame]`.
pub fn detection_identities(seq: &TrackSequence, gt: &[TrackBox], iou_threshold: f64) -> Vec<Vec<Option<u64>>> {
    let mut by_frame: Vec<Vec<&TrackBox>> = vec![Vec::new(); seq.num_frames()];
    for b in gt.iter().filter(|b| b.frame_idx < seq.num_frames()) {
        by_frame[b.frame_idx].push(b);
    }
    seq.frames
        .iter()
        .zip(&by_frame)
        .map(|(dets, labels)| {
            let mut ids = vec![None; dets.len()];
            let w: Vec<Vec<f64>> = dets.iter().map(|d| labels.iter().map(|g| d.box2d.iou(&g.box2d)).collect()).collect();
            if !labels.is_empty() {
                for (i, j, _) in max_weight_matching(&w, iou_threshold) {
                    ids[i] = Some(labels[j].track_id);
                }
            }
            ids
        })
        .collect()
}

/// Adjacent-frame pairs passing `gate`, positive when both detections match
/// the same ground-truth track.
pub fn labeled_pairs(seq_idx: usize, seq: &TrackSequence, gt: &[TrackBox], gate: &GateConfig, iou_threshold: f64) -> Vec<PairRef> {
    let ids = detection_identities(seq, gt, iou_threshold);
    let mut pairs = enumerate_pairs(seq_idx, seq, gate, |_, _| false);
    for p in &mut pairs {
        let (x, y) = (ids[p.frame][p.a], ids[p.frame + 1][p.b]);
        p.label = x.is_some() && x == y;
    }
    pairs
}

/// Link scores of the learned match scorer for `pairs`.
pub fn learned_pair_scores(model: &CostModel, seqs: &[TrackSequence], pairs: &[PairRef], features: &FeatureConfig) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|p| {
            let s = &seqs[p.seq];
            let f = pair_features(&s.frames[p.frame][p.a], &s.frames[p.frame + 1][p.b], &s.ego[p.frame], &s.camera, features)?;
            let score = model.link.forward(&f).0;
            if score.is_finite() {
                Ok(score)
            } else {
                Err(Error::NonFinite("learned match score".into()))
            }
        })
        .collect()
}

/// Oriented scores of `pairs` under `kind`.
pub fn pair_scores(seqs: &[TrackSequence], pairs: &[PairRef], kind: AffinityKind) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            let s = &seqs[p.seq];
            oriented_affinity(&s.frames[p.frame][p.a], &s.frames[p.frame + 1][p.b], kind)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityResult {
    pub kind: AffinityKind,
    pub threshold: f64,
    pub validation_error: f64,
    pub test_error: f64,
}

/// Fits every affinity's threshold on `fit`/`val` and reports its error on
/// `test`.
pub fn benchmark_affinities(seqs: &[TrackSequence], fit: &[PairRef], val: &[PairRef], test: &[PairRef]) -> Result<Vec<AffinityResult>> {
    if test.is_empty() {
        return Err(Error::InvalidInput("no test pairs".into()));
    }
    let labels = |ps: &[PairRef]| ps.iter().map(|p| p.label).collect::<Vec<_>>();
    let (fl, vl, tl) = (labels(fit), labels(val), labels(test));
    AffinityKind::ALL
        .into_iter()
        .map(|kind| {
            let fs = pair_scores(seqs, fit, kind)?;
            let vs = pair_scores(seqs, val, kind)?;
            let ts = pair_scores(seqs, test, kind)?;
            let t = fit_threshold(&fs, &fl, &vs, &vl)?;
            Ok(AffinityResult {
                kind,
                threshold: t.threshold,
                validation_error: t.validation_error,
                test_error: error_at(&ts, &tl, t.threshold),
            })
        })
        .collect()
}

/// Name of the learned matcher's row in the comparison table.
pub const LEARNED_MATCHER: &str = "learned";

/// One row of the matcher comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchBenchRow {
    pub method: String,
    pub threshold: f64,
    pub validation_error: f64,
    pub test_error: f64,
}

/// Every affinity baseline followed by the learned matcher, each with its
/// threshold fitted on `fit`/`val` and its error measured on `test`.
pub fn match_benchmark(
    seqs: &[TrackSequence],
    model: &CostModel,
    features: &FeatureConfig,
    fit: &[PairRef],
    val: &[PairRef],
    test: &[PairRef],
) -> Result<Vec<MatchBenchRow>> {
    let mut rows: Vec<MatchBenchRow> = benchmark_affinities(seqs, fit, val, test)?
        .into_iter()
        .map(|r| MatchBenchRow {
            method: r.kind.name().into(),
            threshold: r.threshold,
            validation_error: r.validation_error,
            test_error: r.test_error,
        })
        .collect();
    let labels = |ps: &[PairRef]| ps.iter().map(|p| p.label).collect::<Vec<_>>();
    let fs = learned_pair_scores(model, seqs, fit, features)?;
    let vs = learned_pair_scores(model, seqs, val, features)?;
    let ts = learned_pair_scores(model, seqs, test, features)?;
    let t = fit_threshold(&fs, &labels(fit), &vs, &labels(val))?;
    rows.push(MatchBenchRow {
        method: LEARNED_MATCHER.into(),
        threshold: t.threshold,
        validation_error: t.validation_error,
        test_error: error_at(&ts, &labels(test), t.threshold),
    });
    Ok(rows)
}

/// Plain-text table, one row per method.
pub fn format_match_table(rows: &[MatchBenchRow]) -> String {
    let mut out = format!("{:<14} {:>14} {:>10} {:>10}\n", "method", "threshold", "val_error", "test_error");
    for r in rows {
        out += &format!("{:<14} {:>14.6} {:>10.6} {:>10.6}\n", r.method, r.threshold, r.validation_error, r.test_error);
    }
    out
}
