//! CLEAR MOT evaluation (MOTA, MOTP, IDS, FRAG, FP, FN), MT/ML coverage,
//! and pairwise matching accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hungarian::max_weight_matching;
use crate::types::TrackBox;

/// How a hypothesis box is compared to a ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatchCriterion {
    /// 2D image-plane IoU; pairs below `threshold` never match.
    Iou2d { threshold: f64 },
    /// 3D center distance; pairs farther than `max_distance_m` never match.
    /// Similarity is `1 - distance / max_distance_m`.
    Center3d { max_distance_m: f64 },
}

impl Default for MatchCriterion {
    fn default() -> Self {
        MatchCriterion::Iou2d { threshold: 0.5 }
    }
}

impl MatchCriterion {
    /// Similarity of a pair, or `None` when the pair may not match.
    pub fn similarity(&self, gt: &TrackBox, hyp: &TrackBox) -> Option<f64> {
        match *self {
            MatchCriterion::Iou2d { threshold } => {
                let s = gt.box2d.iou(&hyp.box2d);
                (s >= threshold && s > 0.0).then_some(s)
            }
            MatchCriterion::Center3d { max_distance_m } => {
                let d = gt.box3d.center_distance(&hyp.box3d);
                (d <= max_distance_m).then(|| 1.0 - d / max_distance_m)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MatchCriterion::Iou2d { threshold } if !(threshold > 0.0 && threshold <= 1.0) => {
                Err(Error::Config(format!("iou threshold must be in (0, 1], got {threshold}")))
            }
            MatchCriterion::Center3d { max_distance_m } if !(max_distance_m > 0.0 && max_distance_m.is_finite()) => {
                Err(Error::Config(format!("center distance threshold must be positive, got {max_distance_m}")))
            }
            _ => Ok(()),
        }
    }
}

/// One ground-truth to hypothesis correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt_track: u64,
    pub hyp_track: u64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMatches {
    pub frame_idx: usize,
    pub pairs: Vec<MatchPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub mota: f64,
    pub motp: f64,
    pub ids: usize,
    pub frag: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub num_gt: usize,
    pub num_matches: usize,
    pub similarity_sum: f64,
    pub gt_tracks: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub mt_fraction: f64,
    pub ml_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<FrameMatches>,
}

impl MotReport {
    fn finalize(&mut self) {
        self.mota = 1.0 - (self.fn_ + self.fp + self.ids) as f64 / self.num_gt as f64;
        self.motp = if self.num_matches == 0 {
            0.0
        } else {
            self.similarity_sum / self.num_matches as f64
        };
        let tracks = self.gt_tracks.max(1) as f64;
        self.mt_fraction = self.mostly_tracked as f64 / tracks;
        self.ml_fraction = self.mostly_lost as f64 / tracks;
    }

    /// Flat `key=value` lines.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mota={}", self.mota);
        let _ = writeln!(s, "motp={}", self.motp);
        let _ = writeln!(s, "ids={}", self.ids);
        let _ = writeln!(s, "frag={}", self.frag);
        let _ = writeln!(s, "fp={}", self.fp);
        let _ = writeln!(s, "fn={}", self.fn_);
        let _ = writeln!(s, "num_gt={}", self.num_gt);
        let _ = writeln!(s, "num_matches={}", self.num_matches);
        let _ = writeln!(s, "gt_tracks={}", self.gt_tracks);
        let _ = writeln!(s, "mostly_tracked={}", self.mostly_tracked);
        let _ = writeln!(s, "mostly_lost={}", self.mostly_lost);
        let _ = writeln!(s, "mt_fraction={}", self.mt_fraction);
        let _ = writeln!(s, "ml_fraction={}", self.ml_fraction);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// CLEAR MOT evaluation of one sequence.
///
/// Per frame, correspondences from the previous frame are kept when the
/// same hypothesis id is present and still matchable; the remaining boxes
/// are matched by maximum total similarity. An id switch is counted when a
/// ground-truth track is matched to a hypothesis id different from its most
/// recent one. A fragmentation is counted each time a ground-truth track
/// becomes matched again after at least one unmatched frame.
pub fn evaluate(hyp: &[TrackBox], gt: &[TrackBox], criterion: MatchCriterion) -> Result<MotReport> {
    criterion.validate()?;
    if gt.is_empty() {
        return Err(Error::InvalidInput("ground truth is empty; MOTA is undefined".into()));
    }
    let mut gt_frames: BTreeMap<usize, Vec<&TrackBox>> = BTreeMap::new();
    let mut hyp_frames: BTreeMap<usize, Vec<&TrackBox>> = BTreeMap::new();
    for b in gt {
        gt_frames.entry(b.frame_idx).or_default().push(b);
    }
    for b in hyp {
        hyp_frames.entry(b.frame_idx).or_default().push(b);
    }
    let mut frames: Vec<usize> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let mut report = MotReport {
        mota: 0.0,
        motp: 0.0,
        ids: 0,
        frag: 0,
        fp: 0,
        fn_: 0,
        num_gt: gt.len(),
        num_matches: 0,
        similarity_sum: 0.0,
        gt_tracks: 0,
        mostly_tracked: 0,
        mostly_lost: 0,
        mt_fraction: 0.0,
        ml_fraction: 0.0,
        frames: Vec::with_capacity(frames.len()),
    };

    // Correspondences of the immediately preceding frame.
    let mut prev: HashMap<u64, u64> = HashMap::new();
    let mut prev_frame: Option<usize> = None;
    let mut last_hyp: HashMap<u64, u64> = HashMap::new();
    // Per GT track: (frames present, frames matched, was matched before, last frame present was matched).
    let mut coverage: BTreeMap<u64, (usize, usize, bool, bool)> = BTreeMap::new();
    let empty = Vec::new();

    for &f in &frames {
        let g = gt_frames.get(&f).unwrap_or(&empty);
        let h = hyp_frames.get(&f).unwrap_or(&empty);
        let mut gt_used = vec![false; g.len()];
        let mut hyp_used = vec![false; h.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();

        if prev_frame.is_some_and(|p| p + 1 == f) {
            for (gi, gb) in g.iter().enumerate() {
                let Some(&hid) = prev.get(&gb.track_id) else { continue };
                let best = h
                    .iter()
                    .enumerate()
                    .filter(|(hi, hb)| !hyp_used[*hi] && hb.track_id == hid)
                    .filter_map(|(hi, hb)| criterion.similarity(gb, hb).map(|s| (hi, s)))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                if let Some((hi, s)) = best {
                    gt_used[gi] = true;
                    hyp_used[hi] = true;
                    pairs.push((gi, hi, s));
                }
            }
        }

        let free_g: Vec<usize> = (0..g.len()).filter(|&i| !gt_used[i]).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|&i| !hyp_used[i]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            // Forbidden pairs get -1 so they fall below the 0 threshold.
            let w: Vec<Vec<f64>> = free_g
                .iter()
                .map(|&gi| free_h.iter().map(|&hi| criterion.similarity(g[gi], h[hi]).unwrap_or(-1.0)).collect())
                .collect();
            for (r, c, s) in max_weight_matching(&w, 0.0) {
                pairs.push((free_g[r], free_h[c], s));
                gt_used[free_g[r]] = true;
                hyp_used[free_h[c]] = true;
            }
        }

        let mut matched_now: HashMap<u64, u64> = HashMap::new();
        let mut frame_pairs = Vec::with_capacity(pairs.len());
        pairs.sort_by_key(|p| p.0);
        for &(gi, hi, s) in &pairs {
            let (gid, hid) = (g[gi].track_id, h[hi].track_id);
            if let Some(&old) = last_hyp.get(&gid) {
                if old != hid {
                    report.ids += 1;
                }
            }
            last_hyp.insert(gid, hid);
            matched_now.insert(gid, hid);
            report.num_matches += 1;
            report.similarity_sum += s;
            frame_pairs.push(MatchPair {
                gt_track: gid,
                hyp_track: hid,
                similarity: s,
            });
        }
        report.fn_ += g.len() - pairs.len();
        report.fp += h.len() - pairs.len();

        for gb in g {
            let c = coverage.entry(gb.track_id).or_insert((0, 0, false, false));
            let matched = matched_now.contains_key(&gb.track_id);
            c.0 += 1;
            if matched {
                c.1 += 1;
                if c.2 && !c.3 {
                    report.frag += 1;
                }
                c.2 = true;
            }
            c.3 = matched;
        }

        report.frames.push(FrameMatches {
            frame_idx: f,
            pairs: frame_pairs,
        });
        prev = matched_now;
        prev_frame = Some(f);
    }

    report.gt_tracks = coverage.len();
    for &(present, matched, _, _) in coverage.values() {
        let ratio = matched as f64 / present as f64;
        if ratio > 0.8 {
            report.mostly_tracked += 1;
        }
        if ratio < 0.2 {
            report.mostly_lost += 1;
        }
    }
    report.finalize();
    Ok(report)
}

/// Sums counts across sequences and recomputes the ratios. Per-frame match
/// lists are dropped.
pub fn aggregate(reports: &[MotReport]) -> Result<MotReport> {
    let mut total = MotReport {
        mota: 0.0,
        motp: 0.0,
        ids: 0,
        frag: 0,
        fp: 0,
        fn_: 0,
        num_gt: 0,
        num_matches: 0,
        similarity_sum: 0.0,
        gt_tracks: 0,
        mostly_tracked: 0,
        mostly_lost: 0,
        mt_fraction: 0.0,
        ml_fraction: 0.0,
        frames: Vec::new(),
    };
    for r in reports {
        total.ids += r.ids;
        total.frag += r.frag;
        total.fp += r.fp;
        total.fn_ += r.fn_;
        total.num_gt += r.num_gt;
        total.num_matches += r.num_matches;
        total.similarity_sum += r.similarity_sum;
        total.gt_tracks += r.gt_tracks;
        total.mostly_tracked += r.mostly_tracked;
        total.mostly_lost += r.mostly_lost;
    }
    if total.num_gt == 0 {
        return Err(Error::InvalidInput("no ground truth across reports".into()));
    }
    total.finalize();
    Ok(total)
}

/// Fraction of pairs whose prediction (`score > 0`) disagrees with the label.
pub fn matching_accuracy(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "need equally many nonzero scores and labels, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    let wrong = scores.iter().zip(labels).filter(|(s, l)| (**s > 0.0) != **l).count();
    Ok(wrong as f64 / scores.len() as f64)
}
