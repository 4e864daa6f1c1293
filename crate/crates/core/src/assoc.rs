//! The association problem for one temporal window: variable layout,
//! flow-conservation constraints, and gold assignments from labels.
//!
//! Variables are laid out as `(det, link, new, end)`: indices `0..k` are the
//! detection variables, followed by one variable per linkable pair, then the
//! `k` trajectory-start and `k` trajectory-end variables.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FlowSide, Result};
use crate::hungarian::max_weight_matching;
use crate::types::{TrackBox, TrackSequence};

/// Link gating. `radius_m = None` keeps every adjacent-frame pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub radius_m: Option<f64>,
}

impl GateConfig {
    pub fn admits(&self, dist: f64) -> bool {
        self.radius_m.is_none_or(|r| dist <= r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetNode {
    pub frame_idx: usize,
    pub index_in_frame: usize,
    pub det_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Det(usize),
    /// `(from, to)` detection indices.
    Link(usize, usize),
    New(usize),
    End(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub detections: Vec<DetNode>,
    /// Linkable pairs as `(from, to)` detection indices; `to` is always in
    /// the frame right after `from`.
    pub links: Vec<(usize, usize)>,
    link_index: HashMap<(usize, usize), usize>,
    det_index: HashMap<u64, usize>,
}

impl VariableLayout {
    pub fn new(detections: Vec<DetNode>, links: Vec<(usize, usize)>) -> Self {
        let link_index = links.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let det_index = detections.iter().enumerate().map(|(i, d)| (d.det_id, i)).collect();
        Self {
            detections,
            links,
            link_index,
            det_index,
        }
    }

    pub fn num_detections(&self) -> usize {
        self.detections.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_vars(&self) -> usize {
        3 * self.detections.len() + self.links.len()
    }

    pub fn det_var(&self, j: usize) -> usize {
        j
    }

    pub fn link_var_at(&self, l: usize) -> usize {
        self.detections.len() + l
    }

    pub fn link_var(&self, from: usize, to: usize) -> Option<usize> {
        self.link_index.get(&(from, to)).map(|&l| self.link_var_at(l))
    }

    pub fn new_var(&self, j: usize) -> usize {
        self.detections.len() + self.links.len() + j
    }

    pub fn end_var(&self, j: usize) -> usize {
        2 * self.detections.len() + self.links.len() + j
    }

    /// Destination detection of a link variable.
    pub fn link_target(&self, var: usize) -> usize {
        self.links[var - self.detections.len()].1
    }

    pub fn index_of(&self, det_id: u64) -> Option<usize> {
        self.det_index.get(&det_id).copied()
    }

    pub fn kind(&self, var: usize) -> VarKind {
        let k = self.detections.len();
        let n_links = self.links.len();
        if var < k {
            VarKind::Det(var)
        } else if var < k + n_links {
            let (a, b) = self.links[var - k];
            VarKind::Link(a, b)
        } else if var < 2 * k + n_links {
            VarKind::New(var - k - n_links)
        } else {
            VarKind::End(var - 2 * k - n_links)
        }
    }
}

/// Binary value per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub values: Vec<u8>,
}

impl Assignment {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0; n] }
    }

    pub fn dot(&self, costs: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(costs)
            .map(|(&y, &c)| if y == 1 { c } else { 0.0 })
            .sum()
    }

    pub fn hamming(&self, other: &Assignment) -> usize {
        self.values.iter().zip(&other.values).filter(|(a, b)| a != b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    pub layout: VariableLayout,
    /// Frame range of the window in the source sequence.
    pub window: Range<usize>,
    /// Per detection: link variables entering it (`N-`).
    pub incoming: Vec<Vec<usize>>,
    /// Per detection: link variables leaving it (`N+`).
    pub outgoing: Vec<Vec<usize>>,
    /// Cost vector aligned with the layout.
    pub costs: Vec<f64>,
}

/// Result of [`AssociationGraph::check_feasible`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Violated {
        detection: usize,
        det_id: u64,
        side: FlowSide,
        flow: u8,
        det: u8,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            Feasibility::Feasible => Ok(()),
            Feasibility::Violated {
                detection,
                det_id,
                side,
                flow,
                det,
            } => Err(Error::Infeasible {
                detection,
                det_id,
                side,
                flow,
                det,
            }),
        }
    }
}

impl AssociationGraph {
    pub fn from_layout(layout: VariableLayout, window: Range<usize>) -> Self {
        let k = layout.num_detections();
        let mut incoming = vec![Vec::new(); k];
        let mut outgoing = vec![Vec::new(); k];
        for (l, &(a, b)) in layout.links.iter().enumerate() {
            outgoing[a].push(layout.link_var_at(l));
            incoming[b].push(layout.link_var_at(l));
        }
        let n = layout.num_vars();
        Self {
            layout,
            window,
            incoming,
            outgoing,
            costs: vec![0.0; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    pub fn with_costs(mut self, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != self.num_vars() {
            return Err(Error::InvalidInput(format!(
                "cost vector has length {}, layout has {} variables",
                costs.len(),
                self.num_vars()
            )));
        }
        self.costs = costs;
        Ok(self)
    }

    /// Checks both equalities of the conservation constraint for every
    /// detection and reports the first violation in layout order.
    pub fn check_feasible(&self, assignment: &Assignment) -> Result<Feasibility> {
        let y = &assignment.values;
        if y.len() != self.num_vars() {
            return Err(Error::InvalidInput(format!(
                "assignment has length {}, layout has {} variables",
                y.len(),
                self.num_vars()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidInput(format!("non-binary value {} at variable {i}", y[i])));
        }
        let lay = &self.layout;
        for j in 0..lay.num_detections() {
            let det = y[lay.det_var(j)];
            let inflow = y[lay.new_var(j)] + self.incoming[j].iter().map(|&l| y[l]).sum::<u8>();
            let outflow = y[lay.end_var(j)] + self.outgoing[j].iter().map(|&l| y[l]).sum::<u8>();
            for (side, flow) in [(FlowSide::Incoming, inflow), (FlowSide::Outgoing, outflow)] {
                if flow != det {
                    return Ok(Feasibility::Violated {
                        detection: j,
                        det_id: lay.detections[j].det_id,
                        side,
                        flow,
                        det,
                    });
                }
            }
        }
        Ok(Feasibility::Feasible)
    }
}

/// Builds the association graph for the frames in `window` with zero costs.
pub fn build_graph(seq: &TrackSequence, window: Range<usize>, gate: &GateConfig) -> Result<AssociationGraph> {
    if window.is_empty() {
        return Err(Error::InvalidInput("empty window".into()));
    }
    if window.end > seq.num_frames() {
        return Err(Error::InvalidInput(format!(
            "window {:?} exceeds sequence of {} frames",
            window,
            seq.num_frames()
        )));
    }
    let mut detections = Vec::new();
    let mut frame_start = Vec::with_capacity(window.len() + 1);
    for f in window.clone() {
        frame_start.push(detections.len());
        for (i, d) in seq.frames[f].iter().enumerate() {
            detections.push(DetNode {
                frame_idx: f,
                index_in_frame: i,
                det_id: d.det_id,
            });
        }
    }
    frame_start.push(detections.len());

    let mut links = Vec::new();
    for w in 0..window.len().saturating_sub(1) {
        let f = window.start + w;
        for a in frame_start[w]..frame_start[w + 1] {
            let da = &seq.frames[f][detections[a].index_in_frame];
            for b in frame_start[w + 1]..frame_start[w + 2] {
                let db = &seq.frames[f + 1][detections[b].index_in_frame];
                if gate.admits(da.box3d.center_distance(&db.box3d)) {
                    links.push((a, b));
                }
            }
        }
    }
    Ok(AssociationGraph::from_layout(VariableLayout::new(detections, links), window))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldAssignment {
    pub assignment: Assignment,
    /// Ground-truth boxes in the window with no matched candidate.
    pub unmatched_gt_count: usize,
    /// Per layout detection: the ground-truth track it was matched to.
    pub det_track: Vec<Option<u64>>,
}

/// Derives the gold assignment for `graph` from labeled ground-truth boxes.
///
/// Candidates are matched to ground truth per frame by maximum-weight
/// bipartite matching on 2D IoU (pairs below `iou_threshold` are
/// discarded). Consecutive-frame candidates matched to the same track are
/// linked when the layout has that link; every maximal linked run becomes
/// one trajectory fragment with its own start and end.
pub fn derive_gold(graph: &AssociationGraph, seq: &TrackSequence, gt: &[TrackBox], iou_threshold: f64) -> GoldAssignment {
    let lay = &graph.layout;
    let k = lay.num_detections();
    let mut det_track = vec![None; k];
    let mut unmatched = 0;

    let mut first = 0;
    for f in graph.window.clone() {
        let last = first + lay.detections[first..].iter().take_while(|d| d.frame_idx == f).count();
        let frame_gt: Vec<&TrackBox> = gt.iter().filter(|b| b.frame_idx == f).collect();
        let cands = &lay.detections[first..last];
        if !cands.is_empty() && !frame_gt.is_empty() {
            let w: Vec<Vec<f64>> = cands
                .iter()
                .map(|c| {
                    let d = &seq.frames[f][c.index_in_frame];
                    frame_gt.iter().map(|g| d.box2d.iou(&g.box2d)).collect()
                })
                .collect();
            let matches = max_weight_matching(&w, iou_threshold);
            unmatched += frame_gt.len() - matches.len();
            for (ci, gi, _) in matches {
                det_track[first + ci] = Some(frame_gt[gi].track_id);
            }
        } else {
            unmatched += frame_gt.len();
        }
        first = last;
    }

    let mut y = vec![0u8; lay.num_vars()];
    for (j, t) in det_track.iter().enumerate() {
        if t.is_some() {
            y[lay.det_var(j)] = 1;
        }
    }
    let mut has_in = vec![false; k];
    let mut has_out = vec![false; k];
    for (l, &(a, b)) in lay.links.iter().enumerate() {
        if det_track[a].is_some() && det_track[a] == det_track[b] {
            y[lay.link_var_at(l)] = 1;
            has_out[a] = true;
            has_in[b] = true;
        }
    }
    for j in 0..k {
        if det_track[j].is_some() {
            if !has_in[j] {
                y[lay.new_var(j)] = 1;
            }
            if !has_out[j] {
                y[lay.end_var(j)] = 1;
            }
        }
    }
    GoldAssignment {
        assignment: Assignment { values: y },
        unmatched_gt_count: unmatched,
        det_track,
    }
}
