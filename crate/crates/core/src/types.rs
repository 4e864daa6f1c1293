//! Domain types shared across the crate.
//!
//! Coordinates follow the ego-vehicle convention: x forward, y left, z up,
//! with the origin at the camera center. Yaw is measured about +z from +x.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::assoc::{AssociationGraph, Assignment};
use crate::error::{Error, Result};

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w -= 2.0 * PI;
    }
    w
}

/// Oriented, gravity-aligned 3D box in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.center_x,
            self.center_y,
            self.center_z,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Box3D".into()));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "Box3D dimensions must be positive, got {}x{}x{}",
                self.length, self.width, self.height
            )));
        }
        if !(-PI..PI).contains(&self.yaw) {
            return Err(Error::InvalidInput(format!("Box3D yaw {} outside [-pi, pi)", self.yaw)));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn center_distance(&self, other: &Box3D) -> f64 {
        let dx = self.center_x - other.center_x;
        let dy = self.center_y - other.center_y;
        let dz = self.center_z - other.center_z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Ground-plane footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[a, b]| [self.center_x + a * c - b * s, self.center_y + a * s + b * c])
    }

    /// The eight corners: footprint at the bottom face, then at the top face.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let fp = self.footprint();
        let zb = self.center_z - self.height / 2.0;
        let zt = self.center_z + self.height / 2.0;
        let mut out = [[0.0; 3]; 8];
        for (i, p) in fp.iter().enumerate() {
            out[i] = [p[0], p[1], zb];
            out[i + 4] = [p[0], p[1], zt];
        }
        out
    }
}

/// Axis-aligned image-plane rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Box2D {
    pub fn validate(&self) -> Result<()> {
        if ![self.left, self.top, self.right, self.bottom].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Box2D".into()));
        }
        if self.right <= self.left || self.bottom <= self.top {
            return Err(Error::InvalidInput(format!("degenerate Box2D {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.right - self.left).max(0.0) * (self.bottom - self.top).max(0.0)
    }

    pub fn iou(&self, other: &Box2D) -> f64 {
        let w = self.right.min(other.right) - self.left.max(other.left);
        let h = self.bottom.min(other.bottom) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            return 0.0;
        }
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Shape of the blocked appearance descriptor carried by every detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppearanceShape {
    pub blocks: usize,
    pub block_len: usize,
}

impl Default for AppearanceShape {
    fn default() -> Self {
        Self {
            blocks: 5,
            block_len: 16,
        }
    }
}

impl AppearanceShape {
    pub fn total_len(&self) -> usize {
        self.blocks * self.block_len
    }
}

/// One candidate object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub det_id: u64,
    pub frame_idx: usize,
    pub box3d: Box3D,
    pub box2d: Box2D,
    /// `blocks` feature blocks, each `block_len` long.
    pub appearance: Vec<Vec<f64>>,
    pub raw_score: Option<f64>,
}

impl Detection {
    pub fn validate(&self, shape: AppearanceShape) -> Result<()> {
        self.box3d.validate()?;
        self.box2d.validate()?;
        if self.appearance.len() != shape.blocks {
            return Err(Error::InvalidInput(format!(
                "detection {}: expected {} appearance blocks, got {}",
                self.det_id,
                shape.blocks,
                self.appearance.len()
            )));
        }
        for (l, block) in self.appearance.iter().enumerate() {
            if block.len() != shape.block_len {
                return Err(Error::InvalidInput(format!(
                    "detection {}: block {l} has length {}, expected {}",
                    self.det_id,
                    block.len(),
                    shape.block_len
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("appearance of detection {}", self.det_id)));
            }
        }
        Ok(())
    }

    pub fn appearance_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.appearance.iter().flatten().copied()
    }
}

/// Ego velocity during one frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub vx: f64,
    pub vy: f64,
    pub frame_dt: f64,
}

impl EgoMotion {
    pub fn stationary(frame_dt: f64) -> Self {
        Self {
            vx: 0.0,
            vy: 0.0,
            frame_dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vx.is_finite() && self.vy.is_finite() && self.frame_dt.is_finite()) {
            return Err(Error::NonFinite("EgoMotion".into()));
        }
        if self.frame_dt <= 0.0 {
            return Err(Error::InvalidInput(format!("frame_dt must be positive, got {}", self.frame_dt)));
        }
        Ok(())
    }
}

/// Pinhole camera placed at the ego origin, looking along +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_u: f64,
    pub focal_v: f64,
    pub principal_u: f64,
    pub principal_v: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl Default for CameraModel {
    /// KITTI-like intrinsics.
    fn default() -> Self {
        Self {
            focal_u: 721.5377,
            focal_v: 721.5377,
            principal_u: 609.5593,
            principal_v: 172.854,
            image_width: 1242.0,
            image_height: 375.0,
        }
    }
}

/// Corners closer than this are clamped before projection.
const MIN_DEPTH: f64 = 0.1;

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.focal_u <= 0.0 || self.focal_v <= 0.0 {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if !(0.0..=self.image_width).contains(&self.principal_u)
            || !(0.0..=self.image_height).contains(&self.principal_v)
        {
            return Err(Error::InvalidInput("principal point outside image".into()));
        }
        Ok(())
    }

    /// Projects an ego-frame point. Returns `None` behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[0] <= 0.0 {
            return None;
        }
        Some((
            self.principal_u - self.focal_u * p[1] / p[0],
            self.principal_v - self.focal_v * p[2] / p[0],
        ))
    }

    /// Bounding rectangle of the projected corners, not clipped to the image.
    /// `None` when the box center is not in front of the camera.
    pub fn project_box_unclipped(&self, b: &Box3D) -> Option<Box2D> {
        if b.center_x <= 0.0 {
            return None;
        }
        let mut r = Box2D {
            left: f64::INFINITY,
            top: f64::INFINITY,
            right: f64::NEG_INFINITY,
            bottom: f64::NEG_INFINITY,
        };
        for c in b.corners() {
            let (u, v) = self.project([c[0].max(MIN_DEPTH), c[1], c[2]])?;
            r.left = r.left.min(u);
            r.right = r.right.max(u);
            r.top = r.top.min(v);
            r.bottom = r.bottom.max(v);
        }
        Some(r)
    }

    /// Projected rectangle clipped to the image; `None` if nothing remains.
    pub fn project_box(&self, b: &Box3D) -> Option<Box2D> {
        let r = self.project_box_unclipped(b)?;
        let c = Box2D {
            left: r.left.max(0.0),
            top: r.top.max(0.0),
            right: r.right.min(self.image_width),
            bottom: r.bottom.min(self.image_height),
        };
        (c.right > c.left && c.bottom > c.top).then_some(c)
    }
}

/// Frames of candidate detections with per-frame ego motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSequence {
    pub frames: Vec<Vec<Detection>>,
    /// `ego[f]` is the motion between frame `f` and `f + 1`.
    pub ego: Vec<EgoMotion>,
    pub camera: CameraModel,
}

impl TrackSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_detections(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn validate(&self, shape: AppearanceShape) -> Result<()> {
        if self.ego.len() != self.frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} ego entries for {} frames",
                self.ego.len(),
                self.frames.len()
            )));
        }
        self.camera.validate()?;
        let mut seen = std::collections::HashSet::new();
        for (f, (dets, ego)) in self.frames.iter().zip(&self.ego).enumerate() {
            ego.validate()?;
            for d in dets {
                if d.frame_idx != f {
                    return Err(Error::InvalidInput(format!(
                        "detection {} in frame {f} has frame_idx {}",
                        d.det_id, d.frame_idx
                    )));
                }
                if !seen.insert(d.det_id) {
                    return Err(Error::InvalidInput(format!("duplicate det_id {}", d.det_id)));
                }
                d.validate(shape)?;
            }
        }
        Ok(())
    }

    pub fn find(&self, frame_idx: usize, det_id: u64) -> Option<&Detection> {
        self.frames.get(frame_idx)?.iter().find(|d| d.det_id == det_id)
    }
}

/// A decoded path of detections through consecutive frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub track_id: u64,
    /// `(frame_idx, det_id)`, frames increasing by exactly one.
    pub entries: Vec<(usize, u64)>,
}

impl Trajectory {
    pub fn is_well_formed(&self) -> bool {
        !self.entries.is_empty() && self.entries.windows(2).all(|w| w[1].0 == w[0].0 + 1)
    }
}

/// A labeled (or hypothesized) box with a track identity, the unit both
/// ground truth and tracker output are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackBox {
    pub frame_idx: usize,
    pub track_id: u64,
    pub box2d: Box2D,
    pub box3d: Box3D,
    pub score: f64,
}

/// Groups boxes by frame, covering frames `0..num_frames`.
pub fn boxes_by_frame(boxes: &[TrackBox], num_frames: usize) -> Vec<Vec<TrackBox>> {
    let mut out = vec![Vec::new(); num_frames];
    for b in boxes {
        if b.frame_idx < num_frames {
            out[b.frame_idx].push(*b);
        }
    }
    out
}

/// Materializes trajectories into track boxes, using the detection boxes.
/// The box score is the detector confidence when present, otherwise 1.
pub fn trajectories_to_boxes(seq: &TrackSequence, tracks: &[Trajectory]) -> Vec<TrackBox> {
    let mut out = Vec::new();
    for t in tracks {
        for &(frame_idx, det_id) in &t.entries {
            if let Some(d) = seq.find(frame_idx, det_id) {
                out.push(TrackBox {
                    frame_idx,
                    track_id: t.track_id,
                    box2d: d.box2d,
                    box3d: d.box3d,
                    score: d.raw_score.unwrap_or(1.0),
                });
            }
        }
    }
    out.sort_by_key(|b| (b.frame_idx, b.track_id));
    out
}

/// Decodes a feasible assignment into trajectories.
///
/// Each trajectory starts at a detection with `new = 1` and follows active
/// links until a detection with `end = 1`. Track ids are assigned in the
/// order of the starting detection's layout index.
pub fn decode_trajectories(assignment: &Assignment, graph: &AssociationGraph) -> Result<Vec<Trajectory>> {
    graph.check_feasible(assignment)?.into_result()?;
    let layout = &graph.layout;
    let y = &assignment.values;
    let mut tracks = Vec::new();
    for start in 0..layout.num_detections() {
        if y[layout.new_var(start)] == 0 {
            continue;
        }
        let mut entries = Vec::new();
        let mut cur = start;
        loop {
            let node = &layout.detections[cur];
            entries.push((node.frame_idx, node.det_id));
            let next = graph.outgoing[cur]
                .iter()
                .find(|&&l| y[l] == 1)
                .map(|&l| layout.link_target(l));
            match next {
                Some(k) => cur = k,
                None => break,
            }
        }
        tracks.push(Trajectory {
            track_id: tracks.len() as u64,
            entries,
        });
    }
    Ok(tracks)
}

/// Inverse of [`decode_trajectories`]: sets det/new/end/link variables for
/// the given node-disjoint paths. Fails if a path uses an unknown detection
/// or a link that is absent from the layout.
pub fn encode_trajectories(tracks: &[Trajectory], graph: &AssociationGraph) -> Result<Assignment> {
    let layout = &graph.layout;
    let mut y = vec![0u8; layout.num_vars()];
    for t in tracks {
        if !t.is_well_formed() {
            return Err(Error::InvalidInput(format!("trajectory {} is not contiguous", t.track_id)));
        }
        let idx: Vec<usize> = t
            .entries
            .iter()
            .map(|&(_, id)| {
                layout
                    .index_of(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown det_id {id}")))
            })
            .collect::<Result<_>>()?;
        for &j in &idx {
            if y[layout.det_var(j)] == 1 {
                return Err(Error::InvalidInput(format!("detection index {j} used twice")));
            }
            y[layout.det_var(j)] = 1;
        }
        y[layout.new_var(idx[0])] = 1;
        y[layout.end_var(*idx.last().unwrap())] = 1;
        for w in idx.windows(2) {
            let l = layout
                .link_var(w[0], w[1])
                .ok_or_else(|| Error::InvalidInput(format!("no link variable {} -> {}", w[0], w[1])))?;
            y[l] = 1;
        }
    }
    Ok(Assignment { values: y })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn iou_of_thirds() {
        // Two 2x1 boxes overlapping in a 1x1 square: 1 / (2 + 2 - 1).
        let a = Box2D { left: 0.0, top: 0.0, right: 2.0, bottom: 1.0 };
        let b = Box2D { left: 1.0, top: 0.0, right: 3.0, bottom: 1.0 };
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn box_validation() {
        let mut b = Box3D { center_x: 1.0, center_y: 0.0, center_z: 0.0, length: 1.0, width: 1.0, height: 1.0, yaw: 0.0 };
        assert!(b.validate().is_ok());
        b.yaw = PI;
        assert!(b.validate().is_err());
        b.yaw = 0.0;
        b.width = 0.0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn projection_behind_camera() {
        let cam = CameraModel::default();
        let b = Box3D { center_x: -5.0, center_y: 0.0, center_z: 0.0, length: 4.0, width: 2.0, height: 1.5, yaw: 0.0 };
        assert!(cam.project_box(&b).is_none());
    }
}
