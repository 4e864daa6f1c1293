//! Matching-network inputs: ego-compensated bird's-eye occupancy grids,
//! frontal-view occupancy grids, and per-block appearance similarities.
//!
//! Grids are binary and mostly empty, so they are stored as sorted lists of
//! active cell indices (row-major). A cell is active iff its center lies
//! inside the rasterized shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AppearanceShape, Box3D, CameraModel, Detection, EgoMotion};

/// Bird's-eye grid: rows run along the lateral axis (y) and columns along the
/// forward axis (x). Cell `(r, c)` is centered at
/// `(x_min + (c + 0.5) * m, y_min + (r + 0.5) * m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BevConfig {
    pub rows: usize,
    pub cols: usize,
    pub meters_per_cell: f64,
    pub x_min: f64,
    pub y_min: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            rows: 180,
            cols: 200,
            meters_per_cell: 0.2,
            x_min: 0.0,
            y_min: -18.0,
        }
    }
}

impl BevConfig {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.cols as f64 * self.meters_per_cell
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.rows as f64 * self.meters_per_cell
    }
}

/// Frontal-view grid: the full image scaled to `rows x cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FvConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for FvConfig {
    fn default() -> Self {
        Self { rows: 120, cols: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub bev: BevConfig,
    pub fv: FvConfig,
    pub appearance: AppearanceShape,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bev;
        if b.rows == 0 || b.cols == 0 || !(b.meters_per_cell > 0.0) {
            return Err(Error::Config("bev grid needs positive rows, cols and meters_per_cell".into()));
        }
        if self.fv.rows == 0 || self.fv.cols == 0 {
            return Err(Error::Config("fv grid needs positive rows and cols".into()));
        }
        if self.appearance.blocks == 0 || self.appearance.block_len == 0 {
            return Err(Error::Config("appearance shape must be nonzero".into()));
        }
        Ok(())
    }
}

/// A binary vector stored as sorted active indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SparseBinary {
    pub dim: usize,
    pub active: Vec<u32>,
}

impl SparseBinary {
    pub fn empty(dim: usize) -> Self {
        Self { dim, active: Vec::new() }
    }

    pub fn count(&self) -> usize {
        self.active.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.active.binary_search(&(i as u32)).is_ok()
    }

    /// Element-wise product.
    pub fn product(&self, other: &SparseBinary) -> SparseBinary {
        debug_assert_eq!(self.dim, other.dim);
        let (mut i, mut j) = (0, 0);
        let mut active = Vec::new();
        while i < self.active.len() && j < other.active.len() {
            match self.active[i].cmp(&other.active[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    active.push(self.active[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        SparseBinary { dim: self.dim, active }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &i in &self.active {
            v[i as usize] = 1.0;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridExtent {
    /// Ground-plane span in meters.
    Ground { x_min: f64, x_max: f64, y_min: f64, y_max: f64 },
    /// Image span in pixels.
    Image { width: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub rows: usize,
    pub cols: usize,
    /// Set for bird's-eye grids only.
    pub meters_per_cell: Option<f64>,
    pub extent: GridExtent,
    pub cells: SparseBinary,
}

impl OccupancyGrid {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells.get(row * self.cols + col)
    }

    pub fn active_count(&self) -> usize {
        self.cells.count()
    }
}

/// Cell index range whose centers can fall in `[lo, hi]` along one axis.
fn center_range(lo: f64, hi: f64, origin: f64, step: f64, n: usize) -> std::ops::Range<usize> {
    let a = ((lo - origin) / step - 0.5).floor().max(0.0);
    let b = ((hi - origin) / step - 0.5).ceil() + 1.0;
    let b = b.min(n as f64).max(0.0);
    if a >= b {
        0..0
    } else {
        a as usize..b as usize
    }
}

/// Rasterizes the yaw-rotated footprint of `b` onto the bird's-eye grid.
pub fn rasterize_bev(b: &Box3D, cfg: &BevConfig) -> OccupancyGrid {
    let m = cfg.meters_per_cell;
    let fp = b.footprint();
    let (min_x, max_x) = fp.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
    let (min_y, max_y) = fp.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    let (s, c) = b.yaw.sin_cos();
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    let mut active = Vec::new();
    for r in center_range(min_y, max_y, cfg.y_min, m, cfg.rows) {
        let py = cfg.y_min + (r as f64 + 0.5) * m;
        for col in center_range(min_x, max_x, cfg.x_min, m, cfg.cols) {
            let px = cfg.x_min + (col as f64 + 0.5) * m;
            let (dx, dy) = (px - b.center_x, py - b.center_y);
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            if along.abs() <= hl && across.abs() <= hw {
                active.push((r * cfg.cols + col) as u32);
            }
        }
    }
    OccupancyGrid {
        rows: cfg.rows,
        cols: cfg.cols,
        meters_per_cell: Some(m),
        extent: GridExtent::Ground {
            x_min: cfg.x_min,
            x_max: cfg.x_max(),
            y_min: cfg.y_min,
            y_max: cfg.y_max(),
        },
        cells: SparseBinary {
            dim: cfg.cells(),
            active,
        },
    }
}

/// Expresses a box observed in one frame in the next frame's ego
/// coordinates: the ego advanced by `(vx, vy) * dt`, so the box shifts back
/// by that displacement.
pub fn compensate_ego(b: &Box3D, ego: &EgoMotion) -> Box3D {
    Box3D {
        center_x: b.center_x - ego.vx * ego.frame_dt,
        center_y: b.center_y - ego.vy * ego.frame_dt,
        ..*b
    }
}

/// Projects the box's corners and fills their image bounding rectangle,
/// scaled to the frontal grid. Boxes whose center is not in front of the
/// camera give an empty grid.
pub fn rasterize_fv(b: &Box3D, camera: &CameraModel, cfg: &FvConfig) -> OccupancyGrid {
    let mut active = Vec::new();
    if let Some(r) = camera.project_box_unclipped(b) {
        let su = camera.image_width / cfg.cols as f64;
        let sv = camera.image_height / cfg.rows as f64;
        for row in center_range(r.top, r.bottom, 0.0, sv, cfg.rows) {
            let v = (row as f64 + 0.5) * sv;
            if v < r.top || v > r.bottom {
                continue;
            }
            for col in center_range(r.left, r.right, 0.0, su, cfg.cols) {
                let u = (col as f64 + 0.5) * su;
                if u >= r.left && u <= r.right {
                    active.push((row * cfg.cols + col) as u32);
                }
            }
        }
    }
    OccupancyGrid {
        rows: cfg.rows,
        cols: cfg.cols,
        meters_per_cell: None,
        extent: GridExtent::Image {
            width: camera.image_width,
            height: camera.image_height,
        },
        cells: SparseBinary {
            dim: cfg.rows * cfg.cols,
            active,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    /// `dot(a.block[l], b.block[l])` per appearance block.
    pub appearance_sim: Vec<f64>,
    pub bev_product: SparseBinary,
    pub fv_product: SparseBinary,
}

pub fn appearance_similarity(a: &Detection, b: &Detection) -> Vec<f64> {
    a.appearance
        .iter()
        .zip(&b.appearance)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect()
}

/// Per-detection rasters, reusable across every pair the detection is in.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRasters {
    /// Grids of the box in its own frame.
    pub bev: SparseBinary,
    pub fv: SparseBinary,
    /// Grids of the box carried into the next frame's coordinates.
    pub bev_next: SparseBinary,
    pub fv_next: SparseBinary,
}

impl DetectionRasters {
    pub fn new(d: &Detection, ego: &EgoMotion, camera: &CameraModel, cfg: &FeatureConfig) -> Self {
        let moved = compensate_ego(&d.box3d, ego);
        Self {
            bev: rasterize_bev(&d.box3d, &cfg.bev).cells,
            fv: rasterize_fv(&d.box3d, camera, &cfg.fv).cells,
            bev_next: rasterize_bev(&moved, &cfg.bev).cells,
            fv_next: rasterize_fv(&moved, camera, &cfg.fv).cells,
        }
    }

    /// Features for `earlier -> later`.
    pub fn pair(earlier: &Self, later: &Self, a: &Detection, b: &Detection) -> PairFeatures {
        PairFeatures {
            appearance_sim: appearance_similarity(a, b),
            bev_product: earlier.bev_next.product(&later.bev),
            fv_product: earlier.fv_next.product(&later.fv),
        }
    }
}

/// Pair features for `a` in frame `f` and `b` in frame `f + 1`; `ego` is the
/// motion between the two frames.
pub fn pair_features(a: &Detection, b: &Detection, ego: &EgoMotion, camera: &CameraModel, cfg: &FeatureConfig) -> Result<PairFeatures> {
    if b.frame_idx != a.frame_idx + 1 {
        return Err(Error::InvalidInput(format!(
            "pair features need consecutive frames, got {} and {}",
            a.frame_idx, b.frame_idx
        )));
    }
    let ra = DetectionRasters::new(a, ego, camera, cfg);
    let rb = DetectionRasters::new(b, ego, camera, cfg);
    Ok(DetectionRasters::pair(&ra, &rb, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::det_at;
    use std::f64::consts::FRAC_PI_2;

    fn boxed(x: f64, y: f64, l: f64, w: f64, yaw: f64) -> Box3D {
        Box3D { center_x: x, center_y: y, center_z: -0.9, length: l, width: w, height: 1.5, yaw }
    }

    #[test]
    fn axis_aligned_count() {
        let g = rasterize_bev(&boxed(20.0, 0.0, 4.0, 2.0, 0.0), &BevConfig::default());
        assert_eq!(g.active_count(), 200);
    }

    #[test]
    fn outside_extent_is_empty() {
        let cfg = BevConfig::default();
        assert_eq!(rasterize_bev(&boxed(-10.0, 0.0, 4.0, 2.0, 0.0), &cfg).active_count(), 0);
        assert_eq!(rasterize_bev(&boxed(20.0, 40.0, 4.0, 2.0, 0.0), &cfg).active_count(), 0);
    }

    #[test]
    fn partially_outside_is_clipped() {
        let cfg = BevConfig::default();
        // Half of a 4 m box hangs behind x = 0.
        let g = rasterize_bev(&boxed(0.0, 0.0, 4.0, 2.0, 0.0), &cfg);
        assert_eq!(g.active_count(), 100);
    }

    #[test]
    fn quarter_turn_swaps_dimensions() {
        let cfg = BevConfig::default();
        let turned = rasterize_bev(&boxed(20.0, 0.0, 4.0, 2.0, FRAC_PI_2), &cfg);
        let transposed = rasterize_bev(&boxed(20.0, 0.0, 2.0, 4.0, 0.0), &cfg);
        assert_eq!(turned.active_count(), transposed.active_count());
        assert_eq!(turned.cells, transposed.cells);
    }

    #[test]
    fn ego_compensation() {
        let b = boxed(20.0, 1.0, 4.0, 2.0, 0.3);
        let ego = EgoMotion { vx: 10.0, vy: 0.0, frame_dt: 0.1 };
        let m = compensate_ego(&b, &ego);
        assert!((m.center_x - 19.0).abs() < 1e-12);
        assert_eq!(m.yaw, b.yaw);
        assert_eq!(compensate_ego(&b, &EgoMotion::stationary(0.1)), b);
        let back = compensate_ego(&m, &EgoMotion { vx: -10.0, vy: 0.0, frame_dt: 0.1 });
        assert!((back.center_x - b.center_x).abs() < 1e-12);
        assert!((back.center_y - b.center_y).abs() < 1e-12);
    }

    fn centered_camera() -> CameraModel {
        CameraModel { focal_u: 700.0, focal_v: 700.0, principal_u: 600.0, principal_v: 200.0, image_width: 1200.0, image_height: 400.0 }
    }

    #[test]
    fn fv_behind_camera_is_empty() {
        let g = rasterize_fv(&boxed(-5.0, 0.0, 4.0, 2.0, 0.0), &CameraModel::default(), &FvConfig::default());
        assert_eq!(g.active_count(), 0);
    }

    #[test]
    fn fv_on_axis_is_centered() {
        let cfg = FvConfig::default();
        let mut b = boxed(15.0, 0.0, 4.0, 2.0, 0.0);
        b.center_z = 0.0;
        let g = rasterize_fv(&b, &centered_camera(), &cfg);
        assert!(g.active_count() > 0);
        let rows: Vec<usize> = g.cells.active.iter().map(|&i| i as usize / cfg.cols).collect();
        let cols: Vec<usize> = g.cells.active.iter().map(|&i| i as usize % cfg.cols).collect();
        let (r0, r1) = (*rows.iter().min().unwrap(), *rows.iter().max().unwrap());
        let (c0, c1) = (*cols.iter().min().unwrap(), *cols.iter().max().unwrap());
        // Margins to each border agree within one cell.
        assert!((r0 as i64 - (cfg.rows - 1 - r1) as i64).abs() <= 1);
        assert!((c0 as i64 - (cfg.cols - 1 - c1) as i64).abs() <= 1);
        // Filled rectangle.
        assert_eq!(g.active_count(), (r1 - r0 + 1) * (c1 - c0 + 1));
    }

    #[test]
    fn fv_width_halves_with_double_distance() {
        let cfg = FvConfig::default();
        let cam = centered_camera();
        let width = |x: f64| {
            // A flat plate facing the camera so depth is uniform.
            let mut b = boxed(x, 0.0, 0.01, 2.0, 0.0);
            b.center_z = 0.0;
            let g = rasterize_fv(&b, &cam, &cfg);
            let cols: Vec<usize> = g.cells.active.iter().map(|&i| i as usize % cfg.cols).collect();
            (cols.iter().max().unwrap() - cols.iter().min().unwrap() + 1) as i64
        };
        let (near, far) = (width(10.0), width(20.0));
        assert!((near - 2 * far).abs() <= 2, "near {near}, far {far}");
        assert!(((near as f64 / 2.0) - far as f64).abs() <= 1.0);
    }

    #[test]
    fn identical_pair() {
        let mut a = det_at(0, 0, 20.0, 0.0);
        a.appearance[1][3] = 2.0;
        a.appearance[4][0] = -1.5;
        let mut b = a.clone();
        b.det_id = 1;
        b.frame_idx = 1;
        let cfg = FeatureConfig::default();
        let p = pair_features(&a, &b, &EgoMotion::stationary(0.1), &CameraModel::default(), &cfg).unwrap();
        let single = rasterize_bev(&a.box3d, &cfg.bev).cells;
        assert_eq!(p.bev_product, single);
        assert_eq!(p.appearance_sim, vec![0.0, 4.0, 0.0, 0.0, 2.25]);
    }

    #[test]
    fn disjoint_and_half_overlap() {
        let cfg = FeatureConfig::default();
        let cam = CameraModel::default();
        let ego = EgoMotion::stationary(0.1);
        let a = det_at(0, 0, 20.0, 0.0);
        let far = det_at(1, 1, 30.0, 5.0);
        assert_eq!(pair_features(&a, &far, &ego, &cam, &cfg).unwrap().bev_product.count(), 0);
        // Boxes 4.0 x 1.8 offset by 2.0 m along x: overlap is 2.0 m x 1.8 m,
        // i.e. 10 columns by 9 rows of 0.2 m cells.
        let half = det_at(2, 1, 22.0, 0.0);
        let p = pair_features(&a, &half, &ego, &cam, &cfg).unwrap();
        assert_eq!(p.bev_product.count(), 90);
    }

    #[test]
    fn frame_mismatch_is_error() {
        let a = det_at(0, 0, 20.0, 0.0);
        let b = det_at(1, 2, 20.0, 0.0);
        assert!(pair_features(&a, &b, &EgoMotion::stationary(0.1), &CameraModel::default(), &FeatureConfig::default()).is_err());
    }
}
