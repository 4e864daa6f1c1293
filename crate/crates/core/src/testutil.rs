//! Small fixture builders shared by unit and integration tests.

use crate::types::{AppearanceShape, Box2D, Box3D, CameraModel, Detection, EgoMotion, TrackSequence};

pub fn car_box(x: f64, y: f64) -> Box3D {
    Box3D {
        center_x: x,
        center_y: y,
        center_z: -0.9,
        length: 4.0,
        width: 1.8,
        height: 1.5,
        yaw: 0.0,
    }
}

/// A car-sized detection at `(x, y)` with a zero appearance of the default shape.
pub fn det_at(det_id: u64, frame_idx: usize, x: f64, y: f64) -> Detection {
    let box3d = car_box(x, y);
    let box2d = CameraModel::default().project_box(&box3d).unwrap_or(Box2D {
        left: 0.0,
        top: 0.0,
        right: 1.0,
        bottom: 1.0,
    });
    let shape = AppearanceShape::default();
    Detection {
        det_id,
        frame_idx,
        box3d,
        box2d,
        appearance: vec![vec![0.0; shape.block_len]; shape.blocks],
        raw_score: None,
    }
}

/// Wraps frames into a sequence with a stationary ego at 10 Hz.
pub fn seq_from_frames(frames: Vec<Vec<Detection>>) -> TrackSequence {
    let n = frames.len();
    TrackSequence {
        frames,
        ego: vec![EgoMotion::stationary(0.1); n],
        camera: CameraModel::default(),
    }
}
