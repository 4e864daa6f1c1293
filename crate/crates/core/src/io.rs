//! On-disk formats: detection files, KITTI tracking labels, ego-motion and
//! camera files, the sequence directory layout and model checkpoints.
//!
//! # KITTI camera frame to ego frame
//!
//! KITTI locations are in the rectified camera frame (x right, y down,
//! z forward) and give the bottom-face center of the box. The ego frame is
//! x forward, y left, z up with the origin at the camera center.
//!
//! | ego quantity | from KITTI fields            |
//! |--------------|------------------------------|
//! | `center_x`   | `z`                          |
//! | `center_y`   | `-x`                         |
//! | `center_z`   | `-y + h / 2`                 |
//! | `length`     | `l`                          |
//! | `width`      | `w`                          |
//! | `height`     | `h`                          |
//! | `yaw`        | `wrap(-rotation_y - pi / 2)` |
//!
//! Worked example: `x = 1.0, y = 1.4, z = 8.0, h = 1.5, rotation_y = -1.6`
//! gives `center = (8.0, -1.0, -0.65)` and `yaw = 1.6 - pi / 2 = 0.0292...`.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scoring::CostModel;
use crate::types::{wrap_angle, AppearanceShape, Box2D, Box3D, CameraModel, Detection, EgoMotion, TrackBox, TrackSequence};

/// Formats a float with 17 significant digits, enough to round-trip.
fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` to a temporary sibling of `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

struct Fields<'a> {
    path: &'a Path,
    line: usize,
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, line: usize, text: &'a str) -> Self {
        Self {
            path,
            line,
            items: text.split_whitespace().collect(),
            pos: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, message)
    }

    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        let s = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err(format!("missing field {what}")))?;
        self.pos += 1;
        Ok(s)
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let s = self.next_str(what)?;
        s.parse()
            .map_err(|_| self.err(format!("field {what}: cannot parse {s:?}")))
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let v: f64 = self.parse(what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("field {what}: non-finite value")))
        }
    }
}

const DET_FIXED_FIELDS: usize = 2 + 7 + 4;

/// One line per detection: `frame det_id` then the 3D box
/// (`x y z length width height yaw`), the 2D box (`left top right bottom`),
/// the appearance values block by block, and an optional trailing raw score.
pub fn format_detections(frames: &[Vec<Detection>]) -> String {
    let mut out = String::new();
    for d in frames.iter().flatten() {
        let b = &d.box3d;
        let r = &d.box2d;
        let _ = write!(out, "{} {}", d.frame_idx, d.det_id);
        for v in [b.center_x, b.center_y, b.center_z, b.length, b.width, b.height, b.yaw, r.left, r.top, r.right, r.bottom] {
            let _ = write!(out, " {}", exact(v));
        }
        for v in d.appearance_flat() {
            let _ = write!(out, " {}", exact(v));
        }
        if let Some(s) = d.raw_score {
            let _ = write!(out, " {}", exact(s));
        }
        out.push('\n');
    }
    out
}

/// Parses detections into `num_frames` frames. Frames may appear in any
/// order; within a frame the file order is kept.
pub fn parse_detections(path: &Path, text: &str, shape: AppearanceShape, num_frames: usize) -> Result<Vec<Vec<Detection>>> {
    let app = shape.total_len();
    let mut frames = vec![Vec::new(); num_frames];
    for (line, l) in data_lines(text) {
        let mut f = Fields::new(path, line, l);
        let n = f.items.len();
        if n != DET_FIXED_FIELDS + app && n != DET_FIXED_FIELDS + app + 1 {
            return Err(f.err(format!(
                "expected {} fields ({} appearance values for {} blocks of {}) or one more with a score, got {n}",
                DET_FIXED_FIELDS + app,
                app,
                shape.blocks,
                shape.block_len
            )));
        }
        let frame_idx: usize = f.parse("frame")?;
        let det_id: u64 = f.parse("det_id")?;
        let box3d = Box3D {
            center_x: f.float("x")?,
            center_y: f.float("y")?,
            center_z: f.float("z")?,
            length: f.float("length")?,
            width: f.float("width")?,
            height: f.float("height")?,
            yaw: f.float("yaw")?,
        };
        let box2d = Box2D {
            left: f.float("left")?,
            top: f.float("top")?,
            right: f.float("right")?,
            bottom: f.float("bottom")?,
        };
        let mut appearance = Vec::with_capacity(shape.blocks);
        for _ in 0..shape.blocks {
            let block = (0..shape.block_len).map(|_| f.float("appearance")).collect::<Result<Vec<_>>>()?;
            appearance.push(block);
        }
        let raw_score = if n > DET_FIXED_FIELDS + app { Some(f.float("score")?) } else { None };
        let slot = frames
            .get_mut(frame_idx)
            .ok_or_else(|| f.err(format!("frame {frame_idx} outside 0..{num_frames}")))?;
        slot.push(Detection {
            det_id,
            frame_idx,
            box3d,
            box2d,
            appearance,
            raw_score,
        });
    }
    Ok(frames)
}

pub fn read_detections(path: &Path, shape: AppearanceShape, num_frames: usize) -> Result<Vec<Vec<Detection>>> {
    parse_detections(path, &read_text(path)?, shape, num_frames)
}

pub fn write_detections(path: &Path, frames: &[Vec<Detection>]) -> Result<()> {
    write_atomic(path, format_detections(frames).as_bytes())
}

/// One ego-motion line per frame: `vx vy frame_dt`.
pub fn format_ego(ego: &[EgoMotion]) -> String {
    ego.iter()
        .map(|e| format!("{} {} {}\n", exact(e.vx), exact(e.vy), exact(e.frame_dt)))
        .collect()
}

pub fn parse_ego(path: &Path, text: &str) -> Result<Vec<EgoMotion>> {
    data_lines(text)
        .map(|(line, l)| {
            let mut f = Fields::new(path, line, l);
            if f.items.len() != 3 {
                return Err(f.err(format!("expected 3 fields (vx vy frame_dt), got {}", f.items.len())));
            }
            let e = EgoMotion {
                vx: f.float("vx")?,
                vy: f.float("vy")?,
                frame_dt: f.float("frame_dt")?,
            };
            e.validate().map_err(|err| f.err(err.to_string()))?;
            Ok(e)
        })
        .collect()
}

pub fn read_ego(path: &Path) -> Result<Vec<EgoMotion>> {
    parse_ego(path, &read_text(path)?)
}

/// A single line: `focal_u focal_v principal_u principal_v width height`.
pub fn format_camera(c: &CameraModel) -> String {
    format!(
        "{} {} {} {} {} {}\n",
        exact(c.focal_u),
        exact(c.focal_v),
        exact(c.principal_u),
        exact(c.principal_v),
        exact(c.image_width),
        exact(c.image_height)
    )
}

pub fn parse_camera(path: &Path, text: &str) -> Result<CameraModel> {
    let mut lines = data_lines(text);
    let (line, l) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty camera file"))?;
    if let Some((extra, _)) = lines.next() {
        return Err(Error::parse(path, extra, "camera file must contain exactly one line"));
    }
    let mut f = Fields::new(path, line, l);
    if f.items.len() != 6 {
        return Err(f.err(format!("expected 6 fields, got {}", f.items.len())));
    }
    let c = CameraModel {
        focal_u: f.float("focal_u")?,
        focal_v: f.float("focal_v")?,
        principal_u: f.float("principal_u")?,
        principal_v: f.float("principal_v")?,
        image_width: f.float("image_width")?,
        image_height: f.float("image_height")?,
    };
    c.validate().map_err(|e| f.err(e.to_string()))?;
    Ok(c)
}

/// One line of a KITTI tracking label or result file, fields as written.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiRecord {
    pub frame: usize,
    /// `-1` for `DontCare` entries.
    pub track_id: i64,
    pub object_type: String,
    pub truncated: f64,
    pub occluded: i64,
    pub alpha: f64,
    pub bbox: Box2D,
    /// `(h, w, l)` in meters.
    pub dimensions: [f64; 3],
    /// Bottom-face center in camera coordinates.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiRecord {
    pub fn is_dont_care(&self) -> bool {
        self.object_type == "DontCare"
    }

    /// The 3D box in the ego frame.
    pub fn box3d(&self) -> Box3D {
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        Box3D {
            center_x: z,
            center_y: -x,
            center_z: -y + h / 2.0,
            length: l,
            width: w,
            height: h,
            yaw: wrap_angle(-self.rotation_y - FRAC_PI_2),
        }
    }

    /// Record for a track box. `alpha` is derived from the heading and the
    /// viewing ray; `truncated` and `occluded` are written as 0.
    pub fn from_track_box(b: &TrackBox, object_type: &str, with_score: bool) -> Self {
        let c = &b.box3d;
        let location = [-c.center_y, -(c.center_z - c.height / 2.0), c.center_x];
        let rotation_y = wrap_angle(-c.yaw - FRAC_PI_2);
        Self {
            frame: b.frame_idx,
            track_id: b.track_id as i64,
            object_type: object_type.into(),
            truncated: 0.0,
            occluded: 0,
            alpha: wrap_angle(rotation_y - location[0].atan2(location[2])),
            bbox: b.box2d,
            dimensions: [c.height, c.width, c.length],
            location,
            rotation_y,
            score: with_score.then_some(b.score),
        }
    }

    pub fn to_line(&self) -> String {
        let r = &self.bbox;
        let mut s = format!(
            "{} {} {} {} {} {}",
            self.frame, self.track_id, self.object_type, self.truncated, self.occluded, self.alpha
        );
        for v in [r.left, r.top, r.right, r.bottom]
            .into_iter()
            .chain(self.dimensions)
            .chain(self.location)
            .chain([self.rotation_y])
            .chain(self.score)
        {
            let _ = write!(s, " {v}");
        }
        s
    }
}

/// Parses KITTI tracking lines (17 fields, or 18 with a score). Records are
/// stably sorted by frame.
pub fn parse_kitti(path: &Path, text: &str) -> Result<Vec<KittiRecord>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let mut f = Fields::new(path, line, l);
        let n = f.items.len();
        if n != 17 && n != 18 {
            return Err(f.err(format!("expected 17 or 18 fields, got {n}")));
        }
        let frame = f.parse("frame")?;
        let track_id: i64 = f.parse("track_id")?;
        let object_type = f.next_str("type")?.to_string();
        let truncated = f.float("truncated")?;
        let occluded = f.parse("occluded")?;
        let alpha = f.float("alpha")?;
        let bbox = Box2D {
            left: f.float("left")?,
            top: f.float("top")?,
            right: f.float("right")?,
            bottom: f.float("bottom")?,
        };
        let dimensions = [f.float("h")?, f.float("w")?, f.float("l")?];
        let location = [f.float("x")?, f.float("y")?, f.float("z")?];
        let rotation_y = f.float("rotation_y")?;
        let score = if n == 18 { Some(f.float("score")?) } else { None };
        if object_type != "DontCare" && track_id < 0 {
            return Err(f.err(format!("negative track id {track_id} on a {object_type} entry")));
        }
        out.push(KittiRecord {
            frame,
            track_id,
            object_type,
            truncated,
            occluded,
            alpha,
            bbox,
            dimensions,
            location,
            rotation_y,
            score,
        });
    }
    out.sort_by_key(|r| r.frame);
    Ok(out)
}

pub fn format_kitti(records: &[KittiRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

pub fn read_kitti(path: &Path) -> Result<Vec<KittiRecord>> {
    parse_kitti(path, &read_text(path)?)
}

pub fn write_kitti(path: &Path, records: &[KittiRecord]) -> Result<()> {
    write_atomic(path, format_kitti(records).as_bytes())
}

/// Track boxes of every record whose type is in `types`. `DontCare`
/// entries are never consumed. A missing score reads as 1.
pub fn kitti_track_boxes(records: &[KittiRecord], types: &[&str]) -> Vec<TrackBox> {
    records
        .iter()
        .filter(|r| !r.is_dont_care() && types.contains(&r.object_type.as_str()))
        .map(|r| TrackBox {
            frame_idx: r.frame,
            track_id: r.track_id as u64,
            box2d: r.bbox,
            box3d: r.box3d(),
            score: r.score.unwrap_or(1.0),
        })
        .collect()
}

/// Reads a label file and keeps the `Car` entries.
pub fn read_kitti_labels(path: &Path) -> Result<Vec<TrackBox>> {
    Ok(kitti_track_boxes(&read_kitti(path)?, &["Car"]))
}

/// Writes track boxes as KITTI lines of type `Car`, with scores when
/// `with_score` is set.
pub fn write_track_boxes(path: &Path, boxes: &[TrackBox], with_score: bool) -> Result<()> {
    let records: Vec<KittiRecord> = boxes.iter().map(|b| KittiRecord::from_track_box(b, "Car", with_score)).collect();
    write_kitti(path, &records)
}

pub const DETECTIONS_FILE: &str = "detections.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const EGO_FILE: &str = "ego.txt";
pub const CAMERA_FILE: &str = "camera.txt";

/// Directory of sequence `index` inside a data directory.
pub fn sequence_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("seq_{index:04}"))
}

/// A sequence with its labels as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub name: String,
    pub seq: TrackSequence,
    /// Empty when the directory has no label file.
    pub labels: Vec<TrackBox>,
}

/// Writes `seq_XXXX/{detections,labels,ego,camera}.txt`.
pub fn write_sequence(dir: &Path, seq: &TrackSequence, labels: &[TrackBox]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_detections(&dir.join(DETECTIONS_FILE), &seq.frames)?;
    write_track_boxes(&dir.join(LABELS_FILE), labels, false)?;
    write_atomic(&dir.join(EGO_FILE), format_ego(&seq.ego).as_bytes())?;
    write_atomic(&dir.join(CAMERA_FILE), format_camera(&seq.camera).as_bytes())
}

/// Reads one sequence directory, keeping labels whose type is in
/// `label_types`. The frame count is the number of ego lines.
pub fn read_sequence(dir: &Path, shape: AppearanceShape, label_types: &[&str]) -> Result<SequenceData> {
    let ego = read_ego(&dir.join(EGO_FILE))?;
    let camera = parse_camera(&dir.join(CAMERA_FILE), &read_text(&dir.join(CAMERA_FILE))?)?;
    let frames = read_detections(&dir.join(DETECTIONS_FILE), shape, ego.len())?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() { kitti_track_boxes(&read_kitti(&labels_path)?, label_types) } else { Vec::new() };
    let seq = TrackSequence { frames, ego, camera };
    seq.validate(shape)?;
    if let Some(b) = labels.iter().find(|b| b.frame_idx >= seq.num_frames()) {
        return Err(Error::parse(&labels_path, 0, format!("label frame {} beyond {} frames", b.frame_idx, seq.num_frames())));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(SequenceData { name, seq, labels })
}

/// Reads every `seq_*` directory of `root` in name order.
pub fn read_dataset(root: &Path, shape: AppearanceShape, label_types: &[&str]) -> Result<Vec<SequenceData>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("seq_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!("{} contains no seq_* directories", root.display())));
    }
    dirs.iter().map(|d| read_sequence(d, shape, label_types)).collect()
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DSMT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Binary checkpoint: magic `DSMT`, version (u32), tensor count (u32), then
/// per tensor its name length (u32), UTF-8 name, rank (u32) and dimensions
/// (u64 each); then every tensor's values as f64 in table order, row-major.
/// All integers and floats are little-endian.
pub fn encode_checkpoint(model: &CostModel) -> Vec<u8> {
    let tensors = model.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, _) in &tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, _, data) in &tensors {
        for v in data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CostModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::InvalidInput("not a checkpoint: bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut table = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::InvalidInput("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        table.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in table {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::InvalidInput(format!("tensor {name} is too large")))?;
        let raw = r.take(n.saturating_mul(8), &name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((name, shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidInput(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    let model = CostModel::from_named_tensors(tensors)?;
    if !model.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &CostModel) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn read_checkpoint(path: &Path) -> Result<CostModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::scoring::ScorerConfig;
    use crate::testutil::{det_at, seq_from_frames};
    use rand::SeedableRng;

    fn p() -> &'static Path {
        Path::new("test.txt")
    }

    #[test]
    fn kitti_example_line() {
        let recs = parse_kitti(p(), "0 2 Car 0 0 -1.57 100 120 200 190 1.5 1.7 4.2 1.0 1.4 8.0 -1.6\n").unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!((r.frame, r.track_id, r.object_type.as_str()), (0, 2, "Car"));
        assert_eq!((r.truncated, r.occluded, r.alpha), (0.0, 0, -1.57));
        assert_eq!(r.bbox, Box2D { left: 100.0, top: 120.0, right: 200.0, bottom: 190.0 });
        assert_eq!(r.dimensions, [1.5, 1.7, 4.2]);
        assert_eq!(r.location, [1.0, 1.4, 8.0]);
        assert_eq!((r.rotation_y, r.score), (-1.6, None));
        let b = r.box3d();
        assert_eq!((b.center_x, b.center_y), (8.0, -1.0));
        assert!((b.center_z - (-0.65)).abs() < 1e-12);
        assert_eq!((b.length, b.width, b.height), (4.2, 1.7, 1.5));
        assert!((b.yaw - (1.6 - FRAC_PI_2)).abs() < 1e-12);
    }

    #[test]
    fn kitti_optional_score_and_dont_care() {
        let text = "1 -1 DontCare -1 -1 -10 0 0 5 5 -1 -1 -1 -1000 -1000 -1000 -10\n0 3 Car 0 1 0 1 2 3 4 1.5 1.6 4 0 1.65 10 0 0.75\n0 4 Van 0 0 0 1 2 3 4 2 2 5 0 1.65 10 0\n";
        let recs = parse_kitti(p(), text).unwrap();
        assert_eq!(recs[0].frame, 0);
        assert_eq!(recs[0].score, Some(0.75));
        assert!(recs[2].is_dont_care());
        let cars = kitti_track_boxes(&recs, &["Car"]);
        assert_eq!(cars.len(), 1);
        assert_eq!(cars[0].score, 0.75);
        assert_eq!(kitti_track_boxes(&recs, &["Car", "Van"]).len(), 2);
    }

    #[test]
    fn kitti_errors_name_line() {
        let err = parse_kitti(p(), "0 1 Car 0 0 0 1 2 3 4 1 1 1 0 0 5 0\n0 1 Car 0 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_kitti(p(), "0 1 Car 0 0 x 1 2 3 4 1 1 1 0 0 5 0\n").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        assert!(parse_kitti(p(), "").unwrap().is_empty());
    }

    #[test]
    fn kitti_round_trip_through_ego_frame() {
        let b = TrackBox {
            frame_idx: 3,
            track_id: 7,
            box2d: Box2D { left: 1.0, top: 2.0, right: 30.0, bottom: 40.0 },
            box3d: Box3D { center_x: 12.0, center_y: -3.5, center_z: -0.9, length: 4.1, width: 1.8, height: 1.5, yaw: 0.3 },
            score: 0.5,
        };
        let r = KittiRecord::from_track_box(&b, "Car", true);
        let back = r.box3d();
        for (x, y) in [
            (back.center_x, b.box3d.center_x),
            (back.center_y, b.box3d.center_y),
            (back.center_z, b.box3d.center_z),
            (back.yaw, b.box3d.yaw),
        ] {
            assert!((x - y).abs() < 1e-12);
        }
        let again = parse_kitti(p(), &format_kitti(std::slice::from_ref(&r))).unwrap();
        assert_eq!(again, vec![r]);
    }

    #[test]
    fn detections_round_trip_and_arity() {
        let mut frames = vec![vec![det_at(0, 0, 10.0, 1.0)], vec![det_at(1, 1, 10.5, 1.0 / 3.0)]];
        frames[1][0].raw_score = Some(0.1 + 0.2);
        frames[0][0].appearance[0][0] = 1.0 / 7.0;
        frames[1][0].appearance[2][5] = 1e-300;
        let seq = seq_from_frames(frames.clone());
        let shape = AppearanceShape {
            blocks: seq.frames[0][0].appearance.len(),
            block_len: seq.frames[0][0].appearance[0].len(),
        };
        let text = format_detections(&frames);
        assert_eq!(parse_detections(p(), &text, shape, 2).unwrap(), frames);
        let wrong = AppearanceShape { blocks: shape.blocks + 1, ..shape };
        let err = parse_detections(p(), &text, wrong, 2).unwrap_err().to_string();
        assert!(err.contains(&format!("{} appearance values", wrong.total_len())), "{err}");
        assert!(parse_detections(p(), &text, shape, 1).is_err());
    }

    #[test]
    fn ego_and_camera_round_trip() {
        let ego = vec![EgoMotion { vx: 10.0, vy: -0.1, frame_dt: 0.1 }; 3];
        assert_eq!(parse_ego(p(), &format_ego(&ego)).unwrap(), ego);
        let cam = CameraModel::default();
        assert_eq!(parse_camera(p(), &format_camera(&cam)).unwrap(), cam);
        assert!(parse_ego(p(), "1 2 0\n").is_err());
        assert!(parse_camera(p(), "1 2 3\n").is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let feat = FeatureConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = CostModel::truncated_normal(&feat, &ScorerConfig::default(), 0.1, &mut rng);
        let bytes = encode_checkpoint(&m);
        assert_eq!(&bytes[..4], b"DSMT");
        assert_eq!(decode_checkpoint(&bytes).unwrap(), m);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
    }
}
