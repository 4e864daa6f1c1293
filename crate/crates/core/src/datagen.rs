//! Seeded synthetic driving scenes: lanes, forward / oncoming / lane-change
//! vehicles, an ego vehicle at constant speed, and corrupted candidate
//! detections (noise, misses, clutter).
//!
//! The world frame has x along the road and y to the left. The ego starts at
//! the origin and drives along +x; lane `ego_lane` is centered on y = 0.
//! Lanes with a higher index than `forward_lanes - 1` carry oncoming traffic.
//! A vehicle is visible when its center lies in x in [3, 40] m and |y| <= 18 m
//! of the ego frame and its projected image box is nonempty. A ground-truth
//! track is the first contiguous visible run of a vehicle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{wrap_angle, AppearanceShape, Box3D, CameraModel, Detection, EgoMotion, TrackBox, TrackSequence};

/// Height of the camera (the ego origin) above the ground.
pub const CAMERA_HEIGHT_M: f64 = 1.65;
/// Forward visibility range in the ego frame.
pub const VISIBLE_X: (f64, f64) = (3.0, 40.0);
/// Lateral visibility range in the ego frame.
pub const VISIBLE_Y: f64 = 18.0;

/// Fractions of each behavior; normalized at sampling time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorMix {
    pub forward: f64,
    pub oncoming: f64,
    pub lane_change: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        Self {
            forward: 0.5,
            oncoming: 0.3,
            lane_change: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    pub n_frames: usize,
    pub seed: u64,
    pub frame_dt: f64,
    pub lane_width: f64,
    pub lane_count: usize,
    /// Lanes `0..forward_lanes` carry traffic in the ego direction.
    pub forward_lanes: usize,
    /// Lane of the ego vehicle (must be a forward lane).
    pub ego_lane: usize,
    pub behavior: BehaviorMix,
    pub ego_speed: f64,
    /// Each forward lane moves at one speed drawn from `ego_speed +- speed_spread`.
    pub speed_spread: f64,
    /// Range of the per-lane oncoming traffic speed.
    pub oncoming_speed: (f64, f64),
    /// Duration of a lane change in seconds.
    pub lane_change_duration: f64,
    pub sigma_pos: f64,
    pub sigma_size: f64,
    pub sigma_yaw: f64,
    pub miss_prob: f64,
    /// Mean number of false-positive detections per frame.
    pub clutter_rate: f64,
    pub appearance: AppearanceShape,
    /// Total standard deviation of the appearance noise vector.
    pub sigma_app: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 6,
            n_frames: 40,
            seed: 0,
            frame_dt: 0.1,
            lane_width: 3.5,
            lane_count: 4,
            forward_lanes: 2,
            ego_lane: 1,
            behavior: BehaviorMix::default(),
            ego_speed: 10.0,
            speed_spread: 3.0,
            oncoming_speed: (8.0, 14.0),
            lane_change_duration: 3.0,
            sigma_pos: 0.3,
            sigma_size: 0.1,
            sigma_yaw: 0.05,
            miss_prob: 0.1,
            clutter_rate: 0.5,
            appearance: AppearanceShape::default(),
            sigma_app: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// Same scene without any corruption.
    pub fn noiseless(mut self) -> Self {
        self.sigma_pos = 0.0;
        self.sigma_size = 0.0;
        self.sigma_yaw = 0.0;
        self.miss_prob = 0.0;
        self.clutter_rate = 0.0;
        self.sigma_app = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return bad("frame_dt must be positive".into());
        }
        if !(self.lane_width > 0.0) || self.lane_count == 0 {
            return bad("lanes must have positive width and count".into());
        }
        if self.forward_lanes == 0 || self.forward_lanes > self.lane_count || self.ego_lane >= self.forward_lanes {
            return bad("need 0 <= ego_lane < forward_lanes <= lane_count".into());
        }
        for (name, p) in [("miss_prob", self.miss_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        let b = self.behavior;
        if [b.forward, b.oncoming, b.lane_change].iter().any(|f| !(*f >= 0.0 && f.is_finite())) || b.forward + b.oncoming + b.lane_change <= 0.0 {
            return bad("behavior fractions must be nonnegative with a positive sum".into());
        }
        for (name, s) in [
            ("sigma_pos", self.sigma_pos),
            ("sigma_size", self.sigma_size),
            ("sigma_yaw", self.sigma_yaw),
            ("sigma_app", self.sigma_app),
            ("clutter_rate", self.clutter_rate),
            ("ego_speed", self.ego_speed),
            ("speed_spread", self.speed_spread),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative, got {s}"));
            }
        }
        if !(self.oncoming_speed.0 >= 0.0 && self.oncoming_speed.0 <= self.oncoming_speed.1) {
            return bad("oncoming_speed must be an ordered nonnegative range".into());
        }
        if !(self.lane_change_duration > 0.0) {
            return bad("lane_change_duration must be positive".into());
        }
        if self.appearance.blocks == 0 || self.appearance.block_len == 0 {
            return bad("appearance shape must be nonempty".into());
        }
        Ok(())
    }

    /// Upper bound on a vehicle's speed relative to the ego.
    pub fn max_relative_speed(&self) -> f64 {
        let lateral = self.lane_width * std::f64::consts::PI / (2.0 * self.lane_change_duration);
        let forward = (self.ego_speed + self.speed_spread).max(self.oncoming_speed.1);
        (forward + self.ego_speed).hypot(lateral)
    }

    fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 - self.ego_lane as f64) * self.lane_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Forward,
    Oncoming,
    LaneChange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Vehicle {
    behavior: Behavior,
    x0: f64,
    speed: f64,
    lane_y: f64,
    /// Lateral offset reached after a lane change and the time it starts.
    lane_shift: f64,
    change_start: f64,
    length: f64,
    width: f64,
    height: f64,
}

impl Vehicle {
    /// World pose `(x, y, yaw)` at time `t`.
    fn pose(&self, t: f64, change_duration: f64) -> (f64, f64, f64) {
        match self.behavior {
            Behavior::Oncoming => (self.x0 - self.speed * t, self.lane_y, -std::f64::consts::PI),
            Behavior::Forward => (self.x0 + self.speed * t, self.lane_y, 0.0),
            Behavior::LaneChange => {
                let s = ((t - self.change_start) / change_duration).clamp(0.0, 1.0);
                let y = self.lane_y + self.lane_shift * 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
                let vy = if (0.0..1.0).contains(&s) && s > 0.0 {
                    self.lane_shift * 0.5 * std::f64::consts::PI * (std::f64::consts::PI * s).sin() / change_duration
                } else {
                    0.0
                };
                (self.x0 + self.speed * t, y, wrap_angle(vy.atan2(self.speed)))
            }
        }
    }
}

/// One generated sequence with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seq: TrackSequence,
    /// Ground-truth boxes; `track_id` is the vehicle index.
    pub gt: Vec<TrackBox>,
    /// Source vehicle of each detection, indexed by `det_id`; `None` for
    /// clutter.
    pub det_source: Vec<Option<u64>>,
    pub behaviors: Vec<Behavior>,
}

fn unit_nonneg(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

/// Number of vehicle appearance classes (think model and colour).
pub const VEHICLE_CLASSES: usize = 4;
/// Weight of the individual direction relative to the class prototype.
const INDIVIDUAL_WEIGHT: f64 = 1.0;
/// Minimum initial gap between vehicles sharing a lane, in meters.
pub const MIN_LANE_GAP_M: f64 = 9.0;

/// Fixed appearance prototypes: `VEHICLE_CLASSES` vehicle classes followed
/// by one clutter class. They do not depend on the scenario seed.
fn prototypes(dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_CAFE);
    (0..=VEHICLE_CLASSES)
        .map(|_| unit_nonneg((0..dim).map(|_| rng.random::<f64>().powi(3)).collect()))
        .collect()
}

/// Class prototype plus an individual nonnegative direction. Every block of
/// `block_len` values has unit norm.
fn latent(proto: &[f64], block_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let own = unit_nonneg((0..proto.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal).abs()).collect());
    let mixed: Vec<f64> = proto.iter().zip(&own).map(|(p, o)| p + INDIVIDUAL_WEIGHT * o).collect();
    mixed.chunks(block_len).flat_map(|c| unit_nonneg(c.to_vec())).collect()
}

/// Draws a start position in `range` at least `MIN_LANE_GAP_M` from every
/// position already taken in the lane. Falls back to the last draw when the
/// lane is too crowded.
fn spaced_start(rng: &mut ChaCha8Rng, range: std::ops::RangeInclusive<f64>, taken: &mut Vec<f64>) -> f64 {
    let mut x = rng.random_range(range.clone());
    for _ in 0..64 {
        if taken.iter().all(|t| (t - x).abs() >= MIN_LANE_GAP_M) {
            break;
        }
        x = rng.random_range(range.clone());
    }
    taken.push(x);
    x
}

fn observe_appearance(lat: &[f64], shape: AppearanceShape, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let per = sigma / (shape.block_len as f64).sqrt();
    let flat: Vec<f64> = lat
        .iter()
        .map(|&v| {
            let n = if per > 0.0 { rng.sample::<f64, _>(rand_distr::StandardNormal) * per } else { 0.0 };
            (v + n).max(0.0)
        })
        .collect();
    flat.chunks(shape.block_len).map(|c| unit_nonneg(c.to_vec())).collect()
}

fn in_view(b: &Box3D, camera: &CameraModel) -> bool {
    (VISIBLE_X.0..=VISIBLE_X.1).contains(&b.center_x) && b.center_y.abs() <= VISIBLE_Y && camera.project_box(b).is_some()
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// Generates one scenario; identical configs give identical output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let camera = CameraModel::default();
    let dim = cfg.appearance.total_len();
    let protos = prototypes(dim);
    let clutter_proto = &protos[VEHICLE_CLASSES];
    let duration = cfg.n_frames as f64 * cfg.frame_dt;
    let mix = cfg.behavior;
    let total = mix.forward + mix.oncoming + mix.lane_change;
    let oncoming_lanes: Vec<usize> = (cfg.forward_lanes..cfg.lane_count).collect();

    // Traffic in a lane moves at one shared speed so vehicles keep their gaps.
    let lane_speeds: Vec<f64> = (0..cfg.lane_count)
        .map(|lane| {
            if lane < cfg.forward_lanes {
                (cfg.ego_speed + rng.random_range(-1.0..=1.0) * cfg.speed_spread).max(0.0)
            } else {
                rng.random_range(cfg.oncoming_speed.0..=cfg.oncoming_speed.1)
            }
        })
        .collect();
    let mut taken: Vec<Vec<f64>> = vec![Vec::new(); cfg.lane_count];
    let mut vehicles = Vec::with_capacity(cfg.n_vehicles);
    let mut latents = Vec::with_capacity(cfg.n_vehicles);
    for _ in 0..cfg.n_vehicles {
        let u = rng.random::<f64>() * total;
        let mut behavior = if u < mix.forward {
            Behavior::Forward
        } else if u < mix.forward + mix.oncoming {
            Behavior::Oncoming
        } else {
            Behavior::LaneChange
        };
        if behavior == Behavior::Oncoming && oncoming_lanes.is_empty() {
            behavior = Behavior::Forward;
        }
        let length = (4.2 + gauss(&mut rng, 0.3)).clamp(3.2, 5.2);
        let width = (1.8 + gauss(&mut rng, 0.1)).clamp(1.5, 2.1);
        let height = (1.5 + gauss(&mut rng, 0.1)).clamp(1.2, 1.9);
        let v = match behavior {
            Behavior::Oncoming => {
                let lane = oncoming_lanes[rng.random_range(0..oncoming_lanes.len())];
                let speed = lane_speeds[lane];
                // Start ahead so the vehicle crosses the view during the sequence.
                let reach = (speed + cfg.ego_speed) * duration;
                let x0 = spaced_start(&mut rng, VISIBLE_X.0 + 5.0..=VISIBLE_X.1 + 0.5 * reach, &mut taken[lane]);
                Vehicle {
                    behavior,
                    x0,
                    speed,
                    lane_y: cfg.lane_center(lane),
                    lane_shift: 0.0,
                    change_start: 0.0,
                    length,
                    width,
                    height,
                }
            }
            _ => {
                let lane = rng.random_range(0..cfg.forward_lanes);
                let speed = lane_speeds[lane];
                let x0 = spaced_start(&mut rng, VISIBLE_X.0 + 2.0..=VISIBLE_X.1 - 2.0, &mut taken[lane]);
                let (lane_shift, change_start) = if behavior == Behavior::LaneChange {
                    let target = if cfg.forward_lanes == 1 {
                        lane
                    } else if lane == 0 {
                        1
                    } else if lane + 1 == cfg.forward_lanes || rng.random::<bool>() {
                        lane - 1
                    } else {
                        lane + 1
                    };
                    (cfg.lane_center(target) - cfg.lane_center(lane), rng.random_range(0.0..=0.5 * duration))
                } else {
                    (0.0, 0.0)
                };
                Vehicle {
                    behavior,
                    x0,
                    speed,
                    lane_y: cfg.lane_center(lane),
                    lane_shift,
                    change_start,
                    length,
                    width,
                    height,
                }
            }
        };
        vehicles.push(v);
        let class = rng.random_range(0..VEHICLE_CLASSES);
        latents.push(latent(&protos[class], cfg.appearance.block_len, &mut rng));
    }

    let mut frames: Vec<Vec<Detection>> = Vec::with_capacity(cfg.n_frames);
    let mut gt = Vec::new();
    let mut det_source = Vec::new();
    // 0 = not yet seen, 1 = visible run in progress, 2 = retired.
    let mut state = vec![0u8; vehicles.len()];
    let poisson = (cfg.clutter_rate > 0.0).then(|| Poisson::new(cfg.clutter_rate).expect("positive rate"));

    for f in 0..cfg.n_frames {
        let t = f as f64 * cfg.frame_dt;
        let ego_x = cfg.ego_speed * t;
        let mut dets: Vec<(Detection, Option<u64>)> = Vec::new();
        for (vi, v) in vehicles.iter().enumerate() {
            let (x, y, yaw) = v.pose(t, cfg.lane_change_duration);
            let b = Box3D {
                center_x: x - ego_x,
                center_y: y,
                center_z: -CAMERA_HEIGHT_M + v.height / 2.0,
                length: v.length,
                width: v.width,
                height: v.height,
                yaw,
            };
            let visible = state[vi] < 2 && in_view(&b, &camera);
            if !visible {
                if state[vi] == 1 {
                    state[vi] = 2;
                }
                continue;
            }
            state[vi] = 1;
            let box2d = camera.project_box(&b).expect("visible boxes project");
            gt.push(TrackBox {
                frame_idx: f,
                track_id: vi as u64,
                box2d,
                box3d: b,
                score: 1.0,
            });
            if rng.random::<f64>() < cfg.miss_prob {
                continue;
            }
            let noisy = Box3D {
                center_x: b.center_x + gauss(&mut rng, cfg.sigma_pos),
                center_y: b.center_y + gauss(&mut rng, cfg.sigma_pos),
                center_z: b.center_z,
                length: (b.length + gauss(&mut rng, cfg.sigma_size)).max(0.1),
                width: (b.width + gauss(&mut rng, cfg.sigma_size)).max(0.1),
                height: (b.height + gauss(&mut rng, cfg.sigma_size)).max(0.1),
                yaw: wrap_angle(b.yaw + gauss(&mut rng, cfg.sigma_yaw)),
            };
            let Some(nbox2d) = camera.project_box(&noisy) else { continue };
            let appearance = observe_appearance(&latents[vi], cfg.appearance, cfg.sigma_app, &mut rng);
            dets.push((
                Detection {
                    det_id: 0,
                    frame_idx: f,
                    box3d: noisy,
                    box2d: nbox2d,
                    appearance,
                    raw_score: None,
                },
                Some(vi as u64),
            ));
        }
        let n_clutter = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            let height = rng.random_range(0.5..=2.5);
            let b = Box3D {
                center_x: rng.random_range(VISIBLE_X.0..=VISIBLE_X.1),
                center_y: rng.random_range(-VISIBLE_Y..=VISIBLE_Y),
                center_z: -CAMERA_HEIGHT_M + height / 2.0,
                length: rng.random_range(0.5..=6.0),
                width: rng.random_range(0.5..=2.5),
                height,
                yaw: wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
            };
            let lat = latent(clutter_proto, cfg.appearance.block_len, &mut rng);
            let appearance = observe_appearance(&lat, cfg.appearance, cfg.sigma_app, &mut rng);
            if let Some(box2d) = camera.project_box(&b) {
                dets.push((
                    Detection {
                        det_id: 0,
                        frame_idx: f,
                        box3d: b,
                        box2d,
                        appearance,
                        raw_score: None,
                    },
                    None,
                ));
            }
        }
        dets.shuffle(&mut rng);
        let mut frame = Vec::with_capacity(dets.len());
        for (mut d, src) in dets {
            d.det_id = det_source.len() as u64;
            det_source.push(src);
            frame.push(d);
        }
        frames.push(frame);
    }

    let ego = vec![
        EgoMotion {
            vx: cfg.ego_speed,
            vy: 0.0,
            frame_dt: cfg.frame_dt,
        };
        cfg.n_frames
    ];
    Ok(Scenario {
        seq: TrackSequence { frames, ego, camera },
        gt,
        det_source,
        behaviors: vehicles.iter().map(|v| v.behavior).collect(),
    })
}

/// Named fixed suites of scenario configs.
pub const PROFILES: [&str; 3] = ["smoke", "standard", "hard"];

/// Scenario configs of a benchmark profile. Sequence `i` uses seed
/// `1000 * seed + i`.
///
/// * `smoke`: 2 sequences x 10 frames x 4 vehicles, standard noise;
/// * `standard`: 20 sequences x 40 frames x 6 vehicles, position noise
///   0.3 m, miss 0.1, clutter 0.5 per frame, appearance noise 0.5;
/// * `hard`: as standard with miss 0.25 and clutter 2 per frame.
pub fn make_benchmark(profile: &str, seed: u64) -> Result<Vec<ScenarioConfig>> {
    let base = ScenarioConfig::default();
    let (n, cfg) = match profile {
        "smoke" => (
            2,
            ScenarioConfig {
                n_frames: 10,
                n_vehicles: 4,
                ..base
            },
        ),
        "standard" => (20, base),
        "hard" => (
            20,
            ScenarioConfig {
                miss_prob: 0.25,
                clutter_rate: 2.0,
                ..base
            },
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown benchmark profile {other:?}; expected one of {PROFILES:?}"
            )))
        }
    };
    Ok((0..n)
        .map(|i| ScenarioConfig {
            seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
            ..cfg.clone()
        })
        .collect())
}

/// Sequence indices for train / validation / test (60 / 20 / 20, in order).
pub fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let train = ((n as f64 * 0.6).round() as usize).clamp(n.min(1), n);
    let val = ((n as f64 * 0.2).round() as usize).min(n - train);
    (
        (0..train).collect(),
        (train..train + val).collect(),
        (train + val..n).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig { n_frames: 15, ..Default::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&ScenarioConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(other, generate(&cfg).unwrap());
    }

    #[test]
    fn all_missed() {
        let cfg = ScenarioConfig {
            miss_prob: 1.0,
            clutter_rate: 0.0,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.seq.num_detections(), 0);
        assert!(!s.gt.is_empty());
    }

    #[test]
    fn sequence_is_valid_and_ids_dense() {
        let s = generate(&ScenarioConfig::default()).unwrap();
        s.seq.validate(AppearanceShape::default()).unwrap();
        assert_eq!(s.det_source.len(), s.seq.num_detections());
        for d in s.seq.frames.iter().flatten() {
            assert!(d.appearance.iter().flatten().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn noiseless_detections_equal_gt() {
        let s = generate(&ScenarioConfig::default().noiseless()).unwrap();
        assert_eq!(s.seq.num_detections(), s.gt.len());
        for d in s.seq.frames.iter().flatten() {
            let src = s.det_source[d.det_id as usize].unwrap();
            let g = s.gt.iter().find(|g| g.frame_idx == d.frame_idx && g.track_id == src).unwrap();
            assert_eq!(g.box3d, d.box3d);
        }
    }

    #[test]
    fn tracks_are_contiguous_and_never_teleport() {
        let cfg = ScenarioConfig { seed: 9, ..Default::default() };
        let s = generate(&cfg).unwrap();
        let vmax = cfg.max_relative_speed();
        for id in 0..cfg.n_vehicles as u64 {
            let boxes: Vec<&TrackBox> = s.gt.iter().filter(|b| b.track_id == id).collect();
            for w in boxes.windows(2) {
                assert_eq!(w[1].frame_idx, w[0].frame_idx + 1);
                assert!(w[0].box3d.center_distance(&w[1].box3d) <= vmax * cfg.frame_dt + 1e-9);
            }
        }
    }

    #[test]
    fn profiles() {
        let smoke = make_benchmark("smoke", 0).unwrap();
        assert_eq!(smoke.len(), 2);
        assert!(smoke.iter().all(|c| c.n_frames == 10));
        let std = make_benchmark("standard", 0).unwrap();
        assert_eq!(std.len(), 20);
        assert_eq!((std[0].n_frames, std[0].n_vehicles, std[0].sigma_pos), (40, 6, 0.3));
        assert_eq!((std[0].miss_prob, std[0].clutter_rate, std[0].sigma_app), (0.1, 0.5, 0.5));
        let hard = make_benchmark("hard", 0).unwrap();
        assert_eq!((hard[0].miss_prob, hard[0].clutter_rate), (0.25, 2.0));
        assert!(make_benchmark("bogus", 0).is_err());
    }

    #[test]
    fn splits() {
        assert_eq!(split_indices(20), ((0..12).collect(), (12..16).collect(), (16..20).collect()));
        assert_eq!(split_indices(2), (vec![0], vec![], vec![1]));
        assert_eq!(split_indices(1), (vec![0], vec![], vec![]));
    }

    #[test]
    fn invalid_config() {
        assert!(generate(&ScenarioConfig { miss_prob: 1.5, ..Default::default() }).is_err());
        assert!(generate(&ScenarioConfig { ego_lane: 3, ..Default::default() }).is_err());
    }
}
