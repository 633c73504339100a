//! Synthetic flights: turn-then-drive trajectories, noisy odometry, planar ToF
//! frames and detections of annotated objects.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::OdometryDelta;
use crate::geometry::{
    ray_cast_occupancy, trace_semantic, wrap_angle, CameraIntrinsics, CameraSpec, Pose2D, TraceOutcome,
};
use crate::map::SemanticGridMap;
use crate::sensor::{Detection, TofFrame, TofGeometry, SENSOR_COUNT, ZONES};
use crate::sequence::{EventKind, Sequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// ToF frame rate; ground truth and odometry share it.
    pub tof_rate: f64,
    pub detection_rate: f64,
    pub tof_noise_std: f64,
    pub tof_max_range: f64,
    /// Odometry noise std per meter (x, y) and per meter or radian of motion (theta).
    pub odom_noise_std: [f64; 3],
    pub detect_prob: f64,
    /// Per-class overrides of `detect_prob`, keyed by class name.
    pub class_detect_prob: BTreeMap<String, f64>,
    pub false_positive_rate: f64,
    pub bbox_center_noise_std: f64,
    pub max_detection_range: f64,
    /// Assumed physical height of objects, for box sizes.
    pub object_height: f64,
    pub checkpoint_rate: f64,
    pub speed: f64,
    pub turn_rate: f64,
    pub rng_seed: u64,
    pub camera: CameraSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tof_rate: 15.0,
            detection_rate: 2.0,
            tof_noise_std: 0.02,
            tof_max_range: 3.0,
            odom_noise_std: [0.05, 0.05, 0.02],
            detect_prob: 0.8,
            class_detect_prob: BTreeMap::new(),
            false_positive_rate: 0.02,
            bbox_center_noise_std: 2.0,
            max_detection_range: 5.0,
            object_height: 0.8,
            checkpoint_rate: 1.0,
            speed: 0.4,
            turn_rate: 0.8,
            rng_seed: 0,
            camera: CameraSpec::default(),
        }
    }
}

impl SimConfig {
    /// Everything off: exact sensors, every visible object detected.
    pub fn noiseless() -> Self {
        Self {
            tof_noise_std: 0.0,
            odom_noise_std: [0.0; 3],
            detect_prob: 1.0,
            false_positive_rate: 0.0,
            bbox_center_noise_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tof_rate", self.tof_rate),
            ("detection_rate", self.detection_rate),
            ("tof_max_range", self.tof_max_range),
            ("max_detection_range", self.max_detection_range),
            ("object_height", self.object_height),
            ("checkpoint_rate", self.checkpoint_rate),
            ("speed", self.speed),
            ("turn_rate", self.turn_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("tof_noise_std", self.tof_noise_std),
            ("bbox_center_noise_std", self.bbox_center_noise_std),
            ("odom_noise_std[0]", self.odom_noise_std[0]),
            ("odom_noise_std[1]", self.odom_noise_std[1]),
            ("odom_noise_std[2]", self.odom_noise_std[2]),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let probs = [
            ("detect_prob", self.detect_prob),
            ("false_positive_rate", self.false_positive_rate),
        ];
        for (name, p) in probs
            .into_iter()
            .chain(self.class_detect_prob.iter().map(|(k, v)| (k.as_str(), *v)))
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {name} = {p} outside [0, 1]")));
            }
        }
        self.camera.intrinsics().map(|_| ())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn detect_prob_for(&self, class_name: &str) -> f64 {
        self.class_detect_prob
            .get(class_name)
            .copied()
            .unwrap_or(self.detect_prob)
    }
}

/// Waypoint file: `{"waypoints": [[x, y], ...]}` in map meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointFile {
    pub waypoints: Vec<[f64; 2]>,
}

impl WaypointFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        if file.waypoints.is_empty() {
            return Err(Error::Config(format!(
                "{}: no waypoints; expected {{\"waypoints\": [[x, y], ...]}} with at least one point in free space",
                path.display()
            )));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

enum Phase {
    Turn { from: Pose2D, dtheta: f64 },
    Drive { from: Pose2D, length: f64 },
}

/// Turn-then-drive path through the waypoints, sampled every `1 / rate`
/// seconds from t = 0 while t is before the end of the path. A single
/// waypoint yields one stationary sample.
pub fn generate_trajectory(
    map: &SemanticGridMap,
    waypoints: &[[f64; 2]],
    speed: f64,
    turn_rate: f64,
    rate: f64,
) -> Result<Vec<(f64, Pose2D)>> {
    let first = waypoints.first().ok_or(Error::Empty("waypoints"))?;
    for &[x, y] in waypoints {
        if !map.is_free_at(x, y) {
            return Err(Error::PoseNotFree(x, y));
        }
    }
    if !(speed > 0.0 && turn_rate > 0.0 && rate > 0.0) {
        return Err(Error::Config(
            "speed, turn rate and sample rate must be positive".into(),
        ));
    }

    let mut phases: Vec<(f64, Phase)> = Vec::new();
    let heading0 = waypoints
        .windows(2)
        .find(|w| w[0] != w[1])
        .map(|w| (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]))
        .unwrap_or(0.0);
    let mut pose = Pose2D::new(first[0], first[1], heading0);
    for w in waypoints.windows(2) {
        let [[x0, y0], [x1, y1]] = [w[0], w[1]];
        let length = (x1 - x0).hypot(y1 - y0);
        if length == 0.0 {
            continue;
        }
        let heading = (y1 - y0).atan2(x1 - x0);
        let trace = ray_cast_occupancy(map, x0, y0, heading, length)?;
        if trace.outcome != TraceOutcome::MaxRangeReached {
            return Err(Error::BlockedSegment(x0, y0, x1, y1));
        }
        let dtheta = wrap_angle(heading - pose.theta);
        if dtheta != 0.0 {
            phases.push((dtheta.abs() / turn_rate, Phase::Turn { from: pose, dtheta }));
            pose = Pose2D::new(pose.x, pose.y, heading);
        }
        phases.push((length / speed, Phase::Drive { from: pose, length }));
        pose = Pose2D::new(x1, y1, heading);
    }

    let total: f64 = phases.iter().map(|(d, _)| d).sum();
    let mut out = Vec::new();
    let mut phase = 0;
    let mut phase_start = 0.0;
    for k in 0.. {
        let t = k as f64 / rate;
        if k > 0 && t >= total {
            break;
        }
        while phase < phases.len() && t >= phase_start + phases[phase].0 {
            phase_start += phases[phase].0;
            phase += 1;
        }
        let sample = match phases.get(phase) {
            None => pose,
            Some((duration, Phase::Turn { from, dtheta })) => {
                let s = (t - phase_start) / duration;
                Pose2D::new(from.x, from.y, from.theta + dtheta * s)
            }
            Some((duration, Phase::Drive { from, length })) => {
                let d = length * (t - phase_start) / duration;
                let (sn, cs) = from.theta.sin_cos();
                Pose2D::new(from.x + d * cs, from.y + d * sn, from.theta)
            }
        };
        out.push((t, sample));
    }
    Ok(out)
}

/// Rounds a simulated range to millimeters, the sensor's reporting unit.
fn quantize_range(r: f64) -> f32 {
    ((r * 1000.0).round() / 1000.0) as f32
}

/// Planar ToF frame at a pose: every zone column is one horizontal ray cast,
/// so all eight rows of the front grid see the same wall (with independent
/// noise). Ranges beyond `tof_max_range` and rays that hit nothing are
/// invalid.
pub fn synthesize_tof<R: Rng>(
    map: &SemanticGridMap,
    pose: &Pose2D,
    t: f64,
    geometry: &TofGeometry,
    config: &SimConfig,
    rng: &mut R,
) -> Result<TofFrame> {
    if !map.is_free_at(pose.x, pose.y) {
        return Err(Error::PoseNotFree(pose.x, pose.y));
    }
    let mut frame = TofFrame::empty(t);
    let cast_range = config.tof_max_range + 6.0 * config.tof_noise_std + map.resolution();
    let measure = |sensor: usize, j: usize, rng: &mut R, rows: &mut [Option<f32>]| -> Result<()> {
        let yaw = pose.theta + geometry.beam_yaw(sensor, j);
        let trace = ray_cast_occupancy(map, pose.x, pose.y, yaw, cast_range)?;
        for slot in rows {
            let noise: f64 = rng.sample(StandardNormal);
            let r = trace.distance + config.tof_noise_std * noise;
            *slot = (trace.outcome == TraceOutcome::BlockedByWall && r > 0.0 && r <= config.tof_max_range)
                .then(|| quantize_range(r));
        }
        Ok(())
    };
    for j in 0..ZONES {
        let mut column = [None; ZONES];
        measure(0, j, rng, &mut column)?;
        for (i, r) in column.into_iter().enumerate() {
            frame.front[i][j] = r;
        }
    }
    for s in 1..SENSOR_COUNT {
        for j in 0..ZONES {
            measure(s, j, rng, std::slice::from_mut(&mut frame.sides[s - 1][j]))?;
        }
    }
    Ok(frame)
}

/// World rectangle `[x0, y0, x1, y1]` of an annotation box.
fn annotation_rect(map: &SemanticGridMap, bbox: &[i64; 4]) -> [f64; 4] {
    let [ox, oy] = map.origin();
    let r = map.resolution();
    [
        ox + bbox[0] as f64 * r,
        oy + bbox[1] as f64 * r,
        ox + bbox[2] as f64 * r,
        oy + bbox[3] as f64 * r,
    ]
}

/// Clamps a box around a fixed center into the image by shrinking it
/// symmetrically.
fn fit_box(u: f64, v: f64, half_w: f64, half_h: f64, camera: &CameraIntrinsics) -> [f64; 4] {
    let (w, h) = (camera.image_width as f64, camera.image_height as f64);
    let u = u.clamp(0.5, w - 0.5);
    let v = v.clamp(0.5, h - 0.5);
    let hw = half_w.min(u).min(w - u);
    let hh = half_h.min(v).min(h - v);
    [u - hw, v - hh, u + hw, v + hh]
}

/// Detections seen from a pose. An annotated object is a candidate when the
/// camera ray through its box center lies inside the horizontal field of view
/// and reaches the object's class within `max_detection_range`; each candidate
/// is kept with its class detection probability. At most one false positive
/// is added per frame.
pub fn synthesize_detections<R: Rng>(
    map: &SemanticGridMap,
    pose: &Pose2D,
    camera: &CameraIntrinsics,
    config: &SimConfig,
    rng: &mut R,
) -> Vec<Detection> {
    let half_fov = camera.hfov() / 2.0;
    let mut out = Vec::new();
    for ann in map.annotations() {
        let Some(class_index) = map.class_index(&ann.class_name) else {
            continue;
        };
        let rect = annotation_rect(map, &ann.bbox);
        let (cxw, cyw) = ((rect[0] + rect[2]) / 2.0, (rect[1] + rect[3]) / 2.0);
        let bearing = wrap_angle(pose.theta - (cyw - pose.y).atan2(cxw - pose.x));
        if bearing.abs() > half_fov {
            continue;
        }
        let visible = matches!(
            trace_semantic(map, pose, bearing, class_index, config.max_detection_range),
            Ok(t) if t.is_hit()
        );
        if !visible {
            continue;
        }
        // draws happen in a fixed order so a seed fixes every frame
        let keep: f64 = rng.random();
        let du: f64 = rng.sample(StandardNormal);
        let dv: f64 = rng.sample(StandardNormal);
        let confidence = rng.random_range(0.5..1.0);
        if keep >= config.detect_prob_for(&ann.class_name) {
            continue;
        }

        let corners = [
            (rect[0], rect[1]),
            (rect[2], rect[1]),
            (rect[0], rect[3]),
            (rect[2], rect[3]),
        ];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in corners {
            let b = wrap_angle(pose.theta - (y - pose.y).atan2(x - pose.x));
            let tb = b.clamp(-FRAC_PI_2 + 0.05, FRAC_PI_2 - 0.05).tan();
            lo = lo.min(tb);
            hi = hi.max(tb);
        }
        let dist = (cxw - pose.x).hypot(cyw - pose.y).max(map.resolution());
        let half_w = (0.5 * camera.fx * (hi - lo)).max(2.0);
        let half_h = (0.5 * camera.fy * config.object_height / dist).max(2.0);
        let u = camera.bearing_to_column(bearing) + config.bbox_center_noise_std * du;
        let v = camera.cy + config.bbox_center_noise_std * dv;
        out.push(Detection {
            class_index,
            bbox: fit_box(u, v, half_w, half_h, camera),
            confidence,
        });
    }

    let n_classes = map.classes().len();
    if n_classes > 0 && rng.random::<f64>() < config.false_positive_rate {
        let (w, h) = (camera.image_width as f64, camera.image_height as f64);
        let class_index = rng.random_range(0..n_classes);
        let u = rng.random_range(0.0..w);
        let v = rng.random_range(0.0..h);
        let half_w = rng.random_range(4.0..w / 4.0);
        let half_h = rng.random_range(4.0..h / 4.0);
        let confidence = rng.random_range(0.5..1.0);
        out.push(Detection {
            class_index,
            bbox: fit_box(u, v, half_w, half_h, camera),
            confidence,
        });
    }
    out
}

/// Perturbs odometry with zero-mean Gaussian noise whose std scales with the
/// motion: `std[0]` and `std[1]` per meter translated, `std[2]` per meter
/// translated plus radian rotated.
pub fn corrupt_odometry<R: Rng>(deltas: &[OdometryDelta], std: [f64; 3], rng: &mut R) -> Vec<OdometryDelta> {
    deltas
        .iter()
        .map(|d| {
            let trans = d.translation();
            let n: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            OdometryDelta {
                dx: d.dx + std[0] * trans * n[0],
                dy: d.dy + std[1] * trans * n[1],
                dtheta: d.dtheta + std[2] * (trans + d.dtheta.abs()) * n[2],
                timestamp: d.timestamp,
            }
        })
        .collect()
}

/// Crossing test for a periodic event at `rate`: true when `t` enters a new
/// period compared with `prev` (always true at the first sample).
fn period_crossed(prev: Option<f64>, t: f64, rate: f64) -> bool {
    let slot = |t: f64| (t * rate + 1e-9).floor();
    prev.is_none_or(|p| slot(t) > slot(p))
}

fn sim_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates a whole flight through `waypoints`. Separate random streams
/// drive odometry, ToF and detection noise, so changing one noise source
/// leaves the others' draws untouched.
pub fn generate_sequence(map: &SemanticGridMap, waypoints: &[[f64; 2]], config: &SimConfig) -> Result<Sequence> {
    config.validate()?;
    let camera = config.camera.intrinsics()?;
    let geometry = TofGeometry::default();
    let trajectory = generate_trajectory(map, waypoints, config.speed, config.turn_rate, config.tof_rate)?;
    let mut odom_rng = sim_rng(config.rng_seed, 1);
    let mut tof_rng = sim_rng(config.rng_seed, 2);
    let mut det_rng = sim_rng(config.rng_seed, 3);

    let mut seq = Sequence::default();
    let mut prev: Option<(f64, Pose2D)> = None;
    for &(t, pose) in &trajectory {
        let checkpoint = period_crossed(prev.map(|p| p.0), t, config.checkpoint_rate);
        seq.push(t, EventKind::GroundTruth { pose, checkpoint });
        if let Some((_, last)) = prev {
            let (dx, dy, dtheta) = last.delta_to(&pose);
            let truth = OdometryDelta {
                dx,
                dy,
                dtheta,
                timestamp: t,
            };
            let noisy = corrupt_odometry(&[truth], config.odom_noise_std, &mut odom_rng);
            seq.push(t, EventKind::Odometry(noisy[0]));
        }
        seq.push(
            t,
            EventKind::Tof(synthesize_tof(map, &pose, t, &geometry, config, &mut tof_rng)?),
        );
        if period_crossed(prev.map(|p| p.0), t, config.detection_rate) {
            let detections = synthesize_detections(map, &pose, &camera, config, &mut det_rng);
            if !detections.is_empty() {
                seq.push(t, EventKind::Detections(detections));
            }
        }
        prev = Some((t, pose));
    }
    Ok(seq)
}
