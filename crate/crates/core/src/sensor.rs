//! Particle likelihoods: the beam-end model over multizone ToF frames and the
//! camera/ToF fusion model for semantic detections.
//!
//! Both models use a Gaussian with the normalization written as
//! `1 / sqrt(2 pi sigma)` and accumulate in log space.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::edt::DistanceField;
use crate::error::{Error, Result};
use crate::geometry::{trace_semantic, CameraIntrinsics, Pose2D};
use crate::map::SemanticGridMap;

pub const ZONES: usize = 8;
/// Beams taken from each sensor's middle row.
pub const MIDDLE_ROW: usize = 3;
pub const SENSOR_COUNT: usize = 4;

/// Multizone ToF mounting and field of view. Sensors are ordered front, left,
/// back, right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TofGeometry {
    /// Body-frame yaw of each sensor's optical axis.
    pub mount_yaws: [f64; SENSOR_COUNT],
    /// Horizontal field of view of one sensor.
    pub hfov: f64,
    /// Vertical field of view of the front sensor grid.
    pub vfov: f64,
}

impl Default for TofGeometry {
    fn default() -> Self {
        Self {
            mount_yaws: [0.0, FRAC_PI_2, PI, -FRAC_PI_2],
            hfov: 45f64.to_radians(),
            vfov: 45f64.to_radians(),
        }
    }
}

impl TofGeometry {
    /// Camera-convention bearing (positive to the right) of zone column `j`;
    /// column 0 is the leftmost.
    pub fn zone_bearing(&self, j: usize) -> f64 {
        ((j as f64 + 0.5) / ZONES as f64 - 0.5) * self.hfov
    }

    /// Angular interval `[lo, hi)` covered by zone column `j`.
    pub fn zone_interval(&self, j: usize) -> (f64, f64) {
        (
            (j as f64 / ZONES as f64 - 0.5) * self.hfov,
            ((j + 1) as f64 / ZONES as f64 - 0.5) * self.hfov,
        )
    }

    /// Vertical interval of zone row `i` (positive downward); row 0 is the top.
    pub fn row_interval(&self, i: usize) -> (f64, f64) {
        (
            (i as f64 / ZONES as f64 - 0.5) * self.vfov,
            ((i + 1) as f64 / ZONES as f64 - 0.5) * self.vfov,
        )
    }

    /// Body-frame yaw of beam `j` of sensor `s`.
    pub fn beam_yaw(&self, sensor: usize, j: usize) -> f64 {
        self.mount_yaws[sensor] - self.zone_bearing(j)
    }
}

/// One synchronized reading of the four ToF sensors. Ranges are meters;
/// `None` marks an invalid zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TofFrame {
    pub timestamp: f64,
    /// Full 8x8 front grid, rows top to bottom, columns left to right.
    pub front: [[Option<f32>; ZONES]; ZONES],
    /// Middle-row beams of the left, back and right sensors.
    pub sides: [[Option<f32>; ZONES]; 3],
}

impl TofFrame {
    pub fn empty(timestamp: f64) -> Self {
        Self {
            timestamp,
            front: [[None; ZONES]; ZONES],
            sides: [[None; ZONES]; 3],
        }
    }

    /// The 32 middle-row beams as `(sensor, column, range)`.
    pub fn middle_row_beams(&self) -> impl Iterator<Item = (usize, usize, Option<f32>)> + '_ {
        let rows = [&self.front[MIDDLE_ROW], &self.sides[0], &self.sides[1], &self.sides[2]];
        rows.into_iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().map(move |(j, r)| (s, j, *r)))
    }
}

/// An object detection in image coordinates (`xyxy`, pixels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_index: usize,
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl Detection {
    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.bbox[0] + self.bbox[2]), 0.5 * (self.bbox[1] + self.bbox[3]))
    }

    pub fn validate(&self, camera: &CameraIntrinsics) -> Result<()> {
        let [x0, y0, x1, y1] = self.bbox;
        let ok = x0 < x1
            && y0 < y1
            && x0 >= 0.0
            && y0 >= 0.0
            && x1 <= camera.image_width as f64
            && y1 <= camera.image_height as f64
            && (0.0..=1.0).contains(&self.confidence);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid detection {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModelParams {
    /// Std of the beam-end model, meters.
    pub sigma_g: f64,
    /// Std of the semantic range-matching model, meters.
    pub sigma_s: f64,
    /// ToF ranges at or above this are not matched against traced distances.
    pub tau_t: f64,
    /// Distance field truncation radius.
    pub r_max: f64,
    /// Beams longer than this are discarded.
    pub tof_valid_range: f64,
    /// Fewer valid beams than this and the frame carries no information.
    pub min_valid_beams: usize,
    /// Likelihood assigned when a detection's ray hits a wall first.
    pub miss_penalty: f64,
    /// Range limit for semantic ray tracing.
    pub max_trace_range: f64,
}

impl Default for SensorModelParams {
    fn default() -> Self {
        Self {
            sigma_g: 8.0,
            sigma_s: 10.0,
            tau_t: 2.5,
            r_max: 2.0,
            tof_valid_range: 3.0,
            min_valid_beams: 8,
            miss_penalty: 0.1,
            max_trace_range: 10.0,
        }
    }
}

impl SensorModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.sigma_g,
            self.sigma_s,
            self.tau_t,
            self.r_max,
            self.tof_valid_range,
            self.max_trace_range,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("sensor parameters must be positive: {self:?}")));
        }
        if self.min_valid_beams == 0 || self.min_valid_beams > 32 {
            return Err(Error::Config(format!(
                "min_valid_beams {} not in 1..=32",
                self.min_valid_beams
            )));
        }
        if !(self.miss_penalty > 0.0 && self.miss_penalty < 1.0) {
            return Err(Error::Config(format!(
                "miss_penalty {} not in (0, 1)",
                self.miss_penalty
            )));
        }
        Ok(())
    }

    fn is_valid_range(&self, r: Option<f32>) -> Option<f64> {
        r.map(f64::from).filter(|&r| r > 0.0 && r <= self.tof_valid_range)
    }
}

/// `ln(1 / sqrt(2 pi sigma))`.
#[inline]
pub fn log_gaussian_peak(sigma: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma).ln()
}

#[inline]
pub fn log_gaussian(residual: f64, sigma: f64) -> f64 {
    log_gaussian_peak(sigma) - residual * residual / (2.0 * sigma * sigma)
}

/// Valid beams of a frame, pre-rotated into body-frame endpoint offsets.
#[derive(Clone, Debug)]
pub struct BeamEndObservation {
    endpoints: Vec<[f64; 2]>,
    log_peak: f64,
    inv_two_var: f64,
}

impl BeamEndObservation {
    /// Returns `None` when fewer than `min_valid_beams` beams are valid.
    pub fn new(frame: &TofFrame, geometry: &TofGeometry, params: &SensorModelParams) -> Option<Self> {
        let endpoints: Vec<[f64; 2]> = frame
            .middle_row_beams()
            .filter_map(|(s, j, r)| {
                params.is_valid_range(r).map(|r| {
                    let (sn, cs) = geometry.beam_yaw(s, j).sin_cos();
                    [r * cs, r * sn]
                })
            })
            .collect();
        if endpoints.len() < params.min_valid_beams {
            return None;
        }
        Some(Self {
            endpoints,
            log_peak: log_gaussian_peak(params.sigma_g),
            inv_two_var: 1.0 / (2.0 * params.sigma_g * params.sigma_g),
        })
    }

    pub fn valid_beams(&self) -> usize {
        self.endpoints.len()
    }

    /// Map-frame beam endpoints for a pose.
    pub fn endpoints(&self, pose: &Pose2D) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (s, c) = pose.theta.sin_cos();
        let (px, py) = (pose.x, pose.y);
        self.endpoints
            .iter()
            .map(move |[bx, by]| (px + c * bx - s * by, py + s * bx + c * by))
    }

    pub fn log_likelihood(&self, pose: &Pose2D, edt: &DistanceField) -> f64 {
        let mut sum = 0.0;
        for (x, y) in self.endpoints(pose) {
            let d = edt.distance_at(x, y);
            sum += self.log_peak - d * d * self.inv_two_var;
        }
        sum
    }
}

/// Beam-end log-likelihood of a pose, or `None` when the frame has too few
/// valid beams to be used.
pub fn beam_end_log_likelihood(
    pose: &Pose2D,
    frame: &TofFrame,
    edt: &DistanceField,
    geometry: &TofGeometry,
    params: &SensorModelParams,
) -> Option<f64> {
    BeamEndObservation::new(frame, geometry, params).map(|obs| obs.log_likelihood(pose, edt))
}

/// Linear-scale beam-end likelihood. Underflows for large beam counts; prefer
/// [`beam_end_log_likelihood`].
pub fn beam_end_likelihood(
    pose: &Pose2D,
    frame: &TofFrame,
    edt: &DistanceField,
    geometry: &TofGeometry,
    params: &SensorModelParams,
) -> Option<f64> {
    beam_end_log_likelihood(pose, frame, edt, geometry, params).map(f64::exp)
}

/// Zones of the front grid covered by an image box. Image angles map linearly
/// onto the zone lattice, with both fields of view centered on the optical
/// axis.
pub fn bbox_zones(bbox: &[f64; 4], camera: &CameraIntrinsics, geometry: &TofGeometry) -> Vec<(usize, usize)> {
    let left = camera.pixel_to_bearing(bbox[0], camera.cy);
    let right = camera.pixel_to_bearing(bbox[2], camera.cy);
    let top = camera.row_to_elevation(bbox[1]);
    let bottom = camera.row_to_elevation(bbox[3]);
    let cols: Vec<usize> = (0..ZONES)
        .filter(|&j| {
            let (lo, hi) = geometry.zone_interval(j);
            lo < right && hi > left
        })
        .collect();
    let rows: Vec<usize> = (0..ZONES)
        .filter(|&i| {
            let (lo, hi) = geometry.row_interval(i);
            lo < bottom && hi > top
        })
        .collect();
    rows.iter().flat_map(|&i| cols.iter().map(move |&j| (i, j))).collect()
}

/// Mean of the valid front-grid ranges inside an image box, or `None` when no
/// valid zone falls inside.
pub fn associate_bbox_range(
    frame: &TofFrame,
    bbox: &[f64; 4],
    camera: &CameraIntrinsics,
    geometry: &TofGeometry,
    params: &SensorModelParams,
) -> Option<f64> {
    let (sum, n) = bbox_zones(bbox, camera, geometry)
        .into_iter()
        .filter_map(|(i, j)| params.is_valid_range(frame.front[i][j]))
        .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// A detection reduced to what every particle needs: class, camera bearing
/// and the associated ToF range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemanticObservation {
    pub class_index: usize,
    pub bearing: f64,
    pub tof_range: Option<f64>,
    log_peak: f64,
    log_miss: f64,
    sigma_s: f64,
    tau_t: f64,
    max_trace_range: f64,
}

impl SemanticObservation {
    pub fn new(
        detection: &Detection,
        frame: &TofFrame,
        map: &SemanticGridMap,
        camera: &CameraIntrinsics,
        geometry: &TofGeometry,
        params: &SensorModelParams,
    ) -> Result<Self> {
        if detection.class_index >= map.classes().len() {
            return Err(Error::UnknownClass(detection.class_index));
        }
        let (u, v) = detection.center();
        Ok(Self {
            class_index: detection.class_index,
            bearing: camera.pixel_to_bearing(u, v),
            tof_range: associate_bbox_range(frame, &detection.bbox, camera, geometry, params),
            log_peak: log_gaussian_peak(params.sigma_s),
            log_miss: params.miss_penalty.ln(),
            sigma_s: params.sigma_s,
            tau_t: params.tau_t,
            max_trace_range: params.max_trace_range,
        })
    }

    pub fn log_likelihood(&self, pose: &Pose2D, map: &SemanticGridMap) -> f64 {
        let trace = match trace_semantic(map, pose, self.bearing, self.class_index, self.max_trace_range) {
            Ok(t) if t.is_hit() => t,
            // blocked, exited, out of range, or a pose outside the map
            _ => return self.log_miss,
        };
        match self.tof_range {
            Some(d_tof) if d_tof < self.tau_t => log_gaussian(trace.distance - d_tof, self.sigma_s),
            _ => self.log_peak,
        }
    }
}

/// Fusion-model likelihood of one detection for one pose.
pub fn semantic_likelihood(
    pose: &Pose2D,
    detection: &Detection,
    frame: &TofFrame,
    map: &SemanticGridMap,
    camera: &CameraIntrinsics,
    geometry: &TofGeometry,
    params: &SensorModelParams,
) -> Result<f64> {
    let obs = SemanticObservation::new(detection, frame, map, camera, geometry, params)?;
    Ok(obs.log_likelihood(pose, map).exp())
}
