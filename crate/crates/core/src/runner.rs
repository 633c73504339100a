//! Timestamp-ordered replay of a sequence through the filter.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::edt::DistanceField;
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, OdometryDelta, Particle, ParticleFilter, UpdateOutcome};
use crate::geometry::{CameraIntrinsics, Pose2D};
use crate::map::SemanticGridMap;
use crate::sensor::{BeamEndObservation, Detection, SemanticObservation, SensorModelParams, TofFrame, TofGeometry};
use crate::sequence::{EventKind, Sequence};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Beam-end model on ToF frames, semantic model on frames with detections.
    #[default]
    Fusion,
    /// Beam-end model only; detections are ignored.
    RangeOnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(Mode::Fusion),
            "range_only" => Ok(Mode::RangeOnly),
            other => Err(Error::Config(format!("unknown mode {other:?} (fusion | range_only)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    BeamEnd,
    Semantic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateTiming {
    pub t: f64,
    pub kind: UpdateKind,
    /// Likelihood evaluation, normalization and resampling.
    pub seconds: f64,
    /// The likelihood was zero everywhere and the weights were reset.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub particles: Vec<Particle>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub estimates: Vec<(f64, Pose2D)>,
    pub snapshots: Vec<Snapshot>,
    pub timings: Vec<UpdateTiming>,
    /// Updates that hit an all-zero likelihood and reset the weights.
    pub degenerate_updates: usize,
}

impl RunLog {
    /// CSV with header `t,x,y,theta`.
    pub fn write_estimates(&self, path: &Path) -> Result<()> {
        write_pose_csv(path, &self.estimates)
    }

    /// CSV with header `t,kind,seconds,degenerate`.
    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.timings {
            w.serialize(t)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// CSV with header `t,x,y,theta,weight`, one row per particle of every
    /// snapshot.
    pub fn write_snapshots(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "y", "theta", "weight"])?;
        for s in &self.snapshots {
            for p in &s.particles {
                w.write_record(&[
                    s.t.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    p.theta.to_string(),
                    p.weight.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>> {
    #[derive(Deserialize)]
    struct Row {
        t: f64,
        x: f32,
        y: f32,
        theta: f32,
        weight: f32,
    }
    let mut out: Vec<Snapshot> = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let r: Row = row?;
        let p = Particle {
            x: r.x,
            y: r.y,
            theta: r.theta,
            weight: r.weight,
        };
        match out.last_mut() {
            Some(s) if s.t == r.t => s.particles.push(p),
            _ => out.push(Snapshot {
                t: r.t,
                particles: vec![p],
            }),
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PoseRow {
    t: f64,
    x: f64,
    y: f64,
    theta: f64,
}

/// Writes timestamped poses as CSV `t,x,y,theta`.
pub fn write_pose_csv(path: &Path, poses: &[(f64, Pose2D)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (t, p) in poses {
        w.serialize(PoseRow {
            t: *t,
            x: p.x,
            y: p.y,
            theta: p.theta,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pose_csv(path: &Path) -> Result<Vec<(f64, Pose2D)>> {
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|row| {
            let r: PoseRow = row?;
            Ok((r.t, Pose2D::new(r.x, r.y, r.theta)))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub filter: FilterConfig,
    pub sensor: SensorModelParams,
    pub mode: Mode,
    pub camera: CameraIntrinsics,
    pub geometry: TofGeometry,
    /// Times at which to copy the particle set (first step at or after each).
    pub snapshot_times: Vec<f64>,
}

/// Filter plus the motion gate and the sensor context needed for updates.
#[derive(Clone, Debug)]
pub struct Localizer {
    options: RunOptions,
    filter: ParticleFilter,
    moved_xy: f64,
    moved_theta: f64,
}

impl Localizer {
    /// Starts from particles spread uniformly over the map's free space.
    pub fn new(map: &SemanticGridMap, options: RunOptions) -> Result<Self> {
        let filter = ParticleFilter::init_uniform(map, options.filter.clone())?;
        Self::with_filter(options, filter)
    }

    pub fn with_filter(options: RunOptions, filter: ParticleFilter) -> Result<Self> {
        options.sensor.validate()?;
        options.camera.validate()?;
        Ok(Self {
            options,
            filter,
            moved_xy: 0.0,
            moved_theta: 0.0,
        })
    }

    pub fn filter(&self) -> &ParticleFilter {
        &self.filter
    }

    pub fn options(&self) -> &RunOptions {
        &self.options
    }

    pub fn gate_open(&self) -> bool {
        let cfg = &self.options.filter;
        self.moved_xy >= cfg.d_xy || self.moved_theta >= cfg.d_theta
    }

    pub fn odometry(&mut self, delta: &OdometryDelta) {
        self.filter.motion_update(delta);
        self.moved_xy += delta.translation();
        self.moved_theta += delta.dtheta.abs();
    }

    /// Weighs the particles with one ToF frame and the detections taken with
    /// it, then resamples. Returns `None` when the gate is closed or the
    /// frame carries too little information.
    pub fn observe(
        &mut self,
        map: &SemanticGridMap,
        edt: &DistanceField,
        frame: &TofFrame,
        detections: &[Detection],
    ) -> Result<Option<UpdateTiming>> {
        if !self.gate_open() {
            return Ok(None);
        }
        let start = Instant::now();
        let (kind, logs) = if self.options.mode == Mode::Fusion && !detections.is_empty() {
            let observations = detections
                .iter()
                .map(|d| {
                    SemanticObservation::new(
                        d,
                        frame,
                        map,
                        &self.options.camera,
                        &self.options.geometry,
                        &self.options.sensor,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let logs = self
                .filter
                .log_likelihoods(|pose| observations.iter().map(|o| o.log_likelihood(pose, map)).sum());
            (UpdateKind::Semantic, logs)
        } else {
            let Some(obs) = BeamEndObservation::new(frame, &self.options.geometry, &self.options.sensor) else {
                return Ok(None);
            };
            (
                UpdateKind::BeamEnd,
                self.filter.log_likelihoods(|pose| obs.log_likelihood(pose, edt)),
            )
        };
        let outcome = self.filter.measurement_update_log(&logs)?;
        self.filter.resample();
        self.filter.reinject(map);
        let seconds = start.elapsed().as_secs_f64();
        self.moved_xy = 0.0;
        self.moved_theta = 0.0;
        Ok(Some(UpdateTiming {
            t: frame.timestamp,
            kind,
            seconds,
            degenerate: outcome == UpdateOutcome::Degenerate,
        }))
    }
}

/// Replays a sequence. Events sharing a timestamp form one step: odometry
/// moves the particles, then the step's ToF frame (with any detections) is
/// offered to [`Localizer::observe`]. An estimate is logged after every step.
pub fn run_sequence(
    map: &SemanticGridMap,
    edt: &DistanceField,
    sequence: &Sequence,
    options: RunOptions,
) -> Result<RunLog> {
    let mut snapshot_times = options.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;
    let mut loc = Localizer::new(map, options)?;
    let mut log = RunLog::default();
    for step in sequence.steps() {
        let t = step[0].t;
        let mut frame = None;
        let mut detections: &[Detection] = &[];
        for event in step {
            match &event.kind {
                EventKind::Odometry(delta) => loc.odometry(delta),
                EventKind::Tof(f) => frame = Some(f),
                EventKind::Detections(d) => detections = d,
                EventKind::GroundTruth { .. } => {}
            }
        }
        if let Some(frame) = frame {
            if let Some(timing) = loc.observe(map, edt, frame, detections)? {
                log.degenerate_updates += timing.degenerate as usize;
                log.timings.push(timing);
            }
        }
        let pose = loc.filter.estimate_pose()?;
        log.estimates.push((t, pose));
        while next_snapshot < snapshot_times.len() && t >= snapshot_times[next_snapshot] {
            log.snapshots.push(Snapshot {
                t,
                particles: loc.filter.particles().to_vec(),
            });
            next_snapshot += 1;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edt::compute_edt;
    use crate::sim::{generate_sequence, SimConfig};
    use crate::world::{twin_route, twin_world};

    fn options(mode: Mode) -> RunOptions {
        RunOptions {
            filter: FilterConfig {
                n_particles: 512,
                rng_seed: 3,
                ..FilterConfig::default()
            },
            sensor: SensorModelParams::default(),
            mode,
            camera: SimConfig::default().camera.intrinsics().unwrap(),
            geometry: TofGeometry::default(),
            snapshot_times: vec![5.0],
        }
    }

    fn short_sequence(map: &SemanticGridMap) -> Sequence {
        let route = &twin_route()[..3];
        generate_sequence(
            map,
            route,
            &SimConfig {
                rng_seed: 2,
                ..SimConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn replay_is_deterministic() {
        let map = twin_world();
        let edt = compute_edt(&map, 2.0).unwrap();
        let seq = short_sequence(&map);
        let a = run_sequence(&map, &edt, &seq, options(Mode::Fusion)).unwrap();
        let b = run_sequence(&map, &edt, &seq, options(Mode::Fusion)).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.estimates.len(), seq.steps().count());
        assert_eq!(a.snapshots.len(), 1);
        assert!(a.snapshots[0].t >= 5.0);
    }

    #[test]
    fn modes_pick_their_models() {
        let map = twin_world();
        let edt = compute_edt(&map, 2.0).unwrap();
        let seq = short_sequence(&map);
        let fusion = run_sequence(&map, &edt, &seq, options(Mode::Fusion)).unwrap();
        let range = run_sequence(&map, &edt, &seq, options(Mode::RangeOnly)).unwrap();
        assert!(fusion.timings.iter().any(|t| t.kind == UpdateKind::Semantic));
        assert!(range.timings.iter().all(|t| t.kind == UpdateKind::BeamEnd));
        assert!(!range.timings.is_empty());
    }

    #[test]
    fn gate_blocks_updates_without_motion() {
        let map = twin_world();
        let edt = compute_edt(&map, 2.0).unwrap();
        let opts = options(Mode::Fusion);
        let mut loc = Localizer::new(&map, opts).unwrap();
        let seq = short_sequence(&map);
        let frame = seq
            .events
            .iter()
            .find_map(|e| match &e.kind {
                EventKind::Tof(f) => Some(f.clone()),
                _ => None,
            })
            .unwrap();
        assert!(!loc.gate_open());
        assert!(loc.observe(&map, &edt, &frame, &[]).unwrap().is_none());
        loc.odometry(&OdometryDelta::new(0.03, 0.0, 0.0));
        assert!(loc.observe(&map, &edt, &frame, &[]).unwrap().is_none());
        loc.odometry(&OdometryDelta::new(0.03, 0.0, 0.0));
        assert!(loc.gate_open());
        assert!(loc.observe(&map, &edt, &frame, &[]).unwrap().is_some());
        assert!(!loc.gate_open());
        loc.odometry(&OdometryDelta::new(0.0, 0.0, 0.06));
        assert!(loc.gate_open());
    }

    #[test]
    fn csv_outputs_roundtrip() {
        let map = twin_world();
        let edt = compute_edt(&map, 2.0).unwrap();
        let seq = short_sequence(&map);
        let log = run_sequence(&map, &edt, &seq, options(Mode::Fusion)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        log.write_estimates(&dir.path().join("e.csv")).unwrap();
        log.write_snapshots(&dir.path().join("s.csv")).unwrap();
        log.write_timings(&dir.path().join("t.csv")).unwrap();
        let est = read_pose_csv(&dir.path().join("e.csv")).unwrap();
        assert_eq!(est.len(), log.estimates.len());
        for (a, b) in est.iter().zip(&log.estimates) {
            assert_eq!(a.0, b.0);
            assert!(a.1.distance(&b.1) < 1e-12);
        }
        assert_eq!(read_snapshots(&dir.path().join("s.csv")).unwrap(), log.snapshots);
    }
}
