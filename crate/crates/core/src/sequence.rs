//! Line-delimited JSON sequence files.
//!
//! Each line is one record `{"t": <seconds>, "type": <kind>, "payload": {...}}`:
//!
//! | type   | payload                                                              |
//! |--------|----------------------------------------------------------------------|
//! | `odom` | `{"dx", "dy", "dtheta"}` body-frame motion since the previous odom   |
//! | `tof`  | `{"front": 8x8 rows, "left": [8], "back": [8], "right": [8]}`; `null` marks an invalid zone |
//! | `det`  | `{"detections": [{"class", "bbox": [x0, y0, x1, y1], "confidence"}]}` |
//! | `gt`   | `{"x", "y", "theta", "checkpoint"}` ground-truth pose               |
//!
//! Records are ordered by time; within one timestamp the order is `gt`,
//! `odom`, `tof`, `det`. Every `det` record shares its timestamp with a `tof`
//! record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::filter::OdometryDelta;
use crate::geometry::Pose2D;
use crate::sensor::{Detection, TofFrame, ZONES};

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    GroundTruth { pose: Pose2D, checkpoint: bool },
    Odometry(OdometryDelta),
    Tof(TofFrame),
    Detections(Vec<Detection>),
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::GroundTruth { .. } => "gt",
            EventKind::Odometry(_) => "odom",
            EventKind::Tof(_) => "tof",
            EventKind::Detections(_) => "det",
        }
    }

    fn order(&self) -> u8 {
        match self {
            EventKind::GroundTruth { .. } => 0,
            EventKind::Odometry(_) => 1,
            EventKind::Tof(_) => 2,
            EventKind::Detections(_) => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// A recorded or simulated flight.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sequence {
    pub events: Vec<Event>,
}

#[derive(Deserialize)]
struct RawRecord {
    t: f64,
    #[serde(rename = "type")]
    kind: String,
    payload: Value,
}

#[derive(Serialize, Deserialize)]
struct OdomPayload {
    dx: f64,
    dy: f64,
    dtheta: f64,
}

#[derive(Serialize, Deserialize)]
struct TofPayload {
    front: [[Option<f32>; ZONES]; ZONES],
    left: [Option<f32>; ZONES],
    back: [Option<f32>; ZONES],
    right: [Option<f32>; ZONES],
}

#[derive(Serialize, Deserialize)]
struct DetPayload {
    detections: Vec<Detection>,
}

#[derive(Serialize, Deserialize)]
struct GtPayload {
    x: f64,
    y: f64,
    theta: f64,
    #[serde(default)]
    checkpoint: bool,
}

#[derive(Serialize)]
struct OutRecord<'a, P> {
    t: f64,
    #[serde(rename = "type")]
    kind: &'a str,
    payload: P,
}

impl Event {
    fn write_json(&self, w: &mut impl Write) -> Result<()> {
        let (t, kind) = (self.t, self.kind.tag());
        match &self.kind {
            EventKind::GroundTruth { pose, checkpoint } => serde_json::to_writer(
                w,
                &OutRecord {
                    t,
                    kind,
                    payload: GtPayload {
                        x: pose.x,
                        y: pose.y,
                        theta: pose.theta,
                        checkpoint: *checkpoint,
                    },
                },
            )?,
            EventKind::Odometry(d) => serde_json::to_writer(
                w,
                &OutRecord {
                    t,
                    kind,
                    payload: OdomPayload {
                        dx: d.dx,
                        dy: d.dy,
                        dtheta: d.dtheta,
                    },
                },
            )?,
            EventKind::Tof(f) => serde_json::to_writer(
                w,
                &OutRecord {
                    t,
                    kind,
                    payload: TofPayload {
                        front: f.front,
                        left: f.sides[0],
                        back: f.sides[1],
                        right: f.sides[2],
                    },
                },
            )?,
            EventKind::Detections(d) => serde_json::to_writer(
                w,
                &OutRecord {
                    t,
                    kind,
                    payload: DetPayload { detections: d.clone() },
                },
            )?,
        }
        Ok(())
    }

    fn from_raw(raw: RawRecord, line: usize) -> Result<Self> {
        let err = |message: String| Error::Sequence { line, message };
        if !raw.t.is_finite() {
            return Err(err(format!("non-finite timestamp {}", raw.t)));
        }
        let t = raw.t;
        let kind = match raw.kind.as_str() {
            "gt" => {
                let p: GtPayload = serde_json::from_value(raw.payload).map_err(|e| err(e.to_string()))?;
                EventKind::GroundTruth {
                    pose: Pose2D::new(p.x, p.y, p.theta),
                    checkpoint: p.checkpoint,
                }
            }
            "odom" => {
                let p: OdomPayload = serde_json::from_value(raw.payload).map_err(|e| err(e.to_string()))?;
                if !(p.dx.is_finite() && p.dy.is_finite() && p.dtheta.is_finite()) {
                    return Err(err("non-finite odometry".into()));
                }
                EventKind::Odometry(OdometryDelta {
                    dx: p.dx,
                    dy: p.dy,
                    dtheta: p.dtheta,
                    timestamp: t,
                })
            }
            "tof" => {
                let p: TofPayload = serde_json::from_value(raw.payload).map_err(|e| err(e.to_string()))?;
                let all = p.front.iter().flatten().chain(&p.left).chain(&p.back).chain(&p.right);
                for r in all.flatten() {
                    if !(*r > 0.0 && r.is_finite()) {
                        return Err(err(format!("invalid range {r}")));
                    }
                }
                EventKind::Tof(TofFrame {
                    timestamp: t,
                    front: p.front,
                    sides: [p.left, p.back, p.right],
                })
            }
            "det" => {
                let p: DetPayload = serde_json::from_value(raw.payload).map_err(|e| err(e.to_string()))?;
                EventKind::Detections(p.detections)
            }
            other => return Err(err(format!("unknown record type {other:?}"))),
        };
        Ok(Event { t, kind })
    }
}

impl Sequence {
    pub fn push(&mut self, t: f64, kind: EventKind) {
        self.events.push(Event { t, kind });
    }

    /// Checks ordering: time non-decreasing, each record type strictly
    /// increasing, canonical order within a timestamp, and a `tof` record
    /// alongside every `det`.
    pub fn validate(&self) -> Result<()> {
        let mut last_by_type = [f64::NEG_INFINITY; 4];
        let mut last: Option<&Event> = None;
        for (i, e) in self.events.iter().enumerate() {
            let line = i + 1;
            if let Some(prev) = last {
                if e.t < prev.t || (e.t == prev.t && e.kind.order() <= prev.kind.order()) {
                    return Err(Error::Sequence {
                        line,
                        message: format!("record at t={} out of order", e.t),
                    });
                }
            }
            let k = e.kind.order() as usize;
            if e.t <= last_by_type[k] {
                return Err(Error::Sequence {
                    line,
                    message: format!("duplicate {} record at t={}", e.kind.tag(), e.t),
                });
            }
            last_by_type[k] = e.t;
            if let EventKind::Detections(_) = e.kind {
                if last_by_type[2] != e.t {
                    return Err(Error::Sequence {
                        line,
                        message: format!("det record at t={} has no tof frame", e.t),
                    });
                }
            }
            last = Some(e);
        }
        Ok(())
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        for e in &self.events {
            e.write_json(&mut w)?;
            w.write_all(b"\n").map_err(|e| Error::io("<sequence>", e))?;
        }
        w.flush().map_err(|e| Error::io("<sequence>", e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f)
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut seq = Sequence::default();
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Sequence {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Sequence {
                line: line_no,
                message: e.to_string(),
            })?;
            seq.events.push(Event::from_raw(raw, line_no)?);
        }
        seq.validate()?;
        Ok(seq)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }

    /// Ground-truth checkpoints (the sparse subset used for evaluation).
    pub fn checkpoints(&self) -> Vec<(f64, Pose2D)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::GroundTruth { pose, checkpoint: true } => Some((e.t, pose)),
                _ => None,
            })
            .collect()
    }

    pub fn ground_truth(&self) -> Vec<(f64, Pose2D)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::GroundTruth { pose, .. } => Some((e.t, pose)),
                _ => None,
            })
            .collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Events grouped by timestamp, in file order.
    pub fn steps(&self) -> impl Iterator<Item = &[Event]> {
        self.events.chunk_by(|a, b| a.t == b.t)
    }
}
