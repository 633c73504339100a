//! Semantic Monte Carlo localization on annotated floor-plan grid maps.
//!
//! A map packs occupancy and up to 14 semantic class layers into one `u16`
//! per cell. The filter weighs particles with a beam-end model over
//! multizone ToF frames and, when object detections are available, with a
//! fusion model that traces each detection's camera ray through the semantic
//! layers and matches it against the front ToF range.

pub mod edt;
pub mod error;
pub mod eval;
pub mod filter;
pub mod geometry;
pub mod manifest;
pub mod map;
pub mod render;
pub mod runner;
pub mod sensor;
pub mod sequence;
pub mod sim;
pub mod world;

pub use edt::{compute_edt, DistanceField};
pub use error::{Error, Result};
pub use filter::{FilterConfig, OdometryDelta, Particle, ParticleFilter, UpdateOutcome};
pub use geometry::{CameraIntrinsics, CameraSpec, Pose2D, TraceOutcome, TraceResult};
pub use manifest::RunManifest;
pub use map::{load_map, Cell, Occupancy, SemanticAnnotation, SemanticGridMap};
pub use runner::{run_sequence, Localizer, Mode, RunLog, RunOptions};
pub use sensor::{Detection, SensorModelParams, TofFrame, TofGeometry};
pub use sequence::{Event, EventKind, Sequence};
pub use sim::{generate_sequence, SimConfig, WaypointFile};
