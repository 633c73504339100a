//! Run manifests: TOML files naming the map, the sequences and every filter
//! and sensor-model parameter.
//!
//! ```toml
//! map = "map.pgm"
//! annotations = "map.json"
//! sequences = ["seq/s01.jsonl", "seq/s02.jsonl"]
//! mode = "fusion"            # or "range_only"
//! output = "out"
//! snapshot_times = [30.0]    # optional, seconds
//!
//! [filter]                   # FilterConfig; omitted keys keep their defaults
//! n_particles = 4096
//! sigma_odom = [0.5, 0.5, 0.5]
//!
//! [sensor]                   # SensorModelParams
//! sigma_g = 8.0
//!
//! [camera]
//! hfov_deg = 65.0
//! width = 256
//! height = 192
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::geometry::CameraSpec;
use crate::runner::{Mode, RunOptions};
use crate::sensor::{SensorModelParams, TofGeometry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub map: PathBuf,
    pub annotations: PathBuf,
    pub sequences: Vec<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
    pub output: PathBuf,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub sensor: SensorModelParams,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub tof: TofGeometry,
}

impl RunManifest {
    pub fn new(map: PathBuf, annotations: PathBuf, sequences: Vec<PathBuf>, output: PathBuf) -> Self {
        Self {
            map,
            annotations,
            sequences,
            mode: Mode::default(),
            output,
            snapshot_times: Vec::new(),
            filter: FilterConfig::default(),
            sensor: SensorModelParams::default(),
            camera: CameraSpec::default(),
            tof: TofGeometry::default(),
        }
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut m.map, &mut m.annotations, &mut m.output]
            .into_iter()
            .chain(m.sequences.iter_mut())
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks parameters and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.sensor.validate()?;
        self.camera.intrinsics()?;
        if self.sequences.is_empty() {
            return Err(Error::Config("manifest lists no sequences".into()));
        }
        for p in [&self.map, &self.annotations].into_iter().chain(&self.sequences) {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        Ok(())
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            filter: self.filter.clone(),
            sensor: self.sensor,
            mode: self.mode,
            camera: self.camera.intrinsics()?,
            geometry: self.tof,
            snapshot_times: self.snapshot_times.clone(),
        })
    }
}
