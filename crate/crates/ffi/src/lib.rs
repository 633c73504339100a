//! C ABI over `semantic-mcl`.
//!
//! Maps and filters are opaque handles created by `smcl_*_new`/`_load` and
//! released with the matching `_free`. Every fallible call returns an
//! [`SmclStatus`]; on failure a message for the calling thread is available
//! from [`smcl_last_error_message`]. Ranges in [`SmclTofFrame`] that are NaN or
//! not positive mark invalid zones.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use semantic_mcl::{
    compute_edt, load_map, CameraIntrinsics, Detection, DistanceField, Error, FilterConfig, Localizer, Mode,
    OdometryDelta, RunOptions, SemanticGridMap, SensorModelParams, TofFrame, TofGeometry,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmclStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    UnknownClass = 5,
    NoFreeSpace = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SmclStatus {
    match err {
        Error::Io { .. } => SmclStatus::Io,
        Error::Image { .. } | Error::Annotation(_) | Error::Json(_) | Error::Csv(_) | Error::Sequence { .. } => {
            SmclStatus::Format
        }
        Error::UnknownClass(_) => SmclStatus::UnknownClass,
        Error::NoFreeCells => SmclStatus::NoFreeSpace,
        Error::ZeroWeight => SmclStatus::Internal,
        _ => SmclStatus::InvalidArgument,
    }
}

struct Failure(SmclStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: SmclStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

/// Runs `f`, records any error or panic, and converts the outcome to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmclStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SmclStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SmclStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref()
        .ok_or_else(|| fail(SmclStatus::NullPointer, format!("{what} is null")))
}

unsafe fn non_null_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut()
        .ok_or_else(|| fail(SmclStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(ptr: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(fail(SmclStatus::NullPointer, format!("{what} is null")));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(SmclStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

struct MapData {
    map: SemanticGridMap,
    edt: DistanceField,
}

/// A loaded semantic map and its distance field.
pub struct SmclMap {
    inner: Arc<MapData>,
}

/// A particle filter bound to a map. Keeps the map alive on its own.
pub struct SmclFilter {
    map: Arc<MapData>,
    localizer: Localizer,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmclPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmclParticle {
    pub x: f32,
    pub y: f32,
    pub theta: f32,
    pub weight: f32,
}

/// Filter and sensor-model parameters. Start from [`smcl_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmclParams {
    pub n_particles: u32,
    /// Odometry noise per unit of motion (x, y, theta).
    pub sigma_odom: [f64; 3],
    pub noise_floor: [f64; 3],
    pub d_xy: f64,
    pub d_theta: f64,
    pub rng_seed: u64,
    pub reinjection_fraction: f64,
    pub sigma_g: f64,
    pub sigma_s: f64,
    pub tau_t: f64,
    pub tof_valid_range: f64,
    pub min_valid_beams: u32,
    pub miss_penalty: f64,
    pub max_trace_range: f64,
    pub camera_hfov_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Ignore detections and weigh with the ToF ranges alone.
    pub range_only: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmclTofFrame {
    pub timestamp: f64,
    /// Front grid, rows top to bottom, columns left to right.
    pub front: [[f32; 8]; 8],
    /// Middle rows of the left, back and right sensors.
    pub sides: [[f32; 8]; 3],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmclDetection {
    pub class_index: u32,
    /// x_min, y_min, x_max, y_max in pixels.
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl SmclParams {
    fn options(&self, r_max: f64) -> Result<RunOptions, Failure> {
        let filter = FilterConfig {
            n_particles: self.n_particles as usize,
            sigma_odom: self.sigma_odom,
            noise_floor: self.noise_floor,
            d_xy: self.d_xy,
            d_theta: self.d_theta,
            rng_seed: self.rng_seed,
            reinjection_fraction: self.reinjection_fraction,
        };
        let sensor = SensorModelParams {
            sigma_g: self.sigma_g,
            sigma_s: self.sigma_s,
            tau_t: self.tau_t,
            r_max,
            tof_valid_range: self.tof_valid_range,
            min_valid_beams: self.min_valid_beams as usize,
            miss_penalty: self.miss_penalty,
            max_trace_range: self.max_trace_range,
        };
        filter.validate()?;
        sensor.validate()?;
        Ok(RunOptions {
            filter,
            sensor,
            mode: if self.range_only { Mode::RangeOnly } else { Mode::Fusion },
            camera: CameraIntrinsics::from_hfov(
                self.camera_hfov_deg.to_radians(),
                self.image_width,
                self.image_height,
            )?,
            geometry: TofGeometry::default(),
            snapshot_times: Vec::new(),
        })
    }
}

fn range(r: f32) -> Option<f32> {
    (r > 0.0).then_some(r)
}

impl From<&SmclTofFrame> for TofFrame {
    fn from(f: &SmclTofFrame) -> Self {
        TofFrame {
            timestamp: f.timestamp,
            front: f.front.map(|row| row.map(range)),
            sides: f.sides.map(|row| row.map(range)),
        }
    }
}

/// Last error message on this thread, or null after a successful call. The
/// pointer stays valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn smcl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn smcl_params_default() -> SmclParams {
    let f = FilterConfig::default();
    let s = SensorModelParams::default();
    SmclParams {
        n_particles: f.n_particles as u32,
        sigma_odom: f.sigma_odom,
        noise_floor: f.noise_floor,
        d_xy: f.d_xy,
        d_theta: f.d_theta,
        rng_seed: f.rng_seed,
        reinjection_fraction: f.reinjection_fraction,
        sigma_g: s.sigma_g,
        sigma_s: s.sigma_s,
        tau_t: s.tau_t,
        tof_valid_range: s.tof_valid_range,
        min_valid_beams: s.min_valid_beams as u32,
        miss_penalty: s.miss_penalty,
        max_trace_range: s.max_trace_range,
        camera_hfov_deg: 65.0,
        image_width: 256,
        image_height: 192,
        range_only: false,
    }
}

/// Loads a map image and its annotation file and builds the distance field
/// truncated at `r_max` meters.
///
/// # Safety
/// The paths must be null or NUL-terminated strings; `out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn smcl_map_load(
    image_path: *const c_char,
    annotation_path: *const c_char,
    r_max: f64,
    out: *mut *mut SmclMap,
) -> SmclStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let image = path_arg(image_path, "image_path")?;
        let annotations = path_arg(annotation_path, "annotation_path")?;
        let map = load_map(&image, &annotations)?;
        let edt = compute_edt(&map, r_max)?;
        *out = Box::into_raw(Box::new(SmclMap {
            inner: Arc::new(MapData { map, edt }),
        }));
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle from [`smcl_map_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smcl_map_free(map: *mut SmclMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle; the outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn smcl_map_info(
    map: *const SmclMap,
    width: *mut u32,
    height: *mut u32,
    resolution: *mut f64,
    class_count: *mut u32,
) -> SmclStatus {
    guard(|| {
        let m = &non_null(map, "map")?.inner.map;
        if let Some(w) = width.as_mut() {
            *w = m.width() as u32;
        }
        if let Some(h) = height.as_mut() {
            *h = m.height() as u32;
        }
        if let Some(r) = resolution.as_mut() {
            *r = m.resolution();
        }
        if let Some(c) = class_count.as_mut() {
            *c = m.classes().len() as u32;
        }
        Ok(())
    })
}

/// Index of a class name, as used in [`SmclDetection::class_index`].
///
/// # Safety
/// `map` must be a live handle, `name` a NUL-terminated string and `index`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn smcl_map_class_index(map: *const SmclMap, name: *const c_char, index: *mut u32) -> SmclStatus {
    guard(|| {
        let m = &non_null(map, "map")?.inner.map;
        let index = non_null_mut(index, "index")?;
        if name.is_null() {
            return Err(fail(SmclStatus::NullPointer, "name is null"));
        }
        let name = CStr::from_ptr(name).to_string_lossy();
        let k = m
            .class_index(&name)
            .ok_or_else(|| fail(SmclStatus::UnknownClass, format!("no class named {name:?}")))?;
        *index = k as u32;
        Ok(())
    })
}

/// Creates a filter with particles spread uniformly over the map's free
/// space. The filter holds its own reference to the map.
///
/// # Safety
/// `map` must be a live handle, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_new(
    map: *const SmclMap,
    params: *const SmclParams,
    out: *mut *mut SmclFilter,
) -> SmclStatus {
    guard(|| {
        let data = Arc::clone(&non_null(map, "map")?.inner);
        let params = non_null(params, "params")?;
        let out = non_null_mut(out, "out")?;
        let options = params.options(data.edt.r_max())?;
        let localizer = Localizer::new(&data.map, options)?;
        *out = Box::into_raw(Box::new(SmclFilter { map: data, localizer }));
        Ok(())
    })
}

/// # Safety
/// `filter` must be null or a handle from [`smcl_filter_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_free(filter: *mut SmclFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Propagates every particle by a body-frame odometry delta.
///
/// # Safety
/// `filter` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_motion(filter: *mut SmclFilter, dx: f64, dy: f64, dtheta: f64) -> SmclStatus {
    guard(|| {
        let f = non_null_mut(filter, "filter")?;
        if ![dx, dy, dtheta].iter().all(|v| v.is_finite()) {
            return Err(fail(SmclStatus::InvalidArgument, "odometry delta must be finite"));
        }
        f.localizer.odometry(&OdometryDelta::new(dx, dy, dtheta));
        Ok(())
    })
}

/// Weighs the particles with one ToF frame and the detections taken with it,
/// then resamples. `detections` may be null when `n_detections` is 0. Nothing
/// happens until the robot has moved past the gating thresholds since the
/// last update, or when too few ToF zones are valid; `applied` (if not null)
/// tells which.
///
/// # Safety
/// `filter` must be a live handle, `frame` readable, `detections` readable
/// for `n_detections` elements and `applied` null or writable.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_update(
    filter: *mut SmclFilter,
    frame: *const SmclTofFrame,
    detections: *const SmclDetection,
    n_detections: usize,
    applied: *mut bool,
) -> SmclStatus {
    guard(|| {
        let f = non_null_mut(filter, "filter")?;
        let frame = TofFrame::from(non_null(frame, "frame")?);
        let dets: Vec<Detection> = if n_detections == 0 {
            Vec::new()
        } else {
            if detections.is_null() {
                return Err(fail(SmclStatus::NullPointer, "detections is null"));
            }
            std::slice::from_raw_parts(detections, n_detections)
                .iter()
                .map(|d| Detection {
                    class_index: d.class_index as usize,
                    bbox: d.bbox,
                    confidence: d.confidence,
                })
                .collect()
        };
        let camera = f.localizer.options().camera;
        for d in &dets {
            d.validate(&camera)?;
        }
        let map = Arc::clone(&f.map);
        let timing = f.localizer.observe(&map.map, &map.edt, &frame, &dets)?;
        if let Some(a) = applied.as_mut() {
            *a = timing.is_some();
        }
        Ok(())
    })
}

/// Weighted mean position and circular-mean heading of the particles.
///
/// # Safety
/// `filter` must be a live handle and `pose` writable.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_estimate(filter: *const SmclFilter, pose: *mut SmclPose) -> SmclStatus {
    guard(|| {
        let f = non_null(filter, "filter")?;
        let out = non_null_mut(pose, "pose")?;
        let p = f.localizer.filter().estimate_pose()?;
        *out = SmclPose {
            x: p.x,
            y: p.y,
            theta: p.theta,
        };
        Ok(())
    })
}

/// # Safety
/// `filter` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_particle_count(filter: *const SmclFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.localizer.filter().len())
}

/// Copies the particles into `out`, which must hold the whole set.
///
/// # Safety
/// `filter` must be a live handle and `out` writable for `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn smcl_filter_copy_particles(
    filter: *const SmclFilter,
    out: *mut SmclParticle,
    capacity: usize,
) -> SmclStatus {
    guard(|| {
        let f = non_null(filter, "filter")?;
        let particles = f.localizer.filter().particles();
        if capacity < particles.len() {
            return Err(fail(
                SmclStatus::BufferTooSmall,
                format!("need room for {} particles, got {capacity}", particles.len()),
            ));
        }
        if out.is_null() {
            return Err(fail(SmclStatus::NullPointer, "out is null"));
        }
        let dst = std::slice::from_raw_parts_mut(out, particles.len());
        for (d, p) in dst.iter_mut().zip(particles) {
            *d = SmclParticle {
                x: p.x,
                y: p.y,
                theta: p.theta,
                weight: p.weight,
            };
        }
        Ok(())
    })
}
