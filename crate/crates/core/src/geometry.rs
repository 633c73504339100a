//! Camera rays and grid ray casting.
//!
//! Angles follow the map frame: heading `theta` rotates from +x toward +y.
//! Camera-frame bearings are positive toward the right edge of the image, so
//! a camera bearing `b` points along map angle `theta - b`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Cell, SemanticGridMap};

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    /// Applies a body-frame motion `(dx, dy, dtheta)`.
    pub fn compose(&self, dx: f64, dy: f64, dtheta: f64) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self::new(self.x + c * dx - s * dy, self.y + s * dx + c * dy, self.theta + dtheta)
    }

    /// Body-frame motion taking `self` to `to`.
    pub fn delta_to(&self, to: &Pose2D) -> (f64, f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let (wx, wy) = (to.x - self.x, to.y - self.y);
        (c * wx + s * wy, -s * wx + c * wy, wrap_angle(to.theta - self.theta))
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Camera described by field of view and frame size, as written in config
/// files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub hfov_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            hfov_deg: 65.0,
            width: 256,
            height: 192,
        }
    }
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_hfov(self.hfov_deg.to_radians(), self.width, self.height)
    }
}

/// Pinhole intrinsics. `K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_width: u32, image_height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with principal point at the image center and the
    /// given horizontal field of view.
    pub fn from_hfov(hfov: f64, image_width: u32, image_height: u32) -> Result<Self> {
        if !(hfov > 0.0 && hfov < PI) {
            return Err(Error::Config(format!("horizontal field of view {hfov} rad")));
        }
        let cx = image_width as f64 / 2.0;
        let f = cx / (hfov / 2.0).tan();
        Self::new(f, f, cx, image_height as f64 / 2.0, image_width, image_height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.image_width as f64
            && self.cy > 0.0
            && self.cy < self.image_height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid camera intrinsics {self:?}")))
        }
    }

    pub fn hfov(&self) -> f64 {
        (self.cx / self.fx).atan() + ((self.image_width as f64 - self.cx) / self.fx).atan()
    }

    /// Direction `K^-1 (u, v, 1)` of the viewing ray through a pixel, in the
    /// camera frame (x right, y down, z forward). Camera rotation is identity.
    pub fn pixel_to_ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    /// Horizontal bearing of a pixel's viewing ray (positive to the right).
    pub fn pixel_to_bearing(&self, u: f64, v: f64) -> f64 {
        ray_bearing(self.pixel_to_ray(u, v))
    }

    /// Image column at which a horizontal bearing projects.
    pub fn bearing_to_column(&self, bearing: f64) -> f64 {
        self.cx + self.fx * bearing.tan()
    }

    /// Vertical angle of a pixel row (positive downward).
    pub fn row_to_elevation(&self, v: f64) -> f64 {
        ((v - self.cy) / self.fy).atan()
    }

    pub fn elevation_to_row(&self, elevation: f64) -> f64 {
        self.cy + self.fy * elevation.tan()
    }
}

/// Horizontal bearing of a camera-frame ray; the vertical component is dropped.
pub fn ray_bearing(ray: [f64; 3]) -> f64 {
    ray[0].atan2(ray[2])
}

/// Unit-depth camera ray with the given horizontal bearing and no vertical tilt.
pub fn bearing_to_ray(bearing: f64) -> [f64; 3] {
    [bearing.tan(), 0.0, 1.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceOutcome {
    HitClass,
    BlockedByWall,
    MaxRangeReached,
    ExitedMap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceResult {
    pub outcome: TraceOutcome,
    /// Meters along the ray to the entry of the terminating cell (or the
    /// range limit).
    pub distance: f64,
}

impl TraceResult {
    pub fn is_hit(&self) -> bool {
        self.outcome == TraceOutcome::HitClass
    }
}

/// Amanatides-Woo traversal over grid cells. Yields each intersected cell with
/// the ray parameter (in cells) at which the ray enters it.
#[derive(Clone, Debug)]
pub struct GridRay {
    col: i64,
    row: i64,
    step_col: i64,
    step_row: i64,
    t_max_col: f64,
    t_max_row: f64,
    t_delta_col: f64,
    t_delta_row: f64,
    t: f64,
}

impl GridRay {
    /// `gx, gy` in continuous grid units, `angle` in map frame.
    pub fn new(gx: f64, gy: f64, angle: f64) -> Self {
        let (dy, dx) = angle.sin_cos();
        let col = gx.floor() as i64;
        let row = gy.floor() as i64;
        let (step_col, t_delta_col, t_max_col) = axis_setup(gx, dx);
        let (step_row, t_delta_row, t_max_row) = axis_setup(gy, dy);
        Self {
            col,
            row,
            step_col,
            step_row,
            t_max_col,
            t_max_row,
            t_delta_col,
            t_delta_row,
            t: 0.0,
        }
    }
}

fn axis_setup(p: f64, d: f64) -> (i64, f64, f64) {
    if d > 0.0 {
        (1, 1.0 / d, (p.floor() + 1.0 - p) / d)
    } else if d < 0.0 {
        (-1, -1.0 / d, (p - p.floor()) / -d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

impl Iterator for GridRay {
    type Item = (i64, i64, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        let current = (self.col, self.row, self.t);
        if self.t_max_col < self.t_max_row {
            self.col += self.step_col;
            self.t = self.t_max_col;
            self.t_max_col += self.t_delta_col;
        } else {
            self.row += self.step_row;
            self.t = self.t_max_row;
            self.t_max_row += self.t_delta_row;
        }
        Some(current)
    }
}

/// Walks the ray from a world point and stops at the first cell for which
/// `stop` returns an outcome.
#[inline]
fn walk(
    map: &SemanticGridMap,
    x: f64,
    y: f64,
    angle: f64,
    max_range: f64,
    stop: impl Fn(Cell) -> Option<TraceOutcome>,
) -> Result<TraceResult> {
    if !map.contains(x, y) {
        return Err(Error::StartOutOfBounds { x, y });
    }
    let res = map.resolution();
    let (gx, gy) = map.world_to_grid_f(x, y);
    for (col, row, t) in GridRay::new(gx, gy, angle) {
        let distance = t * res;
        if distance > max_range {
            break;
        }
        let cell = map.cell_checked(col, row);
        if cell.is_out_of_bounds() {
            return Ok(TraceResult {
                outcome: TraceOutcome::ExitedMap,
                distance,
            });
        }
        if let Some(outcome) = stop(cell) {
            return Ok(TraceResult { outcome, distance });
        }
    }
    Ok(TraceResult {
        outcome: TraceOutcome::MaxRangeReached,
        distance: max_range,
    })
}

/// Casts a ray against the occupancy layer from a world point along map
/// angle `bearing`.
pub fn ray_cast_occupancy(map: &SemanticGridMap, x: f64, y: f64, bearing: f64, max_range: f64) -> Result<TraceResult> {
    walk(map, x, y, bearing, max_range, |cell| {
        cell.is_occupied().then_some(TraceOutcome::BlockedByWall)
    })
}

/// Traces a camera ray from a pose until it reaches a cell of the given class.
/// A cell carrying the class bit counts as a hit even when it is also a wall.
pub fn trace_semantic(
    map: &SemanticGridMap,
    pose: &Pose2D,
    bearing_camera: f64,
    class_index: usize,
    max_range: f64,
) -> Result<TraceResult> {
    if class_index >= map.classes().len() {
        return Err(Error::UnknownClass(class_index));
    }
    walk(map, pose.x, pose.y, pose.theta - bearing_camera, max_range, |cell| {
        if cell.has_class(class_index) {
            Some(TraceOutcome::HitClass)
        } else if cell.is_occupied() {
            Some(TraceOutcome::BlockedByWall)
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Occupancy, SemanticAnnotation};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(65f64.to_radians(), 256, 192).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5 - TAU), -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(7.0), 7.0 - TAU, epsilon = 1e-12);
    }

    #[test]
    fn compose_and_delta_invert() {
        let a = Pose2D::new(1.0, 2.0, 2.5);
        let b = a.compose(0.3, -0.2, 1.0);
        let (dx, dy, dt) = a.delta_to(&b);
        assert_abs_diff_eq!(dx, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(dy, -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(dt, 1.0, epsilon = 1e-12);
        assert!(b.theta <= PI && b.theta > -PI);
    }

    #[test]
    fn bearing_examples() {
        let k = camera();
        assert_eq!(k.pixel_to_bearing(k.cx, 17.0), 0.0);
        assert_abs_diff_eq!(k.pixel_to_bearing(k.cx + k.fx, 50.0), PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            k.pixel_to_bearing(k.cx - k.fx * 0.3f64.tan(), 0.0),
            -0.3,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(k.hfov(), 65f64.to_radians(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn bearing_ray_roundtrip(b in -1.5f64..1.5) {
            prop_assert!((ray_bearing(bearing_to_ray(b)) - b).abs() < 1e-9);
            let k = camera();
            prop_assert!((k.pixel_to_bearing(k.bearing_to_column(b), 3.0) - b).abs() < 1e-9);
        }
    }

    fn room() -> SemanticGridMap {
        // 6 m x 4 m, walls on the border
        let mut map = SemanticGridMap::new(120, 80, 0.05, [0.0, 0.0], Occupancy::Free).unwrap();
        map.fill_rect(0, 0, 120, 2, Occupancy::Occupied);
        map.fill_rect(0, 78, 120, 80, Occupancy::Occupied);
        map.fill_rect(0, 0, 2, 80, Occupancy::Occupied);
        map.fill_rect(118, 0, 120, 80, Occupancy::Occupied);
        map
    }

    #[test]
    fn wall_at_one_meter() {
        let map = room();
        // east wall face is at x = 5.9
        let r = ray_cast_occupancy(&map, 4.9, 2.0, 0.0, 3.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::BlockedByWall);
        assert!((r.distance - 1.0).abs() <= 0.05, "{}", r.distance);
        // west wall face is at x = 0.1
        let r = ray_cast_occupancy(&map, 1.1, 2.0, PI, 3.0).unwrap();
        assert!((r.distance - 1.0).abs() <= 0.05, "{}", r.distance);
    }

    #[test]
    fn empty_map_reaches_max_range() {
        let map = SemanticGridMap::new(200, 200, 0.05, [0.0, 0.0], Occupancy::Free).unwrap();
        let r = ray_cast_occupancy(&map, 5.0, 5.0, 0.7, 3.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::MaxRangeReached);
        assert_eq!(r.distance, 3.0);
        let r = ray_cast_occupancy(&map, 5.0, 5.0, 0.0, 30.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::ExitedMap);
        assert!((r.distance - 5.0).abs() < 1e-9);
    }

    #[test]
    fn start_outside_is_an_error() {
        let map = room();
        assert!(matches!(
            ray_cast_occupancy(&map, -0.1, 1.0, 0.0, 3.0),
            Err(Error::StartOutOfBounds { .. })
        ));
    }

    #[test]
    fn thin_diagonal_wall_is_not_skipped() {
        // one-cell staircase wall; a 45 degree ray must not slip through
        let mut map = SemanticGridMap::new(50, 50, 1.0, [0.0, 0.0], Occupancy::Free).unwrap();
        for i in 0..50 {
            map.set_occupancy(49 - i, i, Occupancy::Occupied);
        }
        let r = ray_cast_occupancy(&map, 0.5, 0.5, PI / 4.0 + 1e-3, 100.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::BlockedByWall);
    }

    fn sofa_room() -> SemanticGridMap {
        let mut map = room();
        // sofa box spans x in [4.0, 4.5)
        map.annotate(&SemanticAnnotation::new("sofa", 80, 30, 90, 50)).unwrap();
        map.annotate(&SemanticAnnotation::new("cabinet", 117, 10, 120, 20))
            .unwrap();
        map
    }

    #[test]
    fn semantic_hit_at_two_meters() {
        let map = sofa_room();
        let pose = Pose2D::new(2.0, 2.0, 0.0);
        let r = trace_semantic(&map, &pose, 0.0, 0, 10.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::HitClass);
        assert!((r.distance - 2.0).abs() <= 0.05);
    }

    #[test]
    fn semantic_blocked_by_interposed_wall() {
        let mut map = sofa_room();
        map.fill_rect(60, 0, 61, 80, Occupancy::Occupied);
        let pose = Pose2D::new(2.0, 2.0, 0.0);
        let r = trace_semantic(&map, &pose, 0.0, 0, 10.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::BlockedByWall);
        assert!((r.distance - 1.0).abs() <= 0.05);
    }

    #[test]
    fn class_bit_wins_over_wall() {
        let map = sofa_room();
        // cabinet cells 118..120 overlap the east wall, rows 10..20 -> y in [0.5, 1.0)
        let pose = Pose2D::new(3.0, 0.75, 0.0);
        let cabinet = map.class_index("cabinet").unwrap();
        let r = trace_semantic(&map, &pose, 0.0, cabinet, 10.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::HitClass);
        // a positive camera bearing turns the ray toward decreasing map angle
        let pose = Pose2D::new(3.0, 1.0, PI / 2.0);
        let r = trace_semantic(&map, &pose, PI / 2.0, cabinet, 10.0).unwrap();
        assert_eq!(r.outcome, TraceOutcome::BlockedByWall);
    }

    #[test]
    fn unknown_class_is_an_error() {
        let map = sofa_room();
        let pose = Pose2D::new(2.0, 2.0, 0.0);
        assert!(matches!(
            trace_semantic(&map, &pose, 0.0, 5, 10.0),
            Err(Error::UnknownClass(5))
        ));
    }

    #[test]
    fn trace_distance_monotone_in_obstacle_distance() {
        let mut last = 0.0;
        for wall_col in 45..115 {
            let mut map = room();
            map.fill_rect(wall_col, 0, wall_col + 1, 80, Occupancy::Occupied);
            map.annotate(&SemanticAnnotation::new("board", wall_col, 30, wall_col + 1, 50))
                .unwrap();
            let r = trace_semantic(&map, &Pose2D::new(2.0, 2.0, 0.0), 0.0, 0, 10.0).unwrap();
            assert!(r.is_hit());
            assert!(r.distance >= last);
            last = r.distance;
        }
    }
}
