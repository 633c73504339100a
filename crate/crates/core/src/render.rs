//! Static PNG views of a map with particles, trajectories and ground truth.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::filter::Particle;
use crate::geometry::Pose2D;
use crate::map::{Occupancy, SemanticGridMap};

const PALETTE: [[u8; 3]; 14] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [188, 189, 34],
    [23, 190, 207],
    [127, 127, 127],
    [174, 199, 232],
    [255, 187, 120],
    [152, 223, 138],
    [255, 152, 150],
];

const PARTICLE: Rgb<u8> = Rgb([0, 170, 0]);
const GROUND_TRUTH: Rgb<u8> = Rgb([200, 0, 200]);
const ESTIMATE: Rgb<u8> = Rgb([230, 0, 0]);

/// Everything drawn on top of the map. Empty slices draw nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overlay<'a> {
    pub particles: &'a [Particle],
    /// Estimated poses, colored from red (first) to violet (last).
    pub trajectory: &'a [(f64, Pose2D)],
    /// Drawn as stars.
    pub ground_truth: &'a [(f64, Pose2D)],
    /// Drawn as a cross.
    pub estimate: Option<Pose2D>,
}

pub fn class_color(class_index: usize) -> [u8; 3] {
    PALETTE[class_index % PALETTE.len()]
}

/// Rainbow color for `s` in [0, 1].
fn rainbow(s: f64) -> Rgb<u8> {
    let h = s.clamp(0.0, 1.0) * 270.0 / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        _ => (x, 0.0, 1.0),
    };
    Rgb([(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8])
}

struct Canvas<'m> {
    img: RgbImage,
    map: &'m SemanticGridMap,
    scale: u32,
}

impl Canvas<'_> {
    fn to_pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let (gx, gy) = self.map.world_to_grid_f(x, y);
        (
            (gx * self.scale as f64).floor() as i64,
            (gy * self.scale as f64).floor() as i64,
        )
    }

    fn put(&mut self, px: i64, py: i64, c: Rgb<u8>) {
        if px >= 0 && py >= 0 && (px as u32) < self.img.width() && (py as u32) < self.img.height() {
            self.img.put_pixel(px as u32, py as u32, c);
        }
    }

    fn dot(&mut self, x: f64, y: f64, radius: i64, c: Rgb<u8>) {
        let (px, py) = self.to_pixel(x, y);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                self.put(px + dx, py + dy, c);
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let (x0, y0) = self.to_pixel(a.0, a.1);
        let (x1, y1) = self.to_pixel(b.0, b.1);
        let n = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let x = x0 as f64 + (x1 - x0) as f64 * t;
            let y = y0 as f64 + (y1 - y0) as f64 * t;
            self.put(x.round() as i64, y.round() as i64, c);
        }
    }

    fn star(&mut self, x: f64, y: f64, size: i64, c: Rgb<u8>) {
        let (px, py) = self.to_pixel(x, y);
        for d in -size..=size {
            self.put(px + d, py, c);
            self.put(px, py + d, c);
            let k = d * 2 / 3;
            self.put(px + k, py + k, c);
            self.put(px + k, py - k, c);
        }
    }

    fn cross(&mut self, x: f64, y: f64, size: i64, c: Rgb<u8>) {
        let (px, py) = self.to_pixel(x, y);
        for d in -size..=size {
            for w in 0..2 {
                self.put(px + d + w, py + d, c);
                self.put(px + d + w, py - d, c);
            }
        }
    }
}

/// Renders the map scaled by `scale` pixels per cell: free cells white,
/// walls black, unknown gray, annotation boxes outlined and tinted in their
/// class color, then the overlay.
pub fn render(map: &SemanticGridMap, overlay: &Overlay, scale: u32) -> RgbImage {
    let scale = scale.max(1);
    let (w, h) = (map.width() as u32, map.height() as u32);
    let mut img = RgbImage::new(w * scale, h * scale);
    for row in 0..h {
        for col in 0..w {
            let cell = map.cell(col as usize, row as usize);
            let base = match cell.occupancy() {
                Occupancy::Free => [255, 255, 255],
                Occupancy::Occupied => [0, 0, 0],
                Occupancy::Unknown => [160, 160, 160],
            };
            let c = match (0..map.classes().len()).find(|&k| cell.has_class(k)) {
                Some(k) if cell.occupancy() == Occupancy::Free => {
                    let cc = class_color(k);
                    [0, 1, 2].map(|i| ((base[i] as u16 + 2 * cc[i] as u16) / 3) as u8)
                }
                _ => base,
            };
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(col * scale + dx, row * scale + dy, Rgb(c));
                }
            }
        }
    }
    let mut canvas = Canvas { img, map, scale };

    for ann in map.annotations() {
        let Some(k) = map.class_index(&ann.class_name) else {
            continue;
        };
        let c = Rgb(class_color(k));
        let s = scale as i64;
        let [x0, y0, x1, y1] = ann.bbox.map(|v| v * s);
        for x in x0..x1 {
            canvas.put(x, y0, c);
            canvas.put(x, y1 - 1, c);
        }
        for y in y0..y1 {
            canvas.put(x0, y, c);
            canvas.put(x1 - 1, y, c);
        }
    }

    let radius = (scale as i64 - 1) / 2;
    for p in overlay.particles {
        canvas.dot(p.x as f64, p.y as f64, radius, PARTICLE);
    }
    let n = overlay.trajectory.len();
    for (i, w) in overlay.trajectory.windows(2).enumerate() {
        let c = rainbow(i as f64 / (n - 1).max(1) as f64);
        canvas.line((w[0].1.x, w[0].1.y), (w[1].1.x, w[1].1.y), c);
    }
    if n == 1 {
        let p = overlay.trajectory[0].1;
        canvas.dot(p.x, p.y, radius, rainbow(0.0));
    }
    let marker = 2 * scale as i64 + 1;
    for (_, p) in overlay.ground_truth {
        canvas.star(p.x, p.y, marker, GROUND_TRUTH);
    }
    if let Some(p) = overlay.estimate {
        canvas.cross(p.x, p.y, marker + 1, ESTIMATE);
    }
    canvas.img
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_owned(),
            message: e.to_string(),
        })
}
