//! Floor-plan grid maps with packed semantic layers.
//!
//! Every cell is a single `u16`: bits 0-1 hold the occupancy state and bits
//! 2-15 hold one flag per semantic class. A 371x302 map therefore fits in
//! about 220 kB.
//!
//! Cell `(col, row)` covers the world rectangle
//! `[ox + col*res, ox + (col+1)*res) x [oy + row*res, oy + (row+1)*res)`,
//! where `(ox, oy)` is the map origin. Row 0 is the first (top) image row, so
//! the world y axis runs along increasing image rows.

use std::fs;
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of semantic classes a cell can carry.
pub const MAX_CLASSES: usize = 14;

const OCCUPANCY_MASK: u16 = 0b11;
const CLASS_SHIFT: u16 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Occupancy {
    Free = 0,
    Occupied = 1,
    Unknown = 2,
}

/// A packed map cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[repr(transparent)]
pub struct Cell(pub u16);

impl Cell {
    /// Returned for queries outside the map. Uses occupancy pattern `0b11`,
    /// which is never stored in a map.
    pub const OUT_OF_BOUNDS: Cell = Cell(0b11);

    pub fn pack(occupancy: Occupancy, class_bits: u16) -> Cell {
        debug_assert!(class_bits < (1 << MAX_CLASSES));
        Cell((class_bits << CLASS_SHIFT) | occupancy as u16)
    }

    pub fn is_out_of_bounds(self) -> bool {
        self.0 & OCCUPANCY_MASK == 0b11
    }

    /// Occupancy state; the out-of-bounds marker reads as unknown.
    pub fn occupancy(self) -> Occupancy {
        match self.0 & OCCUPANCY_MASK {
            0 => Occupancy::Free,
            1 => Occupancy::Occupied,
            _ => Occupancy::Unknown,
        }
    }

    pub fn is_occupied(self) -> bool {
        self.0 & OCCUPANCY_MASK == Occupancy::Occupied as u16
    }

    pub fn is_free(self) -> bool {
        self.0 & OCCUPANCY_MASK == Occupancy::Free as u16
    }

    /// The 14 semantic flags, class 0 in bit 0.
    pub fn class_bits(self) -> u16 {
        self.0 >> CLASS_SHIFT
    }

    #[inline]
    pub fn has_class(self, class_index: usize) -> bool {
        class_index < MAX_CLASSES && self.0 & (1 << (class_index as u16 + CLASS_SHIFT)) != 0
    }

    pub fn with_class(self, class_index: usize) -> Cell {
        assert!(class_index < MAX_CLASSES);
        Cell(self.0 | (1 << (class_index as u16 + CLASS_SHIFT)))
    }

    pub fn with_occupancy(self, occupancy: Occupancy) -> Cell {
        Cell((self.0 & !OCCUPANCY_MASK) | occupancy as u16)
    }
}

/// Grayscale thresholds used when converting a floor-plan image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyThresholds {
    /// Pixels strictly darker than this are walls.
    pub occupied_below: u8,
    /// Pixels strictly brighter than this are free space.
    pub free_above: u8,
}

impl Default for OccupancyThresholds {
    fn default() -> Self {
        Self {
            occupied_below: 50,
            free_above: 200,
        }
    }
}

impl OccupancyThresholds {
    pub fn classify(&self, pixel: u8) -> Occupancy {
        if pixel < self.occupied_below {
            Occupancy::Occupied
        } else if pixel > self.free_above {
            Occupancy::Free
        } else {
            Occupancy::Unknown
        }
    }
}

/// A hand-drawn object box in cell coordinates, `[min, max)` on both axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticAnnotation {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(rename = "box")]
    pub bbox: [i64; 4],
}

impl SemanticAnnotation {
    pub fn new(class_name: impl Into<String>, x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Self {
        Self {
            class_name: class_name.into(),
            bbox: [x_min, y_min, x_max, y_max],
        }
    }
}

/// Sidecar file describing map geometry and semantic annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub resolution: f64,
    pub origin: [f64; 2],
    /// Optional explicit class table. Classes not listed here are appended in
    /// order of first appearance.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    #[serde(default)]
    pub annotations: Vec<SemanticAnnotation>,
}

impl AnnotationFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Annotation(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticGridMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    cells: Vec<Cell>,
    classes: Vec<String>,
    annotations: Vec<SemanticAnnotation>,
}

impl SemanticGridMap {
    /// Creates a map with every cell set to `fill`.
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2], fill: Occupancy) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap(format!("dimensions {width}x{height}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidMap(format!("resolution {resolution}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidMap("non-finite origin".into()));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![Cell::pack(fill, 0); width * height],
            classes: Vec::new(),
            annotations: Vec::new(),
        })
    }

    /// Builds a map from a grayscale floor plan and its annotation sidecar.
    pub fn from_image(image: &GrayImage, meta: &AnnotationFile, thresholds: OccupancyThresholds) -> Result<Self> {
        let (w, h) = image.dimensions();
        let mut map = Self::new(w as usize, h as usize, meta.resolution, meta.origin, Occupancy::Unknown)?;
        for (cell, px) in map.cells.iter_mut().zip(image.as_raw()) {
            *cell = Cell::pack(thresholds.classify(*px), 0);
        }
        for name in &meta.classes {
            map.register_class(name)?;
        }
        for ann in &meta.annotations {
            map.annotate(ann)?;
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn annotations(&self) -> &[SemanticAnnotation] {
        &self.annotations
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// World extent in meters.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    /// Index of a class, adding it when new.
    pub fn register_class(&mut self, name: &str) -> Result<usize> {
        if let Some(i) = self.class_index(name) {
            return Ok(i);
        }
        if self.classes.len() == MAX_CLASSES {
            return Err(Error::TooManyClasses(MAX_CLASSES + 1));
        }
        self.classes.push(name.to_owned());
        Ok(self.classes.len() - 1)
    }

    /// Sets the annotation's class bit on every cell inside its box (clipped
    /// to the map). Occupancy is left untouched.
    pub fn annotate(&mut self, ann: &SemanticAnnotation) -> Result<usize> {
        let [x0, y0, x1, y1] = ann.bbox;
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::Annotation(format!(
                "degenerate box {:?} for class {:?}",
                ann.bbox, ann.class_name
            )));
        }
        let cx0 = x0.max(0);
        let cy0 = y0.max(0);
        let cx1 = x1.min(self.width as i64);
        let cy1 = y1.min(self.height as i64);
        if cx0 >= cx1 || cy0 >= cy1 {
            return Err(Error::AnnotationOutOfBounds(ann.bbox));
        }
        let class = self.register_class(&ann.class_name)?;
        for row in cy0 as usize..cy1 as usize {
            let base = row * self.width;
            for cell in &mut self.cells[base + cx0 as usize..base + cx1 as usize] {
                *cell = cell.with_class(class);
            }
        }
        self.annotations.push(ann.clone());
        Ok(class)
    }

    pub fn set_occupancy(&mut self, col: usize, row: usize, occupancy: Occupancy) {
        let i = row * self.width + col;
        self.cells[i] = self.cells[i].with_occupancy(occupancy);
    }

    /// Marks the cell rectangle `[x0, x1) x [y0, y1)` (clipped) with `occupancy`.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, occupancy: Occupancy) {
        let x0 = x0.clamp(0, self.width as i64) as usize;
        let x1 = x1.clamp(0, self.width as i64) as usize;
        let y0 = y0.clamp(0, self.height as i64) as usize;
        let y1 = y1.clamp(0, self.height as i64) as usize;
        for row in y0..y1 {
            for col in x0..x1 {
                self.set_occupancy(col, row, occupancy);
            }
        }
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    /// Cell value at signed grid coordinates, or the out-of-bounds marker.
    #[inline]
    pub fn cell_checked(&self, col: i64, row: i64) -> Cell {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            Cell::OUT_OF_BOUNDS
        } else {
            self.cells[row as usize * self.width + col as usize]
        }
    }

    /// Continuous grid coordinates (cell units) of a world point.
    #[inline]
    pub fn world_to_grid_f(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin[0]) / self.resolution,
            (y - self.origin[1]) / self.resolution,
        )
    }

    /// Grid cell containing a world point, if inside the map.
    pub fn world_to_grid(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (gx, gy) = self.world_to_grid_f(x, y);
        let (col, row) = (gx.floor(), gy.floor());
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            None
        } else {
            Some((col as usize, row as usize))
        }
    }

    /// World coordinates of a cell center.
    pub fn grid_to_world(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.world_to_grid(x, y).is_some()
    }

    /// Packed value of the cell containing a world point, or
    /// [`Cell::OUT_OF_BOUNDS`].
    pub fn cell_at(&self, x: f64, y: f64) -> Cell {
        match self.world_to_grid(x, y) {
            Some((col, row)) => self.cell(col, row),
            None => Cell::OUT_OF_BOUNDS,
        }
    }

    pub fn is_free_at(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_free()
    }

    pub fn count_cells(&self, occupancy: Occupancy) -> usize {
        self.cells.iter().filter(|c| c.occupancy() == occupancy).count()
    }

    /// Grayscale rendering of the occupancy layer (0 occupied, 128 unknown,
    /// 255 free). Loading it back with default thresholds reproduces the
    /// occupancy layer.
    pub fn occupancy_image(&self) -> GrayImage {
        let pixels = self
            .cells
            .iter()
            .map(|c| match c.occupancy() {
                Occupancy::Occupied => 0u8,
                Occupancy::Free => 255,
                Occupancy::Unknown => 128,
            })
            .collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, pixels).expect("buffer size matches")
    }

    pub fn annotation_file(&self) -> AnnotationFile {
        AnnotationFile {
            resolution: self.resolution,
            origin: self.origin,
            classes: self.classes.clone(),
            annotations: self.annotations.clone(),
        }
    }

    /// Writes the floor plan image (PGM or PNG by extension) and the JSON sidecar.
    pub fn save(&self, image_path: &Path, annotation_path: &Path) -> Result<()> {
        self.occupancy_image().save(image_path).map_err(|e| Error::Image {
            path: image_path.to_owned(),
            message: e.to_string(),
        })?;
        self.annotation_file().write(annotation_path)
    }
}

/// Loads a map from an 8-bit grayscale image and a JSON annotation sidecar
/// using the default occupancy thresholds.
pub fn load_map(image_path: &Path, annotation_path: &Path) -> Result<SemanticGridMap> {
    load_map_with(image_path, annotation_path, OccupancyThresholds::default())
}

pub fn load_map_with(
    image_path: &Path,
    annotation_path: &Path,
    thresholds: OccupancyThresholds,
) -> Result<SemanticGridMap> {
    let bytes = fs::read(image_path).map_err(|e| Error::io(image_path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: image_path.to_owned(),
        message: e.to_string(),
    })?;
    let gray = match decoded {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Image {
                path: image_path.to_owned(),
                message: format!("expected 8-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    let meta = AnnotationFile::read(annotation_path)?;
    SemanticGridMap::from_image(&gray, &meta, thresholds)
}
