//! Truncated, 8-bit quantized Euclidean distance transform.
//!
//! Exact squared distances come from the separable lower-envelope algorithm
//! (one 1-D parabola pass down the columns, one along the rows). The result is
//! converted to meters, clamped at `r_max` and stored as `round(d / r_max * 255)`.

use crate::error::{Error, Result};
use crate::map::SemanticGridMap;

const INF: f64 = 1e20;

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    r_max: f64,
    values: Vec<u8>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Size of one quantization level in meters.
    pub fn step(&self) -> f64 {
        self.r_max / 255.0
    }

    pub fn raw(&self, col: usize, row: usize) -> u8 {
        self.values[row * self.width + col]
    }

    /// Decoded distance in meters.
    pub fn distance(&self, col: usize, row: usize) -> f64 {
        self.raw(col, row) as f64 * self.step()
    }

    /// Decoded distance at a world point; points outside the map read `r_max`.
    #[inline]
    pub fn distance_at(&self, x: f64, y: f64) -> f64 {
        let gx = ((x - self.origin[0]) / self.resolution).floor();
        let gy = ((y - self.origin[1]) / self.resolution).floor();
        if gx < 0.0 || gy < 0.0 || gx >= self.width as f64 || gy >= self.height as f64 {
            return self.r_max;
        }
        self.values[gy as usize * self.width + gx as usize] as f64 * self.step()
    }
}

/// One-dimensional squared distance transform of a sampled function `f`
/// (lower envelope of parabolas rooted at each finite sample). Infinite
/// samples contribute no parabola.
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut k: isize = -1;
    for (q, &fq) in f.iter().enumerate() {
        if fq >= INF {
            continue;
        }
        let qf = q as f64;
        let mut s = -INF;
        while k >= 0 {
            let p = v[k as usize];
            let pf = p as f64;
            s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k as usize] {
                k -= 1;
                s = -INF;
            } else {
                break;
            }
        }
        k += 1;
        v[k as usize] = q;
        z[k as usize] = s;
        z[k as usize + 1] = INF;
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in cells) from every cell to the nearest
/// occupied cell. Returns `None` when the map has no occupied cell.
pub fn squared_distance_cells(map: &SemanticGridMap) -> Option<Vec<f64>> {
    let (w, h) = (map.width(), map.height());
    let mut grid: Vec<f64> = map
        .cells()
        .iter()
        .map(|c| if c.is_occupied() { 0.0 } else { INF })
        .collect();
    if grid.iter().all(|&g| g >= INF) {
        return None;
    }
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for col in 0..w {
        for row in 0..h {
            f[row] = grid[row * w + col];
        }
        dt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for row in 0..h {
            grid[row * w + col] = out[row];
        }
    }
    for row in 0..h {
        let line = &mut grid[row * w..(row + 1) * w];
        f[..w].copy_from_slice(line);
        dt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        line.copy_from_slice(&out[..w]);
    }
    Some(grid)
}

/// Computes the truncated, quantized distance field of a map's occupied cells.
pub fn compute_edt(map: &SemanticGridMap, r_max: f64) -> Result<DistanceField> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Config(format!("r_max must be positive, got {r_max}")));
    }
    let sq = squared_distance_cells(map).ok_or(Error::NoOccupiedCells)?;
    let res = map.resolution();
    let values = sq
        .iter()
        .map(|&d2| {
            let d = d2.sqrt() * res;
            if d >= r_max {
                255
            } else {
                (d / r_max * 255.0).round().min(255.0) as u8
            }
        })
        .collect();
    Ok(DistanceField {
        width: map.width(),
        height: map.height(),
        resolution: res,
        origin: map.origin(),
        r_max,
        values,
    })
}
