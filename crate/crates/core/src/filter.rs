//! Monte Carlo localization: uniform initialization, odometry prediction,
//! likelihood weighting, systematic resampling and pose estimation.
//!
//! Random draws come from a counter-based scheme: every operation that needs
//! randomness takes a fresh ChaCha stream (`seed`, operation counter) and each
//! particle reads from its own fixed block of that stream. Results are
//! therefore independent of how the particle loop is split across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D};
use crate::map::SemanticGridMap;

/// Words of the random stream reserved for each particle per operation.
const WORDS_PER_PARTICLE: u128 = 256;

/// One pose hypothesis: four 32-bit floats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[repr(C)]
pub struct Particle {
    pub x: f32,
    pub y: f32,
    pub theta: f32,
    pub weight: f32,
}

impl Particle {
    pub fn pose(&self) -> Pose2D {
        Pose2D {
            x: self.x as f64,
            y: self.y as f64,
            theta: self.theta as f64,
        }
    }

    fn set_pose(&mut self, pose: &Pose2D) {
        self.x = pose.x as f32;
        self.y = pose.y as f32;
        self.theta = pose.theta as f32;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Odometry noise per unit of motion (m/m, m/m, rad/rad).
    pub sigma_odom: [f64; 3],
    /// Noise std added regardless of motion (m, m, rad).
    pub noise_floor: [f64; 3],
    /// Translation that re-arms the measurement gate, meters.
    pub d_xy: f64,
    /// Rotation that re-arms the measurement gate, radians.
    pub d_theta: f64,
    pub rng_seed: u64,
    /// Fraction of particles redrawn uniformly after each resample.
    pub reinjection_fraction: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 4096,
            sigma_odom: [0.5, 0.5, 0.5],
            noise_floor: [0.002, 0.002, 0.002],
            d_xy: 0.05,
            d_theta: 0.05,
            rng_seed: 0,
            reinjection_fraction: 0.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be positive".into()));
        }
        if !(self.d_xy > 0.0 && self.d_theta > 0.0) {
            return Err(Error::Config("gating thresholds must be positive".into()));
        }
        let noise_ok = self
            .sigma_odom
            .iter()
            .chain(&self.noise_floor)
            .all(|s| *s >= 0.0 && s.is_finite());
        if !noise_ok {
            return Err(Error::Config("noise parameters must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.reinjection_fraction) {
            return Err(Error::Config("reinjection_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Incremental body-frame motion reported by odometry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    #[serde(default)]
    pub timestamp: f64,
}

impl OdometryDelta {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self {
            dx,
            dy,
            dtheta,
            timestamp: 0.0,
        }
    }

    pub fn translation(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Every particle had zero likelihood; weights were reset to uniform.
    Degenerate,
}

/// Particle indices chosen by systematic resampling. `offset` in `(0, 1]`
/// positions the first pointer at `offset / n` of the total weight.
pub fn systematic_indices(weights: &[f64], offset: f64, n_out: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n_out as f64;
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    let mut cumulative = weights[0];
    for m in 0..n_out {
        let target = (offset + m as f64) * step;
        while target > cumulative && i < last {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

#[derive(Clone, Debug)]
pub struct ParticleFilter {
    particles: Vec<Particle>,
    config: FilterConfig,
    base_rng: ChaCha8Rng,
    operations: u64,
}

impl ParticleFilter {
    /// Wraps an existing particle set. Weights are normalized.
    pub fn from_particles(particles: Vec<Particle>, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        if particles.is_empty() {
            return Err(Error::Empty("particle set"));
        }
        let mut filter = Self {
            base_rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            particles,
            config,
            operations: 0,
        };
        filter.normalize()?;
        Ok(filter)
    }

    /// Spreads `n_particles` uniformly over the free cells of the map with
    /// uniform headings.
    pub fn init_uniform(map: &SemanticGridMap, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_particles;
        let mut filter = Self {
            base_rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            particles: vec![Particle::default(); n],
            config,
            operations: 0,
        };
        let free = free_cells(map);
        if free.is_empty() {
            return Err(Error::NoFreeCells);
        }
        let rng = filter.next_stream();
        let w = 1.0 / n as f32;
        filter.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
            let mut r = particle_rng(&rng, i);
            *p = sample_free(map, &free, &mut r, w);
        });
        Ok(filter)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    fn next_stream(&mut self) -> ChaCha8Rng {
        let mut rng = self.base_rng.clone();
        rng.set_stream(self.operations);
        self.operations += 1;
        rng
    }

    /// Moves every particle by the odometry delta plus Gaussian noise whose
    /// std is `sigma_odom * |delta| + noise_floor`, componentwise.
    pub fn motion_update(&mut self, delta: &OdometryDelta) {
        let [sx, sy, st] = self.config.sigma_odom;
        let [fx, fy, ft] = self.config.noise_floor;
        let std = [
            sx * delta.dx.abs() + fx,
            sy * delta.dy.abs() + fy,
            st * delta.dtheta.abs() + ft,
        ];
        let rng = self.next_stream();
        self.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
            let mut r = particle_rng(&rng, i);
            let nx: f64 = r.sample(StandardNormal);
            let ny: f64 = r.sample(StandardNormal);
            let nt: f64 = r.sample(StandardNormal);
            let moved = p.pose().compose(
                delta.dx + std[0] * nx,
                delta.dy + std[1] * ny,
                delta.dtheta + std[2] * nt,
            );
            p.set_pose(&moved);
        });
    }

    /// Evaluates a log-likelihood for every particle, in particle order.
    pub fn log_likelihoods<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&Pose2D) -> f64 + Sync,
    {
        self.particles.par_iter().map(|p| f(&p.pose())).collect()
    }

    /// Multiplies weights by linear-scale likelihoods and normalizes.
    pub fn measurement_update(&mut self, likelihoods: &[f64]) -> Result<UpdateOutcome> {
        let logs: Vec<f64> = likelihoods.iter().map(|l| l.ln()).collect();
        self.measurement_update_log(&logs)
    }

    /// Adds log-likelihoods to the log-weights and normalizes. NaN counts as
    /// zero likelihood.
    pub fn measurement_update_log(&mut self, log_likelihoods: &[f64]) -> Result<UpdateOutcome> {
        if log_likelihoods.len() != self.particles.len() {
            return Err(Error::Config(format!(
                "{} likelihoods for {} particles",
                log_likelihoods.len(),
                self.particles.len()
            )));
        }
        let log_w: Vec<f64> = self
            .particles
            .iter()
            .zip(log_likelihoods)
            .map(|(p, &l)| {
                let v = (p.weight as f64).ln() + l;
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max.is_infinite() {
            self.reset_uniform();
            return Ok(UpdateOutcome::Degenerate);
        }
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        for (p, wi) in self.particles.iter_mut().zip(&w) {
            p.weight = (wi / sum) as f32;
        }
        Ok(UpdateOutcome::Applied)
    }

    fn reset_uniform(&mut self) {
        let w = 1.0 / self.particles.len() as f32;
        self.particles.iter_mut().for_each(|p| p.weight = w);
    }

    fn normalize(&mut self) -> Result<()> {
        let sum: f64 = self.particles.iter().map(|p| p.weight as f64).sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::ZeroWeight);
        }
        self.particles
            .iter_mut()
            .for_each(|p| p.weight = (p.weight as f64 / sum) as f32);
        Ok(())
    }

    /// Systematic resampling with a single random offset. Weights become
    /// uniform and the particle count is preserved.
    pub fn resample(&mut self) {
        let mut rng = self.next_stream();
        let offset = 1.0 - rng.random::<f64>();
        let weights: Vec<f64> = self.particles.iter().map(|p| p.weight as f64).collect();
        let n = self.particles.len();
        let w = 1.0 / n as f32;
        self.particles = systematic_indices(&weights, offset, n)
            .into_iter()
            .map(|i| Particle {
                weight: w,
                ..self.particles[i]
            })
            .collect();
    }

    /// Replaces `reinjection_fraction` of the particles with uniform draws
    /// over free space. Call after [`resample`](Self::resample).
    pub fn reinject(&mut self, map: &SemanticGridMap) {
        let n = self.particles.len();
        let k = (self.config.reinjection_fraction * n as f64).round() as usize;
        if k == 0 {
            return;
        }
        let free = free_cells(map);
        if free.is_empty() {
            return;
        }
        let rng = self.next_stream();
        let w = 1.0 / n as f32;
        for j in 0..k {
            let mut r = particle_rng(&rng, j);
            let slot = r.random_range(0..n);
            self.particles[slot] = sample_free(map, &free, &mut r, w);
        }
    }

    /// Weighted mean position and weighted circular-mean heading.
    pub fn estimate_pose(&self) -> Result<Pose2D> {
        estimate_pose(&self.particles)
    }

    pub fn effective_sample_size(&self) -> f64 {
        let s2: f64 = self.particles.iter().map(|p| (p.weight as f64).powi(2)).sum();
        1.0 / s2
    }
}

pub fn estimate_pose(particles: &[Particle]) -> Result<Pose2D> {
    let (mut sw, mut sx, mut sy, mut ss, mut sc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in particles {
        let w = p.weight as f64;
        let (s, c) = (p.theta as f64).sin_cos();
        sw += w;
        sx += w * p.x as f64;
        sy += w * p.y as f64;
        ss += w * s;
        sc += w * c;
    }
    if sw.is_nan() || sw <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    Ok(Pose2D::new(sx / sw, sy / sw, ss.atan2(sc)))
}

fn particle_rng(stream: &ChaCha8Rng, index: usize) -> ChaCha8Rng {
    let mut r = stream.clone();
    r.set_word_pos(index as u128 * WORDS_PER_PARTICLE);
    r
}

fn free_cells(map: &SemanticGridMap) -> Vec<u32> {
    map.cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_free())
        .map(|(i, _)| i as u32)
        .collect()
}

fn sample_free(map: &SemanticGridMap, free: &[u32], rng: &mut ChaCha8Rng, weight: f32) -> Particle {
    let idx = free[rng.random_range(0..free.len())] as usize;
    let (col, row) = (idx % map.width(), idx / map.width());
    let res = map.resolution();
    let [ox, oy] = map.origin();
    // jitter stays inside the cell
    let x = ox + (col as f64 + rng.random::<f64>() * 0.999) * res;
    let y = oy + (row as f64 + rng.random::<f64>() * 0.999) * res;
    let theta = wrap_angle(PI - rng.random::<f64>() * 2.0 * PI);
    Particle {
        x: x as f32,
        y: y as f32,
        theta: theta as f32,
        weight,
    }
}
