//! Success, convergence time and trajectory error against sparse
//! ground-truth checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::Particle;
use crate::geometry::{wrap_angle, Pose2D};

/// Position error below which a run counts as converged.
pub const CONVERGENCE_THRESHOLD: f64 = 0.5;
/// Largest allowed gap between a checkpoint and its matched estimate.
pub const MATCH_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointError {
    pub t: f64,
    /// Meters.
    pub position: f64,
    /// Absolute heading error, radians.
    pub heading: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub errors: Vec<CheckpointError>,
    pub convergence_time: Option<f64>,
    pub ate_after_convergence: Option<f64>,
    pub heading_error_after_convergence: Option<f64>,
    pub success: bool,
}

/// Index of the estimate nearest in time to `t`; `estimates` must be sorted.
fn nearest(estimates: &[(f64, Pose2D)], t: f64) -> Option<usize> {
    let i = estimates.partition_point(|(te, _)| *te < t);
    [i.checked_sub(1), (i < estimates.len()).then_some(i)]
        .into_iter()
        .flatten()
        .min_by(|&a, &b| (estimates[a].0 - t).abs().total_cmp(&(estimates[b].0 - t).abs()))
}

/// Scores an estimate stream. Convergence is the first checkpoint after which
/// every error stays under [`CONVERGENCE_THRESHOLD`]; with `lenient` it is
/// simply the first checkpoint under the threshold. ATE averages the errors
/// from convergence onward.
pub fn evaluate_run(estimates: &[(f64, Pose2D)], checkpoints: &[(f64, Pose2D)], lenient: bool) -> Result<RunResult> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoints"));
    }
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    let mut sorted = estimates.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let errors = checkpoints
        .iter()
        .map(|&(t, gt)| {
            let i = nearest(&sorted, t).ok_or(Error::Unmatched(t))?;
            let (te, est) = sorted[i];
            if (te - t).abs() > MATCH_TOLERANCE {
                return Err(Error::Unmatched(t));
            }
            Ok(CheckpointError {
                t,
                position: est.distance(&gt),
                heading: wrap_angle(est.theta - gt.theta).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let under = |e: &CheckpointError| e.position < CONVERGENCE_THRESHOLD;
    let start = if lenient {
        errors.iter().position(under)
    } else {
        // one past the last checkpoint over the threshold
        let k = errors.iter().rposition(|e| !under(e)).map_or(0, |i| i + 1);
        (k < errors.len()).then_some(k)
    };
    let mean = |f: fn(&CheckpointError) -> f64, from: usize| {
        let tail = &errors[from..];
        tail.iter().map(f).sum::<f64>() / tail.len() as f64
    };
    Ok(RunResult {
        convergence_time: start.map(|i| errors[i].t),
        ate_after_convergence: start.map(|i| mean(|e| e.position, i)),
        heading_error_after_convergence: start.map(|i| mean(|e| e.heading, i)),
        success: start.is_some(),
        errors,
    })
}

/// Table-style summary over several runs. Failed runs count in the success
/// rate but not in the means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_ate: Option<f64>,
    pub mean_convergence_time: Option<f64>,
}

pub fn aggregate(results: &[RunResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::Empty("run results"));
    }
    let ok: Vec<&RunResult> = results.iter().filter(|r| r.success).collect();
    let mean = |f: fn(&RunResult) -> Option<f64>| {
        (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
    };
    Ok(Summary {
        runs: results.len(),
        successes: ok.len(),
        success_rate: ok.len() as f64 / results.len() as f64,
        mean_ate: mean(|r| r.ate_after_convergence),
        mean_convergence_time: mean(|r| r.convergence_time),
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    sequence: &'a str,
    success: String,
    convergence_s: Option<f64>,
    ate_m: Option<f64>,
}

/// Writes `sequence,success,convergence_s,ate_m`, one row per run, then a
/// `summary` row whose `success` column holds the success rate. Empty cells
/// mark runs that never converged.
pub fn write_csv(path: &Path, runs: &[(String, RunResult)]) -> Result<Summary> {
    let results: Vec<RunResult> = runs.iter().map(|(_, r)| r.clone()).collect();
    let summary = aggregate(&results)?;
    let mut w = csv::Writer::from_path(path)?;
    for (name, r) in runs {
        w.serialize(CsvRow {
            sequence: name,
            success: r.success.to_string(),
            convergence_s: r.convergence_time,
            ate_m: r.ate_after_convergence,
        })?;
    }
    w.serialize(CsvRow {
        sequence: "summary",
        success: summary.success_rate.to_string(),
        convergence_s: summary.mean_convergence_time,
        ate_m: summary.mean_ate,
    })?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cluster {
    pub x: f64,
    pub y: f64,
    /// Share of the particles in the cluster.
    pub fraction: f64,
}

/// Groups particles into spatial clusters: particles are binned on a square
/// grid of side `cell` meters and 8-connected occupied bins form one cluster.
/// Clusters are returned largest first.
pub fn particle_clusters(particles: &[Particle], cell: f64) -> Vec<Cluster> {
    let mut bins: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in particles.iter().enumerate() {
        let key = ((p.x as f64 / cell).floor() as i64, (p.y as f64 / cell).floor() as i64);
        bins.entry(key).or_default().push(i);
    }
    let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut clusters = Vec::new();
    for &start in bins.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![start];
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some((bx, by)) = stack.pop() {
            for &i in &bins[&(bx, by)] {
                n += 1;
                sx += particles[i].x as f64;
                sy += particles[i].y as f64;
            }
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let nb = (bx + dx, by + dy);
                    if bins.contains_key(&nb) && seen.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
        }
        clusters.push(Cluster {
            x: sx / n as f64,
            y: sy / n as f64,
            fraction: n as f64 / particles.len() as f64,
        });
    }
    clusters.sort_by(|a, b| b.fraction.total_cmp(&a.fraction));
    clusters
}

/// Number of clusters holding at least `min_fraction` of the particles whose
/// centroids lie more than `separation` meters from every larger such
/// cluster.
pub fn count_hypotheses(particles: &[Particle], cell: f64, min_fraction: f64, separation: f64) -> usize {
    let mut kept: Vec<Cluster> = Vec::new();
    for c in particle_clusters(particles, cell) {
        if c.fraction < min_fraction {
            break;
        }
        if kept.iter().all(|k| (k.x - c.x).hypot(k.y - c.y) > separation) {
            kept.push(c);
        }
    }
    kept.len()
}
