//! Point-to-point ICP for 2D LiDAR scans.
//!
//! Correspondences come from a hashed grid whose cell size equals the
//! correspondence gate, so a 3×3 cell neighbourhood covers every candidate.
//! Each target point keeps at most one (the closest) source point. Alignment
//! is the closed-form 2D Procrustes solution.
//!
//! Fitness is the *mean* squared distance over accepted correspondences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_rigid_2d, Point, Pose2D};

pub const MIN_SCAN_POINTS: usize = 10;
pub const DEFAULT_FITNESS_MAX: f64 = 0.1;
pub const DEFAULT_MIN_MATCH_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub timestamp: f64,
    /// Sensor-frame points in metres.
    pub points: Vec<Point>,
}

impl Scan {
    pub fn new(timestamp: f64, points: Vec<Point>) -> Self {
        Self { timestamp, points }
    }

    /// Converts a polar range scan, dropping non-finite, non-positive and
    /// over-range returns.
    pub fn from_ranges(
        timestamp: f64,
        angle_min: f64,
        angle_increment: f64,
        max_range: f64,
        ranges: &[f64],
    ) -> Self {
        let points = ranges
            .iter()
            .enumerate()
            .filter(|(_, &r)| r.is_finite() && r > 0.0 && r <= max_range)
            .map(|(k, &r)| {
                let a = angle_min + k as f64 * angle_increment;
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        Self { timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose2D) -> Scan {
        Scan {
            timestamp: self.timestamp,
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    /// Correspondence gate (m).
    pub max_correspondence_distance: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the per-iteration change of translation (m)
    /// and rotation (rad).
    pub transform_tol: f64,
    /// Perturbed restarts tried after the first convergence.
    pub refine_rounds: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_correspondence_distance: 0.5,
            max_iterations: 50,
            transform_tol: 1e-6,
            refine_rounds: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Pose of the source frame in the target frame.
    pub transform: Pose2D,
    /// Mean squared correspondence distance (m²); `+∞` when matching failed.
    pub fitness: f64,
    pub matched_points: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Fitness at the start of each iteration of the first run, then after
    /// each accepted restart.
    pub fitness_trace: Vec<f64>,
}

impl IcpResult {
    fn failed(transform: Pose2D, iterations: usize, fitness_trace: Vec<f64>) -> Self {
        Self {
            transform,
            fitness: f64::INFINITY,
            matched_points: 0,
            converged: false,
            iterations,
            fitness_trace,
        }
    }
}

/// Hashed-grid nearest-neighbour lookup over a fixed point set.
struct NeighborGrid<'a> {
    cell: f64,
    points: &'a [Point],
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl<'a> NeighborGrid<'a> {
    fn new(points: &'a [Point], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            cells
                .entry(Self::key(p, cell))
                .or_default()
                .push(k as u32);
        }
        Self {
            cell,
            points,
            cells,
        }
    }

    fn key(p: &Point, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Closest point within `max_dist`; ties go to the lower index.
    fn nearest(&self, q: &Point, max_dist: f64) -> Option<(usize, f64)> {
        let (cx, cy) = Self::key(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        let max_sq = max_dist * max_dist;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &k in bucket {
                    let p = &self.points[k as usize];
                    let d = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
                    if d > max_sq {
                        continue;
                    }
                    let k = k as usize;
                    match best {
                        Some((bk, bd)) if d > bd || (d == bd && k > bk) => {}
                        _ => best = Some((k, d)),
                    }
                }
            }
        }
        best
    }
}

struct Correspondences {
    src: Vec<Point>,
    dst: Vec<Point>,
    sq_dist_sum: f64,
}

impl Correspondences {
    fn len(&self) -> usize {
        self.src.len()
    }

    fn mean_sq(&self) -> f64 {
        self.sq_dist_sum / self.len() as f64
    }
}

/// One-to-one correspondences: each target point keeps its closest source.
fn correspond(
    source: &[Point],
    target: &NeighborGrid<'_>,
    transform: &Pose2D,
    gate: f64,
) -> Correspondences {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; target.points.len()];
    for (si, p) in source.iter().enumerate() {
        let q = transform.transform_point(p);
        if let Some((ti, d)) = target.nearest(&q, gate) {
            match best[ti] {
                Some((_, bd)) if bd <= d => {}
                _ => best[ti] = Some((si, d)),
            }
        }
    }
    let mut out = Correspondences {
        src: Vec::new(),
        dst: Vec::new(),
        sq_dist_sum: 0.0,
    };
    for (ti, b) in best.iter().enumerate() {
        if let Some((si, d)) = *b {
            out.src.push(source[si]);
            out.dst.push(target.points[ti]);
            out.sq_dist_sum += d;
        }
    }
    out
}

struct Run {
    transform: Pose2D,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    fitness: f64,
    matched: usize,
}

fn run_from(source: &[Point], grid: &NeighborGrid<'_>, guess: Pose2D, config: &IcpConfig) -> Option<Run> {
    let gate = config.max_correspondence_distance;
    let mut transform = guess;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let corr = correspond(source, grid, &transform, gate);
        if corr.len() < 3 {
            return None;
        }
        trace.push(corr.mean_sq());
        let next = fit_rigid_2d(&corr.src, &corr.dst).expect("non-empty correspondences");
        let delta = transform.between(&next);
        transform = next;
        if delta.x.hypot(delta.y) < config.transform_tol && delta.theta.abs() < config.transform_tol {
            converged = true;
            break;
        }
    }
    let corr = correspond(source, grid, &transform, gate);
    if corr.len() < 3 {
        return None;
    }
    Some(Run {
        transform,
        trace,
        converged,
        iterations,
        fitness: corr.mean_sq(),
        matched: corr.len(),
    })
}

/// Registers `source` onto `target` starting from `initial_guess`.
///
/// The returned transform maps source-frame points into the target frame.
///
/// Structured scans (points sampled along walls) leave point-to-point ICP
/// in shallow minima where pairs are shifted by one sample. After the first
/// convergence the solver restarts from the current estimate perturbed by
/// the RMS residual along each axis and keeps any restart that lowers the
/// fitness without losing matches.
pub fn icp(source: &Scan, target: &Scan, initial_guess: Pose2D, config: &IcpConfig) -> Result<IcpResult> {
    if source.len() < MIN_SCAN_POINTS || target.len() < MIN_SCAN_POINTS {
        return Err(Error::InvalidArgument(format!(
            "ICP needs at least {MIN_SCAN_POINTS} points per scan (got {} and {})",
            source.len(),
            target.len()
        )));
    }
    let grid = NeighborGrid::new(&target.points, config.max_correspondence_distance);
    let Some(mut best) = run_from(&source.points, &grid, initial_guess, config) else {
        return Ok(IcpResult::failed(initial_guess, config.max_iterations, Vec::new()));
    };
    let mut iterations = best.iterations;
    let mean_range = {
        let n = source.points.len() as f64;
        (source.points.iter().map(|p| p.coords.norm()).sum::<f64>() / n).max(1e-3)
    };
    for _ in 0..config.refine_rounds {
        if !best.converged || best.fitness <= 0.0 {
            break;
        }
        let step = best.fitness.sqrt();
        let rot = step / mean_range;
        let mut improved = false;
        for (dx, dy, dt) in [
            (step, 0.0, 0.0),
            (-step, 0.0, 0.0),
            (0.0, step, 0.0),
            (0.0, -step, 0.0),
            (0.0, 0.0, rot),
            (0.0, 0.0, -rot),
        ] {
            let guess = best.transform.compose(&Pose2D::new(dx, dy, dt));
            let Some(run) = run_from(&source.points, &grid, guess, config) else {
                continue;
            };
            iterations += run.iterations;
            if run.converged && run.fitness < best.fitness && run.matched >= best.matched {
                let mut trace = std::mem::take(&mut best.trace);
                trace.push(run.fitness);
                best = Run { trace, ..run };
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let mut trace = best.trace;
    if trace.last() != Some(&best.fitness) {
        trace.push(best.fitness);
    }
    Ok(IcpResult {
        transform: best.transform,
        fitness: best.fitness,
        matched_points: best.matched,
        converged: best.converged,
        iterations,
        fitness_trace: trace,
    })
}

/// Loop-closure acceptance: converged, `fitness < fitness_max`, and more
/// matches than `min_match_fraction` of the mean scan size.
pub fn is_valid_match(
    result: &IcpResult,
    source_points: usize,
    target_points: usize,
    fitness_max: f64,
    min_match_fraction: f64,
) -> bool {
    let mean_points = (source_points + target_points) as f64 / 2.0;
    result.converged
        && result.fitness < fitness_max
        && result.matched_points as f64 > min_match_fraction * mean_points
}
