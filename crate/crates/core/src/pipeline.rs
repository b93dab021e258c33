//! Radio SLAM and two-pass Radio+LiDAR SLAM.
//!
//! Radio SLAM: keyframes and odometry edges, radio loop closures from
//! fingerprint similarity, one optimisation. Radio+LiDAR SLAM additionally
//! replaces odometry edges by consecutive scan matches before that first
//! pass, then searches LiDAR loop closures around the first-pass trajectory
//! and optimises again.

use std::time::Instant;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

pub use crate::dataset::Dataset;
use crate::distance_model::{collect_training_pairs, train, DistanceModel};
use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, StampedFingerprint, TransmitterIndex};
use crate::geometry::{Pose2D, TimedPose};
use crate::mapping::{build_occupancy_map, OccupancyGrid, DEFAULT_RESOLUTION};
use crate::pose_graph::{Constraint, Edge, EdgeKind, PoseGraph, SolverConfig};
use crate::scan_matching::{
    icp, is_valid_match, IcpConfig, Scan, DEFAULT_FITNESS_MAX, DEFAULT_MIN_MATCH_FRACTION, MIN_SCAN_POINTS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Minimum similarity for a radio loop closure.
    pub similarity_threshold: f64,
    /// Minimum travelled distance between the two nodes of a loop closure (m).
    pub min_travel_distance: f64,
    /// A closure needs at least this many transmitters heard at both
    /// keyframes.
    pub min_shared_transmitters: usize,
    /// Keeps a closure only if it is among the `k` most similar partners of
    /// one of its keyframes; `None` keeps every closure.
    pub max_closures_per_keyframe: Option<usize>,
    /// RSS offset; `None` takes the dataset's. Must match the model.
    pub rss_offset: Option<f64>,
    pub keyframe_spacing: f64,
    /// Odometry noise densities for edge information (m/√m, rad/√m).
    pub odometry_translational_density: f64,
    pub odometry_rotational_density: f64,
    /// LiDAR loop-closure candidates must be closer than this on the
    /// first-pass trajectory (m).
    pub lidar_candidate_distance: f64,
    /// Keep only the nearest candidate of each earlier pass (a contiguous
    /// run of eligible keyframes) instead of every pair.
    pub nearest_candidate_per_pass: bool,
    /// Loop-closure ICP also starts from the guess shifted by each of these
    /// distances along the source heading (m); the start matching the most
    /// points wins.
    pub loop_search_offsets: Vec<f64>,
    /// Consecutive scan matching.
    pub icp: IcpConfig,
    /// Loop-closure scan matching.
    pub loop_icp: IcpConfig,
    pub fitness_max: f64,
    pub min_match_fraction: f64,
    pub solver: SolverConfig,
    pub use_radio_edges: bool,
    pub use_lidar_edges: bool,
    pub refine_consecutive: bool,
    pub map_resolution: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.7,
            min_travel_distance: 100.0,
            min_shared_transmitters: 3,
            max_closures_per_keyframe: Some(1),
            rss_offset: None,
            keyframe_spacing: 0.5,
            odometry_translational_density: 0.05,
            odometry_rotational_density: 0.02,
            lidar_candidate_distance: 5.0,
            nearest_candidate_per_pass: true,
            loop_search_offsets: vec![-2.0, -1.0, 1.0, 2.0],
            icp: IcpConfig {
                refine_rounds: 0,
                ..IcpConfig::default()
            },
            loop_icp: IcpConfig {
                max_correspondence_distance: 1.0,
                refine_rounds: 0,
                ..IcpConfig::default()
            },
            fitness_max: DEFAULT_FITNESS_MAX,
            min_match_fraction: DEFAULT_MIN_MATCH_FRACTION,
            solver: SolverConfig::default(),
            use_radio_edges: true,
            use_lidar_edges: true,
            refine_consecutive: true,
            map_resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "similarity threshold must be in (0, 1], got {}",
                self.similarity_threshold
            )));
        }
        let positive = [
            ("min_travel_distance", self.min_travel_distance),
            ("keyframe_spacing", self.keyframe_spacing),
            ("odometry_translational_density", self.odometry_translational_density),
            ("odometry_rotational_density", self.odometry_rotational_density),
            ("fitness_max", self.fitness_max),
            ("map_resolution", self.map_resolution),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lidar_candidate_distance >= 0.0) {
            return Err(Error::InvalidArgument("lidar_candidate_distance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub timestamp: f64,
    /// Integrated odometry pose.
    pub odometry: Pose2D,
    /// Odometry path length from the first keyframe.
    pub travel: f64,
    pub fingerprint: Option<Fingerprint>,
    pub scan: Option<Scan>,
    /// Pose of the attached scan's sensor frame in the keyframe frame
    /// (odometry between the two timestamps).
    pub scan_offset: Pose2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeChain {
    pub keyframes: Vec<Keyframe>,
    /// `odometry_edges[k]` links keyframes `k` and `k + 1`.
    pub odometry_edges: Vec<Edge>,
}

/// Diagonal information for an odometry segment of length `len`.
pub fn odometry_information(len: f64, config: &PipelineConfig) -> Matrix3<f64> {
    let len = len.max(1e-3);
    let vt = config.odometry_translational_density.powi(2) * len;
    let vr = config.odometry_rotational_density.powi(2) * len;
    Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0 / vt, 1.0 / vt, 1.0 / vr))
}

/// Places a keyframe at the first odometry sample and then each time the
/// odometry path length since the previous keyframe reaches `keyframe_spacing`.
///
/// Each fingerprint and scan goes to the keyframe nearest in time; a keyframe
/// that collects several keeps the nearest.
pub fn build_keyframes(dataset: &Dataset, config: &PipelineConfig) -> Result<KeyframeChain> {
    let odo = &dataset.odometry;
    if odo.is_empty() {
        return Err(Error::EmptyOdometry);
    }
    let spacing = config.keyframe_spacing;
    let mut picks = vec![0usize];
    let mut travel = vec![0.0];
    let mut since = 0.0;
    let mut total = 0.0;
    for k in 1..odo.len() {
        let step = odo[k - 1].pose.distance_to(&odo[k].pose);
        since += step;
        total += step;
        if since >= spacing - 1e-9 {
            picks.push(k);
            travel.push(total);
            since = 0.0;
        }
    }
    let times: Vec<f64> = picks.iter().map(|&k| odo[k].t).collect();
    let mut keyframes: Vec<Keyframe> = picks
        .iter()
        .zip(&travel)
        .map(|(&k, &tr)| Keyframe {
            timestamp: odo[k].t,
            odometry: odo[k].pose,
            travel: tr,
            fingerprint: None,
            scan: None,
            scan_offset: Pose2D::identity(),
        })
        .collect();

    let mut fp_dt = vec![f64::INFINITY; keyframes.len()];
    for f in &dataset.fingerprints {
        let k = nearest_time(&times, f.timestamp);
        let dt = (times[k] - f.timestamp).abs();
        if dt < fp_dt[k] {
            fp_dt[k] = dt;
            keyframes[k].fingerprint = Some(f.clone());
        }
    }

    if let (Some(scans), Some(meta)) = (&dataset.scans, &dataset.lidar) {
        let mut best: Vec<Option<(f64, usize)>> = vec![None; keyframes.len()];
        for (s, scan) in scans.iter().enumerate() {
            let k = nearest_time(&times, scan.t);
            let dt = (times[k] - scan.t).abs();
            if best[k].is_none_or(|(d, _)| dt < d) {
                best[k] = Some((dt, s));
            }
        }
        for (k, b) in best.iter().enumerate() {
            if let Some((_, s)) = *b {
                let kf = &mut keyframes[k];
                kf.scan = Some(scans[s].to_scan(meta));
                let at_scan = dataset.odometry_at(scans[s].t).unwrap_or(kf.odometry);
                kf.scan_offset = kf.odometry.between(&at_scan);
            }
        }
    }

    let odometry_edges = keyframes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let z = w[0].odometry.between(&w[1].odometry);
            Edge::odometry(k, k + 1, z, odometry_information(w[1].travel - w[0].travel, config))
        })
        .collect();
    Ok(KeyframeChain {
        keyframes,
        odometry_edges,
    })
}

/// Index of the time nearest `t` in a sorted, non-empty slice; ties go to
/// the earlier entry.
fn nearest_time(times: &[f64], t: f64) -> usize {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        return 0;
    }
    if k == times.len() {
        return k - 1;
    }
    if (times[k] - t) < (t - times[k - 1]) {
        k
    } else {
        k - 1
    }
}

/// A radio loop closure and the values that admitted it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioClosure {
    pub i: usize,
    pub j: usize,
    pub travel_separation: f64,
    pub similarity: f64,
    pub distance: f64,
    pub variance: f64,
}

impl RadioClosure {
    pub fn edge(&self) -> Edge {
        Edge::radio(self.i, self.j, self.distance, 1.0 / self.variance)
    }
}

/// All keyframe pairs further apart than `min_travel_distance` along the
/// path whose fingerprint similarity reaches the threshold, each with the
/// model's distance and variance at that similarity. Fingerprints with zero
/// norm after the offset are skipped.
pub fn detect_radio_loop_closures(
    keyframes: &[Keyframe],
    model: &DistanceModel,
    config: &PipelineConfig,
) -> Result<Vec<RadioClosure>> {
    let mut index = TransmitterIndex::new();
    let mut prepared = Vec::new();
    for (k, kf) in keyframes.iter().enumerate() {
        if let Some(f) = &kf.fingerprint {
            match index.prepare(f, model.rss_offset) {
                Ok(p) => prepared.push((k, p)),
                Err(Error::ZeroNorm) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let mut out = Vec::new();
    for (a, (i, fi)) in prepared.iter().enumerate() {
        for (j, fj) in &prepared[a + 1..] {
            let sep = keyframes[*j].travel - keyframes[*i].travel;
            if sep <= config.min_travel_distance {
                continue;
            }
            let s = fi.similarity(fj);
            if s < config.similarity_threshold || fi.shared(fj) < config.min_shared_transmitters {
                continue;
            }
            let (distance, variance) = model.query(s)?;
            out.push(RadioClosure {
                i: *i,
                j: *j,
                travel_separation: sep,
                similarity: s,
                distance,
                variance,
            });
        }
    }
    if let Some(k) = config.max_closures_per_keyframe {
        out = keep_top_partners(out, keyframes.len(), k);
    }
    Ok(out)
}

fn keep_top_partners(closures: Vec<RadioClosure>, nodes: usize, k: usize) -> Vec<RadioClosure> {
    let mut per_node: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (c, cl) in closures.iter().enumerate() {
        per_node[cl.i].push(c);
        per_node[cl.j].push(c);
    }
    let mut keep = vec![false; closures.len()];
    for list in &mut per_node {
        list.sort_by(|&a, &b| closures[b].similarity.total_cmp(&closures[a].similarity).then(a.cmp(&b)));
        for &c in list.iter().take(k) {
            keep[c] = true;
        }
    }
    closures.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect()
}

/// A verified LiDAR loop closure and the values that admitted it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarClosure {
    pub i: usize,
    pub j: usize,
    pub travel_separation: f64,
    /// Relative pose of keyframe `j` in keyframe `i`.
    pub measurement: Pose2D,
    pub fitness: f64,
    pub matched_points: usize,
    pub source_points: usize,
    pub target_points: usize,
}

impl LidarClosure {
    /// Information `diag(1, 1, 25) / max(fitness, 1e-4)`.
    pub fn edge(&self) -> Edge {
        let f = self.fitness.max(1e-4);
        Edge::lidar(
            self.i,
            self.j,
            self.measurement,
            Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0 / f, 1.0 / f, 25.0 / f)),
        )
    }
}

fn usable_scan(kf: &Keyframe) -> Option<&Scan> {
    kf.scan.as_ref().filter(|s| s.len() >= MIN_SCAN_POINTS)
}

/// Scan match between two keyframes; the guess and result are keyframe
/// relative poses (`j` in `i`). `None` if either scan is unusable or the
/// match fails the validity gate.
fn match_keyframes(
    ki: &Keyframe,
    kj: &Keyframe,
    guess: &Pose2D,
    icp_config: &IcpConfig,
    config: &PipelineConfig,
) -> Result<Option<(Pose2D, crate::scan_matching::IcpResult)>> {
    let (Some(si), Some(sj)) = (usable_scan(ki), usable_scan(kj)) else {
        return Ok(None);
    };
    let sensor_guess = ki.scan_offset.inverse().compose(guess).compose(&kj.scan_offset);
    let r = icp(sj, si, sensor_guess, icp_config)?;
    if !is_valid_match(&r, sj.len(), si.len(), config.fitness_max, config.min_match_fraction) {
        return Ok(None);
    }
    let z = ki.scan_offset.compose(&r.transform).compose(&kj.scan_offset.inverse());
    Ok(Some((z, r)))
}

/// Replaces each consecutive odometry edge by a scan match seeded with the
/// odometry relative pose, with the edge information scaled by
/// `1 / max(fitness, 1e-4)`. Edges whose match is invalid, or whose keyframes
/// lack usable scans, stay untouched. Returns the indices of replaced edges.
pub fn refine_consecutive_icp(
    keyframes: &[Keyframe],
    edges: &mut [Edge],
    config: &PipelineConfig,
) -> Result<Vec<usize>> {
    let mut replaced = Vec::new();
    for (k, edge) in edges.iter_mut().enumerate() {
        let Constraint::RelativePose {
            measurement,
            information,
        } = &edge.constraint
        else {
            continue;
        };
        let (ki, kj) = (&keyframes[edge.i], &keyframes[edge.j]);
        if let Some((z, r)) = match_keyframes(ki, kj, measurement, &config.icp, config)? {
            let information = information / r.fitness.max(1e-4);
            edge.constraint = Constraint::RelativePose {
                measurement: z,
                information,
            };
            replaced.push(k);
        }
    }
    Ok(replaced)
}

/// Pairs of non-consecutive keyframes that are closer than the candidate
/// distance on `trajectory` and further apart than `min_travel_distance`
/// along the path. With `nearest_candidate_per_pass`, each keyframe `j`
/// keeps one partner per contiguous run of eligible earlier keyframes, the
/// nearest.
pub fn lidar_candidates(trajectory: &[Pose2D], keyframes: &[Keyframe], config: &PipelineConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trajectory.len() {
        let mut run: Option<(usize, f64)> = None;
        let mut prev = None;
        for i in 0..j.saturating_sub(1) {
            if keyframes[j].travel - keyframes[i].travel <= config.min_travel_distance {
                break;
            }
            let d = trajectory[i].distance_to(&trajectory[j]);
            if d >= config.lidar_candidate_distance {
                continue;
            }
            if !config.nearest_candidate_per_pass {
                out.push((i, j));
                continue;
            }
            if prev.is_some_and(|p| p + 1 != i) {
                out.extend(run.take().map(|(k, _)| (k, j)));
            }
            if run.is_none_or(|(_, bd)| d < bd) {
                run = Some((i, d));
            }
            prev = Some(i);
        }
        out.extend(run.map(|(k, _)| (k, j)));
    }
    out.sort_unstable();
    out
}

/// Verifies every candidate pair by scan matching seeded with the relative
/// pose on `trajectory` and with that pose shifted along the source heading
/// by each of `loop_search_offsets`. Of the starts that pass the validity
/// gate, the one with the most matched points (then the lowest fitness) is
/// kept. Returns the candidate count and the accepted closures.
pub fn detect_lidar_loop_closures(
    trajectory: &[Pose2D],
    keyframes: &[Keyframe],
    config: &PipelineConfig,
) -> Result<(usize, Vec<LidarClosure>)> {
    let candidates = lidar_candidates(trajectory, keyframes, config);
    let mut out = Vec::new();
    for &(i, j) in &candidates {
        let guess = trajectory[i].between(&trajectory[j]);
        let (ki, kj) = (&keyframes[i], &keyframes[j]);
        let mut best: Option<(Pose2D, crate::scan_matching::IcpResult)> = None;
        for shift in std::iter::once(0.0).chain(config.loop_search_offsets.iter().copied()) {
            let start = guess.compose(&Pose2D::new(shift, 0.0, 0.0));
            if let Some((z, r)) = match_keyframes(ki, kj, &start, &config.loop_icp, config)? {
                let better = best.as_ref().is_none_or(|(_, b)| {
                    r.matched_points > b.matched_points || (r.matched_points == b.matched_points && r.fitness < b.fitness)
                });
                if better {
                    best = Some((z, r));
                }
            }
        }
        if let Some((z, r)) = best {
            out.push(LidarClosure {
                i,
                j,
                travel_separation: kj.travel - ki.travel,
                measurement: z,
                fitness: r.fitness,
                matched_points: r.matched_points,
                source_points: usable_scan(kj).map_or(0, Scan::len),
                target_points: usable_scan(ki).map_or(0, Scan::len),
            });
        }
    }
    Ok((candidates.len(), out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub name: String,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SlamReport {
    pub keyframes: usize,
    pub odometry_edges: usize,
    pub icp_refined_edges: usize,
    pub radio_edges: usize,
    pub lidar_candidates: usize,
    pub lidar_edges: usize,
    pub similarity_threshold: f64,
    pub fitness_max: f64,
    pub min_match_fraction: f64,
    pub radio_closures: Vec<RadioClosure>,
    pub lidar_closures: Vec<LidarClosure>,
    pub passes: Vec<PassStats>,
    pub timings: Vec<StageTiming>,
}

impl SlamReport {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_owned(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn seconds(&self, stage: &str) -> f64 {
        self.timings.iter().filter(|t| t.stage == stage).map(|t| t.seconds).sum()
    }
}

pub const STAGE_KEYFRAMES: &str = "keyframes";
pub const STAGE_SIMILARITY: &str = "similarity_search";
pub const STAGE_CONSECUTIVE_ICP: &str = "consecutive_scan_matching";
pub const STAGE_LOOP_ICP: &str = "loop_scan_matching";
pub const STAGE_OPTIMIZE_1: &str = "optimize_pass1";
pub const STAGE_OPTIMIZE_2: &str = "optimize_pass2";
pub const STAGE_MAPPING: &str = "mapping";

#[derive(Debug, Clone)]
pub struct SlamOutput {
    pub trajectory: Vec<TimedPose>,
    pub graph: PoseGraph,
    pub keyframes: Vec<Keyframe>,
    pub report: SlamReport,
}

#[derive(Debug, Clone)]
pub struct RadioLidarOutput {
    pub trajectory: Vec<TimedPose>,
    pub grid: OccupancyGrid,
    pub graph: PoseGraph,
    pub keyframes: Vec<Keyframe>,
    /// Trajectory after the first pass.
    pub first_pass: Vec<TimedPose>,
    pub report: SlamReport,
}

fn check_offsets(dataset: &Dataset, model: &DistanceModel, config: &PipelineConfig) -> Result<()> {
    let want = config.rss_offset.unwrap_or(dataset.rss_offset);
    if want != dataset.rss_offset || want != model.rss_offset {
        return Err(Error::InvalidArgument(format!(
            "RSS offset mismatch: dataset {}, model {}, config {want}",
            dataset.rss_offset, model.rss_offset
        )));
    }
    Ok(())
}

fn optimize_pass(graph: &mut PoseGraph, name: &str, config: &PipelineConfig) -> Result<PassStats> {
    let has_loops = graph.edges().iter().any(|e| e.kind.is_loop_closure());
    if !has_loops {
        let chi2 = if graph.edges().is_empty() {
            0.0
        } else {
            graph.chi2(config.solver.huber_delta)
        };
        return Ok(PassStats {
            name: name.to_owned(),
            initial_chi2: chi2,
            final_chi2: chi2,
            iterations: 0,
        });
    }
    let s = graph.optimize(&config.solver)?;
    Ok(PassStats {
        name: name.to_owned(),
        initial_chi2: s.initial_chi2,
        final_chi2: s.final_chi2,
        iterations: s.iterations,
    })
}

/// First pass shared by both pipelines: keyframes, optional consecutive scan
/// matching, radio closures, one optimisation.
fn first_pass(
    dataset: &Dataset,
    model: &DistanceModel,
    config: &PipelineConfig,
    with_icp: bool,
    report: &mut SlamReport,
) -> Result<(PoseGraph, Vec<Keyframe>)> {
    config.validate()?;
    dataset.validate()?;
    check_offsets(dataset, model, config)?;
    report.similarity_threshold = config.similarity_threshold;
    report.fitness_max = config.fitness_max;
    report.min_match_fraction = config.min_match_fraction;

    let chain = report.time(STAGE_KEYFRAMES, || build_keyframes(dataset, config))?;
    let KeyframeChain {
        keyframes,
        mut odometry_edges,
    } = chain;
    report.keyframes = keyframes.len();
    report.odometry_edges = odometry_edges.len();

    if with_icp {
        let replaced = report.time(STAGE_CONSECUTIVE_ICP, || {
            refine_consecutive_icp(&keyframes, &mut odometry_edges, config)
        })?;
        report.icp_refined_edges = replaced.len();
    }

    let closures = if config.use_radio_edges {
        report.time(STAGE_SIMILARITY, || detect_radio_loop_closures(&keyframes, model, config))?
    } else {
        Vec::new()
    };
    report.radio_edges = closures.len();

    // Initial poses chain the (possibly refined) odometry measurements.
    let mut graph = PoseGraph::new();
    let mut pose = keyframes[0].odometry;
    graph.add_node(pose);
    for e in &odometry_edges {
        if let Constraint::RelativePose { measurement, .. } = &e.constraint {
            pose = pose.compose(measurement);
        }
        graph.add_node(pose);
    }
    for e in odometry_edges {
        graph.add_edge(e)?;
    }
    for c in &closures {
        graph.add_edge(c.edge())?;
    }
    report.radio_closures = closures;

    let stats = report.time(STAGE_OPTIMIZE_1, || optimize_pass(&mut graph, "pass1", config))?;
    report.passes.push(stats);
    Ok((graph, keyframes))
}

fn timed_trajectory(graph: &PoseGraph, keyframes: &[Keyframe]) -> Vec<TimedPose> {
    graph
        .poses()
        .into_iter()
        .zip(keyframes)
        .map(|(p, k)| TimedPose::new(k.timestamp, p))
        .collect()
}

/// Radio SLAM over odometry and fingerprints.
pub fn run_radio_slam(dataset: &Dataset, model: &DistanceModel, config: &PipelineConfig) -> Result<SlamOutput> {
    if dataset.fingerprints.is_empty() && config.use_radio_edges {
        return Err(Error::NoFingerprints);
    }
    let mut report = SlamReport::default();
    let (graph, keyframes) = first_pass(dataset, model, config, false, &mut report)?;
    Ok(SlamOutput {
        trajectory: timed_trajectory(&graph, &keyframes),
        graph,
        keyframes,
        report,
    })
}

/// Radio+LiDAR SLAM: scan-refined first pass, LiDAR loop closures around the
/// first-pass trajectory, second optimisation, occupancy map.
pub fn run_radio_lidar_slam(
    dataset: &Dataset,
    model: &DistanceModel,
    config: &PipelineConfig,
) -> Result<RadioLidarOutput> {
    if dataset.scans.as_ref().is_none_or(|s| s.is_empty()) {
        return Err(Error::NoScans);
    }
    if dataset.fingerprints.is_empty() && config.use_radio_edges {
        return Err(Error::NoFingerprints);
    }
    let mut report = SlamReport::default();
    let (mut graph, keyframes) = first_pass(dataset, model, config, config.refine_consecutive, &mut report)?;
    let first = timed_trajectory(&graph, &keyframes);

    if config.use_lidar_edges {
        let poses = graph.poses();
        let (candidates, closures) =
            report.time(STAGE_LOOP_ICP, || detect_lidar_loop_closures(&poses, &keyframes, config))?;
        report.lidar_candidates = candidates;
        report.lidar_edges = closures.len();
        for c in &closures {
            graph.add_edge(c.edge())?;
        }
        report.lidar_closures = closures;
    }
    let stats = report.time(STAGE_OPTIMIZE_2, || optimize_pass(&mut graph, "pass2", config))?;
    report.passes.push(stats);

    let grid = report.time(STAGE_MAPPING, || keyframe_map(&graph.poses(), &keyframes, config.map_resolution))?;
    Ok(RadioLidarOutput {
        trajectory: timed_trajectory(&graph, &keyframes),
        grid,
        graph,
        keyframes,
        first_pass: first,
        report,
    })
}

/// Occupancy map from keyframe poses and their attached scans.
pub fn keyframe_map(poses: &[Pose2D], keyframes: &[Keyframe], resolution: f64) -> Result<OccupancyGrid> {
    if poses.len() != keyframes.len() {
        return Err(Error::LengthMismatch(poses.len(), keyframes.len()));
    }
    let mut sensor = Vec::new();
    let mut scans = Vec::new();
    for (p, k) in poses.iter().zip(keyframes) {
        if let Some(s) = &k.scan {
            sensor.push(p.compose(&k.scan_offset));
            scans.push(s.clone());
        }
    }
    build_occupancy_map(&sensor, &scans, resolution)
}

/// Trains a distance model from a dataset's fingerprints, each bound to the
/// odometry sample nearest in time.
pub fn train_model(dataset: &Dataset, bin_width: f64, max_pair_distance: f64) -> Result<DistanceModel> {
    dataset.validate()?;
    if dataset.odometry.is_empty() {
        return Err(Error::EmptyOdometry);
    }
    let times: Vec<f64> = dataset.odometry.iter().map(|p| p.t).collect();
    let stamped: Vec<StampedFingerprint> = dataset
        .fingerprints
        .iter()
        .map(|f| StampedFingerprint {
            fingerprint: f.clone(),
            pose_index: nearest_time(&times, f.timestamp),
        })
        .collect();
    let samples = collect_training_pairs(&stamped, &dataset.odometry_poses(), max_pair_distance, dataset.rss_offset)?;
    train(&samples, bin_width, dataset.rss_offset)
}

/// Counts of edges by kind in a graph.
pub fn edge_counts(graph: &PoseGraph) -> [(EdgeKind, usize); 3] {
    [
        (EdgeKind::Odometry, graph.count_edges(EdgeKind::Odometry)),
        (EdgeKind::RadioDistance, graph.count_edges(EdgeKind::RadioDistance)),
        (EdgeKind::LidarRelPose, graph.count_edges(EdgeKind::LidarRelPose)),
    ]
}
