//! Synthetic worlds with exact ground truth.
//!
//! A robot follows a waypoint path (turn in place, then drive straight) at
//! fixed rates. Odometry accumulates Gaussian increment noise whose variance
//! grows with distance driven. RSS follows log-distance path loss from the
//! true position. LiDAR ranges come from exact ray/segment intersection.
//! Odometry, RSS and LiDAR noise draw from separate seeded streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LidarMeta, RangeScan};
use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, DEFAULT_RSS_OFFSET};
use crate::geometry::{Point, Pose2D, TimedPose};

/// Line segment `[x1, y1, x2, y2]` in metres.
pub type Wall = [f64; 4];

/// Distance below which path loss is evaluated at the floor value.
pub const MIN_RSS_DISTANCE: f64 = 0.1;

const STREAM_ODOMETRY: u64 = 1;
const STREAM_RSS: u64 = 2;
const STREAM_LIDAR: u64 = 3;
const STREAM_LAYOUT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmitter {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// RSS at 1 m (dBm).
    pub tx_power: f64,
    pub path_loss_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub max_range: f64,
    pub beam_count: usize,
    pub range_noise_sigma: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryNoise {
    /// Translational noise density (m/√m).
    pub translational: f64,
    /// Rotational noise density (rad/√m).
    pub rotational: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub walls: Vec<Wall>,
    pub transmitters: Vec<Transmitter>,
    pub rss_noise_sigma: f64,
    /// Readings weaker than this are not reported (dBm).
    pub detection_floor: f64,
    pub lidar: Option<LidarConfig>,
    pub odometry_noise: OdometryNoise,
    /// Forward speed (m/s).
    pub speed: f64,
    /// Turning rate (rad/s).
    pub turn_rate: f64,
    /// Odometry and ground-truth sampling period (s).
    pub odometry_period: f64,
    pub fingerprint_period: f64,
    pub seed: u64,
}

/// A world plus the path driven through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub world: WorldConfig,
    pub waypoints: Vec<[f64; 2]>,
}

/// Log-distance path loss. `noise` is a standard-normal draw scaled by
/// `sigma`; the reading is dropped below `detection_floor`.
pub fn simulate_rss(tx: &Transmitter, position: &Point, sigma: f64, detection_floor: f64, noise: f64) -> Option<f64> {
    let d = (position.x - tx.x).hypot(position.y - tx.y).max(MIN_RSS_DISTANCE);
    let rss = tx.tx_power - 10.0 * tx.path_loss_exponent * d.log10() + sigma * noise;
    (rss >= detection_floor).then_some(rss)
}

/// Distance along the ray from `origin` at heading `angle` to the nearest
/// wall, if within `max_range`.
pub fn cast_ray(origin: &Point, angle: f64, walls: &[Wall], max_range: f64) -> Option<f64> {
    let (dy, dx) = angle.sin_cos();
    let mut best = f64::INFINITY;
    for w in walls {
        let (ex, ey) = (w[2] - w[0], w[3] - w[1]);
        let den = dx * ey - dy * ex;
        if den.abs() < 1e-15 {
            continue;
        }
        let (wx, wy) = (w[0] - origin.x, w[1] - origin.y);
        let t = (wx * ey - wy * ex) / den;
        let u = (wx * dy - wy * dx) / den;
        if t > 0.0 && (0.0..=1.0).contains(&u) && t < best {
            best = t;
        }
    }
    (best <= max_range).then_some(best)
}

/// Whether the open segments `p1p2` and `q1q2` intersect.
fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let cross = |a: Point, b: Point, c: Point| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn check_world(world: &WorldConfig) -> Result<()> {
    let positive = [
        ("speed", world.speed),
        ("turn_rate", world.turn_rate),
        ("odometry_period", world.odometry_period),
        ("fingerprint_period", world.fingerprint_period),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    if world.rss_noise_sigma < 0.0 || world.odometry_noise.translational < 0.0 || world.odometry_noise.rotational < 0.0 {
        return Err(Error::InvalidArgument("noise parameters must be non-negative".into()));
    }
    if let Some(tx) = world.transmitters.iter().find(|t| world.detection_floor >= t.tx_power) {
        return Err(Error::InvalidArgument(format!(
            "transmitter {} tx_power {} is not above the detection floor {}",
            tx.id, tx.tx_power, world.detection_floor
        )));
    }
    if let Some(l) = &world.lidar {
        if l.beam_count == 0 || !(l.max_range > 0.0) || !(l.period > 0.0) || l.range_noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid LiDAR config {l:?}")));
        }
    }
    Ok(())
}

/// Ground-truth poses every `odometry_period` along the waypoint path.
fn drive(world: &WorldConfig, waypoints: &[Point]) -> Vec<Pose2D> {
    let mut poses = Vec::new();
    let heading0 = if waypoints.len() > 1 {
        (waypoints[1].y - waypoints[0].y).atan2(waypoints[1].x - waypoints[0].x)
    } else {
        0.0
    };
    let mut cur = Pose2D::new(waypoints[0].x, waypoints[0].y, heading0);
    poses.push(cur);
    let max_turn = world.turn_rate * world.odometry_period;
    let max_step = world.speed * world.odometry_period;
    for w in waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).norm();
        if len == 0.0 {
            continue;
        }
        let heading = (b.y - a.y).atan2(b.x - a.x);
        let turn = Pose2D::new(0.0, 0.0, heading - cur.theta).theta;
        let n_turn = (turn.abs() / max_turn).ceil() as usize;
        let start_theta = cur.theta;
        for k in 1..=n_turn {
            cur = Pose2D::new(a.x, a.y, start_theta + turn * k as f64 / n_turn as f64);
            poses.push(cur);
        }
        let n = (len / max_step).ceil() as usize;
        for k in 1..=n {
            let s = k as f64 / n as f64;
            cur = Pose2D::new(a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, heading);
            poses.push(cur);
        }
    }
    poses
}

/// Runs the robot along `waypoints` and records every sensor stream.
///
/// With both odometry noise densities at zero the odometry is the ground
/// truth itself.
pub fn simulate_dataset(world: &WorldConfig, waypoints: &[[f64; 2]]) -> Result<Dataset> {
    check_world(world)?;
    if waypoints.is_empty() {
        return Err(Error::InvalidArgument("empty waypoint path".into()));
    }
    let pts: Vec<Point> = waypoints.iter().map(|w| Point::new(w[0], w[1])).collect();
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::NonFinite("waypoint"));
    }
    for (s, seg) in pts.windows(2).enumerate() {
        for (k, w) in world.walls.iter().enumerate() {
            if segments_cross(seg[0], seg[1], Point::new(w[0], w[1]), Point::new(w[2], w[3])) {
                return Err(Error::PathCrossesWall { segment: s, wall: k });
            }
        }
    }

    let truth = drive(world, &pts);
    let dt = world.odometry_period;
    let times: Vec<f64> = (0..truth.len()).map(|k| k as f64 * dt).collect();

    let mut rng_odo = stream(world.seed, STREAM_ODOMETRY);
    let noise = world.odometry_noise;
    let odometry: Vec<Pose2D> = if noise.translational == 0.0 && noise.rotational == 0.0 {
        truth.clone()
    } else {
        let mut out = vec![truth[0]];
        for k in 1..truth.len() {
            let u = truth[k - 1].between(&truth[k]);
            let ds = u.x.hypot(u.y);
            let st = noise.translational * ds.sqrt();
            let sr = noise.rotational * ds.sqrt();
            let n: [f64; 3] = [
                rng_odo.sample(StandardNormal),
                rng_odo.sample(StandardNormal),
                rng_odo.sample(StandardNormal),
            ];
            let noisy = Pose2D::new(u.x + st * n[0], u.y + st * n[1], u.theta + sr * n[2]);
            let prev = out[k - 1];
            out.push(prev.compose(&noisy));
        }
        out
    };

    let fp_every = ((world.fingerprint_period / dt).round() as usize).max(1);
    let mut rng_rss = stream(world.seed, STREAM_RSS);
    let mut fingerprints = Vec::new();
    for k in (0..truth.len()).step_by(fp_every) {
        let p = truth[k].position();
        let readings: Vec<(String, f64)> = world
            .transmitters
            .iter()
            .filter_map(|tx| {
                let z: f64 = rng_rss.sample(StandardNormal);
                simulate_rss(tx, &p, world.rss_noise_sigma, world.detection_floor, z).map(|r| (tx.id.clone(), r))
            })
            .collect();
        if !readings.is_empty() {
            fingerprints.push(Fingerprint::from_readings(times[k], readings));
        }
    }

    let (scans, lidar) = match &world.lidar {
        None => (None, None),
        Some(l) => {
            let meta = LidarMeta {
                angle_min: -std::f64::consts::PI,
                angle_increment: std::f64::consts::TAU / l.beam_count as f64,
                max_range: l.max_range,
            };
            let every = ((l.period / dt).round() as usize).max(1);
            let mut rng = stream(world.seed, STREAM_LIDAR);
            let range_noise = Normal::new(0.0, l.range_noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut scans = Vec::new();
            for k in (0..truth.len()).step_by(every) {
                let pose = truth[k];
                let origin = pose.position();
                let ranges = (0..l.beam_count)
                    .map(|b| {
                        let a = pose.theta + meta.angle_min + b as f64 * meta.angle_increment;
                        let eps: f64 = range_noise.sample(&mut rng);
                        let r = cast_ray(&origin, a, &world.walls, l.max_range)? + eps;
                        (r > 0.0 && r <= l.max_range).then_some(r)
                    })
                    .collect();
                scans.push(RangeScan { t: times[k], ranges });
            }
            (Some(scans), Some(meta))
        }
    };

    let dataset = Dataset {
        odometry: times.iter().zip(&odometry).map(|(&t, &p)| TimedPose::new(t, p)).collect(),
        fingerprints,
        scans,
        lidar,
        ground_truth: Some(times.iter().zip(&truth).map(|(&t, &p)| TimedPose::new(t, p)).collect()),
        rss_offset: DEFAULT_RSS_OFFSET,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> [Wall; 4] {
    [
        [x0, y0, x1, y0],
        [x1, y0, x1, y1],
        [x1, y1, x0, y1],
        [x0, y1, x0, y0],
    ]
}

fn pillar(cx: f64, cy: f64, half: f64) -> [Wall; 4] {
    rect(cx - half, cy - half, cx + half, cy + half)
}

fn random_transmitters(seed: u64, count: usize, lo: Point, hi: Point) -> Vec<Transmitter> {
    let mut rng = stream(seed, STREAM_LAYOUT);
    (0..count)
        .map(|k| Transmitter {
            id: format!("ap-{k:02}"),
            x: rng.random_range(lo.x..hi.x),
            y: rng.random_range(lo.y..hi.y),
            tx_power: rng.random_range(-45.0..-35.0),
            path_loss_exponent: 4.5,
        })
        .collect()
}

fn base_world(seed: u64) -> WorldConfig {
    WorldConfig {
        walls: Vec::new(),
        transmitters: Vec::new(),
        rss_noise_sigma: 2.0,
        detection_floor: -90.0,
        lidar: Some(LidarConfig {
            max_range: 20.0,
            beam_count: 720,
            range_noise_sigma: 0.01,
            period: 0.1,
        }),
        odometry_noise: OdometryNoise {
            translational: 0.05,
            rotational: 0.04,
        },
        speed: 1.0,
        turn_rate: 1.0,
        odometry_period: 0.1,
        fingerprint_period: 1.0,
        seed,
    }
}

/// Pillars alongside a straight path from `a` to `b`, alternating sides
/// every `spacing` metres at `offset` metres from the path.
fn pillars_along(a: Point, b: Point, spacing: f64, offset: f64, rng: &mut ChaCha8Rng) -> Vec<Wall> {
    let d = b - a;
    let len = d.norm();
    let u = d / len;
    let n = Point::new(-u.y, u.x);
    let mut walls = Vec::new();
    let mut s = spacing / 2.0;
    let mut side = 1.0;
    while s < len - spacing / 2.0 {
        let jitter = rng.random_range(-1.0..1.0);
        let c = a + u * (s + jitter) + n.coords * (side * (offset + rng.random_range(0.0..1.0)));
        walls.extend(pillar(c.x, c.y, rng.random_range(0.2..0.4)));
        s += spacing;
        side = -side;
    }
    walls
}

impl Scenario {
    pub const NAMES: [&'static str; 4] = ["loop", "corridor", "figure-eight", "room"];

    pub fn canned(name: &str, seed: u64) -> Result<Self> {
        match name {
            "loop" => Ok(Self::square_loop(seed, 30, 1.0)),
            "corridor" => Ok(Self::corridor(seed)),
            "figure-eight" => Ok(Self::figure_eight(seed)),
            "room" => Ok(Self::room(seed)),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario {other:?}; expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    /// A 40 m square with a cross of streets through its middle, split into
    /// four blocks; the perimeter is driven first, then every street, for
    /// about 400 m in total.
    pub fn square_loop(seed: u64, transmitters: usize, rss_noise_scale: f64) -> Self {
        let mut world = base_world(seed);
        world.walls.extend(rect(-6.0, -6.0, 46.0, 46.0));
        for (x, y) in [(6.0, 6.0), (26.0, 6.0), (6.0, 26.0), (26.0, 26.0)] {
            world.walls.extend(rect(x, y, x + 8.0, y + 8.0));
        }
        let mut rng = stream(seed, STREAM_LAYOUT + 1);
        for k in 0..3 {
            for m in 0..2 {
                let (a, b) = (20.0 * k as f64, 20.0 * m as f64);
                world.walls.extend(pillars_along(Point::new(a, b), Point::new(a, b + 20.0), 7.0, 2.5, &mut rng));
                world.walls.extend(pillars_along(Point::new(b, a), Point::new(b + 20.0, a), 7.0, 2.5, &mut rng));
            }
        }
        let mut all = random_transmitters(seed, 30, Point::new(-6.0, -6.0), Point::new(46.0, 46.0));
        all.truncate(transmitters);
        world.transmitters = all;
        world.rss_noise_sigma *= rss_noise_scale;
        let waypoints = vec![
            [0.0, 0.0],
            [40.0, 0.0],
            [40.0, 40.0],
            [0.0, 40.0],
            [0.0, 0.0],
            [0.0, 20.0],
            [40.0, 20.0],
            [40.0, 0.0],
            [20.0, 0.0],
            [20.0, 40.0],
            [0.0, 40.0],
            [0.0, 0.0],
            [40.0, 0.0],
        ];
        Self {
            name: "loop".into(),
            world,
            waypoints,
        }
    }

    /// An 80 m corridor driven to the end and back.
    pub fn corridor(seed: u64) -> Self {
        let mut world = base_world(seed);
        world.walls.extend(rect(-3.0, -2.0, 83.0, 2.0));
        let mut rng = stream(seed, STREAM_LAYOUT + 1);
        for k in 0..10 {
            let x = 4.0 + 8.0 * k as f64 + rng.random_range(-1.0..1.0);
            let y = if k % 2 == 0 { 1.6 } else { -1.6 };
            world.walls.extend(pillar(x, y, 0.25));
        }
        world.transmitters = random_transmitters(seed, 20, Point::new(-3.0, -8.0), Point::new(83.0, 8.0));
        Self {
            name: "corridor".into(),
            world,
            waypoints: vec![[0.0, 0.0], [80.0, 0.0], [0.0, 0.0]],
        }
    }

    /// Two 20 m squares sharing a corner, driven as a figure eight twice.
    pub fn figure_eight(seed: u64) -> Self {
        let mut world = base_world(seed);
        world.walls.extend(rect(-26.0, -26.0, 26.0, 26.0));
        let mut rng = stream(seed, STREAM_LAYOUT + 1);
        for (cx, cy) in [(10.0, 10.0), (-10.0, -10.0)] {
            world.walls.extend(pillar(cx, cy, 4.0));
        }
        for _ in 0..16 {
            let (x, y): (f64, f64) = (rng.random_range(-24.0..24.0), rng.random_range(-24.0..24.0));
            let near_path = |v: f64| (v.abs() < 1.5) || ((v.abs() - 20.0).abs() < 1.5);
            if near_path(x) || near_path(y) || (x.abs() < 16.0 && y.abs() < 16.0 && x * y > 0.0) {
                continue;
            }
            world.walls.extend(pillar(x, y, 0.3));
        }
        world.transmitters = random_transmitters(seed, 25, Point::new(-26.0, -26.0), Point::new(26.0, 26.0));
        let eight = [
            [0.0, 0.0],
            [20.0, 0.0],
            [20.0, 20.0],
            [0.0, 20.0],
            [0.0, 0.0],
            [-20.0, 0.0],
            [-20.0, -20.0],
            [0.0, -20.0],
            [0.0, 0.0],
        ];
        let mut waypoints = eight.to_vec();
        waypoints.extend_from_slice(&eight[1..]);
        Self {
            name: "figure-eight".into(),
            world,
            waypoints,
        }
    }

    /// A 10 m square room with two pillars; a 6 m square circuit driven
    /// eight times.
    pub fn room(seed: u64) -> Self {
        let mut world = base_world(seed);
        world.walls.extend(Self::room_walls());
        world.transmitters = random_transmitters(seed, 12, Point::new(-5.0, -5.0), Point::new(15.0, 15.0));
        world.odometry_noise = OdometryNoise {
            translational: 0.02,
            rotational: 0.01,
        };
        let lap = [[2.0, 2.0], [8.0, 2.0], [8.0, 8.0], [2.0, 8.0], [2.0, 2.0]];
        let mut waypoints = vec![lap[0]];
        for _ in 0..8 {
            waypoints.extend_from_slice(&lap[1..]);
        }
        Self {
            name: "room".into(),
            world,
            waypoints,
        }
    }

    /// Walls of the "room" scenario: the square `[0, 10]²` plus two pillars.
    pub fn room_walls() -> Vec<Wall> {
        let mut walls = rect(0.0, 0.0, 10.0, 10.0).to_vec();
        walls.extend(pillar(5.0, 5.0, 0.5));
        walls.extend(pillar(3.5, 6.5, 0.3));
        walls
    }

    pub fn simulate(&self) -> Result<Dataset> {
        simulate_dataset(&self.world, &self.waypoints)
    }
}

/// Distance from `p` to the nearest wall segment.
pub fn distance_to_walls(p: &Point, walls: &[Wall]) -> f64 {
    walls
        .iter()
        .map(|w| {
            let a = Point::new(w[0], w[1]);
            let b = Point::new(w[2], w[3]);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
