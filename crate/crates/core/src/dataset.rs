//! In-memory dataset: odometry, fingerprints, optional range scans and
//! optional ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, DEFAULT_RSS_OFFSET};
use crate::geometry::{Point, Pose2D, TimedPose};
use crate::scan_matching::Scan;

/// Angular layout shared by every scan of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarMeta {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
}

/// One LiDAR sweep; `None` marks a beam without a return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScan {
    pub t: f64,
    pub ranges: Vec<Option<f64>>,
}

impl RangeScan {
    pub fn to_scan(&self, meta: &LidarMeta) -> Scan {
        let points = self
            .ranges
            .iter()
            .enumerate()
            .filter_map(|(k, r)| {
                let r = (*r)?;
                if !(r.is_finite() && r > 0.0 && r <= meta.max_range) {
                    return None;
                }
                let a = meta.angle_min + k as f64 * meta.angle_increment;
                Some(Point::new(r * a.cos(), r * a.sin()))
            })
            .collect();
        Scan::new(self.t, points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub odometry: Vec<TimedPose>,
    pub fingerprints: Vec<Fingerprint>,
    pub scans: Option<Vec<RangeScan>>,
    pub lidar: Option<LidarMeta>,
    pub ground_truth: Option<Vec<TimedPose>>,
    pub rss_offset: f64,
}

impl Default for Dataset {
    fn default() -> Self {
        Self {
            odometry: Vec::new(),
            fingerprints: Vec::new(),
            scans: None,
            lidar: None,
            ground_truth: None,
            rss_offset: DEFAULT_RSS_OFFSET,
        }
    }
}

fn check_increasing<'a>(name: &str, times: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (k, &t) in times.enumerate() {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("{name}: record {k} has a non-finite timestamp")));
        }
        if t <= prev {
            return Err(Error::InvalidArgument(format!(
                "{name}: timestamps not strictly increasing at record {k} ({t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

impl Dataset {
    /// Checks that each stream is strictly increasing in time and that scans
    /// come with angular metadata.
    pub fn validate(&self) -> Result<()> {
        check_increasing("odometry", self.odometry.iter().map(|p| &p.t))?;
        check_increasing("fingerprints", self.fingerprints.iter().map(|f| &f.timestamp))?;
        if let Some(s) = &self.scans {
            check_increasing("scans", s.iter().map(|s| &s.t))?;
            if self.lidar.is_none() {
                return Err(Error::InvalidArgument("scans present without LiDAR metadata".into()));
            }
        }
        if let Some(g) = &self.ground_truth {
            check_increasing("ground truth", g.iter().map(|p| &p.t))?;
        }
        Ok(())
    }

    pub fn odometry_poses(&self) -> Vec<Pose2D> {
        self.odometry.iter().map(|p| p.pose).collect()
    }

    /// Sensor-frame point scans, if the dataset has LiDAR.
    pub fn point_scans(&self) -> Option<Vec<Scan>> {
        let meta = self.lidar?;
        Some(self.scans.as_ref()?.iter().map(|s| s.to_scan(&meta)).collect())
    }

    /// Odometry pose at time `t`, linearly interpolated (angle along the
    /// shorter arc) and clamped to the stream ends.
    pub fn odometry_at(&self, t: f64) -> Option<Pose2D> {
        interpolate(&self.odometry, t)
    }
}

/// Pose at `t` from a time-ordered stream, clamped to its ends.
pub fn interpolate(stream: &[TimedPose], t: f64) -> Option<Pose2D> {
    let first = stream.first()?;
    let last = stream.last()?;
    if t <= first.t {
        return Some(first.pose);
    }
    if t >= last.t {
        return Some(last.pose);
    }
    let k = stream.partition_point(|p| p.t <= t);
    let (a, b) = (&stream[k - 1], &stream[k]);
    let w = (t - a.t) / (b.t - a.t);
    let d = a.pose.between(&b.pose);
    Some(a.pose.compose(&Pose2D::new(d.x * w, d.y * w, d.theta * w)))
}
