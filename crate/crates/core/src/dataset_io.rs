//! On-disk formats: a JSON manifest beside line-oriented record files, the
//! distance model as JSON, and trajectories as `t,x,y,theta` CSV.
//!
//! Text outputs start with `#` comment lines naming the command, seed and
//! configuration that produced them. Every write goes to a temporary file in
//! the target directory and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LidarMeta, RangeScan};
use crate::distance_model::DistanceModel;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::geometry::{Pose2D, TimedPose};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const FINGERPRINTS_FILE: &str = "fingerprints.jsonl";
pub const SCANS_FILE: &str = "scans.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

/// What produced a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: impl Into<String>, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            seed,
            config,
        }
    }

    /// `#` comment lines for text formats.
    pub fn header(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_owned(), |s| s.to_string());
        format!("# radioslam {} seed={}\n# config: {}\n", self.command, seed, self.config)
    }
}

/// Dataset manifest; file paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub odometry: String,
    pub fingerprints: String,
    #[serde(default)]
    pub scans: Option<String>,
    #[serde(default)]
    pub ground_truth: Option<String>,
    pub rss_offset: f64,
    #[serde(default)]
    pub lidar: Option<LidarMeta>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // Temporary files are created private; outputs are ordinary files.
        let perms = fs::Permissions::from_mode(0o644);
        tmp.as_file().set_permissions(perms).map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn poses_csv(poses: &[TimedPose], provenance: &Provenance) -> String {
    let mut s = provenance.header();
    s.push_str("t,x,y,theta\n");
    for p in poses {
        s.push_str(&format!("{},{},{},{}\n", p.t, p.pose.x, p.pose.y, p.pose.theta));
    }
    s
}

/// Writes a `t,x,y,theta` CSV.
pub fn write_trajectory(path: &Path, poses: &[TimedPose], provenance: &Provenance) -> Result<()> {
    write_atomic(path, poses_csv(poses, provenance).as_bytes())
}

fn data_lines(text: &str) -> impl Iterator<Item = (u64, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k as u64 + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn check_time(path: &Path, line: u64, t: f64, prev: &mut f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::parse(path, line, "non-finite timestamp"));
    }
    if t <= *prev {
        return Err(Error::parse(
            path,
            line,
            format!("timestamp {t} not after previous {prev}"),
        ));
    }
    *prev = t;
    Ok(())
}

/// Reads a `t,x,y,theta` CSV; `#` lines and a header row are skipped.
/// Timestamps must be strictly increasing.
pub fn read_trajectory(path: &Path) -> Result<Vec<TimedPose>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (line, l) in data_lines(&text) {
        if l.starts_with('t') {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, line, format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line, format!("bad number {f:?}: {e}")))?;
        }
        check_time(path, line, v[0], &mut prev)?;
        if !(v[1].is_finite() && v[2].is_finite() && v[3].is_finite()) {
            return Err(Error::parse(path, line, "non-finite pose"));
        }
        out.push(TimedPose::new(v[0], Pose2D::new(v[1], v[2], v[3])));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ReadingRecord {
    id: String,
    rss: f64,
}

#[derive(Serialize, Deserialize)]
struct FingerprintRecord {
    t: f64,
    readings: Vec<ReadingRecord>,
}

fn fingerprints_jsonl(fps: &[Fingerprint], provenance: &Provenance) -> Result<String> {
    let mut s = provenance.header();
    for f in fps {
        let rec = FingerprintRecord {
            t: f.timestamp,
            readings: f
                .readings
                .iter()
                .map(|(id, &rss)| ReadingRecord { id: id.clone(), rss })
                .collect(),
        };
        s.push_str(&serde_json::to_string(&rec)?);
        s.push('\n');
    }
    Ok(s)
}

fn read_fingerprints(path: &Path) -> Result<Vec<Fingerprint>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (line, l) in data_lines(&text) {
        let rec: FingerprintRecord =
            serde_json::from_str(l).map_err(|e| Error::parse(path, line, e.to_string()))?;
        check_time(path, line, rec.t, &mut prev)?;
        if rec.readings.iter().any(|r| !r.rss.is_finite()) {
            return Err(Error::parse(path, line, "non-finite RSS"));
        }
        out.push(Fingerprint::from_readings(rec.t, rec.readings.into_iter().map(|r| (r.id, r.rss))));
    }
    Ok(out)
}

fn scans_jsonl(scans: &[RangeScan], provenance: &Provenance) -> Result<String> {
    let mut s = provenance.header();
    for scan in scans {
        s.push_str(&serde_json::to_string(scan)?);
        s.push('\n');
    }
    Ok(s)
}

fn read_scans(path: &Path) -> Result<Vec<RangeScan>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (line, l) in data_lines(&text) {
        let rec: RangeScan = serde_json::from_str(l).map_err(|e| Error::parse(path, line, e.to_string()))?;
        check_time(path, line, rec.t, &mut prev)?;
        out.push(rec);
    }
    Ok(out)
}

/// Manifest path for either a dataset directory or a manifest file.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Writes a dataset directory: manifest plus one file per stream.
pub fn write_dataset(dir: &Path, dataset: &Dataset, provenance: &Provenance) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(ODOMETRY_FILE), poses_csv(&dataset.odometry, provenance).as_bytes())?;
    write_atomic(
        &dir.join(FINGERPRINTS_FILE),
        fingerprints_jsonl(&dataset.fingerprints, provenance)?.as_bytes(),
    )?;
    if let Some(scans) = &dataset.scans {
        write_atomic(&dir.join(SCANS_FILE), scans_jsonl(scans, provenance)?.as_bytes())?;
    }
    if let Some(gt) = &dataset.ground_truth {
        write_atomic(&dir.join(GROUND_TRUTH_FILE), poses_csv(gt, provenance).as_bytes())?;
    }
    let manifest = Manifest {
        odometry: ODOMETRY_FILE.into(),
        fingerprints: FINGERPRINTS_FILE.into(),
        scans: dataset.scans.as_ref().map(|_| SCANS_FILE.into()),
        ground_truth: dataset.ground_truth.as_ref().map(|_| GROUND_TRUTH_FILE.into()),
        rss_offset: dataset.rss_offset,
        lidar: dataset.lidar,
        provenance: Some(provenance.clone()),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let path = manifest_path(path);
    let text = read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line() as u64, e.to_string()))
}

/// Loads a dataset from a manifest file or a directory containing one.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mpath = manifest_path(path);
    let manifest = read_manifest(&mpath)?;
    let base = mpath.parent().unwrap_or(Path::new("."));
    let scans = manifest.scans.as_ref().map(|p| read_scans(&base.join(p))).transpose()?;
    if scans.is_some() && manifest.lidar.is_none() {
        return Err(Error::parse(&mpath, 0, "scans listed without lidar metadata"));
    }
    let dataset = Dataset {
        odometry: read_trajectory(&base.join(&manifest.odometry))?,
        fingerprints: read_fingerprints(&base.join(&manifest.fingerprints))?,
        scans,
        lidar: manifest.lidar,
        ground_truth: manifest
            .ground_truth
            .as_ref()
            .map(|p| read_trajectory(&base.join(p)))
            .transpose()?,
        rss_offset: manifest.rss_offset,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    provenance: Provenance,
    #[serde(flatten)]
    model: DistanceModel,
}

pub fn write_model(path: &Path, model: &DistanceModel, provenance: &Provenance) -> Result<()> {
    write_json(
        path,
        &ModelFile {
            provenance: provenance.clone(),
            model: model.clone(),
        },
    )
}

pub fn read_model(path: &Path) -> Result<DistanceModel> {
    let text = read_text(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
    Ok(file.model)
}
