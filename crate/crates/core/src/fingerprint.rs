//! Radio fingerprints and their cosine similarity.
//!
//! RSS values are shifted by a dataset-level offset (default +100 dB) and
//! clamped at zero before comparison, so stronger signals carry more weight.
//! The numerator runs over the transmitters both fingerprints share; each
//! denominator norm runs over *all* of that side's readings, so transmitters
//! seen by only one side lower the score.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RSS_OFFSET: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub timestamp: f64,
    /// Transmitter id (MAC, cell id, ...) to RSS in dBm.
    pub readings: BTreeMap<String, f64>,
}

impl Fingerprint {
    /// Builds a fingerprint from raw scan readings, averaging repeated
    /// readings of the same transmitter.
    pub fn from_readings<I, S>(timestamp: f64, readings: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (id, rss) in readings {
            let e = acc.entry(id.into()).or_insert((0.0, 0));
            e.0 += rss;
            e.1 += 1;
        }
        let readings = acc
            .into_iter()
            .map(|(id, (sum, n))| (id, if n == 1 { sum } else { sum / n as f64 }))
            .collect();
        Self {
            timestamp,
            readings,
        }
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    fn shifted_norm(&self, offset: f64) -> f64 {
        self.readings
            .values()
            .map(|&v| {
                let s = shift_rss(v, offset);
                s * s
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// A fingerprint bound to a trajectory node.
#[derive(Debug, Clone, PartialEq)]
pub struct StampedFingerprint {
    pub fingerprint: Fingerprint,
    pub pose_index: usize,
}

/// `max(raw + offset, 0)`.
#[inline]
pub fn shift_rss(raw: f64, offset: f64) -> f64 {
    (raw + offset).max(0.0)
}

/// Cosine similarity of two fingerprints after shifting their RSS values.
///
/// Returns 0 when the fingerprints share no transmitter. Fails if either side
/// has zero norm after the shift (including an empty fingerprint).
pub fn cosine_similarity(fi: &Fingerprint, fj: &Fingerprint, offset: f64) -> Result<f64> {
    let ni = fi.shifted_norm(offset);
    let nj = fj.shifted_norm(offset);
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let (small, large) = if fi.len() <= fj.len() {
        (fi, fj)
    } else {
        (fj, fi)
    };
    // Summation follows the sorted id order of the common set regardless of
    // argument order, which keeps the result exactly symmetric.
    let dot: f64 = small
        .readings
        .iter()
        .filter_map(|(id, &a)| {
            large
                .readings
                .get(id)
                .map(|&b| shift_rss(a, offset) * shift_rss(b, offset))
        })
        .sum();
    Ok((dot / (ni * nj)).clamp(0.0, 1.0))
}

/// Interns transmitter ids so prepared fingerprints compare by integer merge.
#[derive(Debug, Default, Clone)]
pub struct TransmitterIndex {
    ids: HashMap<String, u32>,
}

impl TransmitterIndex {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&k) = self.ids.get(id) {
            return k;
        }
        let k = self.ids.len() as u32;
        self.ids.insert(id.to_owned(), k);
        k
    }

    /// Shifts, sorts and caches the norm of a fingerprint.
    pub fn prepare(&mut self, f: &Fingerprint, offset: f64) -> Result<PreparedFingerprint> {
        let mut entries: Vec<(u32, f64)> = f
            .readings
            .iter()
            .map(|(id, &v)| (self.intern(id), shift_rss(v, offset)))
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        let norm = f.shifted_norm(offset);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let (ids, values) = entries.into_iter().unzip();
        Ok(PreparedFingerprint { ids, values, norm })
    }
}

/// Shifted, id-sorted form of a [`Fingerprint`] for repeated comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFingerprint {
    ids: Vec<u32>,
    values: Vec<f64>,
    norm: f64,
}

impl PreparedFingerprint {
    /// Same value as [`cosine_similarity`] on the source fingerprints, up to
    /// summation order.
    pub fn similarity(&self, other: &PreparedFingerprint) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut dot = 0.0;
        while a < self.ids.len() && b < other.ids.len() {
            match self.ids[a].cmp(&other.ids[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    dot += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        (dot / (self.norm * other.norm)).clamp(0.0, 1.0)
    }

    /// Number of transmitters heard by both fingerprints.
    pub fn shared(&self, other: &PreparedFingerprint) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.ids.len() && b < other.ids.len() {
            match self.ids[a].cmp(&other.ids[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}
