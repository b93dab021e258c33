//! Similarity → distance model trained by binning.
//!
//! Training pairs are fingerprints close together along the odometry path,
//! labelled with their odometry distance. Each similarity bin stores the mean
//! distance and population variance of its members. Empty interior bins are
//! linearly interpolated from their populated neighbours and bins beyond the
//! populated range copy the outermost populated bin, so a query is defined
//! for every similarity in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{cosine_similarity, StampedFingerprint};
use crate::geometry::Pose2D;

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;
pub const DEFAULT_MAX_PAIR_DISTANCE: f64 = 10.0;
/// Lower bound applied to queried variances (m²).
pub const VARIANCE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub similarity: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBin {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub var: f64,
    /// Number of training samples; zero marks an interpolated/clamped bin.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceModel {
    pub bin_width: f64,
    pub rss_offset: f64,
    pub bins: Vec<ModelBin>,
}

/// Builds training samples from fingerprint pairs whose separation along the
/// odometry path is at most `max_pair_distance`.
///
/// `poses` is the odometry trajectory the `pose_index` fields refer to; path
/// length is accumulated in index order. Each sample's distance is the
/// straight-line odometry distance between the two poses. Fingerprints whose
/// shifted readings are all zero are skipped.
pub fn collect_training_pairs(
    fingerprints: &[StampedFingerprint],
    poses: &[Pose2D],
    max_pair_distance: f64,
    rss_offset: f64,
) -> Result<Vec<TrainingSample>> {
    if fingerprints.len() < 2 {
        return Err(Error::TooFewFingerprints {
            needed: 2,
            got: fingerprints.len(),
        });
    }
    if let Some(bad) = fingerprints.iter().find(|f| f.pose_index >= poses.len()) {
        return Err(Error::InvalidArgument(format!(
            "fingerprint pose index {} out of range ({} poses)",
            bad.pose_index,
            poses.len()
        )));
    }
    let travel = cumulative_travel(poses);

    let mut order: Vec<&StampedFingerprint> = fingerprints.iter().collect();
    order.sort_by_key(|f| f.pose_index);

    let mut samples = Vec::new();
    for (a, fa) in order.iter().enumerate() {
        for fb in &order[a + 1..] {
            if travel[fb.pose_index] - travel[fa.pose_index] > max_pair_distance {
                break;
            }
            let s = match cosine_similarity(&fa.fingerprint, &fb.fingerprint, rss_offset) {
                Ok(s) => s,
                Err(Error::ZeroNorm) => continue,
                Err(e) => return Err(e),
            };
            samples.push(TrainingSample {
                similarity: s,
                distance: poses[fa.pose_index].distance_to(&poses[fb.pose_index]),
            });
        }
    }
    Ok(samples)
}

/// Path length from the first pose to each pose.
pub fn cumulative_travel(poses: &[Pose2D]) -> Vec<f64> {
    let mut out = Vec::with_capacity(poses.len());
    let mut acc = 0.0;
    for (k, p) in poses.iter().enumerate() {
        if k > 0 {
            acc += poses[k - 1].distance_to(p);
        }
        out.push(acc);
    }
    out
}

fn bin_count(bin_width: f64) -> usize {
    let n = 1.0 / bin_width;
    let r = n.round();
    if (n - r).abs() < 1e-9 {
        r as usize
    } else {
        n.ceil() as usize
    }
}

/// Index of the half-open bin `[k·r, (k+1)·r)` containing `s`; `s = 1` lands
/// in the last bin.
fn bin_index(s: f64, bin_width: f64, n: usize) -> usize {
    let mut k = ((s / bin_width).floor().max(0.0) as usize).min(n - 1);
    while k + 1 < n && s >= (k + 1) as f64 * bin_width {
        k += 1;
    }
    while k > 0 && s < k as f64 * bin_width {
        k -= 1;
    }
    k
}

pub fn train(samples: &[TrainingSample], bin_width: f64, rss_offset: f64) -> Result<DistanceModel> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be in (0, 1], got {bin_width}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::EmptyModel);
    }
    let n = bin_count(bin_width);
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in samples {
        if !(0.0..=1.0).contains(&s.similarity) || !(s.distance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "training sample out of range: {s:?}"
            )));
        }
        members[bin_index(s.similarity, bin_width, n)].push(s.distance);
    }

    let mut bins: Vec<ModelBin> = members
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let (mean, var) = bin_stats(d);
            ModelBin {
                lo: k as f64 * bin_width,
                hi: (k + 1) as f64 * bin_width,
                mean,
                var,
                count: d.len(),
            }
        })
        .collect();
    fill_empty_bins(&mut bins)?;
    Ok(DistanceModel {
        bin_width,
        rss_offset,
        bins,
    })
}

/// Mean and population variance (two-pass). Exactly zero variance when all
/// members are equal.
fn bin_stats(d: &[f64]) -> (f64, f64) {
    if d.is_empty() {
        return (0.0, 0.0);
    }
    let first = d[0];
    if d.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let c = d.len() as f64;
    let mean = d.iter().sum::<f64>() / c;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
    (mean, var)
}

fn fill_empty_bins(bins: &mut [ModelBin]) -> Result<()> {
    let populated: Vec<usize> = (0..bins.len()).filter(|&k| bins[k].count > 0).collect();
    let (&first, &last) = match (populated.first(), populated.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyModel),
    };
    for k in 0..first {
        bins[k].mean = bins[first].mean;
        bins[k].var = bins[first].var;
    }
    for k in last + 1..bins.len() {
        bins[k].mean = bins[last].mean;
        bins[k].var = bins[last].var;
    }
    for w in populated.windows(2) {
        let (a, b) = (w[0], w[1]);
        for k in a + 1..b {
            let t = (k - a) as f64 / (b - a) as f64;
            bins[k].mean = bins[a].mean + t * (bins[b].mean - bins[a].mean);
            bins[k].var = bins[a].var + t * (bins[b].var - bins[a].var);
        }
    }
    Ok(())
}

impl DistanceModel {
    /// Mean distance and variance for similarity `s` (clamped to `[0, 1]`).
    /// The variance is floored at [`VARIANCE_FLOOR`].
    pub fn query(&self, s: f64) -> Result<(f64, f64)> {
        if self.bins.is_empty() {
            return Err(Error::EmptyModel);
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("similarity"));
        }
        let b = &self.bins[bin_index(s.clamp(0.0, 1.0), self.bin_width, self.bins.len())];
        Ok((b.mean, b.var.max(VARIANCE_FLOOR)))
    }

    pub fn bin_for(&self, s: f64) -> Option<&ModelBin> {
        if self.bins.is_empty() {
            return None;
        }
        Some(&self.bins[bin_index(s.clamp(0.0, 1.0), self.bin_width, self.bins.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn sample(s: f64, d: f64) -> TrainingSample {
        TrainingSample {
            similarity: s,
            distance: d,
        }
    }

    #[test]
    fn train_examples() {
        let m = train(&[sample(0.82, 3.0), sample(0.83, 5.0)], 0.05, 100.0).unwrap();
        assert_eq!(m.bins.len(), 20);
        let b = m.bin_for(0.84).unwrap();
        assert!((b.lo - 0.8).abs() < 1e-12 && (b.hi - 0.85).abs() < 1e-12);
        assert_eq!(b.count, 2);
        assert_eq!((b.mean, b.var), (4.0, 1.0));
        assert_eq!(m.query(0.84).unwrap(), (4.0, 1.0));

        let m = train(&[sample(0.9, 2.0)], 0.05, 100.0).unwrap();
        let b = m.bin_for(0.9).unwrap();
        assert_eq!((b.mean, b.var, b.count), (2.0, 0.0, 1));
        // Query floors the variance.
        assert_eq!(m.query(0.9).unwrap(), (2.0, VARIANCE_FLOOR));
    }

    #[test]
    fn boundary_goes_to_higher_bin() {
        for k in 1..20 {
            let s = k as f64 * 0.05;
            let idx = bin_index(s, 0.05, 20);
            assert_eq!(idx, k, "s = {s}");
        }
        assert_eq!(bin_index(1.0, 0.05, 20), 19);
        assert_eq!(bin_index(0.0, 0.05, 20), 0);
    }

    #[test]
    fn interpolation_and_clamping() {
        let m = train(&[sample(0.52, 10.0), sample(0.67, 4.0)], 0.05, 100.0).unwrap();
        // Bins 10 and 13 populated; 11, 12 interpolated; others clamped.
        assert_eq!(m.query(0.57).unwrap().0, 8.0);
        assert_eq!(m.query(0.62).unwrap().0, 6.0);
        assert_eq!(m.query(0.0).unwrap().0, 10.0);
        assert_eq!(m.query(1.0).unwrap().0, 4.0);
        assert_eq!(m.bin_for(0.57).unwrap().count, 0);
    }

    #[test]
    fn monotone_data_gives_monotone_means() {
        let samples: Vec<_> = (0..=1000)
            .map(|k| {
                let s = k as f64 / 1000.0;
                sample(s, 20.0 * (1.0 - s))
            })
            .collect();
        let m = train(&samples, 0.05, 100.0).unwrap();
        let means: Vec<f64> = (0..=100).map(|k| m.query(k as f64 / 100.0).unwrap().0).collect();
        assert!(means.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn errors() {
        assert!(matches!(train(&[], 0.05, 100.0), Err(Error::EmptyModel)));
        assert!(train(&[sample(0.5, 1.0)], 0.0, 100.0).is_err());
        assert!(train(&[sample(1.5, 1.0)], 0.05, 100.0).is_err());
        let empty = DistanceModel {
            bin_width: 0.05,
            rss_offset: 100.0,
            bins: vec![],
        };
        assert!(matches!(empty.query(0.5), Err(Error::EmptyModel)));
    }

    #[test]
    fn serialization_round_trips() {
        let samples: Vec<_> = (0..50)
            .map(|k| sample((k as f64 * 0.37) % 1.0, k as f64 * 0.1 + 0.3))
            .collect();
        let m = train(&samples, 0.05, 100.0).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: DistanceModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    fn stamped(t: f64, idx: usize, pairs: &[(&str, f64)]) -> StampedFingerprint {
        StampedFingerprint {
            fingerprint: Fingerprint::from_readings(t, pairs.iter().map(|&(k, v)| (k, v))),
            pose_index: idx,
        }
    }

    #[test]
    fn collect_examples() {
        let poses = vec![Pose2D::identity(), Pose2D::new(5.0, 0.0, 0.0)];
        let f = [("a", -50.0), ("b", -60.0)];
        let same = [stamped(0.0, 0, &f), stamped(1.0, 0, &f)];
        let s = collect_training_pairs(&same, &poses, 10.0, 100.0).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].similarity - 1.0).abs() < 1e-12);
        assert_eq!(s[0].distance, 0.0);

        let apart = [stamped(0.0, 0, &f), stamped(1.0, 1, &[("a", -55.0)])];
        let s = collect_training_pairs(&apart, &poses, 10.0, 100.0).unwrap();
        assert_eq!(s[0].distance, 5.0);
        let want = cosine_similarity(&apart[0].fingerprint, &apart[1].fingerprint, 100.0).unwrap();
        assert_eq!(s[0].similarity, want);

        assert!(collect_training_pairs(&apart, &poses, 4.0, 100.0).unwrap().is_empty());
        assert!(matches!(
            collect_training_pairs(&apart[..1], &poses, 10.0, 100.0),
            Err(Error::TooFewFingerprints { .. })
        ));
    }

    /// Group-by oracle: accumulates with hash maps and uses E[d²] − μ².
    fn naive_bins(samples: &[TrainingSample], r: f64) -> HashMap<usize, (f64, f64)> {
        let n = (1.0 / r).round() as usize;
        let mut groups: HashMap<usize, (f64, f64, f64)> = HashMap::new();
        for s in samples {
            let mut k = ((s.similarity / r) as usize).min(n - 1);
            if s.similarity >= (k + 1) as f64 * r && k + 1 < n {
                k += 1;
            }
            if s.similarity < k as f64 * r {
                k -= 1;
            }
            let g = groups.entry(k).or_default();
            g.0 += 1.0;
            g.1 += s.distance;
            g.2 += s.distance * s.distance;
        }
        groups
            .into_iter()
            .map(|(k, (c, s1, s2))| {
                let mu = s1 / c;
                (k, (mu, (s2 / c - mu * mu).max(0.0)))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn bins_match_group_by_oracle(
            raw in prop::collection::vec((0.0..=1.0f64, 0.0..15.0f64), 1..200)
        ) {
            let samples: Vec<_> = raw.iter().map(|&(s, d)| sample(s, d)).collect();
            let m = train(&samples, 0.05, 100.0).unwrap();
            let oracle = naive_bins(&samples, 0.05);
            for (k, b) in m.bins.iter().enumerate() {
                prop_assert!(b.var >= 0.0);
                match oracle.get(&k) {
                    Some(&(mu, var)) => {
                        prop_assert!((b.mean - mu).abs() < 1e-10);
                        prop_assert!((b.var - var).abs() < 1e-10);
                    }
                    None => prop_assert_eq!(b.count, 0),
                }
            }
        }

        #[test]
        fn zero_variance_iff_equal_members(d in 0.0..10.0f64, k in 1usize..8, other in 0.0..10.0f64) {
            let same: Vec<_> = (0..k).map(|_| sample(0.71, d)).collect();
            prop_assert_eq!(train(&same, 0.05, 100.0).unwrap().bin_for(0.71).unwrap().var, 0.0);
            prop_assume!(other != d);
            let mut mixed = same.clone();
            mixed.push(sample(0.72, other));
            prop_assert!(train(&mixed, 0.05, 100.0).unwrap().bin_for(0.71).unwrap().var > 0.0);
        }
    }
}
