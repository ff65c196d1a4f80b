//! Agreement statistics, stability classes and intensity shuffling.

pub mod stats;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{ccc, ccc_ci, cnr, icc21, mid_ranks, pearson, snr, spearman, CccInterval, Estimate, Flag, RatingsMatrix};

use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureTable};
use crate::imageio::ImageVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StabilityClass {
    Poor,
    Moderate,
    Good,
    Excellent,
}

impl StabilityClass {
    /// Best first, the order used in reports.
    pub const ALL: [StabilityClass; 4] = [StabilityClass::Excellent, StabilityClass::Good, StabilityClass::Moderate, StabilityClass::Poor];

    pub fn label(self) -> &'static str {
        match self {
            StabilityClass::Excellent => "Excellent",
            StabilityClass::Good => "Good",
            StabilityClass::Moderate => "Moderate",
            StabilityClass::Poor => "Poor",
        }
    }
}

/// `> 0.9` Excellent, `(0.75, 0.9]` Good, `(0.5, 0.75]` Moderate, else Poor.
pub fn classify(value: f64) -> StabilityClass {
    if value > 0.9 {
        StabilityClass::Excellent
    } else if value > 0.75 {
        StabilityClass::Good
    } else if value > 0.5 {
        StabilityClass::Moderate
    } else {
        StabilityClass::Poor
    }
}

/// Seeded uniform permutation of every voxel of the image.
pub fn shuffle_intensities(volume: &ImageVolume, seed: u64) -> ImageVolume {
    let mut voxels = volume.voxels.clone();
    voxels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ImageVolume { grid: volume.grid.clone(), voxels }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Icc,
    Ccc,
}

/// One feature's agreement between conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub key: FeatureKey,
    pub metric: Metric,
    pub value: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub class: StabilityClass,
    pub flag: Option<Flag>,
}

/// Checks that the tables describe the same ROIs and keys, in the same order.
pub fn check_aligned(tables: &[&FeatureTable]) -> Result<()> {
    let first = tables.first().ok_or_else(|| Error::invalid("tables", "none given"))?;
    for t in &tables[1..] {
        if t.roi_ids != first.roi_ids {
            return Err(Error::MismatchedRoiSets(format!("{:?} vs {:?}", first.roi_ids, t.roi_ids)));
        }
        if t.keys != first.keys {
            return Err(Error::invalid("tables", "feature keys differ between tables"));
        }
    }
    Ok(())
}

/// Per-feature ICC(2,1) with ROIs as rows and tables as columns.
pub fn icc_records(tables: &[&FeatureTable]) -> Result<Vec<MetricRecord>> {
    check_aligned(tables)?;
    let first = tables[0];
    (0..first.n_features())
        .into_par_iter()
        .map(|f| {
            let rows = (0..first.roi_ids.len()).map(|r| tables.iter().map(|t| t.values[r][f]).collect()).collect();
            let e = icc21(&RatingsMatrix::new(rows)?);
            Ok(MetricRecord {
                key: first.keys[f].clone(),
                metric: Metric::Icc,
                value: e.value,
                ci_lo: None,
                ci_hi: None,
                class: classify(e.value),
                flag: e.flag,
            })
        })
        .collect()
}

/// Per-feature CCC between two tables, with its interval at `level`.
pub fn ccc_records(a: &FeatureTable, b: &FeatureTable, level: f64) -> Result<Vec<MetricRecord>> {
    check_aligned(&[a, b])?;
    (0..a.n_features())
        .into_par_iter()
        .map(|f| {
            let (x, y) = (a.column(f), b.column(f));
            let (value, lo, hi, flag) = if x.len() >= 4 {
                let ci = ccc_ci(&x, &y, level)?;
                (ci.value, Some(ci.lo), Some(ci.hi), ci.flag)
            } else {
                let e = ccc(&x, &y)?;
                (e.value, None, None, e.flag)
            };
            Ok(MetricRecord { key: a.keys[f].clone(), metric: Metric::Ccc, value, ci_lo: lo, ci_hi: hi, class: classify(value), flag })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::Grid;

    #[test]
    fn class_boundaries() {
        assert_eq!(classify(0.95), StabilityClass::Excellent);
        assert_eq!(classify(0.9), StabilityClass::Good);
        assert_eq!(classify(0.75), StabilityClass::Moderate);
        assert_eq!(classify(0.5), StabilityClass::Poor);
        assert_eq!(classify(0.3), StabilityClass::Poor);
        assert_eq!(classify(0.5000001), StabilityClass::Moderate);
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let g = Grid::new([7, 5, 3], [1.0; 3]);
        let v = ImageVolume::new(g.clone(), (0..g.len()).map(|i| (i * i % 17) as f64).collect()).unwrap();
        let a = shuffle_intensities(&v, 3);
        assert_eq!(a, shuffle_intensities(&v, 3));
        assert_ne!(a.voxels, v.voxels);
        let (mut s1, mut s2) = (a.voxels.clone(), v.voxels.clone());
        s1.sort_by(f64::total_cmp);
        s2.sort_by(f64::total_cmp);
        assert_eq!(s1, s2);
        assert_eq!(a.grid, v.grid);
    }
}
