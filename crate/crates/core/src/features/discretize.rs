use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{ImageVolume, RoiMask};

/// Bin width for gray-level discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinWidth {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl BinWidth {
    pub const AUTO: BinWidth = BinWidth::Auto(AutoTag::Auto);
}

/// Gray levels of one ROI on its bounding box; 0 marks voxels outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRoi {
    pub dims: [usize; 3],
    pub levels: Vec<u32>,
    /// Number of bins `Ng`; every level lies in `1..=n_levels`.
    pub n_levels: u32,
}

impl DiscreteRoi {
    pub fn new(dims: [usize; 3], levels: Vec<u32>, n_levels: u32) -> Result<Self> {
        if levels.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid("discrete roi", "level count does not match dims"));
        }
        if levels.iter().any(|&l| l > n_levels) {
            return Err(Error::invalid("discrete roi", "level above n_levels"));
        }
        if levels.iter().all(|&l| l == 0) {
            return Err(Error::invalid("discrete roi", "no voxel inside the ROI"));
        }
        Ok(DiscreteRoi { dims, levels, n_levels })
    }

    #[inline]
    pub fn at(&self, x: isize, y: isize, z: isize) -> u32 {
        let [nx, ny, nz] = self.dims.map(|d| d as isize);
        if x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz {
            0
        } else {
            self.levels[(x + nx * (y + ny * z)) as usize]
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

/// Result of discretizing one ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub roi: DiscreteRoi,
    /// Intensities of the ROI voxels in index order.
    pub values: Vec<f64>,
    pub bin_width: f64,
    pub warning: Option<String>,
}

/// Fixed-bin-width discretization `floor((x − min) / W) + 1` over the voxels
/// of `roi_id`. The bin count is the highest level reached.
pub fn discretize(volume: &ImageVolume, mask: &RoiMask, roi_id: u32, width: BinWidth, bounds: [u32; 2]) -> Result<Discretized> {
    if !mask.matches(volume) {
        return Err(Error::invalid("mask", "mask and image dimensions differ"));
    }
    let (lo, hi) = mask.bounding_box(Some(roi_id)).ok_or(Error::RoiLost(roi_id))?;
    let img = volume.crop(lo, hi);
    let m = mask.crop(lo, hi);
    let inside: Vec<bool> = m.labels.iter().map(|&l| l == roi_id).collect();
    discretize_patch(img.grid.dims, &img.voxels, &inside, width, bounds)
}

pub(crate) fn discretize_patch(
    dims: [usize; 3],
    voxels: &[f64],
    inside: &[bool],
    width: BinWidth,
    bounds: [u32; 2],
) -> Result<Discretized> {
    let values: Vec<f64> = voxels.iter().zip(inside).filter(|(_, &i)| i).map(|(&v, _)| v).collect();
    if values.is_empty() {
        return Err(Error::invalid("discretize", "empty ROI"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let mut warning = None;

    let w = match width {
        BinWidth::Fixed(w) => {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("bin width", format!("must be positive, got {w}")));
            }
            w
        }
        BinWidth::Auto(_) => auto_width(range, bounds).unwrap_or(1.0),
    };
    let levels: Vec<u32> = voxels
        .iter()
        .zip(inside)
        .map(|(&v, &i)| if i { ((v - min) / w).floor() as u32 + 1 } else { 0 })
        .collect();
    let n_levels = levels.iter().copied().max().unwrap_or(1);

    if range == 0.0 {
        warning = Some("constant ROI: a single gray level".to_string());
    } else if n_levels < bounds[0] || n_levels > bounds[1] {
        warning = Some(format!(
            "bin width {w} gives {n_levels} bins, outside [{}, {}]",
            bounds[0], bounds[1]
        ));
    }
    Ok(Discretized { roi: DiscreteRoi::new(dims, levels, n_levels)?, values, bin_width: w, warning })
}

/// Largest width on the 1-2-2.5-5 ladder whose bin count lies within `bounds`.
pub fn auto_width(range: f64, bounds: [u32; 2]) -> Option<f64> {
    if !(range > 0.0) {
        return None;
    }
    let count = |w: f64| (range / w).floor() as u64 + 1;
    let top = range.log10().ceil() as i32 + 1;
    for e in (top - 12..=top).rev() {
        for mant in [5.0, 2.5, 2.0, 1.0] {
            let w = mant * 10f64.powi(e);
            let c = count(w);
            if c > bounds[1] as u64 {
                return None;
            }
            if c >= bounds[0] as u64 {
                return Some(w);
            }
        }
    }
    None
}
