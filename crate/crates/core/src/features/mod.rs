//! Radiomic feature extraction: normalization, filters, discretization and
//! the seven feature classes.

pub mod discretize;
pub mod filters;
pub mod firstorder;
pub mod matrices;
pub mod names;
pub mod normalize;
pub mod shape;
pub mod table;
pub mod texture;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use discretize::{auto_width, discretize, BinWidth, DiscreteRoi, Discretized};
pub use filters::{apply_filter, apply_filter_with_max, Filter, FilterKind, FilteredImage};
pub use normalize::{mean_std, normalize};
pub use table::{FeatureKey, FeatureTable};

use crate::error::{Error, Result};
use crate::imageio::{ImageVolume, RoiMask};

/// In-plane (slice by slice) or volumetric texture neighbourhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ExtractionMode {
    #[default]
    #[serde(rename = "2d", alias = "force2d", alias = "force2D")]
    Force2D,
    #[serde(rename = "3d", alias = "3D")]
    Full3D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureClass {
    Shape,
    FirstOrder,
    Glcm,
    Glrlm,
    Glszm,
    Ngtdm,
    Gldm,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 7] = [
        FeatureClass::Shape,
        FeatureClass::FirstOrder,
        FeatureClass::Glcm,
        FeatureClass::Glrlm,
        FeatureClass::Glszm,
        FeatureClass::Ngtdm,
        FeatureClass::Gldm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FeatureClass::Shape => "shape",
            FeatureClass::FirstOrder => "firstorder",
            FeatureClass::Glcm => "glcm",
            FeatureClass::Glrlm => "glrlm",
            FeatureClass::Glszm => "glszm",
            FeatureClass::Ngtdm => "ngtdm",
            FeatureClass::Gldm => "gldm",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }

    pub fn names(self) -> &'static [&'static str] {
        names::of(self)
    }
}

/// Extraction settings. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    /// Rescale the whole image to `voxel_array_shift + normalize_scale · z`.
    pub normalize: bool,
    pub normalize_scale: f64,
    pub voxel_array_shift: f64,
    /// A number or `"auto"`.
    pub bin_width: BinWidth,
    /// Admissible bin counts; fixed widths outside it are only flagged.
    pub bin_count_bounds: [u32; 2],
    pub log_sigma_mm: f64,
    pub wavelet_levels: u32,
    pub filters: Vec<FilterKind>,
    pub classes: Vec<FeatureClass>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            mode: ExtractionMode::Force2D,
            normalize: true,
            normalize_scale: 100.0,
            voxel_array_shift: 300.0,
            bin_width: BinWidth::Fixed(5.0),
            bin_count_bounds: [30, 130],
            log_sigma_mm: 6.0,
            wavelet_levels: 1,
            filters: FilterKind::ALL.to_vec(),
            classes: FeatureClass::ALL.to_vec(),
        }
    }
}

impl ExtractionConfig {
    pub fn volumetric() -> Self {
        ExtractionConfig { mode: ExtractionMode::Full3D, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::invalid("extraction config", r));
        if !(self.normalize_scale > 0.0 && self.normalize_scale.is_finite()) || !self.voxel_array_shift.is_finite() {
            return bad("normalize_scale must be positive and voxel_array_shift finite".into());
        }
        if let BinWidth::Fixed(w) = self.bin_width {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("bin_width must be positive, got {w}"));
            }
        }
        let [lo, hi] = self.bin_count_bounds;
        if lo < 1 || lo > hi {
            return bad(format!("bin_count_bounds [{lo}, {hi}] is not a range"));
        }
        if !(self.log_sigma_mm > 0.0 && self.log_sigma_mm.is_finite()) {
            return bad(format!("log_sigma_mm must be positive, got {}", self.log_sigma_mm));
        }
        if self.wavelet_levels != 1 {
            return bad(format!("only one wavelet level is supported, got {}", self.wavelet_levels));
        }
        if self.classes.is_empty() {
            return bad("at least one feature class is required".into());
        }
        Ok(())
    }

    fn has(&self, class: FeatureClass) -> bool {
        self.classes.contains(&class)
    }

    fn filter_list(&self) -> Vec<Filter> {
        FilterKind::ALL
            .into_iter()
            .filter(|k| self.filters.contains(k))
            .map(|k| match k {
                FilterKind::Log => Filter::Log { sigma_mm: self.log_sigma_mm },
                FilterKind::Wavelet => Filter::Wavelet { planar: self.mode == ExtractionMode::Force2D },
                FilterKind::Square => Filter::Square,
                FilterKind::SquareRoot => Filter::SquareRoot,
                FilterKind::Logarithm => Filter::Logarithm,
                FilterKind::Exponential => Filter::Exponential,
            })
            .collect()
    }

    /// Image type labels in output order.
    pub fn image_types(&self) -> Vec<String> {
        let mut out = vec!["original".to_string()];
        for f in self.filter_list() {
            match f {
                Filter::Log { sigma_mm } => out.push(filters::log_label(sigma_mm)),
                Filter::Wavelet { planar } => {
                    let n = if planar { 2 } else { 3 };
                    for code in 0..1usize << n {
                        let name: String = (0..n).map(|b| if code >> (n - 1 - b) & 1 == 1 { 'H' } else { 'L' }).collect();
                        out.push(format!("wavelet.{name}"));
                    }
                }
                Filter::Square => out.push("square".into()),
                Filter::SquareRoot => out.push("squareroot".into()),
                Filter::Logarithm => out.push("logarithm".into()),
                Filter::Exponential => out.push("exponential".into()),
            }
        }
        out
    }

    /// Every output column, in order: image type, then class, then name.
    /// Shape appears once, under `original`.
    pub fn feature_keys(&self) -> Vec<FeatureKey> {
        let mut keys = Vec::new();
        for (t, image_type) in self.image_types().iter().enumerate() {
            for class in FeatureClass::ALL {
                if !self.has(class) || (class == FeatureClass::Shape && t > 0) {
                    continue;
                }
                keys.extend(class.names().iter().map(|n| FeatureKey::new(image_type.clone(), class, *n)));
            }
        }
        keys
    }
}

/// Features of one discretized ROI for the selected non-shape classes.
fn intensity_features(d: &Discretized, config: &ExtractionConfig, voxel_volume: f64) -> Vec<f64> {
    let mode = config.mode;
    let roi = &d.roi;
    let mut out = Vec::new();
    for class in FeatureClass::ALL {
        if !config.has(class) {
            continue;
        }
        match class {
            FeatureClass::Shape => {}
            FeatureClass::FirstOrder => {
                let levels: Vec<u32> = roi.levels.iter().copied().filter(|&l| l > 0).collect();
                out.extend(firstorder::first_order_features(&d.values, &levels, voxel_volume));
            }
            FeatureClass::Glcm => out.extend(texture::glcm_features(&matrices::glcm(roi, mode))),
            FeatureClass::Glrlm => out.extend(texture::glrlm_features(&matrices::glrlm(roi, mode))),
            FeatureClass::Glszm => out.extend(texture::glszm_features(&matrices::glszm(roi, mode))),
            FeatureClass::Ngtdm => out.extend(texture::ngtdm_features(&matrices::ngtdm(roi, mode))),
            FeatureClass::Gldm => out.extend(texture::gldm_features(&matrices::gldm(roi, mode))),
        }
    }
    out
}

/// Extracts every configured feature for every ROI of `mask`.
///
/// The image is normalized as a whole, then cropped to the union of ROI
/// bounding boxes padded by the filter support before filtering. Intensity
/// filters still take `max|x|` from the whole normalized image.
pub fn compute_features(volume: &ImageVolume, mask: &RoiMask, config: &ExtractionConfig) -> Result<FeatureTable> {
    config.validate()?;
    volume.validate()?;
    mask.validate()?;
    if !mask.matches(volume) {
        return Err(Error::invalid("mask", format!("mask dims {:?} differ from image dims {:?}", mask.grid.dims, volume.grid.dims)));
    }
    let roi_ids = mask.roi_ids();
    if roi_ids.is_empty() {
        return Err(Error::invalid("mask", "no ROI labels"));
    }

    let base = if config.normalize {
        normalize(volume, config.normalize_scale, config.voxel_array_shift)?
    } else {
        volume.clone()
    };
    let global_max = base.max_abs();
    let filter_list = config.filter_list();

    let (lo, hi) = mask.bounding_box(None).expect("mask has ROIs");
    let mut pad = [0usize; 3];
    for f in &filter_list {
        let s = f.support(base.grid.spacing);
        pad = [0, 1, 2].map(|a| pad[a].max(s[a]));
    }
    let dims = base.grid.dims;
    let clo = [0, 1, 2].map(|a| lo[a].saturating_sub(pad[a]));
    let chi = [0, 1, 2].map(|a| (hi[a] + pad[a]).min(dims[a] - 1));
    let cropped = base.crop(clo, chi);
    let cmask = mask.crop(clo, chi);

    let filtered: Vec<Vec<FilteredImage>> = filter_list
        .par_iter()
        .map(|f| apply_filter_with_max(&cropped, f, global_max))
        .collect::<Result<_>>()?;
    let mut images = vec![FilteredImage { label: "original".into(), image: cropped, warning: None }];
    images.extend(filtered.into_iter().flatten());
    let mut warnings: Vec<String> = images.iter().filter_map(|i| i.warning.clone()).collect();

    let boxes: Vec<([usize; 3], [usize; 3])> = roi_ids.iter().map(|&id| cmask.bounding_box(Some(id)).expect("id present")).collect();
    let inside: Vec<Vec<bool>> = roi_ids
        .iter()
        .zip(&boxes)
        .map(|(&id, &(l, h))| cmask.crop(l, h).labels.iter().map(|&v| v == id).collect())
        .collect();

    let voxel_volume = base.grid.voxel_volume();
    let tasks: Vec<(usize, usize)> = (0..images.len()).flat_map(|t| (0..roi_ids.len()).map(move |r| (t, r))).collect();
    let results: Vec<(Vec<f64>, Option<String>)> = tasks
        .par_iter()
        .map(|&(t, r)| {
            let (l, h) = boxes[r];
            let patch = images[t].image.crop(l, h);
            let d = discretize::discretize_patch(patch.grid.dims, &patch.voxels, &inside[r], config.bin_width, config.bin_count_bounds)?;
            let warning = d.warning.as_ref().map(|w| format!("roi {} {}: {w}", roi_ids[r], images[t].label));
            Ok((intensity_features(&d, config, voxel_volume), warning))
        })
        .collect::<Result<_>>()?;

    let shapes: Vec<Vec<f64>> = if config.has(FeatureClass::Shape) {
        roi_ids.par_iter().map(|&id| shape::shape_features(mask, id).map(|s| s.to_vec())).collect::<Result<_>>()?
    } else {
        vec![Vec::new(); roi_ids.len()]
    };

    let mut values: Vec<Vec<f64>> = shapes;
    for (i, (row, w)) in results.into_iter().enumerate() {
        values[i % roi_ids.len()].extend(row);
        warnings.extend(w);
    }
    let keys = config.feature_keys();
    debug_assert!(values.iter().all(|r| r.len() == keys.len()));
    Ok(FeatureTable { roi_ids, keys, values, warnings })
}
