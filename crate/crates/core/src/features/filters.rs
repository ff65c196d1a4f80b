//! Image filters producing the derived image types.
//!
//! Local filters (LoG, wavelet) use half-sample symmetric boundaries, so a
//! crop padded by the filter support reproduces the whole-image result inside
//! the crop interior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::ImageVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    #[serde(alias = "LoG")]
    Log,
    Wavelet,
    Square,
    #[serde(alias = "square_root")]
    SquareRoot,
    Logarithm,
    Exponential,
}

impl FilterKind {
    pub const ALL: [FilterKind; 6] = [
        FilterKind::Log,
        FilterKind::Wavelet,
        FilterKind::Square,
        FilterKind::SquareRoot,
        FilterKind::Logarithm,
        FilterKind::Exponential,
    ];

    pub fn is_intensity(self) -> bool {
        matches!(self, FilterKind::Square | FilterKind::SquareRoot | FilterKind::Logarithm | FilterKind::Exponential)
    }
}

/// A filter together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    /// Gaussian of `sigma_mm` (truncated at 4σ per axis) then the discrete Laplacian.
    Log { sigma_mm: f64 },
    /// One undecimated Haar level over x, y (planar) or x, y, z.
    Wavelet { planar: bool },
    Square,
    SquareRoot,
    Logarithm,
    Exponential,
}

impl Filter {
    pub fn kind(&self) -> FilterKind {
        match self {
            Filter::Log { .. } => FilterKind::Log,
            Filter::Wavelet { .. } => FilterKind::Wavelet,
            Filter::Square => FilterKind::Square,
            Filter::SquareRoot => FilterKind::SquareRoot,
            Filter::Logarithm => FilterKind::Logarithm,
            Filter::Exponential => FilterKind::Exponential,
        }
    }

    /// Voxels of context each side needed along each axis.
    pub fn support(&self, spacing: [f64; 3]) -> [usize; 3] {
        match *self {
            Filter::Log { sigma_mm } => spacing.map(|s| gaussian_radius(sigma_mm / s) + 1),
            Filter::Wavelet { planar } => [1, 1, if planar { 0 } else { 1 }],
            _ => [0; 3],
        }
    }
}

pub fn log_label(sigma_mm: f64) -> String {
    format!("log.sigma.{sigma_mm}.mm.3D")
}

/// One derived image.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredImage {
    pub label: String,
    pub image: ImageVolume,
    /// Set when the filter was undefined for this input (all-zero image).
    pub warning: Option<String>,
}

/// Applies `filter` to the whole volume.
pub fn apply_filter(volume: &ImageVolume, filter: &Filter) -> Result<Vec<FilteredImage>> {
    apply_filter_with_max(volume, filter, volume.max_abs())
}

/// Like [`apply_filter`], but intensity filters use the given `max|x|`
/// (taken from an enclosing image when `volume` is a crop).
pub fn apply_filter_with_max(volume: &ImageVolume, filter: &Filter, max_abs: f64) -> Result<Vec<FilteredImage>> {
    let plain = |label: &str, image: ImageVolume| vec![FilteredImage { label: label.into(), image, warning: None }];
    Ok(match *filter {
        Filter::Log { sigma_mm } => {
            if !(sigma_mm > 0.0) {
                return Err(Error::invalid("filter", "LoG sigma must be positive"));
            }
            plain(&log_label(sigma_mm), laplacian_of_gaussian(volume, sigma_mm))
        }
        Filter::Wavelet { planar } => haar_subbands(volume, if planar { 2 } else { 3 })
            .into_iter()
            .map(|(name, image)| FilteredImage { label: format!("wavelet.{name}"), image, warning: None })
            .collect(),
        Filter::Square | Filter::SquareRoot | Filter::Logarithm | Filter::Exponential => {
            let label = match filter.kind() {
                FilterKind::Square => "square",
                FilterKind::SquareRoot => "squareroot",
                FilterKind::Logarithm => "logarithm",
                _ => "exponential",
            };
            if !(max_abs > 0.0) {
                return Ok(vec![FilteredImage {
                    label: label.into(),
                    image: ImageVolume::zeros(volume.grid.clone()),
                    warning: Some(format!("{label}: max|x| is 0, filter undefined; emitted a zero image")),
                }]);
            }
            let m = max_abs;
            let f: Box<dyn Fn(f64) -> f64 + Sync> = match filter.kind() {
                FilterKind::Square => Box::new(move |x| x * x / m),
                FilterKind::SquareRoot => Box::new(move |x: f64| x.signum() * (m * x.abs()).sqrt()),
                FilterKind::Logarithm => {
                    let c = m / (m + 1.0).ln();
                    Box::new(move |x: f64| x.signum() * c * x.abs().ln_1p())
                }
                _ => {
                    let c = m.ln() / m;
                    Box::new(move |x: f64| (c * x).exp())
                }
            };
            let voxels = volume.voxels.par_iter().map(|&x| if x == 0.0 && label != "exponential" { 0.0 } else { f(x) }).collect();
            plain(label, ImageVolume { grid: volume.grid.clone(), voxels })
        }
    })
}

fn gaussian_radius(sigma_vox: f64) -> usize {
    (4.0 * sigma_vox).ceil() as usize
}

/// Half-sample symmetric index: (… c b a | a b c … | … c b a).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn line_stride(dims: [usize; 3], axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}

/// Calls `f(line_in, line_out)` for every 1D line of `src` along `axis`.
fn map_lines(src: &[f64], dims: [usize; 3], axis: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Vec<f64> {
    let n = dims[axis];
    let stride = line_stride(dims, axis);
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let (na, nb) = (dims[others[0]], dims[others[1]]);
    let starts: Vec<usize> = (0..nb)
        .flat_map(|b| (0..na).map(move |a| (a, b)))
        .map(|(a, b)| a * line_stride(dims, others[0]) + b * line_stride(dims, others[1]))
        .collect();
    let lines: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let input: Vec<f64> = (0..n).map(|k| src[s + k * stride]).collect();
            let mut out = vec![0.0; n];
            f(&input, &mut out);
            out
        })
        .collect();
    let mut dst = vec![0.0; src.len()];
    for (s, line) in starts.iter().zip(lines) {
        for (k, v) in line.into_iter().enumerate() {
            dst[s + k * stride] = v;
        }
    }
    dst
}

fn laplacian_of_gaussian(volume: &ImageVolume, sigma_mm: f64) -> ImageVolume {
    let dims = volume.grid.dims;
    let mut data = volume.voxels.clone();
    for axis in 0..3 {
        let sigma = sigma_mm / volume.grid.spacing[axis];
        let radius = gaussian_radius(sigma) as isize;
        let mut kernel: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|w| *w /= total);
        data = map_lines(&data, dims, axis, |inp, out| {
            let n = inp.len();
            for (i, o) in out.iter_mut().enumerate() {
                *o = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * inp[reflect(i as isize + k as isize - radius, n)])
                    .sum();
            }
        });
    }
    let mut lap = vec![0.0; data.len()];
    for axis in 0..3 {
        let h2 = volume.grid.spacing[axis].powi(2);
        let second = map_lines(&data, dims, axis, |inp, out| {
            let n = inp.len();
            for (i, o) in out.iter_mut().enumerate() {
                let prev = inp[reflect(i as isize - 1, n)];
                let next = inp[reflect(i as isize + 1, n)];
                *o = (next - inp[i] - (inp[i] - prev)) / h2;
            }
        });
        lap.iter_mut().zip(second).for_each(|(l, s)| *l += s);
    }
    ImageVolume { grid: volume.grid.clone(), voxels: lap }
}

/// Undecimated one-level Haar along the first `n_axes` axes. Subband names
/// list one letter per axis in x, y, z order.
fn haar_subbands(volume: &ImageVolume, n_axes: usize) -> Vec<(String, ImageVolume)> {
    let dims = volume.grid.dims;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut bands = vec![(String::new(), volume.voxels.clone())];
    for axis in 0..n_axes {
        let mut next = Vec::with_capacity(bands.len() * 2);
        for (name, data) in bands {
            let low = map_lines(&data, dims, axis, |inp, out| {
                let n = inp.len();
                for i in 0..n {
                    out[i] = s * (inp[i] + inp[reflect(i as isize + 1, n)]);
                }
            });
            let high = map_lines(&data, dims, axis, |inp, out| {
                let n = inp.len();
                for i in 0..n {
                    out[i] = s * (inp[i] - inp[reflect(i as isize + 1, n)]);
                }
            });
            next.push((format!("{name}L"), low));
            next.push((format!("{name}H"), high));
        }
        bands = next;
    }
    bands.into_iter().map(|(n, v)| (n, ImageVolume { grid: volume.grid.clone(), voxels: v })).collect()
}
