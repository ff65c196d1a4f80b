use crate::error::{Error, Result};
use crate::imageio::ImageVolume;

/// Whole-image z-score, rescaled: `shift + scale · (x − μ) / σ` with the
/// population standard deviation.
pub fn normalize(volume: &ImageVolume, scale: f64, shift: f64) -> Result<ImageVolume> {
    let (mean, sd) = mean_std(&volume.voxels);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let voxels = volume.voxels.iter().map(|&x| shift + scale * (x - mean) / sd).collect();
    Ok(ImageVolume { grid: volume.grid.clone(), voxels })
}

/// Mean and population standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
