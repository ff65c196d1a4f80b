use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{Material, MaterialLabel, MaterialMap, PhantomSpec, ScannerProfile, SequenceParams};
use crate::error::{Error, Result};
use crate::imageio::ImageVolume;

/// Spin-echo magnitude `gain · PD · (1 − e^{−TR/T1}) · e^{−TE/T2}`.
#[inline]
pub fn spin_echo_signal(m: &Material, te_ms: f64, tr_ms: f64, gain: f64) -> f64 {
    gain * m.pd * (1.0 - (-tr_ms / m.t1_ms).exp()) * (-te_ms / m.t2_ms).exp()
}

/// Renders a T2-weighted magnitude image from a material map.
///
/// Sub-slice samples are box-averaged, the scanner bias field is applied,
/// then Rician noise `sqrt((S + g1 σ)² + (g2 σ)²)` with `(g1, g2)` taken as
/// consecutive draws of one seeded stream in voxel-index order. The output
/// therefore does not depend on the thread schedule.
pub fn simulate_t2w(
    materials: &MaterialMap,
    spec: &PhantomSpec,
    seq: &SequenceParams,
    scanner: &ScannerProfile,
    noise_seed: u64,
) -> Result<ImageVolume> {
    seq.validate()?;
    scanner.validate()?;
    let grid = &materials.grid;
    if materials.labels.len() != grid.len() * materials.sub_slices {
        return Err(Error::invalid("material map", "label count does not match the grid"));
    }

    let m = &spec.materials;
    let mut level = [0.0; 4];
    level[MaterialLabel::Fluid as usize] = spin_echo_signal(&m.fluid, seq.te_ms, seq.tr_ms, scanner.gain);
    level[MaterialLabel::Agar as usize] = spin_echo_signal(&m.agar, seq.te_ms, seq.tr_ms, scanner.gain);
    level[MaterialLabel::Sphere as usize] = spin_echo_signal(&m.sphere, seq.te_ms, seq.tr_ms, scanner.gain);

    let sigma = scanner.noise_sigma;
    let noise: Vec<f64> = if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        (0..2 * grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
    } else {
        Vec::new()
    };

    let [nx, ny, _] = grid.dims;
    let amp = scanner.bias_field_amplitude;
    let sub = materials.sub_slices;
    let half = |n: usize| if n > 1 { 0.5 * (n as f64 - 1.0) } else { 1.0 };
    let (hx, hy) = (half(nx), half(ny));

    let mut voxels = vec![0.0; grid.len()];
    voxels.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            let v = (y as f64 - hy) / hy;
            for x in 0..nx {
                let idx = grid.index(x, y, z);
                let samples = &materials.labels[idx * sub..(idx + 1) * sub];
                let clean = samples.iter().map(|&l| level[l as usize]).sum::<f64>() / sub as f64;
                let u = (x as f64 - hx) / hx;
                let s = clean * (1.0 + amp * (0.6 * u + 0.8 * v) / 1.4);
                slab[x + nx * y] = if sigma > 0.0 {
                    let (g1, g2) = (noise[2 * idx], noise[2 * idx + 1]);
                    ((s + g1 * sigma).powi(2) + (g2 * sigma).powi(2)).sqrt()
                } else {
                    s
                };
            }
        }
    });
    ImageVolume::new(grid.clone(), voxels)
}
