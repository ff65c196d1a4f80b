//! Seeded fixtures shared by the benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radrobust::features::DiscreteRoi;
use radrobust::imageio::{Grid, ImageVolume};

/// Random discretized ROI filling the whole box.
pub fn discrete_roi(dims: [usize; 3], ng: u32, seed: u64) -> DiscreteRoi {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims[0] * dims[1] * dims[2];
    let levels = (0..n).map(|_| rng.random_range(1..=ng)).collect();
    DiscreteRoi::new(dims, levels, ng).unwrap()
}

/// Positive noise image on an anisotropic grid.
pub fn noise_volume(dims: [usize; 3], seed: u64) -> ImageVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(dims, [0.6, 0.6, 5.0]);
    let voxels = (0..grid.len()).map(|_| rng.random_range(100.0..400.0)).collect();
    ImageVolume::new(grid, voxels).unwrap()
}

/// `n` subjects rated by `k` raters with rater noise.
pub fn ratings(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let truth: f64 = rng.random_range(0.0..10.0);
            (0..k).map(|_| truth + rng.random_range(-1.0..1.0)).collect()
        })
        .collect()
}
