use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radrobust::features::normalize;
use radrobust::robustness::{shuffle_intensities, spearman, Metric, MetricRecord};
use radrobust::workflow::{compose_robust_set, shape_screen, ClassCounts, Scenario, StabilityReport};
use radrobust::{classify, compute_features, ExtractionConfig, FeatureClass, FeatureKey, FeatureTable, Grid, ImageVolume, RoiMask, StabilityClass};

const N: usize = 40;

/// Noisy background with three textured square ROIs in the middle of a
/// 40 x 40 x 3 grid, far enough from the edges for every filter support.
fn scene(seed: u64) -> (ImageVolume, RoiMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new([N, N, 3], [1.0, 1.0, 3.0]);
    let mut voxels: Vec<f64> = (0..grid.len()).map(|_| 100.0 + rng.random_range(-5.0..5.0)).collect();
    let mut labels = vec![0u32; grid.len()];
    for (id, (x0, y0)) in [(1u32, (12, 12)), (2, (21, 12)), (3, (14, 21))] {
        let level = rng.random_range(150.0..400.0);
        for z in 0..3 {
            for y in y0..y0 + 6 {
                for x in x0..x0 + 5 {
                    let i = grid.index(x, y, z);
                    labels[i] = id;
                    voxels[i] = level + rng.random_range(-60.0..60.0);
                }
            }
        }
    }
    (ImageVolume::new(grid.clone(), voxels).unwrap(), RoiMask::new(grid, labels).unwrap())
}

fn config() -> ExtractionConfig {
    ExtractionConfig { log_sigma_mm: 1.0, ..Default::default() }
}

fn roll<T: Copy>(grid: &Grid, v: &[T], dx: usize, dy: usize) -> Vec<T> {
    let mut out = v.to_vec();
    for z in 0..grid.dims[2] {
        for y in 0..N {
            for x in 0..N {
                out[grid.index((x + dx) % N, (y + dy) % N, z)] = v[grid.index(x, y, z)];
            }
        }
    }
    out
}

fn assert_tables_close(a: &FeatureTable, b: &FeatureTable, rel: f64) {
    assert_eq!(a.keys, b.keys);
    assert_eq!(a.roi_ids, b.roi_ids);
    for (ra, rb) in a.values.iter().zip(&b.values) {
        for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
            let ok = (x - y).abs() <= rel * x.abs().max(y.abs()) + 1e-8 || (x.is_nan() && y.is_nan());
            assert!(ok, "{}: {x} vs {y}", a.keys[k]);
        }
    }
}

fn record(key: FeatureKey, class: StabilityClass) -> MetricRecord {
    let value = match class {
        StabilityClass::Excellent => 0.95,
        StabilityClass::Good => 0.8,
        StabilityClass::Moderate => 0.6,
        StabilityClass::Poor => 0.2,
    };
    MetricRecord { key, metric: Metric::Icc, value, ci_lo: None, ci_hi: None, class, flag: None }
}

fn class_of(i: u8) -> StabilityClass {
    StabilityClass::ALL[i as usize % 4]
}

fn keys(n: usize) -> Vec<FeatureKey> {
    (0..n).map(|i| FeatureKey::new("original", FeatureClass::Glcm, format!("F{i}"))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn features_invariant_under_translation(seed in 0u64..1000, dx in 0usize..5, dy in 0usize..5) {
        let (image, mask) = scene(seed);
        let moved = ImageVolume::new(image.grid.clone(), roll(&image.grid, &image.voxels, dx, dy)).unwrap();
        let moved_mask = RoiMask::new(mask.grid.clone(), roll(&mask.grid, &mask.labels, dx, dy)).unwrap();
        let a = compute_features(&image, &mask, &config()).unwrap();
        let b = compute_features(&moved, &moved_mask, &config()).unwrap();
        assert_tables_close(&a, &b, 1e-6);
    }

    #[test]
    fn normalized_features_invariant_under_affine_intensity(seed in 0u64..1000, gain in 0.2f64..20.0, offset in -100.0f64..100.0) {
        let (image, mask) = scene(seed);
        let scaled = ImageVolume::new(image.grid.clone(), image.voxels.iter().map(|v| gain * v + offset).collect()).unwrap();
        let a = compute_features(&image, &mask, &config()).unwrap();
        let b = compute_features(&scaled, &mask, &config()).unwrap();
        assert_tables_close(&a, &b, 1e-6);
    }

    #[test]
    fn shape_ignores_intensity_shuffle(seed in 0u64..1000) {
        let (image, mask) = scene(seed);
        let c = ExtractionConfig { filters: Vec::new(), ..config() };
        let a = compute_features(&image, &mask, &c).unwrap();
        let b = compute_features(&shuffle_intensities(&image, seed), &mask, &c).unwrap();
        for (k, key) in a.keys.iter().enumerate() {
            if key.class == FeatureClass::Shape {
                prop_assert_eq!(a.column(k), b.column(k));
            }
        }
    }
}

proptest! {
    #[test]
    fn normalize_gives_target_mean_and_sd(v in prop::collection::vec(-1e3f64..1e3, 2..200), scale in 1.0f64..200.0, shift in -500.0f64..500.0) {
        prop_assume!(v.iter().any(|x| *x != v[0]));
        let grid = Grid::new([v.len(), 1, 1], [1.0; 3]);
        let out = normalize(&ImageVolume::new(grid, v).unwrap(), scale, shift).unwrap();
        let (m, s) = radrobust::features::mean_std(&out.voxels);
        prop_assert!((m - shift).abs() < 1e-9 * (scale + shift.abs()));
        prop_assert!((s - scale).abs() < 1e-9 * scale);
    }

    #[test]
    fn normalize_absorbs_affine_maps(v in prop::collection::vec(-1e3f64..1e3, 2..100), a in 0.01f64..100.0, b in -1e3f64..1e3) {
        prop_assume!(v.iter().any(|x| (*x - v[0]).abs() > 1e-3));
        let grid = Grid::new([v.len(), 1, 1], [1.0; 3]);
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let p = normalize(&ImageVolume::new(grid.clone(), v).unwrap(), 100.0, 300.0).unwrap();
        let q = normalize(&ImageVolume::new(grid, w).unwrap(), 100.0, 300.0).unwrap();
        for (x, y) in p.voxels.iter().zip(&q.voxels) {
            prop_assert!((x - y).abs() < 1e-7, "{} vs {}", x, y);
        }
    }

    #[test]
    fn class_counts_sum_to_total(values in prop::collection::vec(-1.0f64..1.0, 0..300)) {
        let c = ClassCounts::from_classes(values.iter().map(|v| classify(*v)));
        prop_assert_eq!(c.total, values.len());
        prop_assert_eq!(StabilityClass::ALL.iter().map(|k| c.get(*k)).sum::<usize>(), c.total);
        if c.total > 0 {
            let pct = c.excellent_pct + c.good_pct + c.moderate_pct + c.poor_pct;
            prop_assert!((pct - 100.0).abs() <= 0.2 + 1e-9, "{}", pct);
        }
    }

    #[test]
    fn robust_set_ignores_report_order(
        classes in prop::collection::vec(prop::collection::vec(0u8..4, 30), 1..5),
        shape in prop::collection::vec(any::<bool>(), 30),
        shuffle in prop::collection::vec(any::<bool>(), 30),
        rotate in 0usize..5,
    ) {
        let k = keys(30);
        let reports: Vec<StabilityReport> = classes
            .iter()
            .enumerate()
            .map(|(i, cs)| {
                let records = k.iter().zip(cs).map(|(key, c)| record(key.clone(), class_of(*c))).collect();
                StabilityReport::from_records(Scenario::RepeatabilityFixed, format!("r{i}"), vec![], 16, records)
            })
            .collect();
        let pick = |flags: &[bool]| -> Vec<FeatureKey> { k.iter().zip(flags).filter(|(_, f)| **f).map(|(k, _)| k.clone()).collect() };
        let (s, u) = (pick(&shape), pick(&shuffle));
        let forward: Vec<&StabilityReport> = reports.iter().collect();
        let mut other = forward.clone();
        other.reverse();
        let n = other.len();
        other.rotate_left(rotate % n);
        let a = compose_robust_set(&forward, &s, &u).unwrap();
        let b = compose_robust_set(&other, &u, &s).unwrap();
        prop_assert_eq!(&a, &b);
        for key in &a.with_shape {
            prop_assert!(reports.iter().all(|r| r.excellent.contains(key)));
            prop_assert!(!(s.contains(key) && u.contains(key)));
        }
        prop_assert!(a.without_shape.iter().all(|k| k.class != FeatureClass::Shape));
    }
}

#[test]
fn shape_screen_rarely_flags_independent_features() {
    // 16 ROIs, independent columns: chance correlations above 0.8 are rare.
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut keys: Vec<FeatureKey> = FeatureClass::Shape.names().iter().map(|n| FeatureKey::new("original", FeatureClass::Shape, *n)).collect();
    keys.extend(self::keys(400));
    let values = (0..16).map(|_| (0..keys.len()).map(|_| rng.random::<f64>()).collect()).collect();
    let table = FeatureTable { roi_ids: (1..=16).collect(), keys, values, warnings: Vec::new() };
    let flagged = shape_screen(&table, 0.8).unwrap();
    let fraction = flagged.len() as f64 / 400.0;
    assert!(fraction < 0.1, "{fraction}");
    assert!(flagged.iter().all(|k| k.class != FeatureClass::Shape));
    // A column tied monotonically to a shape feature is always caught.
    let mut tied = table.clone();
    let volume = tied.column(0);
    for (r, row) in tied.values.iter_mut().enumerate() {
        row[20] = volume[r].powi(3);
    }
    assert!(spearman(&tied.column(20), &volume).unwrap().value > 0.99);
    assert!(shape_screen(&tied, 0.8).unwrap().contains(&tied.keys[20]));
}
