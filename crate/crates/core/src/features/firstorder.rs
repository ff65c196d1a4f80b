/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The 18 first-order features, in column order. `values` are the ROI
/// intensities, `levels` their discretized gray levels.
pub fn first_order_features(values: &[f64], levels: &[u32], voxel_volume: f64) -> [f64; 18] {
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p10 = percentile(&sorted, 10.0);
    let p90 = percentile(&sorted, 90.0);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let mean = values.iter().sum::<f64>() / n;
    let energy: f64 = values.iter().map(|v| v * v).sum();
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;

    let robust: Vec<f64> = sorted.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64;

    let ng = levels.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0.0; ng + 1];
    levels.iter().for_each(|&l| hist[l as usize] += 1.0);
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &h in hist.iter().filter(|&&h| h > 0.0) {
        let p = h / n;
        entropy -= p * p.log2();
        uniformity += p * p;
    }

    let (skew, kurt) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };
    [
        p10,
        p90,
        energy,
        entropy,
        percentile(&sorted, 75.0) - percentile(&sorted, 25.0),
        kurt,
        max,
        mad,
        mean,
        percentile(&sorted, 50.0),
        min,
        max - min,
        rmad,
        (energy / n).sqrt(),
        skew,
        energy * voxel_volume,
        uniformity,
        m2,
    ]
}
