use radrobust::phantom::ScannerProfile;
use radrobust::workflow::{repeatability_report, reproducibility_report, Pose, Scenario, SetupConfig, Study, StudyConfig};
use radrobust::StabilityClass;

/// Demo study cut down to the named setups, on a coarse in-plane grid.
fn coarse(setups: &[(&str, &str)], scanners: Vec<ScannerProfile>) -> StudyConfig {
    let mut c = StudyConfig::default();
    let template = c.setup("A").unwrap().clone();
    c.setups = setups
        .iter()
        .map(|(name, scanner)| {
            let mut s = SetupConfig { name: name.to_string(), scanner: scanner.to_string(), ..template.clone() };
            s.sequence.pixel_spacing_mm = [1.6, 1.6];
            s
        })
        .collect();
    if !scanners.is_empty() {
        c.scanners = scanners;
    }
    c.reproducibility_pairs = Vec::new();
    c.te_grid = None;
    c
}

fn scanner(name: &str, gain: f64, noise_sigma: f64) -> ScannerProfile {
    ScannerProfile { name: name.into(), gain, noise_sigma, bias_field_amplitude: 0.0 }
}

#[test]
fn identical_tables_are_all_excellent() {
    let study = Study::new(coarse(&[("A", "A")], Vec::new())).unwrap();
    let spec = study.acquisition("A", "fixed1", Pose::Base).unwrap();
    let e = study.extract(&[spec], false).unwrap();
    let t = &e[0].table;
    let icc = repeatability_report(Scenario::RepeatabilityFixed, "same", &[("a", t), ("b", t)]).unwrap();
    assert_eq!(icc.counts.excellent, icc.counts.total);
    let ccc = reproducibility_report(Scenario::ReproducibilityPair, "same", ("a", t), ("b", t), 0.95).unwrap();
    assert!(ccc.records.iter().all(|r| r.value == 1.0 && r.class == StabilityClass::Excellent));
}

#[test]
fn noiseless_scanners_differing_in_gain_agree() {
    let scanners = vec![scanner("G1", 1000.0, 0.0), scanner("G2", 2500.0, 0.0), scanner("G3", 1000.0, 0.0)];
    let mut c = coarse(&[("S1", "G1"), ("S2", "G2"), ("S3", "G3")], scanners);
    c.reproducibility_pairs = vec![["S1".into(), "S3".into()], ["S1".into(), "S2".into()]];
    let reports = Study::new(c).unwrap().reproducibility().unwrap();
    // Same condition under two setup names: identical images.
    assert!(reports[0].records.iter().all(|r| (r.value - 1.0).abs() < 1e-12), "{}", reports[0].mean_value());
    // Gain only: normalization removes it.
    assert!(reports[1].counts.excellent_fraction() > 0.99, "{:?}", reports[1].counts);
}

#[test]
fn added_noise_degrades_agreement() {
    let scanners = vec![scanner("Q", 1000.0, 0.0), scanner("N", 1000.0, 25.0)];
    let mut c = coarse(&[("Q", "Q"), ("N", "N")], scanners);
    c.reproducibility_pairs = vec![["Q".into(), "N".into()]];
    let r = &Study::new(c).unwrap().reproducibility().unwrap()[0];
    assert!(r.counts.excellent < r.counts.total);
    assert!(r.counts.excellent > 0);
    assert!(r.mean_value() < 0.99);
}

#[test]
fn fixed_retest_is_partly_excellent_and_repositioning_is_worse() {
    let study = Study::new(coarse(&[("A", "A")], Vec::new())).unwrap();
    let fixed = &study.repeatability(Pose::Base).unwrap()[0];
    let moved = &study.repeatability(Pose::Repositioned).unwrap()[0];
    let f = fixed.counts.excellent_fraction();
    assert!(f > 0.0 && f < 1.0, "{f}");
    assert!(moved.counts.excellent_fraction() < f, "{} vs {f}", moved.counts.excellent_fraction());
    assert_eq!(fixed.n_rois, 16);
}

#[test]
fn texture_contrast_is_not_shuffle_flagged() {
    let study = Study::new(coarse(&[("A", "A")], Vec::new())).unwrap();
    let screens = study.screens(false, true).unwrap();
    let keys: Vec<String> = screens.shuffle_flagged.iter().map(|k| k.to_string()).collect();
    assert!(!keys.contains(&"original_glcm_Contrast".to_string()));
    assert!(keys.iter().all(|k| !k.contains("_shape_")));
    assert!(screens.shape_correlated.is_empty());
}

#[test]
fn repositioned_mask_keeps_every_roi() {
    let study = Study::new(coarse(&[("A", "A")], Vec::new())).unwrap();
    let (image, base) = study.simulate(&study.acquisition("A", "fixed1", Pose::Base).unwrap()).unwrap();
    let (moved_image, moved) = study.simulate(&study.acquisition("A", "repositioned", Pose::Repositioned).unwrap()).unwrap();
    assert!(base.matches(&image) && moved.matches(&moved_image));
    assert_eq!(base.roi_ids(), moved.roi_ids());
    assert_eq!(base.roi_ids().len(), 16);
    for id in base.roi_ids() {
        let (a, b) = (base.voxel_count(id) as f64, moved.voxel_count(id) as f64);
        assert!((a - b).abs() / a < 0.25, "ROI {id}: {a} vs {b}");
    }
    assert_ne!(base.labels, moved.labels);
}
