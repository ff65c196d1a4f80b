use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ExtractionConfig;
use crate::imageio::RigidTransform;
use crate::phantom::{AcquisitionMode, PhantomSpec, ScannerProfile, SequenceParams};

/// One scanner running one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub name: String,
    pub scanner: String,
    pub sequence: SequenceParams,
    /// Whether test-retest (fixed and repositioned) pairs are acquired.
    #[serde(default = "yes")]
    pub repeatability: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeGridConfig {
    /// Setup whose scanner and geometry are reused; TE and TR are replaced.
    pub setup: String,
    pub te_ms: Vec<f64>,
    pub tr_ms: f64,
    /// Two TR values compared at `tr_pair_te_ms`; empty to skip.
    #[serde(default)]
    pub tr_pair_ms: Vec<f64>,
    #[serde(default = "default_tr_pair_te")]
    pub tr_pair_te_ms: f64,
}

fn default_tr_pair_te() -> f64 {
    100.0
}

impl Default for TeGridConfig {
    fn default() -> Self {
        TeGridConfig {
            setup: "B_TE".into(),
            te_ms: (0..9).map(|i| 80.0 + 5.0 * i as f64).collect(),
            tr_ms: 5000.0,
            tr_pair_ms: vec![5000.0, 4405.0],
            tr_pair_te_ms: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    /// Non-shape features with |Spearman| above this against any shape feature.
    pub shape_spearman: f64,
    /// Non-shape features with ICC above this between original and shuffled images.
    pub shuffle_icc: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig { shape_spearman: 0.8, shuffle_icc: 0.9 }
    }
}

/// An image/mask pair on disk, used instead of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInput {
    pub name: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub extraction: ExtractionConfig,
    pub scanners: Vec<ScannerProfile>,
    pub setups: Vec<SetupConfig>,
    /// Phantom pose for every acquisition except the repositioned retest.
    pub base_pose: RigidTransform,
    /// Applied on top of `base_pose` for the repositioned retest.
    pub reposition: RigidTransform,
    pub reproducibility_pairs: Vec<[String; 2]>,
    pub te_grid: Option<TeGridConfig>,
    pub screens: ScreenConfig,
    pub ccc_level: f64,
    pub inputs: Vec<ImageInput>,
}

fn seq2d(te: f64, tr: f64, spacing: f64, fov: f64) -> SequenceParams {
    SequenceParams {
        te_ms: te,
        tr_ms: tr,
        slice_thickness_mm: 5.0,
        slice_spacing_mm: spacing,
        pixel_spacing_mm: [0.6, 0.6],
        fov_mm: [fov, fov],
        mode: AcquisitionMode::MultiSlice2D,
    }
}

fn setup(name: &str, scanner: &str, sequence: SequenceParams, repeatability: bool) -> SetupConfig {
    SetupConfig { name: name.into(), scanner: scanner.into(), sequence, repeatability }
}

impl Default for StudyConfig {
    /// The three-scanner 2D demo.
    fn default() -> Self {
        let scanner = |name: &str, gain: f64, noise_sigma: f64, bias: f64| ScannerProfile {
            name: name.into(),
            gain,
            noise_sigma,
            bias_field_amplitude: bias,
        };
        StudyConfig {
            seed: 20210901,
            phantom: PhantomSpec::default(),
            extraction: ExtractionConfig::default(),
            scanners: vec![scanner("A", 1000.0, 5.0, 0.05), scanner("B", 800.0, 7.0, 0.08), scanner("C", 2000.0, 2.3, 0.2)],
            setups: vec![
                setup("A", "A", seq2d(109.0, 4763.0, 5.5, 320.0), true),
                setup("B_AB", "B", seq2d(110.0, 4700.0, 6.0, 320.0), false),
                setup("B", "B", seq2d(90.0, 3750.0, 5.0, 340.0), true),
                setup("C", "C", seq2d(90.0, 3750.0, 5.0, 340.0), true),
                setup("B_TE", "B", seq2d(100.0, 5000.0, 6.0, 320.0), false),
            ],
            base_pose: RigidTransform::identity(),
            reposition: RigidTransform::from_euler_deg([0.4, -0.3, 2.0], [1.3, -0.9, 1.7]),
            reproducibility_pairs: vec![["A".into(), "B_AB".into()], ["B".into(), "C".into()]],
            te_grid: Some(TeGridConfig::default()),
            screens: ScreenConfig::default(),
            ccc_level: 0.95,
            inputs: Vec::new(),
        }
    }
}

impl StudyConfig {
    /// Repeatability of a 1 mm isotropic 3D acquisition on the B-like scanner.
    pub fn demo_3d() -> Self {
        let mut c = StudyConfig::default();
        c.extraction.mode = crate::features::ExtractionMode::Full3D;
        let mut seq = seq2d(160.0, 1050.0, 1.0, 320.0);
        seq.slice_thickness_mm = 1.0;
        seq.pixel_spacing_mm = [1.0, 1.0];
        seq.mode = AcquisitionMode::Isotropic3D;
        c.setups = vec![setup("B3D", "B", seq, true)];
        c.reproducibility_pairs.clear();
        c.te_grid = None;
        c
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: StudyConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn setup(&self, name: &str) -> Result<&SetupConfig> {
        self.setups.iter().find(|s| s.name == name).ok_or_else(|| Error::invalid("setup", format!("unknown setup {name:?}")))
    }

    pub fn scanner(&self, name: &str) -> Result<&ScannerProfile> {
        self.scanners.iter().find(|s| s.name == name).ok_or_else(|| Error::invalid("scanner", format!("unknown scanner {name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.extraction.validate()?;
        self.base_pose.validate()?;
        self.reposition.validate()?;
        let mut names = BTreeSet::new();
        for s in &self.scanners {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::invalid("scanners", format!("duplicate name {:?}", s.name)));
            }
        }
        let mut names = BTreeSet::new();
        for s in &self.setups {
            s.sequence.validate()?;
            self.scanner(&s.scanner)?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::invalid("setups", format!("duplicate name {:?}", s.name)));
            }
            if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::invalid("setups", format!("name {:?} must be ASCII letters, digits, '_' or '-'", s.name)));
            }
        }
        for [a, b] in &self.reproducibility_pairs {
            self.setup(a)?;
            self.setup(b)?;
            if a == b {
                return Err(Error::invalid("reproducibility_pairs", format!("pair compares {a:?} with itself")));
            }
        }
        if let Some(te) = &self.te_grid {
            self.setup(&te.setup)?;
            if te.te_ms.len() < 2 {
                return Err(Error::invalid("te_grid", "needs at least two TE values"));
            }
            if te.te_ms.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid("te_grid", "TE values must be strictly increasing"));
            }
            if !(te.te_ms[0] > 0.0 && te.te_ms[te.te_ms.len() - 1] < te.tr_ms) {
                return Err(Error::invalid("te_grid", "need 0 < TE < TR"));
            }
            match te.tr_pair_ms.as_slice() {
                [] => {}
                [a, b] if a != b && a.min(*b) > te.tr_pair_te_ms && te.tr_pair_te_ms > 0.0 => {}
                _ => return Err(Error::invalid("te_grid", "tr_pair_ms must be empty or two distinct TR values above tr_pair_te_ms")),
            }
        }
        if !(self.screens.shape_spearman > 0.0 && self.screens.shape_spearman < 1.0) {
            return Err(Error::invalid("screens.shape_spearman", "must lie in (0, 1)"));
        }
        if !(self.screens.shuffle_icc > 0.0 && self.screens.shuffle_icc < 1.0) {
            return Err(Error::invalid("screens.shuffle_icc", "must lie in (0, 1)"));
        }
        if !(self.ccc_level > 0.0 && self.ccc_level < 1.0) {
            return Err(Error::invalid("ccc_level", "must lie in (0, 1)"));
        }
        let mut names = BTreeSet::new();
        for i in &self.inputs {
            if !names.insert(i.name.as_str()) {
                return Err(Error::invalid("inputs", format!("duplicate name {:?}", i.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RepeatabilityFixed,
    RepeatabilityRepositioned,
    ReproducibilityPair,
    TeGrid,
    TrPair,
    ShuffleScreen,
    ShapeScreen,
    FullPipeline,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::RepeatabilityFixed => "repeatability_fixed",
            Scenario::RepeatabilityRepositioned => "repeatability_repositioned",
            Scenario::ReproducibilityPair => "reproducibility_pair",
            Scenario::TeGrid => "te_grid",
            Scenario::TrPair => "tr_pair",
            Scenario::ShuffleScreen => "shuffle_screen",
            Scenario::ShapeScreen => "shape_screen",
            Scenario::FullPipeline => "full_pipeline",
        }
    }
}

/// A study configuration plus the scenarios to run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenarios: Vec<Scenario>,
    pub config: StudyConfig,
}

impl ExperimentPlan {
    pub fn new(scenarios: Vec<Scenario>, config: StudyConfig) -> Result<Self> {
        let plan = ExperimentPlan { scenarios, config };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks that every scenario has the conditions it compares.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::invalid("scenarios", "none given"));
        }
        let c = &self.config;
        let repeat = c.setups.iter().any(|s| s.repeatability);
        for s in &self.scenarios {
            let ok = match s {
                Scenario::RepeatabilityFixed | Scenario::RepeatabilityRepositioned => repeat,
                Scenario::ReproducibilityPair => !c.reproducibility_pairs.is_empty(),
                Scenario::TeGrid => c.te_grid.is_some(),
                Scenario::TrPair => c.te_grid.as_ref().is_some_and(|t| t.tr_pair_ms.len() == 2),
                Scenario::ShuffleScreen | Scenario::ShapeScreen => repeat || !c.inputs.is_empty(),
                Scenario::FullPipeline => repeat,
            };
            if !ok {
                return Err(Error::invalid("plan", format!("scenario {} has no conditions to compare in this config", s.label())));
            }
        }
        Ok(())
    }
}
