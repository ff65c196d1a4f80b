//! Repeatability, reproducibility and screening experiments on simulated or
//! file-based acquisitions, and report emission.

pub mod analysis;
pub mod config;
pub mod emit;
pub mod study;

pub use analysis::{
    compose_robust_set, intersect, repeatability_report, reproducibility_report, run_shuffle_screen, shape_screen, shuffle_screen, ClassCounts,
    GapSummary, RobustSet, ScreenReport, StabilityReport, TeCell, TeGridReport,
};
pub use config::{ExperimentPlan, ImageInput, Scenario, ScreenConfig, SetupConfig, StudyConfig, TeGridConfig};
pub use emit::{emit_report, OutputFormat};
pub use study::{run_plan, AcquisitionSpec, Extracted, Pose, QualityRecord, Study, StudyReport};

/// Seed for a named stream: FNV-1a of the name mixed into the base seed,
/// finished with SplitMix64.
pub fn derive_seed(base: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
