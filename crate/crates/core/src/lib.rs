//! Radiomic feature robustness workbench.
//!
//! * [`imageio`]: voxel grids, NIfTI-1 IO, rigid mask transfer.
//! * [`phantom`]: digital pelvic phantom and T2-weighted spin-echo simulator.
//! * [`features`]: normalization, filters, discretization and the
//!   shape / first-order / GLCM / GLRLM / GLSZM / NGTDM / GLDM feature set.
//! * [`robustness`]: ICC(2,1), CCC with intervals, Spearman, CNR/SNR,
//!   stability classes and intensity shuffling.
//! * [`workflow`]: repeatability, reproducibility, TE/TR grids, screens and
//!   report emission.

pub mod error;
pub mod features;
pub mod imageio;
pub mod phantom;
pub mod robustness;
pub mod workflow;

pub use error::{Error, Result};
pub use imageio::{Grid, ImageVolume, RigidTransform, RoiMask};
pub use features::{compute_features, ExtractionConfig, ExtractionMode, FeatureClass, FeatureKey, FeatureTable};
pub use robustness::{classify, StabilityClass};
