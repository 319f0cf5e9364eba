//! Reproducibility metrics for brain-segmentation label maps.
//!
//! Reads NIfTI-1 label volumes, extracts atlas regions, and compares repeated
//! segmentations of the same subject with Dice, Surface Dice, HD95 and volume
//! error, then filters and summarises the results over sessions.

pub mod error;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod nifti;
pub mod oracle;
pub mod percentile;
pub mod report;
pub mod resample;
pub mod roi;
pub mod selftest;
pub mod stats;
pub mod synth;
pub mod volume;

pub use error::{Emptiness, Error, Result};
pub use mask::BinaryMask;
pub use metrics::{
    dice, distance_field, extract_surface, hd95, pair_metrics, surface_dice, DistanceField,
    PairMetrics, SurfacePointSet, DEFAULT_TOLERANCE_MM,
};
pub use nifti::{read_grid, read_label_volume, write_label_volume};
pub use resample::{read_affine_transform, resample_labels, AffineTransform};
pub use roi::{
    default_registry, extract_mask, mask_volume_cm3, RoiClass, RoiRegistry, RoiSpec, Side,
};
pub use volume::{Grid, LabelVolume, ReferenceGrid};
