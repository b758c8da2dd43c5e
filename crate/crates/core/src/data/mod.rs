//! Dataset ingestion, preprocessing and augmentation.

pub mod augment;
pub mod dataset;
pub mod manifest;
pub mod nifti;
pub mod phantom;
pub mod store;
pub mod volume;

pub use augment::{augment, AugmentParams, SpatialTransform};
pub use dataset::{prepare_patient, Dataset, Patient, PreprocessParams, Split};
pub use manifest::{DatasetManifest, ManifestEntry, SplitKind};
pub use nifti::{load_labels, load_volume, read_nifti, write_nifti, NiftiImage};
pub use phantom::{generate_phantom_dataset, LesionParams, PhantomParams, PhantomPatient};
pub use store::{load_phantom, save_phantom};
pub use volume::{
    brain_mask_threshold, crop_or_pad, extract_slices, foreground_normalize, volume_mask,
    LabelVolume, Volume, VolumeMask,
};
