//! Synthetic scenes, cloud noise, label cleaning, splits and patches.

mod dataset;
mod labels;
mod noise;
mod patches;
mod scene;
mod split;

pub use dataset::{
    build_dataset, build_from_scene, compute_norm_stats, load_dataset, normalize, normalize_dataset, save_dataset,
    DatasetConfig, DatasetFiles, DatasetManifest, NormStats, SceneDataset, DATASET_VERSION, MANIFEST_FILE,
};
pub use labels::{clean_labels, LabelGrid};
pub use noise::{inject_noise, percentile};
pub use patches::{extract_patches, Patch};
pub use scene::{generate_scene, ClassSignature, Field, GeneratedScene, SceneConfig};
pub use split::{grid_split, Split, SplitMap};
