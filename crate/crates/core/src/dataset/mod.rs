//! Canonical 7-class manifests, dataset readers, balanced sampling and splits.

pub mod adapters;
mod label;
mod manifest;
mod sampling;

pub use label::{EmotionLabel, NUM_CLASSES};
pub use manifest::{DatasetManifest, ImageRef, Sample, SourceDataset};
pub use sampling::{balanced_sample, compute_balanced_n, stratified_split, Ratio, SamplingSpec};
