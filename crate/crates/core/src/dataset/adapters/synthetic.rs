use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatasetAdapter;
use crate::dataset::{DatasetManifest, EmotionLabel, ImageRef, Sample, SourceDataset};
use crate::error::Result;

/// Generates flat RGB images whose gray level encodes the label:
/// `BASE + STEP * label`, jittered by at most `JITTER` per pixel.
///
/// Useful for closed-loop tests of the evaluation harness, where a model that
/// reads the gray level back must score 100 on every metric.
#[derive(Debug, Clone)]
pub struct SyntheticAdapter {
    pub name: String,
    pub per_class: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl SyntheticAdapter {
    pub const BASE: u8 = 16;
    pub const STEP: u8 = 32;
    pub const JITTER: u8 = 3;

    pub fn new(name: impl Into<String>, per_class: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            per_class,
            width: 32,
            height: 32,
            seed,
        }
    }

    pub fn gray_level(label: EmotionLabel) -> u8 {
        Self::BASE + Self::STEP * label.id() as u8
    }

    /// Inverse of [`gray_level`](Self::gray_level) for a value on the 0..255 scale.
    pub fn label_from_level(level: f64) -> Option<EmotionLabel> {
        let idx = ((level - Self::BASE as f64) / Self::STEP as f64).round();
        if idx < 0.0 {
            return None;
        }
        EmotionLabel::from_id(idx as usize)
    }

    pub fn generate(&self) -> DatasetManifest {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = (self.width * self.height * 3) as usize;
        let mut m = DatasetManifest::new();
        for _ in 0..self.per_class {
            for label in EmotionLabel::ALL {
                let level = Self::gray_level(label) as i16;
                let pixels = (0..n)
                    .map(|_| {
                        let j = rng.random_range(-(Self::JITTER as i16)..=Self::JITTER as i16);
                        (level + j) as u8
                    })
                    .collect();
                m.push(Sample {
                    image: ImageRef::Rgb {
                        width: self.width,
                        height: self.height,
                        pixels,
                    },
                    label,
                    source: SourceDataset::Synthetic,
                });
            }
        }
        m
    }
}

impl DatasetAdapter for SyntheticAdapter {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn load(&self) -> Result<DatasetManifest> {
        Ok(self.generate())
    }
}
