//! Image pipeline: decode, replicate grayscale, bilinear resize, vertical
//! padding and per-channel normalization.

mod ops;
mod tensor;

use serde::{Deserialize, Serialize};

pub(crate) use ops::linear_taps;
pub use ops::{gray_to_rgb, normalize, pad_vertical, pad_vertical_white, resize_bilinear, to_unit, NormalizationSpec};
pub use tensor::{ImageTensor, ValueRange};

use crate::dataset::{DatasetManifest, EmotionLabel, ImageRef};
use crate::error::Result;

/// Geometry and normalization of the pipeline.
///
/// The default is the full-scale geometry (square resize to 768, padded to
/// 1024 rows). `mean`/`std` default to the common ImageNet statistics; the
/// backbone's own constants may differ and can be set here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub resize: usize,
    pub padded_height: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    /// Padding level on the 0..255 scale. `None` pads with white.
    pub pad_value: Option<f32>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let n = NormalizationSpec::default();
        Self {
            resize: 768,
            padded_height: 1024,
            mean: n.mean,
            std: n.std,
            pad_value: None,
        }
    }
}

impl PreprocessConfig {
    /// Same aspect ratio as the default, at 1/32 scale (24 wide, 32 tall).
    pub fn toy() -> Self {
        Self {
            resize: 24,
            padded_height: 32,
            ..Self::default()
        }
    }

    pub fn normalization(&self) -> NormalizationSpec {
        NormalizationSpec {
            mean: self.mean,
            std: self.std,
        }
    }

    /// `(channels, height, width)` of every pipeline output.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        (3, self.padded_height, self.resize)
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.resize == 0 {
            return Err(Error::config("preprocess.resize", "must be positive"));
        }
        if self.padded_height < self.resize {
            return Err(Error::config(
                "preprocess.padded_height",
                "must be at least preprocess.resize",
            ));
        }
        self.normalization().validate()
    }

    /// Runs an already-decoded raw image through the pipeline.
    pub fn apply(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let rgb = if img.channels() == 1 {
            gray_to_rgb(img)?
        } else {
            img.clone()
        };
        let resized = resize_bilinear(&rgb, self.resize, self.resize)?;
        let padded = pad_vertical(&resized, self.resize, self.padded_height, self.pad_value)?;
        normalize(&to_unit(&padded)?, &self.normalization())
    }

    pub fn load(&self, image: &ImageRef) -> Result<ImageTensor> {
        self.apply(&ImageTensor::decode(image)?)
    }

    /// Decodes and preprocesses every sample, preserving manifest order.
    pub fn load_manifest(&self, manifest: &DatasetManifest) -> Result<Vec<(ImageTensor, EmotionLabel)>> {
        manifest
            .samples()
            .iter()
            .map(|s| Ok((self.load(&s.image)?, s.label)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array3;

    use super::*;

    #[test]
    fn full_pipeline_geometry() {
        let cfg = PreprocessConfig::default();
        let img = ImageTensor::new(Array3::from_elem((3, 224, 224), 10.0), ValueRange::Raw0To255);
        let out = cfg.apply(&img).unwrap();
        assert_eq!(out.shape(), (3, 1024, 768));
        assert_eq!(out.range(), ValueRange::Normalized);
        for c in 0..3 {
            let pad = (1.0f32 - cfg.mean[c]) / cfg.std[c];
            assert_eq!(out.data()[[c, 0, 0]], pad);
            assert_eq!(out.data()[[c, 1023, 767]], pad);
            let body = (10.0f32 / 255.0 - cfg.mean[c]) / cfg.std[c];
            assert_eq!(out.data()[[c, 512, 300]], body);
        }
    }

    #[test]
    fn custom_pad_value() {
        let cfg = PreprocessConfig {
            pad_value: Some(0.0),
            ..PreprocessConfig::toy()
        };
        let img = ImageTensor::new(Array3::from_elem((1, 5, 5), 255.0), ValueRange::Raw0To255);
        let out = cfg.apply(&img).unwrap();
        assert_eq!(out.shape(), (3, 32, 24));
        assert_eq!(out.data()[[0, 0, 0]], (0.0 - cfg.mean[0]) / cfg.std[0]);
    }
}
