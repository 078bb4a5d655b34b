use std::path::Path;

use image::DynamicImage;
use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::dataset::ImageRef;
use crate::error::{Error, Result};

/// Which scale the values of an [`ImageTensor`] are on. Transitions only go
/// `Raw0To255 -> Unit0To1 -> Normalized`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    Raw0To255,
    Unit0To1,
    Normalized,
}

impl ValueRange {
    /// The white level of the range, if it has one.
    pub fn white(self) -> Option<f32> {
        match self {
            ValueRange::Raw0To255 => Some(255.0),
            ValueRange::Unit0To1 => Some(1.0),
            ValueRange::Normalized => None,
        }
    }
}

/// Dense `(channels, height, width)` f32 image plus its value-range tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f32>,
    range: ValueRange,
}

impl ImageTensor {
    pub fn new(data: Array3<f32>, range: ValueRange) -> Self {
        Self { data, range }
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    /// Builds a raw-range tensor from interleaved 8-bit pixels.
    pub fn from_interleaved_u8(pixels: &[u8], channels: usize, height: usize, width: usize) -> Result<Self> {
        if pixels.len() != channels * height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{channels}x{height}x{width} = {} bytes", channels * height * width),
                actual: format!("{} bytes", pixels.len()),
            });
        }
        let data = Array3::from_shape_fn((channels, height, width), |(c, y, x)| {
            pixels[(y * width + x) * channels + c] as f32
        });
        Ok(Self::new(data, ValueRange::Raw0To255))
    }

    /// Decodes an image reference to a raw-range tensor with 1 channel for
    /// grayscale sources and 3 otherwise.
    pub fn decode(image: &ImageRef) -> Result<Self> {
        match image {
            ImageRef::File(path) => decode_file(path),
            ImageRef::Gray { width, height, pixels } => {
                Self::from_interleaved_u8(pixels, 1, *height as usize, *width as usize)
            }
            ImageRef::Rgb { width, height, pixels } => {
                Self::from_interleaved_u8(pixels, 3, *height as usize, *width as usize)
            }
        }
    }
}

fn decode_file(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            ImageTensor::from_interleaved_u8(g.as_raw(), 1, h as usize, w as usize)
        }
        _ => {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            ImageTensor::from_interleaved_u8(rgb.as_raw(), 3, h as usize, w as usize)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaved_layout() {
        let px = [1u8, 2, 3, 4, 5, 6];
        let t = ImageTensor::from_interleaved_u8(&px, 3, 1, 2).unwrap();
        assert_eq!(t.data()[[0, 0, 1]], 4.0);
        assert_eq!(t.data()[[2, 0, 0]], 3.0);
        assert!(ImageTensor::from_interleaved_u8(&px, 3, 2, 2).is_err());
    }

    #[test]
    fn decodes_png_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let gray = dir.path().join("g.png");
        image::GrayImage::from_pixel(5, 4, image::Luma([77]))
            .save(&gray)
            .unwrap();
        let t = ImageTensor::decode(&ImageRef::File(gray)).unwrap();
        assert_eq!(t.shape(), (1, 4, 5));
        assert!(t.data().iter().all(|&v| v == 77.0));

        let rgb = dir.path().join("c.png");
        image::RgbImage::from_pixel(2, 3, image::Rgb([1, 2, 3]))
            .save(&rgb)
            .unwrap();
        let t = ImageTensor::decode(&ImageRef::File(rgb)).unwrap();
        assert_eq!(t.shape(), (3, 3, 2));
        assert_eq!(t.data()[[1, 2, 1]], 2.0);

        let missing = ImageTensor::decode(&ImageRef::File(dir.path().join("nope.png")));
        assert!(matches!(missing, Err(Error::Image { .. })));
    }
}
