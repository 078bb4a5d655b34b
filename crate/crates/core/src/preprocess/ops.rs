use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use super::tensor::{ImageTensor, ValueRange};
use crate::error::{Error, Result};

/// Per-channel mean and standard deviation on the unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::config("preprocess.std", "every std must be positive"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("preprocess.mean", "mean must be finite"));
        }
        Ok(())
    }
}

/// Source-index taps for 1-D linear resampling with half-pixel centres:
/// output `i` reads `(i0, i1, frac)` with `src = (i + 0.5) * in / out - 0.5`
/// clamped to the valid range.
pub(crate) fn linear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    let v = a + t * (b - a);
    // rounding in `b - a` can overshoot by an ulp; keep the result inside [a, b]
    v.clamp(a.min(b), a.max(b))
}

/// Replicates a single-channel image into three identical channels.
pub fn gray_to_rgb(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels() != 1 {
        return Err(Error::ChannelsMismatch {
            expected: 1,
            actual: img.channels(),
        });
    }
    let plane = img.data().index_axis(Axis(0), 0);
    let data = ndarray::stack![Axis(0), plane, plane, plane];
    Ok(ImageTensor::new(data, img.range()))
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::DimensionMismatch {
            expected: "positive output size".into(),
            actual: format!("{out_h}x{out_w}"),
        });
    }
    let (c, h, w) = img.shape();
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let ys = linear_taps(out_h, h);
    let xs = linear_taps(out_w, w);
    let src = img.data();
    let mut out = Array3::<f32>::zeros((c, out_h, out_w));
    let mut row0 = vec![0f32; out_w];
    let mut row1 = vec![0f32; out_w];
    for ch in 0..c {
        let plane = src.index_axis(Axis(0), ch);
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let fx = fx as f32;
                row0[ox] = lerp(plane[[y0, x0]], plane[[y0, x1]], fx);
                row1[ox] = lerp(plane[[y1, x0]], plane[[y1, x1]], fx);
            }
            let fy = fy as f32;
            for ox in 0..out_w {
                out[[ch, oy, ox]] = lerp(row0[ox], row1[ox], fy);
            }
        }
    }
    Ok(ImageTensor::new(out, img.range()))
}

/// Pads a `side x side` image with constant rows split evenly between top and
/// bottom to reach `out_height`. `value` defaults to the white level of the
/// image's range.
pub fn pad_vertical(img: &ImageTensor, side: usize, out_height: usize, value: Option<f32>) -> Result<ImageTensor> {
    let (c, h, w) = img.shape();
    if (h, w) != (side, side) || out_height < side {
        return Err(Error::DimensionMismatch {
            expected: format!("{side}x{side} input padded to height {out_height}"),
            actual: format!("{h}x{w}"),
        });
    }
    let fill = match (value, img.range().white()) {
        (Some(v), _) => v,
        (None, Some(white)) => white,
        (None, None) => return Err(Error::Range("cannot pad a normalized image with white".into())),
    };
    let top = (out_height - side) / 2;
    let mut out = Array3::<f32>::from_elem((c, out_height, w), fill);
    out.slice_mut(ndarray::s![.., top..top + side, ..]).assign(img.data());
    Ok(ImageTensor::new(out, img.range()))
}

/// Pads a 768x768 image with 128 white rows above and below to 1024x768.
pub fn pad_vertical_white(img: &ImageTensor) -> Result<ImageTensor> {
    pad_vertical(img, 768, 1024, None)
}

/// Rescales a raw 0..255 image to 0..1.
pub fn to_unit(img: &ImageTensor) -> Result<ImageTensor> {
    if img.range() != ValueRange::Raw0To255 {
        return Err(Error::Range(format!(
            "to_unit expects raw_0_255 input, got {:?}",
            img.range()
        )));
    }
    Ok(ImageTensor::new(img.data().mapv(|v| v / 255.0), ValueRange::Unit0To1))
}

/// `out[c] = (in[c] - mean[c]) / std[c]` on a unit-range RGB image.
pub fn normalize(img: &ImageTensor, spec: &NormalizationSpec) -> Result<ImageTensor> {
    if img.range() != ValueRange::Unit0To1 {
        return Err(Error::Range(format!(
            "normalize expects unit_0_1 input, got {:?}",
            img.range()
        )));
    }
    if img.channels() != 3 {
        return Err(Error::ChannelsMismatch {
            expected: 3,
            actual: img.channels(),
        });
    }
    spec.validate()?;
    let mut data = img.data().clone();
    for (c, mut plane) in data.axis_iter_mut(Axis(0)).enumerate() {
        let (m, s) = (spec.mean[c], spec.std[c]);
        plane.mapv_inplace(|v| (v - m) / s);
    }
    Ok(ImageTensor::new(data, ValueRange::Normalized))
}
