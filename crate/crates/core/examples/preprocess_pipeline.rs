//! Runs images of different sizes and channel counts through the full
//! preprocessing pipeline: RGB, square resize, white vertical padding,
//! ImageNet normalization.
//!
//! cargo run --example preprocess_pipeline

use ferkit::preprocess::{ImageTensor, PreprocessConfig};

fn main() -> ferkit::Result<()> {
    let cfg = PreprocessConfig::default();
    println!("target shape {:?}", cfg.output_shape());

    let gradient: Vec<u8> = (0..120 * 90 * 3).map(|i| (i % 251) as u8).collect();
    let inputs = [
        (
            "90x120 RGB photo",
            ImageTensor::from_interleaved_u8(&gradient, 3, 90, 120)?,
        ),
        (
            "48x48 grayscale crop",
            ImageTensor::from_interleaved_u8(&[128u8; 48 * 48], 1, 48, 48)?,
        ),
    ];
    for (name, img) in &inputs {
        let out = cfg.apply(img)?;
        let (c, h, w) = out.shape();
        let pad = cfg.padded_height.saturating_sub(cfg.resize) / 2;
        println!("{name}: {:?} -> ({c}, {h}, {w})", img.shape());
        for ch in 0..c {
            println!(
                "  channel {ch}: pad value {:.4}, first content row value {:.4}",
                out.data()[[ch, 0, 0]],
                out.data()[[ch, pad, w / 2]]
            );
        }
    }
    Ok(())
}
