//! Builds tiny JAFFE-style and FER-2013-style datasets on disk and loads
//! them through the adapters.
//!
//! cargo run --example dataset_adapters

use ferkit::dataset::adapters::{load_fer2013, load_jaffe, Fer2013Options, FER_SIDE};
use ferkit::preprocess::{ImageTensor, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("ferkit_dataset_adapters");
    let jaffe = dir.join("jaffe");
    std::fs::create_dir_all(&jaffe)?;

    // flat directory of <subject>.<code><n>.<id>.tiff files
    for (i, code) in ["NE", "HA", "SA", "SU", "FE", "DI", "AN"].iter().enumerate() {
        let img = image::GrayImage::from_pixel(256, 256, image::Luma([40 * i as u8]));
        img.save(jaffe.join(format!("KA.{code}1.{}.tiff", 30 + i)))?;
    }
    let m = load_jaffe(&jaffe)?;
    println!("JAFFE-style: {} images, counts {:?}", m.len(), m.counts());

    // emotion,pixels,Usage with 48x48 space-separated pixels
    let csv = dir.join("fer2013.csv");
    let pixels: Vec<String> = (0..FER_SIDE * FER_SIDE).map(|i| (i % 256).to_string()).collect();
    let mut body = String::from("emotion,pixels,Usage\n");
    for (emotion, usage) in [(0, "Training"), (3, "PublicTest"), (6, "PrivateTest")] {
        body.push_str(&format!("{emotion},{},{usage}\n", pixels.join(" ")));
    }
    std::fs::write(&csv, body)?;
    let m = load_fer2013(&csv, &Fer2013Options::default())?;
    println!("FER-style: {} rows kept, counts {:?}", m.len(), m.counts());

    let raw = ImageTensor::decode(&m.samples()[0].image)?;
    let ready = PreprocessConfig::default().load(&m.samples()[0].image)?;
    println!(
        "first row decodes to {:?}, preprocesses to {:?}",
        raw.shape(),
        ready.shape()
    );

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
