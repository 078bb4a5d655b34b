//! Draws a class-balanced pool from an imbalanced dataset and splits it
//! 80/20 per class.
//!
//! cargo run --example balanced_sampling

use ferkit::dataset::{
    balanced_sample, compute_balanced_n, stratified_split, DatasetManifest, EmotionLabel, ImageRef, Ratio, Sample,
    SamplingSpec, SourceDataset,
};

fn main() -> ferkit::Result<()> {
    // class sizes shaped like a large in-the-wild expression corpus
    let counts = [74_874, 134_415, 25_459, 14_090, 6_378, 3_803, 24_882];
    let mut pool = DatasetManifest::new();
    for label in EmotionLabel::ALL {
        for i in 0..counts[label.id()] {
            pool.push(Sample {
                image: ImageRef::File(format!("{}/{i:06}.jpg", label.name()).into()),
                label,
                source: SourceDataset::Affectnet,
            });
        }
    }

    let n = compute_balanced_n(&pool)?;
    let sampled = balanced_sample(&pool, SamplingSpec { n, seed: 42 })?;
    let (train, val) = stratified_split(&sampled, Ratio::EIGHT_TENTHS, 42)?;

    println!(
        "{:<10} {:>8} {:>8} {:>6} {:>6}",
        "class", "pool", "sampled", "train", "val"
    );
    for label in EmotionLabel::ALL {
        println!(
            "{:<10} {:>8} {:>8} {:>6} {:>6}",
            label.name(),
            pool.count(label),
            sampled.count(label),
            train.count(label),
            val.count(label)
        );
    }
    println!(
        "total: {} sampled, {} train, {} val",
        sampled.len(),
        train.len(),
        val.len()
    );
    Ok(())
}
