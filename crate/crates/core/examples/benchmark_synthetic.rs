//! Trains the toy model briefly, benchmarks it on several synthetic
//! datasets and prints the results table next to the published reference
//! numbers.
//!
//! cargo run --release --example benchmark_synthetic

use ferkit::dataset::adapters::{DatasetAdapter, SyntheticAdapter};
use ferkit::eval::{benchmark, render_reference_tables};
use ferkit::model::{ModelConfig, ModelState};
use ferkit::preprocess::PreprocessConfig;
use ferkit::training::{fit, load_examples, TrainConfig};

fn main() -> ferkit::Result<()> {
    let pcfg = PreprocessConfig::toy();
    let train = load_examples(&SyntheticAdapter::new("train", 8, 0).generate(), &pcfg)?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::toy()
    };
    let model = ModelState::init(&ModelConfig::toy(), cfg.seed)?;
    let outcome = fit(model, &train, &train, &cfg)?;

    let adapters: Vec<Box<dyn DatasetAdapter>> = vec![
        Box::new(SyntheticAdapter::new("Synthetic A", 5, 11)),
        Box::new(SyntheticAdapter::new("Synthetic B", 10, 12)),
        Box::new(SyntheticAdapter::new("Synthetic C", 20, 13)),
    ];
    let report = benchmark(&outcome.best, &adapters, &pcfg);
    println!("{}\n{}", report.render_table(), render_reference_tables());
    Ok(())
}
