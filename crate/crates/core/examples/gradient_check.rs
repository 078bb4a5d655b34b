//! Compares analytic gradients of the toy model with central finite
//! differences on a few coordinates of every tensor.
//!
//! cargo run --example gradient_check

use ferkit::dataset::adapters::SyntheticAdapter;
use ferkit::model::{Mode, ModelConfig, ModelState, Parameters};
use ferkit::preprocess::PreprocessConfig;
use ferkit::training::{batch_gradients, cross_entropy, load_examples, predict, Example};

fn loss(model: &ModelState, examples: &[Example]) -> f64 {
    let logits = predict(model, examples).expect("forward");
    let targets: Vec<usize> = examples.iter().map(|e| e.label.id()).collect();
    cross_entropy(logits.view(), &targets).expect("loss")
}

fn main() -> ferkit::Result<()> {
    let model = ModelState::init(&ModelConfig::toy(), 3)?;
    let manifest = SyntheticAdapter::new("synthetic", 1, 9).generate();
    let examples = load_examples(&manifest, &PreprocessConfig::toy())?;
    let batch: Vec<&Example> = examples.iter().take(4).collect();
    let subset: Vec<Example> = batch.iter().map(|e| (*e).clone()).collect();
    let (_, grads) = batch_gradients(&model, &batch, &mut Mode::Eval)?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (t, view) in grads.views().iter().enumerate() {
        let i = view.data.len() / 2;
        let mut plus = model.clone();
        plus.params.views_mut()[t].data[i] += h;
        let mut minus = model.clone();
        minus.params.views_mut()[t].data[i] -= h;
        let numeric = (loss(&plus, &subset) - loss(&minus, &subset)) / (2.0 * h);
        let analytic = view.data[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        println!(
            "{:<40} analytic {analytic:>12.3e}  numeric {numeric:>12.3e}  rel {rel:.1e}",
            view.name
        );
    }
    println!("max relative error {worst:.2e}");
    Ok(())
}
