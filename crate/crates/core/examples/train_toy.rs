//! Fine-tunes the toy model on separable synthetic images, then saves and
//! reloads a training checkpoint.
//!
//! cargo run --release --example train_toy

use ferkit::dataset::adapters::SyntheticAdapter;
use ferkit::dataset::{stratified_split, Ratio};
use ferkit::model::{ModelConfig, ModelState};
use ferkit::preprocess::PreprocessConfig;
use ferkit::training::{evaluate_war, load_examples, TrainConfig, Trainer};

fn main() -> ferkit::Result<()> {
    let pool = SyntheticAdapter::new("synthetic", 12, 1).generate();
    let (train_m, val_m) = stratified_split(&pool, Ratio::EIGHT_TENTHS, 1)?;
    let pcfg = PreprocessConfig::toy();
    let (train, val) = (load_examples(&train_m, &pcfg)?, load_examples(&val_m, &pcfg)?);

    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::toy()
    };
    let model = ModelState::init(&ModelConfig::toy(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg, train.len())?;
    let outcome = trainer.fit_with(&train, &val, |t| {
        let r = t.log().epochs.last().expect("one epoch done");
        println!(
            "epoch {:>2}  loss {:.4}  val WAR {:>6.2}",
            r.epoch, r.train_loss, r.val_war
        );
        Ok(())
    })?;
    println!(
        "best epoch {:?}, train WAR {:.2}",
        outcome.best_epoch,
        evaluate_war(&outcome.best, &train)?
    );

    let path = std::env::temp_dir().join("ferkit_train_toy.safetensors");
    trainer.save_checkpoint(&path)?;
    let restored = Trainer::load_checkpoint(&path)?;
    println!(
        "checkpoint {} restores {} epochs",
        path.display(),
        restored.epochs_done()
    );
    std::fs::remove_file(&path)?;
    Ok(())
}
