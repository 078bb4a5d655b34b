//! Prints the architecture and parameter counts of the toy and full presets.
//!
//! cargo run --example describe_model

use ferkit::model::ModelConfig;

fn main() -> ferkit::Result<()> {
    for name in ["toy", "full"] {
        let cfg = ModelConfig::preset(name)?;
        let count = cfg.param_count();
        println!("== {name} ==\n{}", cfg.describe());
        println!(
            "tokens per image: {}, trainable parameters: {}\n",
            cfg.num_tokens(),
            count.trainable()
        );
    }
    Ok(())
}
