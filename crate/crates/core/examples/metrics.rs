//! Scores a small batch of logits: confusion matrix, WAR, top-k accuracy,
//! macro precision and F1.
//!
//! cargo run --example metrics

use ferkit::dataset::EmotionLabel;
use ferkit::eval::MetricReport;
use ndarray::array;

fn main() -> ferkit::Result<()> {
    let logits = array![
        [2.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.2, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.9, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.5, 0.4, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9],
    ];
    let targets = [0, 1, 2, 3, 4, 5, 6, 6];
    let report = MetricReport::from_logits("demo", logits.view(), &targets)?;

    println!("confusion (rows = truth, columns = prediction):");
    for (label, row) in EmotionLabel::ALL.iter().zip(report.confusion.rows()) {
        println!("  {:<9} {:?}", label.name(), row);
    }
    println!("WAR {:.2}", report.war);
    for (k, acc) in &report.top_k {
        println!("top-{k} {acc:.2}");
    }
    println!("precision {:.2}  F1 {:.2}", report.precision_macro, report.f1_macro);
    Ok(())
}
