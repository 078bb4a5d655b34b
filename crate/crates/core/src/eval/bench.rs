//! Cross-dataset benchmark: load each dataset, preprocess, classify, score.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::metrics::MetricReport;
use crate::dataset::adapters::{DatasetAdapter, Domain};
use crate::error::{Error, Result};
use crate::model::{model_input, ModelState};
use crate::preprocess::{ImageTensor, PreprocessConfig};

/// Anything that maps a preprocessed image to class logits.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>>;
}

impl Classifier for ModelState {
    fn num_classes(&self) -> usize {
        self.config().decoder.num_classes
    }

    fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        Ok(ModelState::logits(self, model_input(image)?.view())?.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub domain: Domain,
    pub outcome: std::result::Result<MetricReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
}

/// Scores one dataset.
pub fn evaluate_dataset(
    classifier: &dyn Classifier,
    adapter: &dyn DatasetAdapter,
    pcfg: &PreprocessConfig,
) -> Result<MetricReport> {
    let manifest = adapter.load()?;
    if manifest.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let k = classifier.num_classes();
    let mut logits = Array2::zeros((manifest.len(), k));
    let mut targets = Vec::with_capacity(manifest.len());
    for (sample, mut row) in manifest.samples().iter().zip(logits.rows_mut()) {
        let image = pcfg.load(&sample.image)?;
        let out = classifier.logits(&image)?;
        if out.len() != k {
            return Err(Error::LengthMismatch {
                left: out.len(),
                right: k,
            });
        }
        row.assign(&ndarray::ArrayView1::from(&out));
        targets.push(sample.label.id());
    }
    MetricReport::from_logits(adapter.name(), logits.view(), &targets)
}

/// Evaluates every adapter (concurrently) and keeps their order. A failing
/// dataset becomes an error row.
pub fn benchmark(
    classifier: &dyn Classifier,
    adapters: &[Box<dyn DatasetAdapter>],
    pcfg: &PreprocessConfig,
) -> BenchmarkReport {
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = adapters
            .iter()
            .map(|a| scope.spawn(move || evaluate_dataset(classifier, a.as_ref(), pcfg)))
            .collect();
        adapters
            .iter()
            .zip(handles)
            .map(|(a, h)| {
                let outcome = match h.join() {
                    Ok(r) => r.map_err(|e| e.to_string()),
                    Err(_) => Err("evaluation panicked".to_string()),
                };
                BenchRow {
                    dataset: a.name(),
                    domain: a.domain(),
                    outcome,
                }
            })
            .collect()
    });
    BenchmarkReport { rows }
}

pub const TABLE_COLUMNS: [&str; 5] = ["Dataset", "WAR", "Top-2 Acc", "Precision", "F1"];

/// Published full-scale scores, `(dataset, WAR, Top-2, Precision, F1)`.
/// Printed for comparison only.
pub const REFERENCE_ROWS: [(&str, f64, f64, f64, f64); 4] = [
    ("JAFFE", 58.57, 76.19, 75.25, 56.20),
    ("CK+", 80.00, 96.67, 70.77, 76.15),
    ("FER-2013", 53.87, 74.80, 49.59, 49.13),
    ("AffectNet", 62.52, 83.50, 62.63, 62.41),
];

/// Published cross-domain WAR of other methods:
/// `(method, backbone, [JAFFE, CK+, FER-2013, AffectNet])`.
pub const CROSS_DOMAIN_REFERENCE: [(&str, &str, [Option<f64>; 4]); 3] = [
    ("ECAN", "ResNet50", [Some(57.28), Some(79.77), Some(56.46), Some(51.84)]),
    ("AGRA", "ResNet50", [Some(61.50), Some(85.27), Some(58.95), None]),
    ("CSRL", "ResNet18", [Some(66.67), Some(88.37), Some(55.53), None]),
];

fn render(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| {
            rows.iter()
                .map(|r| r.get(c).map_or(0, |s| s.chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        writeln!(out, "{}", cells.join(" | ").trim_end()).expect("write to String");
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            writeln!(out, "{}", rule.join("-|-")).expect("write to String");
        }
    }
    out
}

fn label(row: &BenchRow) -> String {
    match row.domain {
        Domain::Source => format!("{} (source domain)", row.dataset),
        Domain::Cross => row.dataset.clone(),
    }
}

impl BenchmarkReport {
    /// Aligned plain-text table with the columns of [`TABLE_COLUMNS`].
    pub fn render_table(&self) -> String {
        let mut rows = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        for r in &self.rows {
            match &r.outcome {
                Ok(m) => rows.push(vec![
                    label(r),
                    format!("{:.2}", m.war),
                    format!("{:.2}", m.top2()),
                    format!("{:.2}", m.precision_macro),
                    format!("{:.2}", m.f1_macro),
                ]),
                Err(e) => rows.push(vec![label(r), format!("error: {e}")]),
            }
        }
        render(&rows)
    }

    /// One JSON record per dataset.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The published scores as a table in the same layout, plus the cross-domain
/// comparison. Never computed by this crate.
pub fn render_reference_tables() -> String {
    let mut rows = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for (name, war, top2, p, f1) in REFERENCE_ROWS {
        rows.push(vec![
            name.to_string(),
            format!("{war:.2}"),
            format!("{top2:.2}"),
            format!("{p:.2}"),
            format!("{f1:.2}"),
        ]);
    }
    let mut other = vec![["Method", "Backbone", "JAFFE", "CK+", "FER-2013", "AffectNet"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for (method, backbone, wars) in CROSS_DOMAIN_REFERENCE {
        let mut row = vec![method.to_string(), backbone.to_string()];
        row.extend(wars.iter().map(|w| w.map_or("--".to_string(), |v| format!("{v:.2}"))));
        other.push(row);
    }
    format!(
        "Reference only: published full-scale results (not computed)\n{}\nReference only: cross-domain WAR of other methods (not computed)\n{}",
        render(&rows),
        render(&other)
    )
}
