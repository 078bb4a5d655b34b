//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ferkit::dataset::adapters::SyntheticAdapter;
use ferkit::dataset::{DatasetManifest, EmotionLabel, ImageRef, Sample, SourceDataset};
use ferkit::eval::Classifier;
use ferkit::preprocess::{ImageTensor, PreprocessConfig};
use ferkit::training::{load_examples, Example};
use ferkit::Result;

/// Per-class counts of the manually annotated AffectNet training list
/// (neutral, happy, sad, surprise, fear, disgust, anger).
pub const AFFECTNET_COUNTS: [usize; 7] = [74_874, 134_415, 25_459, 14_090, 6_378, 3_803, 24_882];

/// A manifest with the given class counts and unique file names.
pub fn manifest_with_counts(counts: [usize; 7]) -> DatasetManifest {
    let mut m = DatasetManifest::new();
    for label in EmotionLabel::ALL {
        for i in 0..counts[label.id()] {
            m.push(Sample {
                image: ImageRef::File(format!("{}/{i:06}.jpg", label.name()).into()),
                label,
                source: SourceDataset::Affectnet,
            });
        }
    }
    m
}

pub fn file_name(s: &Sample) -> String {
    match &s.image {
        ImageRef::File(p) => p.display().to_string(),
        other => format!("{other:?}"),
    }
}

/// Brute-force metrics computed by explicit counting, one definition at a
/// time, without going through a confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteMetrics {
    pub war: f64,
    pub top_k: Vec<f64>,
    pub precision_macro: f64,
    pub f1_macro: f64,
}

pub fn brute_metrics(logits: &[Vec<f64>], targets: &[usize], classes: usize) -> BruteMetrics {
    let n = targets.len();
    // argmax with lowest-index ties: first index whose value is not beaten by any
    let pred: Vec<usize> = logits
        .iter()
        .map(|row| (0..classes).find(|&j| row.iter().all(|&v| v <= row[j])).unwrap())
        .collect();

    // WAR = sum over classes of (support/N) * recall
    let mut war = 0.0;
    for c in 0..classes {
        let support = targets.iter().filter(|&&t| t == c).count();
        if support == 0 {
            continue;
        }
        let hit = (0..n).filter(|&i| targets[i] == c && pred[i] == c).count();
        war += (support as f64 / n as f64) * (hit as f64 / support as f64);
    }

    // top-k via a full ordering: descending logit, then ascending index
    let mut top_k = Vec::new();
    for k in 1..=classes {
        let hits = (0..n)
            .filter(|&i| {
                let mut order: Vec<usize> = (0..classes).collect();
                order.sort_by(|&a, &b| logits[i][b].partial_cmp(&logits[i][a]).unwrap().then(a.cmp(&b)));
                order[..k].contains(&targets[i])
            })
            .count();
        top_k.push(100.0 * hits as f64 / n as f64);
    }

    let (mut p_sum, mut f_sum, mut supported) = (0.0, 0.0, 0);
    for c in 0..classes {
        let tp = (0..n).filter(|&i| pred[i] == c && targets[i] == c).count() as f64;
        let fp = (0..n).filter(|&i| pred[i] == c && targets[i] != c).count() as f64;
        let fn_ = (0..n).filter(|&i| pred[i] != c && targets[i] == c).count() as f64;
        if tp + fn_ == 0.0 {
            continue;
        }
        let p = if tp + fp == 0.0 { 0.0 } else { 100.0 * tp / (tp + fp) };
        let r = 100.0 * tp / (tp + fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        f_sum += f;
        supported += 1;
    }
    BruteMetrics {
        war: 100.0 * war,
        top_k,
        precision_macro: p_sum / supported as f64,
        f1_macro: f_sum / supported as f64,
    }
}

/// Reads the label back from the gray level of a synthetic image.
pub struct GrayLevelOracle(pub PreprocessConfig);

impl Classifier for GrayLevelOracle {
    fn num_classes(&self) -> usize {
        7
    }

    fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        let (_, h, w) = image.shape();
        let v = image.data()[[0, h / 2, w / 2]] as f64;
        let level = 255.0 * (v * self.0.std[0] as f64 + self.0.mean[0] as f64);
        let label = SyntheticAdapter::label_from_level(level).expect("synthetic gray level");
        Ok((0..7).map(|k| if k == label.id() { 1.0 } else { 0.0 }).collect())
    }
}

/// `n` separable synthetic examples at toy resolution, cycling through the
/// classes.
pub fn synthetic_examples(n: usize, seed: u64) -> Vec<Example> {
    let per_class = n.div_ceil(7);
    let manifest = SyntheticAdapter::new("synthetic", per_class, seed).generate();
    let mut ex = load_examples(&manifest, &PreprocessConfig::toy()).unwrap();
    ex.truncate(n);
    ex
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
