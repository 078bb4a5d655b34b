use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::label::{EmotionLabel, NUM_CLASSES};
use crate::error::{Error, Result};

/// Where the pixels of a sample live.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    /// An encoded raster file on disk (png, jpeg, tiff, bmp).
    File(PathBuf),
    /// Raw 8-bit grayscale pixels, row-major. Replicated to RGB downstream.
    Gray { width: u32, height: u32, pixels: Vec<u8> },
    /// Raw interleaved 8-bit RGB pixels, row-major.
    Rgb { width: u32, height: u32, pixels: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDataset {
    Affectnet,
    Jaffe,
    Ckplus,
    Fer2013,
    Synthetic,
}

impl SourceDataset {
    pub fn display_name(self) -> &'static str {
        match self {
            SourceDataset::Affectnet => "AffectNet",
            SourceDataset::Jaffe => "JAFFE",
            SourceDataset::Ckplus => "CK+",
            SourceDataset::Fer2013 => "FER-2013",
            SourceDataset::Synthetic => "Synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub image: ImageRef,
    pub label: EmotionLabel,
    pub source: SourceDataset,
}

/// An ordered list of samples together with per-class counts.
///
/// `counts()[c]` always equals the number of samples labelled `c`; the
/// fields are private so the two cannot drift apart.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    samples: Vec<Sample>,
    counts: [usize; NUM_CLASSES],
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let mut counts = [0; NUM_CLASSES];
        for s in &samples {
            counts[s.label.id()] += 1;
        }
        Self { samples, counts }
    }

    pub fn push(&mut self, sample: Sample) {
        self.counts[sample.label.id()] += 1;
        self.samples.push(sample);
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn counts(&self) -> &[usize; NUM_CLASSES] {
        &self.counts
    }

    pub fn count(&self, label: EmotionLabel) -> usize {
        self.counts[label.id()]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample indices grouped by class, each group in manifest order.
    pub fn indices_by_label(&self) -> [Vec<usize>; NUM_CLASSES] {
        let mut groups: [Vec<usize>; NUM_CLASSES] = Default::default();
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.label.id()].push(i);
        }
        groups
    }

    /// Writes one JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut samples = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(serde_json::from_str(&line)?);
        }
        Ok(Self::from_samples(samples))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        Self::read_jsonl(BufReader::new(f)).map_err(|e| match e {
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }
}

impl FromIterator<Sample> for DatasetManifest {
    fn from_iter<I: IntoIterator<Item = Sample>>(iter: I) -> Self {
        Self::from_samples(iter.into_iter().collect())
    }
}
