//! Readers that turn the public FER dataset layouts into canonical manifests.

mod affectnet;
mod ckplus;
mod fer2013;
mod jaffe;
mod synthetic;

use std::path::{Path, PathBuf};

pub use affectnet::{load_affectnet, AffectNetOptions, AffectNetPartition, AffectNetSplits};
pub use ckplus::{load_ckplus, CkPlusOptions};
pub use fer2013::{load_fer2013, Fer2013Options, FER_SIDE};
pub use jaffe::load_jaffe;
pub use synthetic::SyntheticAdapter;

use super::{DatasetManifest, Sample};
use crate::error::{Error, Result};

/// Whether a dataset is the one the model was fine-tuned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Cross,
}

/// Something that can produce an evaluation manifest on demand.
pub trait DatasetAdapter: Send + Sync {
    fn name(&self) -> String;
    fn load(&self) -> Result<DatasetManifest>;

    fn domain(&self) -> Domain {
        Domain::Cross
    }
}

/// Held-out AffectNet test set (the presampled validation list).
pub struct AffectNetAdapter {
    pub root: PathBuf,
    pub options: AffectNetOptions,
}

impl DatasetAdapter for AffectNetAdapter {
    fn name(&self) -> String {
        "AffectNet".into()
    }

    fn load(&self) -> Result<DatasetManifest> {
        load_affectnet(&self.root, &self.options).map(|s| s.test)
    }

    fn domain(&self) -> Domain {
        Domain::Source
    }
}

pub struct JaffeAdapter {
    pub root: PathBuf,
}

impl DatasetAdapter for JaffeAdapter {
    fn name(&self) -> String {
        "JAFFE".into()
    }

    fn load(&self) -> Result<DatasetManifest> {
        load_jaffe(&self.root)
    }
}

pub struct CkPlusAdapter {
    pub root: PathBuf,
    pub options: CkPlusOptions,
}

impl DatasetAdapter for CkPlusAdapter {
    fn name(&self) -> String {
        "CK+".into()
    }

    fn load(&self) -> Result<DatasetManifest> {
        load_ckplus(&self.root, &self.options)
    }
}

pub struct Fer2013Adapter {
    pub csv: PathBuf,
    pub options: Fer2013Options,
}

impl DatasetAdapter for Fer2013Adapter {
    fn name(&self) -> String {
        "FER-2013".into()
    }

    fn load(&self) -> Result<DatasetManifest> {
        load_fer2013(&self.csv, &self.options)
    }
}

fn read_csv_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((header, rows))
}

fn sort_by_image(samples: &mut [Sample]) {
    samples.sort_by(|a, b| match (&a.image, &b.image) {
        (super::ImageRef::File(pa), super::ImageRef::File(pb)) => pa.cmp(pb),
        _ => std::cmp::Ordering::Equal,
    });
}

fn list_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::format(dir, e.to_string()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg" | "tif" | "tiff" | "bmp")
    )
}
