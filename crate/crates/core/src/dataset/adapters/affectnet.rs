use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_csv_records, sort_by_image};
use crate::dataset::{DatasetManifest, EmotionLabel, ImageRef, Sample, SourceDataset};
use crate::error::{Error, Result};

/// AffectNet expression id 7.
const CONTEMPT: usize = 7;
/// Ids 8..=10 are "none", "uncertain" and "no-face".
const NON_EMOTION: std::ops::RangeInclusive<usize> = 8..=10;

/// Which annotation list provides the training pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectNetPartition {
    #[default]
    Manual,
    Automatic,
}

impl AffectNetPartition {
    fn train_list(self) -> &'static str {
        match self {
            AffectNetPartition::Manual => "training.csv",
            AffectNetPartition::Automatic => "automatically_annotated.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffectNetOptions {
    pub partition: AffectNetPartition,
    /// Subdirectory of the root that `subDirectory_filePath` is relative to.
    pub images_dir: PathBuf,
    /// Required size of every class in the presampled test set; `None` skips the check.
    pub test_per_class: Option<usize>,
    /// Silently drop ids 8..=10 instead of rejecting them.
    pub drop_non_emotion: bool,
}

impl Default for AffectNetOptions {
    fn default() -> Self {
        Self {
            partition: AffectNetPartition::Manual,
            images_dir: PathBuf::from("images"),
            test_per_class: Some(500),
            drop_non_emotion: false,
        }
    }
}

/// The training pool and the presampled validation list, which serves as
/// the held-out test set.
#[derive(Debug, Clone)]
pub struct AffectNetSplits {
    pub train: DatasetManifest,
    pub test: DatasetManifest,
}

/// Loads an AffectNet root laid out as
///
/// ```text
/// root/training.csv                  (manual partition)
/// root/automatically_annotated.csv   (automatic partition)
/// root/validation.csv                (presampled test set)
/// root/images/<subDirectory_filePath>
/// ```
///
/// Only the `subDirectory_filePath` and `expression` columns are read.
pub fn load_affectnet(root: &Path, opts: &AffectNetOptions) -> Result<AffectNetSplits> {
    let train = load_list(root, opts.partition.train_list(), opts)?;
    let test = load_list(root, "validation.csv", opts)?;
    if let Some(expected) = opts.test_per_class {
        for label in EmotionLabel::ALL {
            if test.count(label) != expected {
                return Err(Error::format(
                    root.join("validation.csv"),
                    format!(
                        "test set has {} samples of {label}, expected {expected}",
                        test.count(label)
                    ),
                ));
            }
        }
    }
    Ok(AffectNetSplits { train, test })
}

fn load_list(root: &Path, list: &str, opts: &AffectNetOptions) -> Result<DatasetManifest> {
    let path = root.join(list);
    if !path.is_file() {
        return Err(Error::format(&path, "annotation list not found"));
    }
    let (header, rows) = read_csv_records(&path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::format(&path, format!("missing column {name}")))
    };
    let file_col = col("subDirectory_filePath")?;
    let expr_col = col("expression")?;

    let mut samples = Vec::with_capacity(rows.len());
    for row in rows {
        let (Some(file), Some(expr)) = (row.get(file_col), row.get(expr_col)) else {
            return Err(Error::format(&path, "short row"));
        };
        let raw = expr.trim();
        let id: usize = raw.parse().map_err(|_| Error::UnknownLabel {
            path: path.clone(),
            label: raw.to_string(),
        })?;
        if id == CONTEMPT {
            continue;
        }
        if NON_EMOTION.contains(&id) && opts.drop_non_emotion {
            continue;
        }
        let label = EmotionLabel::from_id(id).ok_or_else(|| Error::UnknownLabel {
            path: path.clone(),
            label: raw.to_string(),
        })?;
        samples.push(Sample {
            image: ImageRef::File(root.join(&opts.images_dir).join(file.trim())),
            label,
            source: SourceDataset::Affectnet,
        });
    }
    sort_by_image(&mut samples);
    Ok(DatasetManifest::from_samples(samples))
}
