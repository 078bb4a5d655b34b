use std::path::Path;

use super::{is_image_file, list_dir_sorted};
use crate::dataset::{DatasetManifest, EmotionLabel, ImageRef, Sample, SourceDataset};
use crate::error::{Error, Result};

/// Maps a JAFFE expression code (the letters of the second dot-separated
/// filename field, e.g. `AN` in `KA.AN1.39.tiff`) to a canonical label.
pub(crate) fn jaffe_code(code: &str) -> Option<EmotionLabel> {
    Some(match code {
        "NE" => EmotionLabel::Neutral,
        "HA" => EmotionLabel::Happy,
        "SA" => EmotionLabel::Sad,
        "SU" => EmotionLabel::Surprise,
        "FE" => EmotionLabel::Fear,
        "DI" => EmotionLabel::Disgust,
        "AN" => EmotionLabel::Anger,
        _ => return None,
    })
}

/// Reads every image in a flat JAFFE directory (`<subject>.<code><n>.<id>.<ext>`).
/// Non-image files such as READMEs are ignored.
pub fn load_jaffe(root: &Path) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::new();
    for path in list_dir_sorted(root)? {
        if !path.is_file() || !is_image_file(&path) {
            continue;
        }
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::format(&path, "non-utf8 filename"))?;
        let fields: Vec<&str> = name.split('.').collect();
        if fields.len() < 4 {
            return Err(Error::format(&path, "expected <subject>.<code><n>.<id>.<ext>"));
        }
        let code: String = fields[1]
            .chars()
            .take_while(|c| c.is_ascii_alphabetic())
            .collect::<String>()
            .to_ascii_uppercase();
        let label = jaffe_code(&code).ok_or_else(|| Error::UnknownLabel {
            path: path.clone(),
            label: code.clone(),
        })?;
        manifest.push(Sample {
            image: ImageRef::File(path),
            label,
            source: SourceDataset::Jaffe,
        });
    }
    if manifest.is_empty() {
        return Err(Error::format(root, "no JAFFE images found"));
    }
    Ok(manifest)
}
