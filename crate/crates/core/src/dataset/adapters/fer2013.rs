use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_csv_records;
use crate::dataset::{DatasetManifest, EmotionLabel, ImageRef, Sample, SourceDataset};
use crate::error::{Error, Result};

pub const FER_SIDE: u32 = 48;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fer2013Options {
    /// Keep only rows whose `usage` column matches (e.g. `PrivateTest`).
    pub usage: Option<String>,
}

fn fer_code(code: usize) -> Option<EmotionLabel> {
    Some(match code {
        0 => EmotionLabel::Anger,
        1 => EmotionLabel::Disgust,
        2 => EmotionLabel::Fear,
        3 => EmotionLabel::Happy,
        4 => EmotionLabel::Sad,
        5 => EmotionLabel::Surprise,
        6 => EmotionLabel::Neutral,
        _ => return None,
    })
}

/// Reads the FER-2013 CSV (`emotion,pixels,usage`; header case-insensitive).
/// Each row becomes an inline 48x48 grayscale sample.
pub fn load_fer2013(csv: &Path, opts: &Fer2013Options) -> Result<DatasetManifest> {
    if !csv.is_file() {
        return Err(Error::format(csv, "FER-2013 csv not found"));
    }
    let (header, rows) = read_csv_records(csv)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::format(csv, format!("missing column {name}")))
    };
    let emotion_col = col("emotion")?;
    let pixels_col = col("pixels")?;
    let usage_col = col("usage").ok();

    let expected = (FER_SIDE * FER_SIDE) as usize;
    let mut manifest = DatasetManifest::new();
    for (line, row) in rows.iter().enumerate() {
        if let (Some(want), Some(c)) = (&opts.usage, usage_col) {
            if !row.get(c).is_some_and(|u| u.trim().eq_ignore_ascii_case(want)) {
                continue;
            }
        }
        let raw = row.get(emotion_col).unwrap_or("").trim();
        let label = raw
            .parse::<usize>()
            .ok()
            .and_then(fer_code)
            .ok_or_else(|| Error::UnknownLabel {
                path: csv.to_path_buf(),
                label: raw.to_string(),
            })?;
        let pixels = row
            .get(pixels_col)
            .unwrap_or("")
            .split_ascii_whitespace()
            .map(str::parse::<u8>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(csv, format!("row {}: {e}", line + 1)))?;
        if pixels.len() != expected {
            return Err(Error::format(
                csv,
                format!("row {}: {} pixels, expected {expected}", line + 1, pixels.len()),
            ));
        }
        manifest.push(Sample {
            image: ImageRef::Gray {
                width: FER_SIDE,
                height: FER_SIDE,
                pixels,
            },
            label,
            source: SourceDataset::Fer2013,
        });
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: usize, usage: &str, n: usize) -> String {
        let px: Vec<String> = (0..n).map(|i| (i % 256).to_string()).collect();
        format!("{label},{},{usage}\n", px.join(" "))
    }

    #[test]
    fn rows_become_48x48_gray_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fer2013.csv");
        let body = format!(
            "emotion,pixels,Usage\n{}{}",
            row(3, "Training", 2304),
            row(6, "PrivateTest", 2304)
        );
        std::fs::write(&path, body).unwrap();

        let m = load_fer2013(&path, &Fer2013Options::default()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.samples()[0].label, EmotionLabel::Happy);
        assert_eq!(m.samples()[1].label, EmotionLabel::Neutral);
        match &m.samples()[0].image {
            ImageRef::Gray { width, height, pixels } => {
                assert_eq!((*width, *height, pixels.len()), (48, 48, 2304));
                assert_eq!(pixels[300], (300 % 256) as u8);
            }
            other => panic!("unexpected {other:?}"),
        }

        let opts = Fer2013Options {
            usage: Some("privatetest".into()),
        };
        assert_eq!(load_fer2013(&path, &opts).unwrap().len(), 1);
    }

    #[test]
    fn malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.csv");
        std::fs::write(&path, format!("emotion,pixels,usage\n{}", row(0, "Training", 2303))).unwrap();
        assert!(matches!(
            load_fer2013(&path, &Fer2013Options::default()),
            Err(Error::Format { .. })
        ));

        std::fs::write(&path, format!("emotion,pixels,usage\n{}", row(7, "Training", 2304))).unwrap();
        assert!(matches!(
            load_fer2013(&path, &Fer2013Options::default()),
            Err(Error::UnknownLabel { .. })
        ));

        assert!(matches!(
            load_fer2013(&dir.path().join("missing.csv"), &Fer2013Options::default()),
            Err(Error::Format { .. })
        ));
    }
}
