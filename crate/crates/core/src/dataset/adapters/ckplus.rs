use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{is_image_file, list_dir_sorted};
use crate::dataset::{DatasetManifest, EmotionLabel, ImageRef, Sample, SourceDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkPlusOptions {
    pub images_dir: PathBuf,
    pub labels_dir: PathBuf,
    /// Also emit the first frame of each labelled sequence as `neutral`.
    pub first_frame_neutral: bool,
}

impl Default for CkPlusOptions {
    fn default() -> Self {
        Self {
            images_dir: PathBuf::from("cohn-kanade-images"),
            labels_dir: PathBuf::from("Emotion"),
            first_frame_neutral: false,
        }
    }
}

/// CK+ emotion codes. `None` means a valid code that is dropped (contempt).
fn ckplus_code(code: u32) -> Option<Option<EmotionLabel>> {
    Some(match code {
        0 => Some(EmotionLabel::Neutral),
        1 => Some(EmotionLabel::Anger),
        2 => None,
        3 => Some(EmotionLabel::Disgust),
        4 => Some(EmotionLabel::Fear),
        5 => Some(EmotionLabel::Happy),
        6 => Some(EmotionLabel::Sad),
        7 => Some(EmotionLabel::Surprise),
        _ => return None,
    })
}

/// Loads CK+ from its standard tree:
///
/// ```text
/// root/cohn-kanade-images/S005/001/S005_001_00000001.png ...
/// root/Emotion/S005/001/S005_001_00000011_emotion.txt
/// ```
///
/// Only sequences with an emotion file are used, and each contributes its
/// last frame (the apex of the expression).
pub fn load_ckplus(root: &Path, opts: &CkPlusOptions) -> Result<DatasetManifest> {
    let labels_root = root.join(&opts.labels_dir);
    if !labels_root.is_dir() {
        return Err(Error::format(&labels_root, "emotion label directory not found"));
    }
    let mut manifest = DatasetManifest::new();
    for subject in list_dir_sorted(&labels_root)? {
        if !subject.is_dir() {
            continue;
        }
        for sequence in list_dir_sorted(&subject)? {
            if !sequence.is_dir() {
                continue;
            }
            let Some(label_file) = list_dir_sorted(&sequence)?
                .into_iter()
                .find(|p| p.extension().is_some_and(|e| e == "txt"))
            else {
                continue;
            };
            let text = std::fs::read_to_string(&label_file)?;
            let value: f64 = text
                .trim()
                .parse()
                .map_err(|_| Error::format(&label_file, format!("bad label {:?}", text.trim())))?;
            let unknown = || Error::UnknownLabel {
                path: label_file.clone(),
                label: text.trim().to_string(),
            };
            if value.fract() != 0.0 || value < 0.0 {
                return Err(unknown());
            }
            let Some(label) = ckplus_code(value as u32).ok_or_else(unknown)? else {
                continue;
            };

            let rel = sequence.strip_prefix(&labels_root).expect("walked from labels root");
            let frame_dir = root.join(&opts.images_dir).join(rel);
            let frames: Vec<PathBuf> = list_dir_sorted(&frame_dir)?
                .into_iter()
                .filter(|p| p.is_file() && is_image_file(p))
                .collect();
            let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
                return Err(Error::format(&frame_dir, "labelled sequence has no frames"));
            };
            if opts.first_frame_neutral && frames.len() > 1 {
                manifest.push(Sample {
                    image: ImageRef::File(first.clone()),
                    label: EmotionLabel::Neutral,
                    source: SourceDataset::Ckplus,
                });
            }
            manifest.push(Sample {
                image: ImageRef::File(last.clone()),
                label,
                source: SourceDataset::Ckplus,
            });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_sequence(root: &Path, subject: &str, seq: &str, frames: usize, code: Option<&str>) {
        let img = root.join("cohn-kanade-images").join(subject).join(seq);
        std::fs::create_dir_all(&img).unwrap();
        for f in 1..=frames {
            std::fs::write(img.join(format!("{subject}_{seq}_{f:08}.png")), b"").unwrap();
        }
        let lab = root.join("Emotion").join(subject).join(seq);
        std::fs::create_dir_all(&lab).unwrap();
        if let Some(code) = code {
            std::fs::write(
                lab.join(format!("{subject}_{seq}_{frames:08}_emotion.txt")),
                format!("   {code}\n"),
            )
            .unwrap();
        }
    }

    #[test]
    fn last_frame_of_each_labelled_sequence() {
        let dir = tempfile::tempdir().unwrap();
        make_sequence(dir.path(), "S005", "001", 20, Some("5.0000000e+00"));
        make_sequence(dir.path(), "S005", "002", 4, None);
        make_sequence(dir.path(), "S010", "003", 7, Some("2.0000000e+00"));
        make_sequence(dir.path(), "S011", "001", 3, Some("1.0000000e+00"));

        let m = load_ckplus(dir.path(), &CkPlusOptions::default()).unwrap();
        assert_eq!(m.len(), 2);
        let s = &m.samples()[0];
        assert_eq!(s.label, EmotionLabel::Happy);
        assert_eq!(
            s.image,
            ImageRef::File(dir.path().join("cohn-kanade-images/S005/001/S005_001_00000020.png"))
        );
        assert_eq!(m.samples()[1].label, EmotionLabel::Anger);
    }

    #[test]
    fn optional_first_frame_neutral() {
        let dir = tempfile::tempdir().unwrap();
        make_sequence(dir.path(), "S005", "001", 5, Some("7.0000000e+00"));
        let opts = CkPlusOptions {
            first_frame_neutral: true,
            ..Default::default()
        };
        let m = load_ckplus(dir.path(), &opts).unwrap();
        assert_eq!(m.counts()[EmotionLabel::Neutral.id()], 1);
        assert_eq!(m.counts()[EmotionLabel::Surprise.id()], 1);
    }

    #[test]
    fn unknown_codes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        make_sequence(dir.path(), "S005", "001", 2, Some("9.0000000e+00"));
        assert!(matches!(
            load_ckplus(dir.path(), &CkPlusOptions::default()),
            Err(Error::UnknownLabel { .. })
        ));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_ckplus(empty.path(), &CkPlusOptions::default()),
            Err(Error::Format { .. })
        ));
    }
}
