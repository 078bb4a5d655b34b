use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The seven canonical expression classes, in canonical id order.
///
/// Contempt is deliberately absent: every adapter drops it before a sample
/// can reach a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum EmotionLabel {
    Neutral = 0,
    Happy = 1,
    Sad = 2,
    Surprise = 3,
    Fear = 4,
    Disgust = 5,
    Anger = 6,
}

pub const NUM_CLASSES: usize = 7;

impl EmotionLabel {
    pub const ALL: [EmotionLabel; NUM_CLASSES] = [
        EmotionLabel::Neutral,
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Surprise,
        EmotionLabel::Fear,
        EmotionLabel::Disgust,
        EmotionLabel::Anger,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Anger => "anger",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == lower)
            .ok_or_else(|| format!("not a canonical emotion: {s:?}"))
    }
}

impl From<EmotionLabel> for u8 {
    fn from(l: EmotionLabel) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for EmotionLabel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        EmotionLabel::from_id(v as usize).ok_or_else(|| format!("label id {v} outside 0..7"))
    }
}
