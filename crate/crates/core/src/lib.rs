//! Facial expression recognition by transfer learning.
//!
//! The crate covers the whole pipeline: class-balanced sampling of the
//! training pool, image preprocessing, a ViT-style encoder with an
//! ML-Decoder classification head, the fine-tuning loop, and a
//! cross-dataset benchmark harness.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod preprocess;
pub mod training;

pub use error::{Error, Result};
