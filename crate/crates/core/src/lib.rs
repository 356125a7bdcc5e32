//! Automatic segmentation of epicardial and mediastinal fat in cardiac CT.
//!
//! The pipeline registers each scan to a common frame by matching a
//! retrosternal atlas, extracts per-pixel texture features from the fat
//! range, and labels every fat pixel with a random forest.

pub mod classifier;
pub mod evaluation;
pub mod error;
pub mod imaging;
pub mod features;
pub mod pipeline;
pub mod registration;

pub use error::{Category, Error, Result};
