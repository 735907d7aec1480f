//! Citation-graph clustering with text-embedding augmentation.

pub mod augment;
pub mod community;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod knn;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
