pub mod coefficients;
pub mod datagen;
pub mod error;
pub mod evalmetrics;
pub mod explainer;
pub mod gte;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod svg;

pub use error::{Error, Result};
