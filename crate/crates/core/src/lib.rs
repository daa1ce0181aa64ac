pub mod classifier;
pub mod detection;
pub mod error;
pub mod features;
pub mod image;
pub mod lanemodel;
pub mod pipeline;
pub mod preprocess;
pub mod smoothing;

pub use error::{Error, Result};
