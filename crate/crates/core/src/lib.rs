pub mod classifier;
pub mod diagram_metrics;
pub mod error;
pub mod harness;
mod json_io;
pub mod persistence_image;
pub mod ph_engine;
pub mod wafer_sim;

pub use error::{Error, Result};
