//! File formats, model persistence and the experiment driver around `ebm-core`.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod model_file;
pub mod pgm;

pub use error::{IoError, IoResult};
