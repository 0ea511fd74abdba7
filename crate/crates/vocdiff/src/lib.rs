//! Training loop, file formats, and CLI around [`vocdiff_core`].

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod melcsv;
pub mod trainer;
pub mod wav;

pub use error::{AppError, AppResult};
pub use vocdiff_core as core;
