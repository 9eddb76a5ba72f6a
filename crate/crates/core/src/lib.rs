//! Localized-filtration persistent homology losses for segmentation maps.
//!
//! Build a [`filtration::FiltrationField`] from a score grid, turn it into a
//! cubical complex, compute its persistence diagram, and compare diagrams
//! with an optimal matching whose gradient flows back to the input pixels.

pub mod cubical;
pub mod diagram;
pub mod error;
pub mod filtration;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
