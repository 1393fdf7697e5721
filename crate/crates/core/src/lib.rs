//! Tile-based adaptive 360° video streaming: viewport prediction, viewport to
//! tile mapping, probabilistic tile visibility and multi-user rate allocation.

pub mod allocator;
pub mod error;
pub mod error_model;
pub mod geometry;
pub mod io;
pub mod predictor;
pub mod ratedist;
pub mod sim;
pub mod verify;
pub mod visibility;

pub use error::{Error, Result};
