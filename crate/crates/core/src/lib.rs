//! Tensorized focal-modulation encoder (FATE) for multi-station weather
//! forecasting, plus the supporting statistics used to analyse climate
//! parameters (Pearson correlation matrices, K-means).
//!
//! Everything runs on a small in-crate tensor engine with reverse-mode
//! autodiff; no external numeric framework is involved.

pub mod analysis;
pub mod data;
pub mod error;
pub mod format;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{FateError, Result};
pub use tensor::{Graph, Tensor, Var};
