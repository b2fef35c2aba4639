//! Spatio-temporal segmentation of satellite image time series.
//!
//! The crate carries its own small tensor library with reverse-mode
//! differentiation ([`graph`]), the segmentation network ([`model`]), a
//! synthetic crop-phenology data pipeline ([`data`]) and training/evaluation
//! routines ([`train`]).

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod io;
mod kernels;
pub mod model;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

pub use graph::{Activation, BranchTape, Gradients, Graph, Padding, Var};
pub use params::{ModelParams, ParamVars};
pub use tensor::{Real, Tensor};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
