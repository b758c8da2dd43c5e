//! Source identification pretraining: mixture and corruption proxy tasks,
//! a UNet backbone trained by hand-written backpropagation, segmentation
//! fine-tuning and evaluation, with a synthetic phantom dataset.

pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod ssltasks;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use grid::{Image, LabelMap, Mask};
pub use scalar::Scalar;
pub use types::*;

pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Slice32 = MultiModalSlice<f32>;
pub type Slice64 = MultiModalSlice<f64>;
pub type Network32 = model::Network<f32>;
pub type Network64 = model::Network<f64>;
