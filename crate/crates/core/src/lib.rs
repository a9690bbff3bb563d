//! Feature learning and linear-SVM classification for ROI-style tabular data.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below pin the common `f64` instantiations.

pub mod data;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod linalg;
pub mod pca;
pub mod sae;
pub mod svm;
pub mod ttest;
pub mod verify;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
