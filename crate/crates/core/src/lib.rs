//! Cutout regularization for small convolutional networks: dataset parsers,
//! a deterministic augmentation pipeline, a from-scratch CNN trainer, and the
//! analysis and length-selection tooling around them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the concrete instantiations.

pub mod analysis;
pub mod augment;
pub mod cli;
pub mod datasets;
pub mod gridsearch;
pub mod pipeline;
pub mod scalar;
pub mod smallnet;
pub mod tensor;

pub use scalar::Scalar;

pub type ImageF32 = tensor::Image<f32>;
pub type ImageF64 = tensor::Image<f64>;
pub type Tensor4F32 = tensor::Tensor4<f32>;
pub type Tensor4F64 = tensor::Tensor4<f64>;
pub type DatasetF32 = datasets::Dataset<f32>;
pub type DatasetF64 = datasets::Dataset<f64>;
pub type SmallCnnF32 = smallnet::SmallCnn<f32>;
pub type SmallCnnF64 = smallnet::SmallCnn<f64>;
