//! Coarse-to-fine 3D Gaussian splatting for sparse-view object reconstruction.
//!
//! A coarse model is trained on the sparse reference views with random point
//! masks. Its Gaussian centers and base colors seed a fine model, and its
//! renders at interpolated poses are added as pseudo views. The fine model is
//! then trained on the union with FPS/kNN patch masks.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the concrete types used by the training pipeline (`f32`) and by
//! gradient checks (`f64`).

pub mod augment;
pub mod cli;
pub mod density;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod io;
pub mod loss;
pub mod masking;
pub mod math;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Gaussian = gaussian::Gaussian<f32>;
pub type GaussianCloud = gaussian::GaussianCloud<f32>;
pub type Camera = gaussian::Camera<f32>;
pub type Image = image::Image<f32>;
pub type DepthMap = image::DepthMap<f32>;
pub type RenderOutput = raster::RenderOutput<f32>;
pub type GradientBuffer = raster::GradientBuffer<f32>;
pub type ViewRecord = augment::ViewRecord<f32>;
pub type ViewSet = augment::ViewSet<f32>;

pub type Gaussian64 = gaussian::Gaussian<f64>;
pub type GaussianCloud64 = gaussian::GaussianCloud<f64>;
pub type Camera64 = gaussian::Camera<f64>;
pub type Image64 = image::Image<f64>;
pub type DepthMap64 = image::DepthMap<f64>;
