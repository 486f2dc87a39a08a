//! Two-stage photo enhancement: a luma tone curve applied through a per-pixel
//! gain map (brightness without hue shift), followed by cross-channel color
//! curves with a resolution-normalized spatial term. Both stages are
//! modulated by a normalized six-value EXIF shooting-condition vector.
//!
//! Alongside the model the crate provides the color math it rests on
//! (YUV, HSV, CIE Lab, ΔE), the hue-palette loss, EXIF ingestion and k-means
//! clustering, PSNR/SSIM, and a deterministic Adam training loop.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, which is what the CLI and training use.

pub mod color;
pub mod error;
pub mod exif;
pub mod image;
pub mod io;
pub mod kmeans;
pub mod luminance;
pub mod metrics;
pub mod model;
pub mod palette;
pub mod scalar;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use exif::ExifVector;
pub use scalar::Real;

pub type ImageRgb = image::Image<image::Rgb, f64>;
pub type ImageYuv = image::Image<image::Yuv, f64>;
pub type ImageHsv = image::Image<image::Hsv, f64>;
pub type ImageLab = image::Image<image::Lab, f64>;
pub type ImageRgbF32 = image::Image<image::Rgb, f32>;
pub type Plane = image::Plane<f64>;
pub type GainMap = luminance::GainMap<f64>;
pub type NormalizedCondition = exif::NormalizedCondition<f64>;
pub type ToneCurve = model::ToneCurve<f64>;
pub type EnhancerParams = model::EnhancerParams<f64>;
pub type PaletteColors = palette::PaletteColors<f64>;
pub type LabPixel = [f64; 3];
