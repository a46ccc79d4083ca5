//! Image-space relighting with guided anisotropic diffusion.
//!
//! A shaded render of scene geometry (the relight filter) is multiplied into
//! a camera frame. Filters rendered from coarse meshes are wrong near object
//! silhouettes; diffusing the filter under edge-aware coefficients taken from
//! the camera image repairs them while keeping object boundaries sharp.
//!
//! - [`image`]: float image buffers and resampling
//! - [`guidance`]: feature maps and edge coefficients
//! - [`diffusion`]: diffusion steps, the reference oracle and the cascade
//! - [`compose`]: filter refinement, shadow pass and compositing
//! - [`synth`]: analytic scenes with exact ground truth
//! - [`metrics`] / [`bench`]: PSNR, SSIM and the benchmark harness

pub mod bench;
pub mod compose;
pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod image;
pub mod io;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
pub use image::ImageF;
