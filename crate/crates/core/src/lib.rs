//! Volumetric super-resolution with 3D densely connected networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`volume`]: the `Volume3D` container, raw-f32 persistence, synthetic
//!   phantoms, intensity normalisation and the interpolation baselines.
//! - [`kspace`]: the frequency-domain truncation operator that turns a
//!   high-resolution volume into a same-size low-resolution one.
//! - [`metrics`]: SSIM, PSNR, NRMSE and summary reports.
//! - [`autodiff`]: a small tape-based reverse-mode engine with the layers the
//!   networks need (3D convolution, batch norm, ELU, concat, MSE, Adam).
//! - [`models`]: DCSRN and FSRCNN builders.
//! - [`patch`]: random cube sampling and sliding-window tiling/merging.
//! - [`training`]: dataset splits, the training loop, whole-volume inference
//!   and model evaluation.

pub mod autodiff;
pub mod error;
pub mod kspace;
pub mod metrics;
pub mod models;
pub mod patch;
pub mod training;
pub mod volume;

pub use autodiff::{AdamState, Mode, Scalar, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use kspace::{ComplexVolume, DegradeSpec};
pub use metrics::{DataRange, MetricRow, MetricsReport, SsimParams};
pub use models::{Architecture, DcsrnConfig, FsrcnnConfig, ModelGraph};
pub use patch::{PatchSpec, TilePlan};
pub use training::{DatasetManifest, Method, Split, TrainConfig};
pub use volume::{PhantomSpec, Volume3D};
