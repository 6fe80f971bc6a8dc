//! Controllable long-horizon video diffusion on a procedural toy world.
//!
//! The crate covers the full lifecycle at desk scale:
//!
//! - [`tensor`]: dense f32 tensors with reverse-mode differentiation plus
//!   the image primitives (blur, resampling) the rest of the stack needs.
//! - [`scene`]: a procedural video world whose depth maps and point tracks
//!   are analytically exact, standing in for learned signal extractors.
//! - [`autoencoder`]: a tiny lossy per-frame autoencoder defining the
//!   latent space.
//! - [`eval`]: SSIM/PSNR/seam metrics, drift curves, and the ablation
//!   harness.
//! - [`train`]: staged training, optimizer, checkpointing.

pub mod autoencoder;
pub mod control;
pub mod degrade;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod history;
pub mod model;
pub mod config;
pub mod params;
pub mod rng;
pub mod rollout;
pub mod scene;
pub mod tensor;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
