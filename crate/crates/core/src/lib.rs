//! Compositional diffusion inference over mixture score models.
//!
//! A score model trained only on mixtures and label embeddings is reused to
//! sample coherent sets of sources, accompaniments for given stems, and
//! separations of an observed mixture. The pieces:
//!
//! - [`audio`], [`schedule`], [`partition`]: shared domain types.
//! - [`score`]: the score-field plugin boundary, analytic oracles, label
//!   encoder, perturbation kernel and classifier-free guidance.
//! - [`denoiser`]: a small trainable spectral denoiser used at desk scale.
//! - [`samplers`]: Euler-ancestral and DPM2-ancestral integrators over
//!   coupled trajectories.
//! - [`gmsdi`]: total, partition and partial generation; separator and
//!   extractor.
//! - [`eval`]: SI-SDR, grid search and a spectral Fréchet proxy.
//! - [`data`]: synthetic band-disjoint datasets and WAV I/O.
//! - [`jobs`]: reproducible job configs and run manifests used by the CLI.

pub mod audio;
pub mod data;
pub mod denoiser;
pub mod error;
pub mod eval;
pub mod gmsdi;
pub mod jobs;
pub mod partition;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod score;
pub mod spectral;

pub use audio::{mix, AudioTensor};
pub use error::{Error, Result};
pub use partition::Partition;
pub use schedule::{build_sigma_schedule, NoiseSchedule};
