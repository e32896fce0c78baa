//! The score-field boundary: anything mapping `(state, embedding, σ)` to a
//! score estimate can drive the samplers and the compositional inference.

mod analytic;
mod embedding;
mod guidance;
mod kernel;

pub use analytic::{
    analytic_gaussian_score, analytic_gmm_score, GmmComponent, OracleField, ScalarPrior,
};
pub use embedding::{
    split_labels, Embedding, EmbeddingKind, LabelEncoder, SourceSpec, UNCONDITIONAL_KEY,
};
pub use guidance::{cfg_score, CfgConfig};
pub use kernel::{dsm_loss, perturb};

use crate::audio::AudioTensor;
use crate::error::Result;

/// A (possibly learned) estimate of `∇ log p_σ(state | embedding)`.
///
/// Implementations must return a tensor of the same shape as `state` and
/// must be callable concurrently through a shared reference.
pub trait ScoreField: Send + Sync {
    fn score(&self, state: &AudioTensor, embedding: &Embedding, sigma: f64)
        -> Result<AudioTensor>;
}

impl<T: ScoreField + ?Sized> ScoreField for &T {
    fn score(&self, state: &AudioTensor, embedding: &Embedding, sigma: f64) -> Result<AudioTensor> {
        (**self).score(state, embedding, sigma)
    }
}

impl<T: ScoreField + ?Sized> ScoreField for Box<T> {
    fn score(&self, state: &AudioTensor, embedding: &Embedding, sigma: f64) -> Result<AudioTensor> {
        (**self).score(state, embedding, sigma)
    }
}

impl<T: ScoreField + ?Sized> ScoreField for std::sync::Arc<T> {
    fn score(&self, state: &AudioTensor, embedding: &Embedding, sigma: f64) -> Result<AudioTensor> {
        (**self).score(state, embedding, sigma)
    }
}
