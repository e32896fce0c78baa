use rand::Rng;

use super::{Embedding, ScoreField};
use crate::audio::AudioTensor;
use crate::error::{Error, Result};
use crate::rng::standard_normals;

/// Draws from the perturbation kernel `N(x0, σ² I)`.
pub fn perturb(x0: &AudioTensor, sigma: f64, rng: &mut impl Rng) -> Result<AudioTensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x0.clone());
    }
    let eps = standard_normals(rng, x0.samples().len());
    Ok(x0.with_samples(
        x0.samples()
            .iter()
            .zip(eps)
            .map(|(x, e)| x + sigma * e)
            .collect(),
    ))
}

/// Denoising score-matching loss for one draw:
/// `‖S(x_t, z, σ) − (x0 − x_t)/σ²‖²` with `x_t ~ N(x0, σ² I)`.
pub fn dsm_loss(
    model: &dyn ScoreField,
    x0: &AudioTensor,
    z: &Embedding,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::config(format!("dsm_loss needs sigma > 0, got {sigma}")));
    }
    let xt = perturb(x0, sigma, rng)?;
    let predicted = model.score(&xt, z, sigma)?;
    xt.ensure_same_shape(&predicted)?;
    let s2 = sigma * sigma;
    Ok(predicted
        .samples()
        .iter()
        .zip(x0.samples().iter().zip(xt.samples()))
        .map(|(p, (a, b))| (p - (a - b) / s2).powi(2))
        .sum())
}
