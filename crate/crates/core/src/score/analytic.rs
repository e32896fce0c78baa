//! Closed-form scores of Gaussian and Gaussian-mixture data perturbed by the
//! isotropic kernel. These are exact `ScoreField`s, used as oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Embedding, ScoreField};
use crate::audio::AudioTensor;
use crate::error::{Error, Result};

/// Score of `N(μ, (s² + σ²) I)`: `(μ − x) / (s² + σ²)`.
pub fn analytic_gaussian_score(
    x: &AudioTensor,
    mu: &AudioTensor,
    s2: f64,
    sigma: f64,
) -> Result<AudioTensor> {
    x.ensure_same_shape(mu)?;
    let var = s2 + sigma * sigma;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateDensity(format!(
            "s2 + sigma^2 = {var} is not a positive variance"
        )));
    }
    Ok(mu.zip_with(x, |m, v| (m - v) / var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: AudioTensor,
    pub var: f64,
}

/// Score of `Σ_i w_i N(μ_i, (s_i² + σ²) I)` over the whole tensor, as the
/// responsibility-weighted sum of component scores.
pub fn analytic_gmm_score(
    x: &AudioTensor,
    components: &[GmmComponent],
    sigma: f64,
) -> Result<AudioTensor> {
    if components.is_empty() {
        return Err(Error::config("mixture has no components"));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::config("mixture weights must be positive and sum to 1"));
    }
    let d = x.samples().len() as f64;
    let mut logits = Vec::with_capacity(components.len());
    let mut scores = Vec::with_capacity(components.len());
    for c in components {
        let var = c.var + sigma * sigma;
        let score = analytic_gaussian_score(x, &c.mean, c.var, sigma)?;
        let dist2 = x.sub(&c.mean)?.norm_sq();
        logits.push(c.weight.ln() - 0.5 * d * var.ln() - 0.5 * dist2 / var);
        scores.push(score);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let resp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = resp.iter().sum();
    let mut out = x.zeros_like();
    for (r, s) in resp.iter().zip(&scores) {
        out.add_scaled(r / z, s)?;
    }
    Ok(out)
}

/// Element-wise prior on clean samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarPrior {
    Gaussian { mean: f64, var: f64 },
    /// `(weight, mean, var)` triples.
    Mixture(Vec<(f64, f64, f64)>),
}

impl ScalarPrior {
    fn score(&self, x: f64, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        match self {
            ScalarPrior::Gaussian { mean, var } => (mean - x) / (var + s2),
            ScalarPrior::Mixture(comps) => {
                let logits: Vec<f64> = comps
                    .iter()
                    .map(|&(w, m, v)| {
                        let v = v + s2;
                        w.ln() - 0.5 * v.ln() - 0.5 * (x - m).powi(2) / v
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut num = 0.0;
                let mut den = 0.0;
                for (l, &(_, m, v)) in logits.iter().zip(comps) {
                    let r = (l - max).exp();
                    num += r * (m - x) / (v + s2);
                    den += r;
                }
                num / den
            }
        }
    }

    /// Mean of the clean prior.
    pub fn mean(&self) -> f64 {
        match self {
            ScalarPrior::Gaussian { mean, .. } => *mean,
            ScalarPrior::Mixture(c) => c.iter().map(|(w, m, _)| w * m).sum(),
        }
    }
}

/// Exact score field that looks up an element-wise prior by embedding key.
#[derive(Debug, Clone, Default)]
pub struct OracleField {
    priors: BTreeMap<String, ScalarPrior>,
}

impl OracleField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_prior(mut self, embedding: &Embedding, prior: ScalarPrior) -> Self {
        self.priors.insert(embedding.key.clone(), prior);
        self
    }

    pub fn insert(&mut self, key: impl Into<String>, prior: ScalarPrior) {
        self.priors.insert(key.into(), prior);
    }

    pub fn prior(&self, key: &str) -> Option<&ScalarPrior> {
        self.priors.get(key)
    }
}

impl ScoreField for OracleField {
    fn score(&self, state: &AudioTensor, embedding: &Embedding, sigma: f64) -> Result<AudioTensor> {
        let prior = self.priors.get(&embedding.key).ok_or_else(|| {
            Error::config(format!("oracle has no prior for `{}`", embedding.key))
        })?;
        Ok(state.map(|x| prior.score(x, sigma)))
    }
}
