use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingKind, ScoreField};
use crate::audio::AudioTensor;
use crate::error::{Error, Result};

/// Classifier-free guidance settings.
///
/// `reference` is the unconditional embedding or a negative prompt.
/// `negatives` optionally overrides the reference per conditioning key, e.g.
/// "drums,guitar,piano" as the reference whenever "bass" is the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfgConfig {
    pub w: f64,
    pub reference: Embedding,
    #[serde(default)]
    pub negatives: BTreeMap<String, Embedding>,
}

impl CfgConfig {
    pub fn new(w: f64, reference: Embedding) -> Result<Self> {
        if reference.kind == EmbeddingKind::Conditional {
            return Err(Error::config(
                "guidance reference must be unconditional or negative",
            ));
        }
        if !w.is_finite() {
            return Err(Error::config("guidance scale must be finite"));
        }
        Ok(Self {
            w,
            reference,
            negatives: BTreeMap::new(),
        })
    }

    pub fn with_negative(mut self, target_key: impl Into<String>, negative: &Embedding) -> Self {
        self.negatives.insert(target_key.into(), negative.as_negative());
        self
    }

    pub fn with_w(&self, w: f64) -> Self {
        Self { w, ..self.clone() }
    }

    pub fn reference_for(&self, z: &Embedding) -> &Embedding {
        self.negatives.get(&z.key).unwrap_or(&self.reference)
    }
}

/// `S(x, z, σ) + w · (S(x, z, σ) − S(x, ref, σ))`.
pub fn cfg_score(
    model: &dyn ScoreField,
    state: &AudioTensor,
    z: &Embedding,
    cfg: &CfgConfig,
    sigma: f64,
) -> Result<AudioTensor> {
    let cond = model.score(state, z, sigma)?;
    state.ensure_same_shape(&cond)?;
    if cfg.w == 0.0 {
        return Ok(cond);
    }
    let reference = model.score(state, cfg.reference_for(z), sigma)?;
    state.ensure_same_shape(&reference)?;
    let w = cfg.w;
    Ok(cond.zip_with(&reference, |c, r| c + w * (c - r)))
}
