//! Fréchet distance between Gaussian fits of short-time log band energies.
//!
//! This is a self-contained proxy for embedding-based audio distances; its
//! values are not comparable to distances computed on learned embeddings.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::audio::AudioTensor;
use crate::error::{Error, Result};
use crate::spectral::{bin_frequency, fft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame: usize,
    pub hop: usize,
    pub n_bands: usize,
    /// Lower edge of the first band; bands are log-spaced up to Nyquist.
    pub f_lo: f64,
    /// Added to band energies before the log.
    pub floor: f64,
    /// Diagonal regularization of the fitted covariances.
    pub ridge: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame: 256,
            hop: 128,
            n_bands: 16,
            f_lo: 50.0,
            floor: 1e-10,
            ridge: 1e-6,
        }
    }
}

/// One feature vector per frame (Hann window, log band energies), pooled
/// over all channels.
pub fn spectral_features(clip: &AudioTensor, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.frame < 4 || cfg.hop == 0 || cfg.n_bands == 0 {
        return Err(Error::config("invalid feature configuration"));
    }
    let sr = clip.sample_rate();
    let nyquist = sr as f64 / 2.0;
    if !(cfg.f_lo > 0.0 && cfg.f_lo < nyquist) {
        return Err(Error::config("f_lo must lie in (0, nyquist)"));
    }
    let ratio = (nyquist / cfg.f_lo).ln();
    let band_of = |f: f64| -> Option<usize> {
        if f < cfg.f_lo {
            return None;
        }
        Some((((f / cfg.f_lo).ln() / ratio * cfg.n_bands as f64) as usize).min(cfg.n_bands - 1))
    };
    let window: Vec<f64> = (0..cfg.frame)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / cfg.frame as f64).cos())
        .collect();
    let bands: Vec<Option<usize>> = (0..=cfg.frame / 2)
        .map(|k| band_of(bin_frequency(k, cfg.frame, sr)))
        .collect();
    let mut feats = Vec::new();
    for c in 0..clip.channels() {
        let x = clip.channel(c);
        let mut start = 0;
        while start + cfg.frame <= x.len() {
            let frame: Vec<f64> = x[start..start + cfg.frame]
                .iter()
                .zip(&window)
                .map(|(a, w)| a * w)
                .collect();
            let spec = fft(&frame);
            let mut energy = vec![0.0; cfg.n_bands];
            for (k, b) in bands.iter().enumerate() {
                if let Some(b) = b {
                    energy[*b] += spec[k].norm_sqr();
                }
            }
            feats.push(energy.into_iter().map(|e| (e + cfg.floor).ln()).collect());
            start += cfg.hop;
        }
    }
    if feats.is_empty() {
        return Err(Error::config("clip shorter than one analysis frame"));
    }
    Ok(feats)
}

fn fit(features: &[Vec<f64>], ridge: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d = features[0].len();
    let n = features.len() as f64;
    let mut mu = DVector::zeros(d);
    for f in features {
        mu += DVector::from_column_slice(f);
    }
    mu /= n;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f) - &mu;
        cov += &c * c.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    (mu, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^{1/2})`. The trace of the cross
/// term is the sum of singular values of `Σa^{1/2} Σb^{1/2}`, which avoids
/// square roots of near-zero eigenvalues.
pub fn frechet_gaussian(
    mu_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> f64 {
    let diff = (mu_a - mu_b).norm_squared();
    let cross: f64 = (sym_sqrt(cov_a) * sym_sqrt(cov_b)).singular_values().sum();
    (diff + cov_a.trace() + cov_b.trace() - 2.0 * cross).max(0.0)
}

/// Fréchet distance between the frame-feature Gaussians of two clip sets.
pub fn spectral_frechet(set_a: &[AudioTensor], set_b: &[AudioTensor], cfg: &FeatureConfig) -> Result<f64> {
    if set_a.len() < 2 || set_b.len() < 2 {
        return Err(Error::config("each clip set needs at least two clips"));
    }
    let collect = |set: &[AudioTensor]| -> Result<Vec<Vec<f64>>> {
        let mut all = Vec::new();
        for clip in set {
            all.extend(spectral_features(clip, cfg)?);
        }
        Ok(all)
    };
    let (mu_a, cov_a) = fit(&collect(set_a)?, cfg.ridge);
    let (mu_b, cov_b) = fit(&collect(set_b)?, cfg.ridge);
    Ok(frechet_gaussian(&mu_a, &cov_a, &mu_b, &cov_b))
}
