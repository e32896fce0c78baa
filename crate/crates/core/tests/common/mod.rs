//! Oracles shared by the integration tests.
#![allow(dead_code)]

use gmsdi_core::samplers::{IntegratorConfig, SamplerKind};
use gmsdi_core::score::{CfgConfig, Embedding, LabelEncoder, OracleField, ScalarPrior};
use gmsdi_core::{build_sigma_schedule, AudioTensor, NoiseSchedule};

pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 10.0;

/// Expected state of an ancestral sampler driven by a score that is affine
/// in the state: the means follow `dm/dσ = −2σ s(σ, m)`. Integrated with
/// RK4 in `ln σ` from `sigma_max` to `sigma_min`.
pub fn mean_flow(
    score: impl Fn(f64, &[f64]) -> Vec<f64>,
    m0: &[f64],
    sigma_max: f64,
    sigma_min: f64,
    n: usize,
) -> Vec<f64> {
    let rate = |u: f64, m: &[f64]| -> Vec<f64> {
        let s2 = (2.0 * u).exp();
        score(u.exp(), m).into_iter().map(|v| -2.0 * s2 * v).collect()
    };
    let axpy = |m: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        m.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let (u0, u1) = (sigma_max.ln(), sigma_min.ln());
    let h = (u1 - u0) / n as f64;
    let mut m = m0.to_vec();
    for i in 0..n {
        let u = u0 + i as f64 * h;
        let k1 = rate(u, &m);
        let k2 = rate(u + h / 2.0, &axpy(&m, &k1, h / 2.0));
        let k3 = rate(u + h / 2.0, &axpy(&m, &k2, h / 2.0));
        let k4 = rate(u + h, &axpy(&m, &k3, h));
        for j in 0..m.len() {
            m[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    m
}

/// Score of `N(mu, v)` perturbed to level `sigma`.
pub fn gauss(mu: f64, v: f64, sigma: f64, x: f64) -> f64 {
    (mu - x) / (v + sigma * sigma)
}

pub fn mean(x: &AudioTensor) -> f64 {
    x.samples().iter().sum::<f64>() / x.samples().len() as f64
}

pub fn variance(x: &AudioTensor) -> f64 {
    let m = mean(x);
    x.samples().iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.samples().len() - 1) as f64
}

pub fn constant(value: f64, n: usize) -> AudioTensor {
    AudioTensor::mono(vec![value; n], 8000).unwrap()
}

/// Encoder over `labels` plus an oracle with one Gaussian prior per
/// `(prompt, mean, variance)`; a prompt is a comma-separated label set.
pub fn gaussian_oracle(labels: &[&str], priors: &[(&str, f64, f64)]) -> (LabelEncoder, OracleField) {
    let enc = LabelEncoder::new(labels, 8, 0).unwrap();
    let mut field = OracleField::new();
    for (prompt, mean, var) in priors {
        let parts: Vec<&str> = prompt.split(',').collect();
        field.insert(enc.canonical_key(&parts).unwrap(), ScalarPrior::Gaussian { mean: *mean, var: *var });
    }
    (enc, field)
}

pub fn ladder(steps: usize) -> NoiseSchedule {
    build_sigma_schedule(SIGMA_MIN, SIGMA_MAX, 7.0, steps).unwrap()
}

pub fn ancestral(steps: usize, seed: u64) -> IntegratorConfig {
    IntegratorConfig::new(SamplerKind::EulerAncestral, steps, 0.0, seed)
}

/// Guidance switched off.
pub fn no_guidance(enc: &LabelEncoder) -> CfgConfig {
    CfgConfig::new(0.0, enc.unconditional()).unwrap()
}

pub fn emb(enc: &LabelEncoder, prompt: &str) -> Embedding {
    enc.encode(&prompt.split(',').collect::<Vec<_>>()).unwrap()
}
