//! Browser demo over the core engine.
//!
//! Three operations, each returning JSON for the page in `www/`:
//! total generation of two Gaussian sources with likelihood coupling, a toy
//! separation with a denoiser trained in the page, and a noise-schedule
//! explorer. The plain Rust functions are also usable natively.

use gmsdi_core::data::{oracle_band_separate, synth_clip, synth_clips, Instrument, SynthConfig};
use gmsdi_core::denoiser::{train_denoiser, DenoiserConfig, SpectralDenoiser, TrainConfig, TrainingExample};
use gmsdi_core::eval::si_sdr_improvement;
use gmsdi_core::gmsdi::{Gamma, GammaConfig, Gmsdi, SeparationTask};
use gmsdi_core::samplers::{ancestral_variances, IntegratorConfig, SamplerKind};
use gmsdi_core::score::{CfgConfig, LabelEncoder, OracleField, ScalarPrior, SourceSpec};
use gmsdi_core::{build_sigma_schedule, mix, AudioTensor, Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SAMPLE_RATE: u32 = 8000;
const BINS: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub var: f64,
}

impl Histogram {
    fn of(x: &[f64], lo: f64, hi: f64) -> Self {
        let mut counts = vec![0; BINS];
        for &v in x {
            let b = ((v - lo) / (hi - lo) * BINS as f64).floor();
            if b >= 0.0 && (b as usize) < BINS {
                counts[b as usize] += 1;
            }
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { lo, hi, counts, mean, var }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Generation {
    pub sources: Vec<Histogram>,
    pub mixture: Histogram,
    pub sum: Histogram,
    /// `‖y − Σx‖ / ‖y‖` over all runs.
    pub residual: f64,
}

/// Two scalar Gaussian sources and their mixture, `runs` independent draws
/// at once. `coupling` is `c` in `γ²(σ) = c σ²`; zero disables it.
pub fn gaussian_generation(priors: [(f64, f64); 2], coupling: f64, steps: usize, runs: usize, seed: u64) -> Result<Generation> {
    let [(m1, v1), (m2, v2)] = priors;
    let encoder = LabelEncoder::new(&["a", "b"], 8, 0)?;
    let mut field = OracleField::new();
    field.insert("a", ScalarPrior::Gaussian { mean: m1, var: v1 });
    field.insert("b", ScalarPrior::Gaussian { mean: m2, var: v2 });
    field.insert("a,b", ScalarPrior::Gaussian { mean: m1 + m2, var: v1 + v2 });
    let schedule = build_sigma_schedule(1e-3, 10.0, 7.0, steps)?;
    let sampler = IntegratorConfig::new(SamplerKind::EulerAncestral, steps, 0.0, seed);
    let cfg = CfgConfig::new(0.0, encoder.unconditional())?;
    let engine = Gmsdi { model: &field, encoder: &encoder, schedule: &schedule, sampler: &sampler, cfg: &cfg };
    let gamma_x = if coupling > 0.0 { Gamma::Scaled(coupling) } else { Gamma::Infinite };
    let specs = [SourceSpec::new(&encoder, &["a"])?, SourceSpec::new(&encoder, &["b"])?];
    let template = AudioTensor::zeros(1, runs, SAMPLE_RATE);
    let (xs, y) = engine.total_generate(&specs, &GammaConfig::uniform(gamma_x, Gamma::Infinite), &template)?;
    let sum = mix(&xs)?;
    let all = xs.iter().chain([&y, &sum]).flat_map(|t| t.samples().iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = 1e-9 + 0.02 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    Ok(Generation {
        sources: xs.iter().map(|x| Histogram::of(x.samples(), lo, hi)).collect(),
        mixture: Histogram::of(y.samples(), lo, hi),
        sum: Histogram::of(sum.samples(), lo, hi),
        residual: y.sub(&sum)?.norm() / y.norm(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Ladder {
    pub sigmas: Vec<f64>,
    /// Per transition: deterministic target level and fresh-noise level.
    pub down: Vec<f64>,
    pub up: Vec<f64>,
}

pub fn ladder(sigma_min: f64, sigma_max: f64, rho: f64, steps: usize) -> Result<Ladder> {
    let schedule = build_sigma_schedule(sigma_min, sigma_max, rho, steps)?;
    let sigmas = schedule.sigmas().to_vec();
    let (down, up) = sigmas
        .windows(2)
        .map(|w| ancestral_variances(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(Ladder { sigmas, down, up })
}

#[derive(Debug, Clone, Serialize)]
pub struct Separation {
    pub labels: Vec<String>,
    /// Waveforms decimated for plotting.
    pub mixture: Vec<f64>,
    pub stems: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
    pub si_sdri: Vec<f64>,
    pub oracle_si_sdri: Vec<f64>,
}

fn decimate(x: &AudioTensor, points: usize) -> Vec<f64> {
    let step = x.samples().len().div_ceil(points).max(1);
    x.samples().iter().step_by(step).copied().collect()
}

/// A small denoiser trained on synthetic mixtures and their labels.
pub struct ToyModel {
    model: SpectralDenoiser,
    encoder: LabelEncoder,
}

impl ToyModel {
    pub const CLIP_LENGTH: usize = 2048;

    pub fn train(clips: usize, epochs: usize, seed: u64) -> Result<Self> {
        let labels: Vec<&str> = Instrument::ALL.iter().map(|i| i.label()).collect();
        let encoder = LabelEncoder::new(&labels, 16, 0)?;
        let data = synth_clips(&SynthConfig { n_clips: clips, clip_length: Self::CLIP_LENGTH, seed, ..Default::default() })?
            .into_iter()
            .map(|c| {
                let names: Vec<&str> = c.labels.iter().map(|l| l.label()).collect();
                Ok(TrainingExample { mixture: c.mixture, embedding: encoder.encode(&names)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut config = DenoiserConfig::new(16, SAMPLE_RATE, 2e-3, 2.0);
        config.hidden = 32;
        let train = TrainConfig { epochs, seed, ..Default::default() };
        let (model, _) = train_denoiser(&data, config, &encoder.unconditional(), &train)?;
        Ok(Self { model, encoder })
    }

    /// Separates a fresh two-instrument clip; the second label is the
    /// residual.
    pub fn separate(&self, labels: [&str; 2], clip_seed: u64, steps: usize, w: f64) -> Result<Separation> {
        let vocabulary = Instrument::parse_list(&labels)?;
        if vocabulary.len() != 2 {
            return Err(Error::config("pick two different instruments"));
        }
        let clip = synth_clip(
            &SynthConfig {
                vocabulary: vocabulary.clone(),
                n_clips: 1,
                clip_length: Self::CLIP_LENGTH,
                seed: clip_seed,
                sources_per_clip: Some(2),
                ..Default::default()
            },
            0,
        )?;
        let schedule = build_sigma_schedule(self.model.config().sigma_min, self.model.config().sigma_max, 7.0, steps)?;
        let sampler = IntegratorConfig::new(SamplerKind::EulerAncestral, steps, 20.0, clip_seed);
        let cfg = CfgConfig::new(w, self.encoder.unconditional())?;
        let engine = Gmsdi { model: &self.model, encoder: &self.encoder, schedule: &schedule, sampler: &sampler, cfg: &cfg };
        let sources = clip
            .labels
            .iter()
            .map(|l| SourceSpec::new(&self.encoder, &[l.label()]))
            .collect::<Result<Vec<_>>>()?;
        let estimates = engine.separate(&SeparationTask { mixture: clip.mixture.clone(), sources, constrained_index: 1 })?;
        let oracle = oracle_band_separate(&clip.mixture, &clip.labels)?;
        let score = |est: &[AudioTensor]| -> Result<Vec<f64>> {
            est.iter().zip(&clip.stems).map(|(e, s)| si_sdr_improvement(e, s, &clip.mixture)).collect()
        };
        Ok(Separation {
            labels: clip.labels.iter().map(|l| l.label().to_string()).collect(),
            mixture: decimate(&clip.mixture, 512),
            stems: clip.stems.iter().map(|s| decimate(s, 512)).collect(),
            estimates: estimates.iter().map(|s| decimate(s, 512)).collect(),
            si_sdri: score(&estimates)?,
            oracle_si_sdri: score(&oracle)?,
        })
    }
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = gaussianGeneration)]
#[allow(clippy::too_many_arguments)]
pub fn gaussian_generation_js(
    mu1: f64,
    var1: f64,
    mu2: f64,
    var2: f64,
    coupling: f64,
    steps: usize,
    runs: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(gaussian_generation([(mu1, var1), (mu2, var2)], coupling, steps, runs, seed as u64))
}

#[wasm_bindgen(js_name = sigmaLadder)]
pub fn ladder_js(sigma_min: f64, sigma_max: f64, rho: f64, steps: usize) -> std::result::Result<String, JsError> {
    js(ladder(sigma_min, sigma_max, rho, steps))
}

#[wasm_bindgen(js_name = ToyModel)]
pub struct ToyModelJs(ToyModel);

#[wasm_bindgen(js_class = ToyModel)]
impl ToyModelJs {
    #[wasm_bindgen(constructor)]
    pub fn new(clips: usize, epochs: usize, seed: u32) -> std::result::Result<ToyModelJs, JsError> {
        ToyModel::train(clips, epochs, seed as u64).map(ToyModelJs).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn separate(&self, first: &str, second: &str, clip_seed: u32, steps: usize, w: f64) -> std::result::Result<String, JsError> {
        js(self.0.separate([first, second], clip_seed as u64, steps, w))
    }
}
