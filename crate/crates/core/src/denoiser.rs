//! A small trainable denoiser for desk-scale experiments.
//!
//! A feed-forward network maps `(embedding, ln σ)` to one gain per linear
//! frequency band plus a separate gain for the DC bin; the denoised estimate is the input filtered by those
//! gains (a circular convolution), and the score is recovered as
//! `(x̂ − x) / σ²`. For stationary Gaussian data the MMSE denoiser has
//! exactly this form, with band logits `ln P_b − 2 ln σ`, so the output
//! layer carries a linear `ln σ` skip term initialized at −2. A scalar mean
//! level `m` adds `(1 − g_dc) m` to every sample, which makes the posterior mean of a Gaussian with nonzero mean
//! representable.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::AudioTensor;
use crate::error::{Error, Result};
use crate::rng::{standard_normals, stream};
use crate::score::{perturb, Embedding, LabelEncoder, ScoreField};
use crate::spectral::{fft, ifft_real, linear_band_map};

pub const CHECKPOINT_FORMAT: &str = "gmsdi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub n_bands: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub sigma_harmonics: usize,
    pub sample_rate: u32,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl DenoiserConfig {
    pub fn new(embedding_dim: usize, sample_rate: u32, sigma_min: f64, sigma_max: f64) -> Self {
        Self {
            n_bands: 64,
            hidden: 64,
            embedding_dim,
            sigma_harmonics: 4,
            sample_rate,
            sigma_min,
            sigma_max,
        }
    }

    fn input_dim(&self) -> usize {
        self.embedding_dim + 1 + 2 * self.sigma_harmonics
    }

    fn n_logits(&self) -> usize {
        self.n_bands + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability of replacing the conditioning with the null embedding.
    pub cond_dropout: f64,
    /// Noise draws per clip per epoch.
    pub draws_per_clip: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 3e-3,
            cond_dropout: 0.1,
            draws_per_clip: 2,
            seed: 0,
        }
    }
}

/// One training pair. Deliberately has no slot for stems.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub mixture: AudioTensor,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean σ²-weighted DSM loss per sample, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDenoiser {
    config: DenoiserConfig,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    skip: Vec<f64>,
    w_off: Vec<f64>,
    b_off: Vec<f64>,
}

struct Forward {
    input: Vec<f64>,
    hidden: Vec<f64>,
    gains: Vec<f64>,
    level: f64,
}

impl SpectralDenoiser {
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        if config.n_bands == 0 || config.hidden == 0 || config.embedding_dim == 0 {
            return Err(Error::config("denoiser dimensions must be positive"));
        }
        if !(config.sigma_min > 0.0 && config.sigma_min < config.sigma_max) {
            return Err(Error::config("denoiser needs 0 < sigma_min < sigma_max"));
        }
        let fan_in = config.input_dim();
        let mut rng = stream(seed, 0x1A17, 0);
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            standard_normals(&mut rng, n).into_iter().map(|v| v * scale).collect()
        };
        let head = 0.1 / (config.hidden as f64).sqrt();
        Ok(Self {
            w1: draw(config.hidden * fan_in, 1.0 / (fan_in as f64).sqrt()),
            b1: vec![0.0; config.hidden],
            w2: draw(config.n_logits() * config.hidden, head),
            b2: vec![-4.0; config.n_logits()],
            skip: vec![-2.0; config.n_logits()],
            w_off: vec![0.0; config.hidden],
            b_off: vec![0.0],
            config,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    fn features(&self, z: &Embedding, sigma: f64) -> Result<Vec<f64>> {
        if z.dim() != self.config.embedding_dim {
            return Err(Error::Dimension {
                expected: format!("embedding of dim {}", self.config.embedding_dim),
                actual: format!("dim {}", z.dim()),
            });
        }
        let (lo, hi) = (self.config.sigma_min.ln(), self.config.sigma_max.ln());
        let c = 2.0 * (sigma.ln() - lo) / (hi - lo) - 1.0;
        // unit-norm embeddings rescaled to unit-variance entries
        let scale = (z.dim() as f64).sqrt();
        let mut f: Vec<f64> = z.vector.iter().map(|v| v * scale).collect();
        f.push(c);
        for k in 1..=self.config.sigma_harmonics {
            let a = std::f64::consts::FRAC_PI_2 * k as f64 * c;
            f.push(a.sin());
            f.push(a.cos());
        }
        Ok(f)
    }

    fn forward(&self, z: &Embedding, sigma: f64) -> Result<Forward> {
        let input = self.features(z, sigma)?;
        let n_in = input.len();
        let h = self.config.hidden;
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let row = &self.w1[j * n_in..(j + 1) * n_in];
                (self.b1[j] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>()).tanh()
            })
            .collect();
        let dot = |w: &[f64], b: usize| -> f64 {
            w[b * h..(b + 1) * h].iter().zip(&hidden).map(|(w, x)| w * x).sum()
        };
        let ln_sigma = sigma.ln();
        let gains = (0..self.config.n_logits())
            .map(|b| sigmoid(self.b2[b] + self.skip[b] * ln_sigma + dot(&self.w2, b)))
            .collect();
        let level = self.b_off[0] + self.w_off.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>();
        Ok(Forward {
            input,
            hidden,
            gains,
            level,
        })
    }

    /// Per-band filter gains in `[0, 1]` at noise level `sigma`, followed by
    /// the DC gain.
    pub fn gains(&self, z: &Embedding, sigma: f64) -> Result<Vec<f64>> {
        Ok(self.forward(z, sigma)?.gains)
    }

    pub fn denoise(&self, x: &AudioTensor, z: &Embedding, sigma: f64) -> Result<AudioTensor> {
        if x.sample_rate() != self.config.sample_rate {
            return Err(Error::Dimension {
                expected: format!("{} Hz audio", self.config.sample_rate),
                actual: format!("{} Hz", x.sample_rate()),
            });
        }
        let fwd = self.forward(z, sigma)?;
        let bands = bin_logits(x.len(), x.sample_rate(), self.config.n_bands);
        let offset = (1.0 - fwd.gains[self.config.n_bands]) * fwd.level;
        let mut out = x.zeros_like();
        for c in 0..x.channels() {
            let mut spec = fft(&x.channel(c));
            for (v, &b) in spec.iter_mut().zip(&bands) {
                *v *= fwd.gains[b];
            }
            let filtered: Vec<f64> = ifft_real(spec).into_iter().map(|v| v + offset).collect();
            out.set_channel(c, &filtered);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path, encoder: &LabelEncoder) -> Result<String> {
        let (h, nb) = (self.config.hidden, self.config.n_logits());
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            encoder: encoder.clone(),
            arrays: vec![
                NamedArray::new("w1", vec![h, self.config.input_dim()], &self.w1),
                NamedArray::new("b1", vec![h], &self.b1),
                NamedArray::new("w2", vec![nb, h], &self.w2),
                NamedArray::new("b2", vec![nb], &self.b2),
                NamedArray::new("skip", vec![nb], &self.skip),
                NamedArray::new("w_off", vec![h], &self.w_off),
                NamedArray::new("b_off", vec![1], &self.b_off),
            ],
        };
        let bytes = serde_json::to_vec_pretty(&ckpt)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    /// Loads a checkpoint, returning the model, its label encoder and the
    /// SHA-256 of the file.
    pub fn load(path: &Path) -> Result<(Self, LabelEncoder, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::format("checkpoint.format", format!("unexpected `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint.version",
                format!("unsupported version {}", ckpt.version),
            ));
        }
        let cfg = ckpt.config;
        let take = |name: &str, shape: Vec<usize>| -> Result<Vec<f64>> {
            let a = ckpt
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::format("checkpoint.arrays", format!("missing `{name}`")))?;
            if a.shape != shape || a.data.len() != shape.iter().product::<usize>() {
                return Err(Error::format(
                    format!("checkpoint.arrays.{name}"),
                    format!("expected shape {shape:?}, got {:?}", a.shape),
                ));
            }
            Ok(a.data.clone())
        };
        let (h, nb) = (cfg.hidden, cfg.n_logits());
        let model = Self {
            w1: take("w1", vec![h, cfg.input_dim()])?,
            b1: take("b1", vec![h])?,
            w2: take("w2", vec![nb, h])?,
            b2: take("b2", vec![nb])?,
            skip: take("skip", vec![nb])?,
            w_off: take("w_off", vec![h])?,
            b_off: take("b_off", vec![1])?,
            config: cfg,
        };
        if ckpt.encoder.dim() != model.config.embedding_dim {
            return Err(Error::format("checkpoint.encoder", "embedding dim disagrees with model"));
        }
        Ok((model, ckpt.encoder, sha256_hex(&bytes)))
    }
}

impl ScoreField for SpectralDenoiser {
    fn score(&self, state: &AudioTensor, embedding: &Embedding, sigma: f64) -> Result<AudioTensor> {
        if !(sigma > 0.0) {
            return Err(Error::config("denoiser score needs sigma > 0"));
        }
        let denoised = self.denoise(state, embedding, sigma)?;
        let inv = 1.0 / (sigma * sigma);
        Ok(denoised.zip_with(state, |d, x| (d - x) * inv))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: DenoiserConfig,
    encoder: LabelEncoder,
    arrays: Vec<NamedArray>,
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NamedArray {
    fn new(name: &str, shape: Vec<usize>, data: &[f64]) -> Self {
        Self {
            name: name.into(),
            shape,
            data: data.to_vec(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Logit index of each DFT bin: the band of its frequency, or `n_bands` for
/// the DC bin.
fn bin_logits(n: usize, sample_rate: u32, n_bands: usize) -> Vec<usize> {
    let mut map = linear_band_map(n, sample_rate, n_bands);
    if let Some(dc) = map.first_mut() {
        *dc = n_bands;
    }
    map
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gradients, laid out like the parameters.
struct Grads([Vec<f64>; N_PARAMS]);

const N_PARAMS: usize = 7;

impl Grads {
    fn zeros(m: &SpectralDenoiser) -> Self {
        Self(m.param_slices().map(|p| vec![0.0; p.len()]))
    }
}

impl SpectralDenoiser {
    fn param_slices(&self) -> [&Vec<f64>; N_PARAMS] {
        [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.skip,
            &self.w_off,
            &self.b_off,
        ]
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; N_PARAMS] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.skip,
            &mut self.w_off,
            &mut self.b_off,
        ]
    }
}

struct Adam {
    m: Grads,
    v: Grads,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, model: &mut SpectralDenoiser, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        for ((p, g), (m, v)) in model
            .params_mut()
            .into_iter()
            .zip(&grads.0)
            .zip(self.m.0.iter_mut().zip(self.v.0.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Accumulates the gradient of the σ²-weighted DSM loss for one noisy draw
/// and returns the loss value.
///
/// By Parseval the loss is a sum over DFT bins of `|g_k X_k − X0_k|²`. The
/// DC bin also carries the mean level: `g X_0 + N (1 − g) m − X0_0`.
fn accumulate(
    model: &SpectralDenoiser,
    x0: &AudioTensor,
    xt: &AudioTensor,
    z: &Embedding,
    sigma: f64,
    grads: &mut Grads,
) -> Result<f64> {
    let cfg = &model.config;
    let nb = cfg.n_logits();
    let h = cfg.hidden;
    let n = x0.len();
    let nf = n as f64;
    let bands = bin_logits(n, x0.sample_rate(), cfg.n_bands);
    // unnormalized DFT, mean per sample, σ² weight
    let norm = 1.0 / (nf * x0.samples().len() as f64 * sigma * sigma);
    let fwd = model.forward(z, sigma)?;
    let mut loss = 0.0;
    let mut dgain = vec![0.0; nb];
    let mut dlevel = 0.0;
    for ch in 0..x0.channels() {
        let s0 = fft(&x0.channel(ch));
        let st = fft(&xt.channel(ch));
        for (k, ((a, t), &b)) in s0.iter().zip(&st).zip(&bands).enumerate() {
            let g = fwd.gains[b];
            dgain[b] += if k == 0 {
                let m = fwd.level;
                let r = g * t.re + nf * (1.0 - g) * m - a.re;
                loss += (r * r + (g * t.im - a.im).powi(2)) * norm;
                dlevel += 2.0 * r * nf * (1.0 - g) * norm;
                (2.0 * r * (t.re - nf * m) + 2.0 * (g * t.im - a.im) * t.im) * norm
            } else {
                let (er, ei) = (g * t.re - a.re, g * t.im - a.im);
                loss += (er * er + ei * ei) * norm;
                2.0 * (er * t.re + ei * t.im) * norm
            };
        }
    }
    let dlogit: Vec<f64> = dgain
        .iter()
        .zip(&fwd.gains)
        .map(|(d, g)| d * g * (1.0 - g))
        .collect();
    let n_in = fwd.input.len();
    let ln_sigma = sigma.ln();
    let mut dh = vec![0.0; h];
    let [w1, b1, w2, b2, skip, w_off, b_off] = &mut grads.0;
    b_off[0] += dlevel;
    for j in 0..h {
        w_off[j] += dlevel * fwd.hidden[j];
        dh[j] += dlevel * model.w_off[j];
    }
    for b in 0..nb {
        b2[b] += dlogit[b];
        skip[b] += dlogit[b] * ln_sigma;
        for j in 0..h {
            w2[b * h + j] += dlogit[b] * fwd.hidden[j];
            dh[j] += dlogit[b] * model.w2[b * h + j];
        }
    }
    for j in 0..h {
        let da = dh[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
        b1[j] += da;
        for i in 0..n_in {
            w1[j * n_in + i] += da * fwd.input[i];
        }
    }
    Ok(loss)
}

/// Trains a [`SpectralDenoiser`] on mixtures and their label embeddings by
/// minimizing the σ²-weighted denoising score-matching loss with σ drawn
/// log-uniformly over `[sigma_min, sigma_max]`.
pub fn train_denoiser(
    dataset: &[TrainingExample],
    model_config: DenoiserConfig,
    unconditional: &Embedding,
    config: &TrainConfig,
) -> Result<(SpectralDenoiser, TrainingReport)> {
    if dataset.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    if config.batch_size == 0 || config.draws_per_clip == 0 {
        return Err(Error::config("batch_size and draws_per_clip must be positive"));
    }
    let mut model = SpectralDenoiser::init(model_config, config.seed)?;
    let mut adam = Adam {
        m: Grads::zeros(&model),
        v: Grads::zeros(&model),
        t: 0,
        lr: config.learning_rate,
    };
    let (lo, hi) = (model.config.sigma_min.ln(), model.config.sigma_max.ln());
    let mut report = TrainingReport {
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    let n_items = dataset.len() * config.draws_per_clip;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n_items).collect();
        shuffle(&mut order, &mut stream(config.seed, 0x5EED, epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Grads::zeros(&model);
            for &item in batch {
                let ex = &dataset[item % dataset.len()];
                let mut rng = stream(config.seed, item as u64, epoch as u64);
                let sigma = (lo + (hi - lo) * rng.random::<f64>()).exp();
                let z = if rng.random::<f64>() < config.cond_dropout {
                    unconditional
                } else {
                    &ex.embedding
                };
                let xt = perturb(&ex.mixture, sigma, &mut rng)?;
                total += accumulate(&model, &ex.mixture, &xt, z, sigma, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.0.iter_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut model, &grads);
        }
        let mean = total / n_items as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingDivergence {
                epoch,
                message: format!("mean loss {mean}"),
            });
        }
        log::info!("epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok((model, report))
}

fn shuffle(v: &mut [usize], rng: &mut impl Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder() -> LabelEncoder {
        LabelEncoder::new(&["tone"], 8, 3).unwrap()
    }

    fn small_config() -> DenoiserConfig {
        let mut c = DenoiserConfig::new(8, 8000, 1e-3, 2.0);
        c.n_bands = 8;
        c.hidden = 12;
        c
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let enc = encoder();
        let z = enc.encode(&["tone"]).unwrap();
        let mut model = SpectralDenoiser::init(small_config(), 1).unwrap();
        model.b2.iter_mut().enumerate().for_each(|(i, v)| *v = 0.3 * i as f64 - 1.0);
        let x0 = AudioTensor::mono(
            (0..64).map(|i| (i as f64 * 0.37).sin() * 0.5).collect(),
            8000,
        )
        .unwrap();
        let sigma = 0.3;
        let xt = perturb(&x0, sigma, &mut stream(2, 0, 0)).unwrap();
        model.b_off[0] = 0.05;
        model.w_off.iter_mut().enumerate().for_each(|(i, v)| *v = 0.01 * i as f64);
        let mut grads = Grads::zeros(&model);
        accumulate(&model, &x0, &xt, &z, sigma, &mut grads).unwrap();
        let loss_at = |m: &SpectralDenoiser| {
            let mut g = Grads::zeros(m);
            accumulate(m, &x0, &xt, &z, sigma, &mut g).unwrap()
        };
        let h = 1e-6;
        let probes = [(0usize, 5usize), (1, 3), (2, 17), (3, 0), (3, 2), (4, 6), (4, 8), (5, 4), (6, 0)];
        for (which, idx) in probes {
            let mut plus = model.clone();
            plus.params_mut()[which][idx] += h;
            let mut minus = model.clone();
            minus.params_mut()[which][idx] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let an = grads.0[which][idx];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-3), "param {which}[{idx}]: {fd} vs {an}");
        }
    }

    #[test]
    fn loss_equals_weighted_denoiser_error() {
        let enc = encoder();
        let z = enc.encode(&["tone"]).unwrap();
        let mut model = SpectralDenoiser::init(small_config(), 4).unwrap();
        model.b_off[0] = -0.02;
        let x0 = AudioTensor::mono((0..32).map(|i| (i as f64).cos() * 0.1).collect(), 8000).unwrap();
        let sigma = 0.05;
        let xt = perturb(&x0, sigma, &mut stream(9, 0, 0)).unwrap();
        let mut g = Grads::zeros(&model);
        let loss = accumulate(&model, &x0, &xt, &z, sigma, &mut g).unwrap();
        let err = model.denoise(&xt, &z, sigma).unwrap().sub(&x0).unwrap().norm_sq();
        let expect = err / (32.0 * sigma * sigma);
        assert!((loss - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let enc = encoder();
        let data = vec![TrainingExample {
            mixture: AudioTensor::mono(vec![0.1; 32], 8000).unwrap(),
            embedding: enc.encode(&["tone"]).unwrap(),
        }];
        let cfg = TrainConfig { epochs: 0, seed: 8, ..TrainConfig::default() };
        let (m, report) = train_denoiser(&data, small_config(), &enc.unconditional(), &cfg).unwrap();
        assert_eq!(m, SpectralDenoiser::init(small_config(), 8).unwrap());
        assert!(report.epoch_losses.is_empty());
        assert!(train_denoiser(&[], small_config(), &enc.unconditional(), &cfg).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        let m = SpectralDenoiser::init(small_config(), 2).unwrap();
        let hash = m.save(&p, &encoder()).unwrap();
        let (back, enc, hash2) = SpectralDenoiser::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(enc, encoder());
        assert_eq!(hash, hash2);
        let text = std::fs::read_to_string(&p).unwrap().replace("\"version\": 1", "\"version\": 9");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(SpectralDenoiser::load(&p), Err(Error::Format { .. })));
    }
}
