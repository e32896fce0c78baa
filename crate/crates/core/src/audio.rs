use crate::error::{Error, Result};

/// Multi-channel sample buffer. Samples are stored frame-interleaved, the
/// same layout WAV uses.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTensor {
    samples: Vec<f64>,
    channels: usize,
    sample_rate: u32,
}

impl AudioTensor {
    pub const DEFAULT_SAMPLE_RATE: u32 = 8_000;

    pub fn new(samples: Vec<f64>, channels: usize, sample_rate: u32) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("channel count must be positive"));
        }
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if samples.is_empty() || samples.len() % channels != 0 {
            return Err(Error::Dimension {
                expected: format!("a positive multiple of {channels} samples"),
                actual: format!("{} samples", samples.len()),
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(samples, 1, sample_rate)
    }

    pub fn zeros(channels: usize, length: usize, sample_rate: u32) -> Self {
        assert!(channels > 0 && length > 0 && sample_rate > 0);
        Self {
            samples: vec![0.0; channels * length],
            channels,
            sample_rate,
        }
    }

    /// Same shape as `self`, filled from `samples`. Skips the finiteness scan;
    /// integrators check finiteness once per step instead.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            channels: self.channels,
            sample_rate: self.sample_rate,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_samples(vec![0.0; self.samples.len()])
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    /// Never true for a constructed tensor; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn shape(&self) -> (usize, usize, u32) {
        (self.channels, self.len(), self.sample_rate)
    }

    pub fn ensure_same_shape(&self, other: &AudioTensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                expected: describe(self.shape()),
                actual: describe(other.shape()),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    /// One channel as a contiguous vector.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub(crate) fn set_channel(&mut self, c: usize, data: &[f64]) {
        for (dst, src) in self
            .samples
            .iter_mut()
            .skip(c)
            .step_by(self.channels)
            .zip(data)
        {
            *dst = *src;
        }
    }

    pub fn add(&self, other: &AudioTensor) -> Result<AudioTensor> {
        self.ensure_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &AudioTensor) -> Result<AudioTensor> {
        self.ensure_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, k: f64) -> AudioTensor {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> AudioTensor {
        self.with_samples(self.samples.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_with(&self, other: &AudioTensor, f: impl Fn(f64, f64) -> f64) -> AudioTensor {
        self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, k: f64, other: &AudioTensor) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &AudioTensor) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn describe((c, n, sr): (usize, usize, u32)) -> String {
    format!("{c}ch x {n} @ {sr} Hz")
}

/// Element-wise sum of sources, folded left to right.
pub fn mix(sources: &[AudioTensor]) -> Result<AudioTensor> {
    let (first, rest) = sources
        .split_first()
        .ok_or_else(|| Error::config("cannot mix an empty list of sources"))?;
    let mut out = first.clone();
    for s in rest {
        out.ensure_same_shape(s)?;
        for (a, b) in out.samples.iter_mut().zip(&s.samples) {
            *a += b;
        }
    }
    Ok(out)
}
