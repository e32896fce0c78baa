//! Band-disjoint toy instruments and the synthetic mixture dataset.
//!
//! Each label owns a frequency band; tones and noise bursts are drawn inside
//! it with smooth envelopes, so stems of different labels barely overlap
//! spectrally while still leaking a little across band edges.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::{mix, AudioTensor};
use crate::error::{Error, Result};
use crate::eval::BenchmarkTask;
use crate::rng::derive_seed;
use crate::spectral::band_pass;

/// Lowest sample rate at which every band fits below Nyquist.
pub const MIN_SAMPLE_RATE: u32 = 8_000;
pub const DEFAULT_CLIP_LENGTH: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Bass,
    Drums,
    Guitar,
    Piano,
}

impl Instrument {
    pub const ALL: [Instrument; 4] = [
        Instrument::Bass,
        Instrument::Drums,
        Instrument::Guitar,
        Instrument::Piano,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Instrument::Bass => "bass",
            Instrument::Drums => "drums",
            Instrument::Guitar => "guitar",
            Instrument::Piano => "piano",
        }
    }

    /// Band in Hz that carries the instrument's partials.
    pub fn band(&self) -> (f64, f64) {
        match self {
            Instrument::Bass => (40.0, 250.0),
            Instrument::Piano => (320.0, 900.0),
            Instrument::Guitar => (1000.0, 2000.0),
            Instrument::Drums => (2300.0, 3700.0),
        }
    }

    /// The slice of the spectrum attributed to this label by the band-pass
    /// oracle: the band widened to the midpoints of the neighbouring gaps.
    pub fn oracle_region(&self) -> (f64, f64) {
        match self {
            Instrument::Bass => (0.0, 285.0),
            Instrument::Piano => (285.0, 950.0),
            Instrument::Guitar => (950.0, 2150.0),
            Instrument::Drums => (2150.0, f64::INFINITY),
        }
    }

    pub fn parse_list<S: AsRef<str>>(labels: &[S]) -> Result<Vec<Instrument>> {
        let mut out: Vec<Instrument> = labels.iter().map(|l| l.as_ref().parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Deterministic stem of `length` samples.
    pub fn synthesize(&self, length: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
        let sr = sample_rate as f64;
        let mut x = vec![0.0; length];
        match self {
            Instrument::Bass => notes(&mut x, sr, rng, (0.25, 0.5), |rng| {
                let f0 = rng.random_range(50.0..120.0);
                (vec![(f0, 1.0), (2.0 * f0, 0.4)], 3.0)
            }),
            Instrument::Piano => notes(&mut x, sr, rng, (0.2, 0.45), |rng| {
                let f0 = rng.random_range(330.0..440.0);
                (vec![(f0, 1.0), (2.0 * f0, 0.5)], 5.0)
            }),
            Instrument::Guitar => notes(&mut x, sr, rng, (0.12, 0.3), |rng| {
                let f0 = rng.random_range(1050.0..1450.0);
                (vec![(f0, 1.0), (1.35 * f0, 0.3)], 9.0)
            }),
            Instrument::Drums => {
                let (lo, hi) = self.band();
                let noise: Vec<f64> = (0..length).map(|_| rng.sample(StandardNormal)).collect();
                let noise = band_pass(&noise, sample_rate, lo + 60.0, hi - 60.0);
                let mut t = rng.random_range(0.0..0.05f64.min(0.5 * length as f64 / sr));
                let mut env = vec![0.0; length];
                while ((t * sr) as usize) < length {
                    let start = (t * sr) as usize;
                    let level = rng.random_range(0.6..1.0);
                    for (i, e) in env[start..].iter_mut().enumerate() {
                        *e += level * envelope(i as f64 / sr, 30.0);
                    }
                    t += rng.random_range(0.1..0.25);
                }
                for (xi, (n, e)) in x.iter_mut().zip(noise.iter().zip(&env)) {
                    *xi = n * e;
                }
            }
        }
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / length.max(1) as f64).sqrt();
        let target = rng.random_range(0.08..0.16);
        if rms > 0.0 {
            for v in &mut x {
                *v *= target / rms;
            }
        }
        x
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Instrument {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Instrument::ALL
            .into_iter()
            .find(|i| i.label() == s)
            .ok_or_else(|| Error::Vocabulary {
                label: s,
                known: Instrument::ALL.iter().map(|i| i.label().to_string()).collect(),
            })
    }
}

/// Raised-cosine attack of 20 ms followed by an exponential decay.
fn envelope(t: f64, decay: f64) -> f64 {
    const ATTACK: f64 = 0.02;
    if t < ATTACK {
        0.5 - 0.5 * (PI * t / ATTACK).cos()
    } else {
        (-decay * (t - ATTACK)).exp()
    }
}

fn notes<R: Rng>(
    x: &mut [f64],
    sr: f64,
    rng: &mut R,
    spacing: (f64, f64),
    mut draw: impl FnMut(&mut R) -> (Vec<(f64, f64)>, f64),
) {
    // first onset inside the first half, so short clips are never silent
    let mut t = rng.random_range(0.0..spacing.0.min(0.5 * x.len() as f64 / sr));
    while ((t * sr) as usize) < x.len() {
        let start = (t * sr) as usize;
        let (partials, decay) = draw(rng);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        for (i, xi) in x[start..].iter_mut().enumerate() {
            let tau = i as f64 / sr;
            let e = envelope(tau, decay);
            if e < 1e-6 && tau > 0.1 {
                break;
            }
            let s: f64 = partials
                .iter()
                .map(|(f, a)| a * (2.0 * PI * f * tau + phase).sin())
                .sum();
            *xi += e * s;
        }
        t += rng.random_range(spacing.0..spacing.1);
    }
}

/// Settings for a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub vocabulary: Vec<Instrument>,
    pub n_clips: usize,
    pub clip_length: usize,
    pub sample_rate: u32,
    pub seed: u64,
    /// Exact number of sources per clip; a random non-empty subset if unset.
    #[serde(default)]
    pub sources_per_clip: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocabulary: Instrument::ALL.to_vec(),
            n_clips: 600,
            clip_length: DEFAULT_CLIP_LENGTH,
            sample_rate: MIN_SAMPLE_RATE,
            seed: 0,
            sources_per_clip: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocabulary.is_empty() {
            return Err(Error::config("vocabulary is empty"));
        }
        if self.clip_length == 0 {
            return Err(Error::config("clip length must be positive"));
        }
        if self.sample_rate < MIN_SAMPLE_RATE {
            return Err(Error::config(format!(
                "sample rate must be at least {MIN_SAMPLE_RATE} Hz for the toy bands"
            )));
        }
        if let Some(k) = self.sources_per_clip {
            if k == 0 || k > self.vocabulary.len() {
                return Err(Error::config(format!(
                    "sources per clip must lie in 1..={}",
                    self.vocabulary.len()
                )));
            }
        }
        Ok(())
    }
}

/// One synthesized clip; stems are stored at float-32 precision and the
/// mixture is their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub labels: Vec<Instrument>,
    pub stems: Vec<AudioTensor>,
    pub mixture: AudioTensor,
}

impl SynthClip {
    pub fn to_task(&self) -> BenchmarkTask {
        BenchmarkTask {
            id: self.id.clone(),
            mixture: self.mixture.clone(),
            sources: self
                .labels
                .iter()
                .map(|l| l.label().to_string())
                .zip(self.stems.iter().cloned())
                .collect(),
        }
    }
}

pub fn synth_clip(config: &SynthConfig, index: usize) -> Result<SynthClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, index as u64));
    let mut labels: Vec<Instrument> = match config.sources_per_clip {
        Some(k) => {
            let mut v = config.vocabulary.clone();
            v.shuffle(&mut rng);
            v.truncate(k);
            v
        }
        None => {
            let n = config.vocabulary.len();
            let mask = rng.random_range(1..(1u64 << n));
            (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| config.vocabulary[i])
                .collect()
        }
    };
    labels.sort();
    let stems: Vec<AudioTensor> = labels
        .iter()
        .map(|inst| {
            let s = inst
                .synthesize(config.clip_length, config.sample_rate, &mut rng)
                .into_iter()
                .map(|v| v as f32 as f64)
                .collect();
            AudioTensor::mono(s, config.sample_rate)
        })
        .collect::<Result<_>>()?;
    let mixture = mix(&stems)?;
    Ok(SynthClip {
        id: format!("clip{index:05}"),
        labels,
        stems,
        mixture,
    })
}

/// All clips of a dataset, in index order.
pub fn synth_clips(config: &SynthConfig) -> Result<Vec<SynthClip>> {
    config.validate()?;
    (0..config.n_clips).map(|i| synth_clip(config, i)).collect()
}

/// Band-pass oracle: each label receives the mixture restricted to its
/// [`Instrument::oracle_region`].
pub fn oracle_band_separate(mixture: &AudioTensor, labels: &[Instrument]) -> Result<Vec<AudioTensor>> {
    let sr = mixture.sample_rate();
    labels
        .iter()
        .map(|inst| {
            let (lo, hi) = inst.oracle_region();
            let mut out = mixture.zeros_like();
            for c in 0..mixture.channels() {
                out.set_channel(c, &band_pass(&mixture.channel(c), sr, lo, hi));
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_clips: 6,
            clip_length: 4096,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(synth_clips(&small(3)).unwrap(), synth_clips(&small(3)).unwrap());
        assert_ne!(synth_clips(&small(3)).unwrap(), synth_clips(&small(4)).unwrap());
    }

    #[test]
    fn clips_are_sums_of_nonempty_label_sets() {
        for clip in synth_clips(&small(1)).unwrap() {
            assert!(!clip.labels.is_empty());
            assert_eq!(clip.labels.len(), clip.stems.len());
            let sum = mix(&clip.stems).unwrap();
            assert_eq!(sum, clip.mixture);
        }
    }

    #[test]
    fn fixed_source_count() {
        let cfg = SynthConfig {
            sources_per_clip: Some(2),
            ..small(2)
        };
        for clip in synth_clips(&cfg).unwrap() {
            assert_eq!(clip.labels.len(), 2);
            assert_ne!(clip.labels[0], clip.labels[1]);
        }
        let bad = SynthConfig {
            sources_per_clip: Some(5),
            ..small(2)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_valid() {
        let cfg = SynthConfig { n_clips: 0, ..small(0) };
        assert!(synth_clips(&cfg).unwrap().is_empty());
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("Drums".parse::<Instrument>().unwrap(), Instrument::Drums);
        assert!(matches!("kazoo".parse::<Instrument>(), Err(Error::Vocabulary { .. })));
    }
}
