//! Compositional inference with a single mixture-trained score model.
//!
//! Sources are sampled as separate trajectories, each driven by the model
//! conditioned on its own labels. A Gaussian likelihood term
//! `(1/γ²)(y − Σ x)` couples them to a mixture trajectory `y` driven by the
//! model conditioned on the joint description; the mixture receives the
//! opposite term. Separation replaces the likelihood with a Dirac
//! constraint: one source (or the complement of the target) is defined as
//! the residual of the observed mixture.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioTensor;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::rng::stream;
use crate::samplers::{integrate, CoupledState, EvalContext, IntegratorConfig, ScoreSystem};
use crate::schedule::NoiseSchedule;
use crate::score::{cfg_score, perturb, CfgConfig, Embedding, LabelEncoder, ScoreField, SourceSpec};

/// Stream id of the mixture trajectory. Source trajectories use `1..`.
pub const MIXTURE_ID: u64 = 0;
/// Stream ids for the per-step re-noising of given (clean) sources.
const GIVEN_ID_BASE: u64 = 1 << 32;

/// Likelihood variance rule `γ²(σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// Coupling disabled: the term contributes exactly zero.
    Infinite,
    /// Constant `γ`, i.e. variance `γ²`.
    Fixed(f64),
    /// `γ²(σ) = c · σ²`.
    Scaled(f64),
}

impl Gamma {
    /// `γ²` at noise level `sigma`; `f64::INFINITY` when disabled.
    pub fn variance(&self, sigma: f64) -> f64 {
        match *self {
            Gamma::Infinite => f64::INFINITY,
            Gamma::Fixed(g) => g * g,
            Gamma::Scaled(c) => c * sigma * sigma,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Gamma::Infinite)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Gamma::Infinite => Ok(()),
            Gamma::Fixed(v) | Gamma::Scaled(v) if v > 0.0 && v.is_finite() => Ok(()),
            other => Err(Error::config(format!("gamma {other} must be positive"))),
        }
    }
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::Scaled(1.0)
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Infinite => write!(f, "infinite"),
            Gamma::Fixed(g) => write!(f, "{g}"),
            Gamma::Scaled(c) => write!(f, "scaled:{c}"),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    /// `infinite` | `scaled:<c>` | `<gamma>`
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("cannot parse gamma `{s}`"));
        let g = if s.eq_ignore_ascii_case("infinite") || s.eq_ignore_ascii_case("inf") {
            Gamma::Infinite
        } else if let Some(c) = s.strip_prefix("scaled:") {
            Gamma::Scaled(c.trim().parse().map_err(|_| bad())?)
        } else {
            Gamma::Fixed(s.parse().map_err(|_| bad())?)
        };
        g.validate()?;
        Ok(g)
    }
}

impl Serialize for Gamma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaConfig {
    /// One rule per source trajectory, or a single rule for all of them.
    pub gamma_x: Vec<Gamma>,
    pub gamma_y: Gamma,
}

impl GammaConfig {
    pub fn uniform(gamma_x: Gamma, gamma_y: Gamma) -> Self {
        Self {
            gamma_x: vec![gamma_x],
            gamma_y,
        }
    }

    pub fn infinite() -> Self {
        Self::uniform(Gamma::Infinite, Gamma::Infinite)
    }

    fn per_trajectory(&self, n: usize) -> Result<Vec<Gamma>> {
        self.gamma_y.validate()?;
        for g in &self.gamma_x {
            g.validate()?;
        }
        match self.gamma_x.len() {
            1 => Ok(vec![self.gamma_x[0]; n]),
            m if m == n => Ok(self.gamma_x.clone()),
            m => Err(Error::config(format!(
                "gamma_x has {m} entries for {n} source trajectories"
            ))),
        }
    }
}

impl Default for GammaConfig {
    /// Total-generation setting: sources coupled with `γ² = σ²`, mixture
    /// uncoupled.
    fn default() -> Self {
        Self::uniform(Gamma::Scaled(1.0), Gamma::Infinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialGenConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PartialGenConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeparationTask {
    pub mixture: AudioTensor,
    pub sources: Vec<SourceSpec>,
    pub constrained_index: usize,
}

impl SeparationTask {
    pub fn validate(&self) -> Result<()> {
        if self.sources.len() < 2 {
            return Err(Error::config("separation needs at least two sources"));
        }
        if self.constrained_index >= self.sources.len() {
            return Err(Error::config(format!(
                "constrained index {} out of range for {} sources",
                self.constrained_index,
                self.sources.len()
            )));
        }
        Ok(())
    }
}

/// `(1/γ²)(y − Σ_l x_l)`, the source-side coupling gradient. The mixture
/// side is its negation. An infinite `gamma2` yields exact zeros.
pub fn likelihood_coupling(y: &AudioTensor, xs: &[AudioTensor], gamma2: f64) -> Result<AudioTensor> {
    let residual = residual(y, xs.iter(), 1.0, std::iter::empty(), 1.0)?;
    Ok(scale_by_inverse(&residual, gamma2))
}

fn scale_by_inverse(residual: &AudioTensor, gamma2: f64) -> AudioTensor {
    if gamma2.is_infinite() {
        residual.zeros_like()
    } else {
        residual.scale(1.0 / gamma2)
    }
}

/// `y − (α Σ a + β Σ b)`.
fn residual<'a>(
    y: &AudioTensor,
    a: impl Iterator<Item = &'a AudioTensor>,
    alpha: f64,
    b: impl Iterator<Item = &'a AudioTensor>,
    beta: f64,
) -> Result<AudioTensor> {
    let mut sum_a = y.zeros_like();
    for x in a {
        sum_a.add_scaled(1.0, x)?;
    }
    let mut sum_b = y.zeros_like();
    for x in b {
        sum_b.add_scaled(1.0, x)?;
    }
    Ok(y.with_samples(
        y.samples()
            .iter()
            .zip(sum_a.samples().iter().zip(sum_b.samples()))
            .map(|(y, (a, b))| y - (alpha * a + beta * b))
            .collect(),
    ))
}

/// Rounds the free sources of each sample onto a common power-of-two grid
/// `q ≥ 2⁻⁵¹ (|y| + Σ|x_k|)` that divides `y`. Every partial sum of the
/// snapped sources and of the residual `y − Σ x_k` is then exact, so the
/// stems add back to the mixture bit for bit in any order. Each sample moves
/// by at most `q / 2`. Samples where no such grid divides `y` (a mixture
/// far quieter than its sources) are left alone.
fn snap_to_common_grid(free: &mut [AudioTensor], y: &AudioTensor) {
    for i in 0..y.samples().len() {
        let m = y.samples()[i];
        let bound = m.abs() + free.iter().map(|x| x.samples()[i].abs()).sum::<f64>();
        if !bound.is_finite() || bound == 0.0 {
            continue;
        }
        let q = (bound * 2f64.powi(-51)).log2().ceil().exp2();
        if !(q > 0.0) || (m / q).fract() != 0.0 {
            continue;
        }
        for x in free.iter_mut() {
            let v = &mut x.samples_mut()[i];
            *v = (*v / q).round() * q;
        }
    }
}

fn add_coupling(score: AudioTensor, residual: &AudioTensor, gamma2: f64, sign: f64) -> AudioTensor {
    if gamma2.is_infinite() {
        return score;
    }
    let k = sign / gamma2;
    score.zip_with(residual, |s, r| s + k * r)
}

/// Drift of the coupled generation system. State layout:
/// `[y, s_1, …, s_M]`, where `s_m` is the submix of partition subset `m`
/// (a single source for the singleton partition).
pub struct GenerationSystem<'a> {
    model: &'a dyn ScoreField,
    cfg: &'a CfgConfig,
    trajectory_embeddings: Vec<Embedding>,
    mixture_embedding: Embedding,
    gamma_x: Vec<Gamma>,
    gamma_y: Gamma,
}

impl ScoreSystem for GenerationSystem<'_> {
    fn scores(&self, states: &[AudioTensor], ctx: &EvalContext) -> Result<Vec<AudioTensor>> {
        let (y, sources) = states.split_first().expect("mixture trajectory");
        let r = residual(y, sources.iter(), 1.0, std::iter::empty(), 1.0)?;
        let mut out = Vec::with_capacity(states.len());
        let ys = cfg_score(self.model, y, &self.mixture_embedding, self.cfg, ctx.sigma)?;
        out.push(add_coupling(ys, &r, self.gamma_y.variance(ctx.sigma), -1.0));
        for ((x, z), g) in sources.iter().zip(&self.trajectory_embeddings).zip(&self.gamma_x) {
            let s = cfg_score(self.model, x, z, self.cfg, ctx.sigma)?;
            out.push(add_coupling(s, &r, g.variance(ctx.sigma), 1.0));
        }
        Ok(out)
    }
}

/// Accompaniment drift. State layout `[y, x_j…]` over wanted sources; given
/// sources are re-drawn from the perturbation kernel at every evaluation.
pub struct PartialSystem<'a> {
    model: &'a dyn ScoreField,
    cfg: &'a CfgConfig,
    given: Vec<AudioTensor>,
    wanted_embeddings: Vec<Embedding>,
    mixture_embedding: Embedding,
    gamma_x: Vec<Gamma>,
    gamma_y: Gamma,
    mix: PartialGenConfig,
    seed: u64,
}

impl PartialSystem<'_> {
    /// The given sources at the noise level of `ctx`.
    pub fn noisy_given(&self, ctx: &EvalContext) -> Result<Vec<AudioTensor>> {
        self.given
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let key = 2 * ctx.step as u64 + ctx.stage as u64;
                perturb(x, ctx.sigma, &mut stream(self.seed, GIVEN_ID_BASE + i as u64, key))
            })
            .collect()
    }
}

impl ScoreSystem for PartialSystem<'_> {
    fn scores(&self, states: &[AudioTensor], ctx: &EvalContext) -> Result<Vec<AudioTensor>> {
        let (y, wanted) = states.split_first().expect("mixture trajectory");
        let given = self.noisy_given(ctx)?;
        let r = residual(y, given.iter(), self.mix.alpha, wanted.iter(), self.mix.beta)?;
        let mut out = Vec::with_capacity(states.len());
        let ys = cfg_score(self.model, y, &self.mixture_embedding, self.cfg, ctx.sigma)?;
        out.push(add_coupling(ys, &r, self.gamma_y.variance(ctx.sigma), -1.0));
        for ((x, z), g) in wanted.iter().zip(&self.wanted_embeddings).zip(&self.gamma_x) {
            let s = cfg_score(self.model, x, z, self.cfg, ctx.sigma)?;
            out.push(add_coupling(s, &r, g.variance(ctx.sigma), 1.0));
        }
        Ok(out)
    }
}

/// Dirac-constrained separation drift: trajectory `k` follows
/// `S(x_k, z_k) − S(y0 − Σ x_l, z_c)`. Also covers the extractor, which is
/// the one-trajectory case with the complement as the constrained part.
pub struct ConstrainedSystem<'a> {
    model: &'a dyn ScoreField,
    cfg: &'a CfgConfig,
    mixture: AudioTensor,
    free_embeddings: Vec<Embedding>,
    constrained_embedding: Embedding,
}

impl ConstrainedSystem<'_> {
    fn constrained_part(&self, states: &[AudioTensor]) -> Result<AudioTensor> {
        residual(&self.mixture, states.iter(), 1.0, std::iter::empty(), 1.0)
    }
}

impl ScoreSystem for ConstrainedSystem<'_> {
    fn scores(&self, states: &[AudioTensor], ctx: &EvalContext) -> Result<Vec<AudioTensor>> {
        let rest = self.constrained_part(states)?;
        let pull = cfg_score(self.model, &rest, &self.constrained_embedding, self.cfg, ctx.sigma)?;
        states
            .iter()
            .zip(&self.free_embeddings)
            .map(|(x, z)| {
                let s = cfg_score(self.model, x, z, self.cfg, ctx.sigma)?;
                Ok(s.zip_with(&pull, |a, b| a - b))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOutput {
    pub wanted: Vec<AudioTensor>,
    /// The given sources, passed through untouched.
    pub given: Vec<AudioTensor>,
    pub mixture: AudioTensor,
}

/// The inference engine: one score model plus sampling settings.
pub struct Gmsdi<'a> {
    pub model: &'a dyn ScoreField,
    pub encoder: &'a LabelEncoder,
    pub schedule: &'a NoiseSchedule,
    pub sampler: &'a IntegratorConfig,
    pub cfg: &'a CfgConfig,
}

fn source_id(k: usize) -> u64 {
    k as u64 + 1
}

impl<'a> Gmsdi<'a> {
    fn run(&self, ids: Vec<u64>, template: &AudioTensor, system: &dyn ScoreSystem) -> Result<Vec<AudioTensor>> {
        let init = CoupledState::from_noise(template, ids, self.sampler.rng_seed, self.schedule.sigma_max)?;
        Ok(integrate(init, system, self.schedule, self.sampler)?.states)
    }

    /// Plain conditional sampling of one trajectory with stream id `id`.
    pub fn sample(&self, z: &Embedding, template: &AudioTensor, id: u64) -> Result<AudioTensor> {
        let system = |s: &[AudioTensor], ctx: &EvalContext| {
            Ok(vec![cfg_score(self.model, &s[0], z, self.cfg, ctx.sigma)?])
        };
        Ok(self.run(vec![id], template, &system)?.remove(0))
    }

    pub fn generation_system(
        &self,
        trajectory_embeddings: Vec<Embedding>,
        mixture_embedding: Embedding,
        gamma: &GammaConfig,
    ) -> Result<GenerationSystem<'a>> {
        if trajectory_embeddings.is_empty() {
            return Err(Error::config("generation needs at least one source"));
        }
        Ok(GenerationSystem {
            model: self.model,
            cfg: self.cfg,
            gamma_x: gamma.per_trajectory(trajectory_embeddings.len())?,
            gamma_y: gamma.gamma_y,
            trajectory_embeddings,
            mixture_embedding,
        })
    }

    fn mixture_spec(&self, specs: &[SourceSpec]) -> Result<SourceSpec> {
        let refs: Vec<&SourceSpec> = specs.iter().collect();
        SourceSpec::combine(self.encoder, &refs)
    }

    /// Generates a coherent set of sources and their mixture.
    pub fn total_generate(
        &self,
        sources: &[SourceSpec],
        gamma: &GammaConfig,
        template: &AudioTensor,
    ) -> Result<(Vec<AudioTensor>, AudioTensor)> {
        let mixture = self.mixture_spec(sources)?;
        let system = self.generation_system(
            sources.iter().map(|s| s.embedding.clone()).collect(),
            mixture.embedding,
            gamma,
        )?;
        let ids = std::iter::once(MIXTURE_ID)
            .chain((0..sources.len()).map(source_id))
            .collect();
        let mut states = self.run(ids, template, &system)?;
        let y = states.remove(0);
        Ok((states, y))
    }

    /// The partition system: one trajectory per subset, conditioned on the
    /// joint description of its members.
    pub fn partition_system(
        &self,
        partition: &Partition,
        specs: &[SourceSpec],
        gamma: &GammaConfig,
    ) -> Result<GenerationSystem<'a>> {
        if partition.n_sources() != specs.len() {
            return Err(Error::config(format!(
                "partition covers {} sources but {} specs were given",
                partition.n_sources(),
                specs.len()
            )));
        }
        // re-validate against the spec count
        Partition::new(partition.subsets().to_vec(), specs.len())?;
        let subset_embeddings = partition
            .subsets()
            .iter()
            .map(|subset| {
                let members: Vec<&SourceSpec> = subset.iter().map(|&i| &specs[i]).collect();
                Ok(SourceSpec::combine(self.encoder, &members)?.embedding)
            })
            .collect::<Result<Vec<_>>>()?;
        self.generation_system(subset_embeddings, self.mixture_spec(specs)?.embedding, gamma)
    }

    /// Generates one submix per partition subset, plus the mixture.
    pub fn total_generate_partition(
        &self,
        partition: &Partition,
        specs: &[SourceSpec],
        gamma: &GammaConfig,
        template: &AudioTensor,
    ) -> Result<(Vec<AudioTensor>, AudioTensor)> {
        let system = self.partition_system(partition, specs, gamma)?;
        let ids = std::iter::once(MIXTURE_ID)
            .chain((0..partition.len()).map(source_id))
            .collect();
        let mut states = self.run(ids, template, &system)?;
        let y = states.remove(0);
        Ok((states, y))
    }

    pub fn partial_system(
        &self,
        given: &[(AudioTensor, SourceSpec)],
        wanted: &[SourceSpec],
        config: PartialGenConfig,
        gamma: &GammaConfig,
    ) -> Result<PartialSystem<'a>> {
        if wanted.is_empty() {
            return Err(Error::config("partial generation needs at least one wanted source"));
        }
        if gamma.gamma_y.is_infinite() {
            log::warn!("gamma_y is infinite: the given sources cannot inform the mixture");
        }
        if !(config.alpha.is_finite() && config.beta.is_finite()) {
            return Err(Error::config("alpha and beta must be finite"));
        }
        for (x, _) in given.iter().skip(1) {
            given[0].0.ensure_same_shape(x)?;
        }
        let all: Vec<SourceSpec> = given
            .iter()
            .map(|(_, s)| s.clone())
            .chain(wanted.iter().cloned())
            .collect();
        Ok(PartialSystem {
            model: self.model,
            cfg: self.cfg,
            given: given.iter().map(|(x, _)| x.clone()).collect(),
            wanted_embeddings: wanted.iter().map(|s| s.embedding.clone()).collect(),
            mixture_embedding: self.mixture_spec(&all)?.embedding,
            gamma_x: gamma.per_trajectory(wanted.len())?,
            gamma_y: gamma.gamma_y,
            mix: config,
            seed: self.sampler.rng_seed,
        })
    }

    /// Generates accompaniments for clean given sources.
    pub fn partial_generate(
        &self,
        given: &[(AudioTensor, SourceSpec)],
        wanted: &[SourceSpec],
        config: PartialGenConfig,
        gamma: &GammaConfig,
        template: &AudioTensor,
    ) -> Result<PartialOutput> {
        if let Some((x, _)) = given.first() {
            template.ensure_same_shape(x)?;
        }
        let system = self.partial_system(given, wanted, config, gamma)?;
        let ids = std::iter::once(MIXTURE_ID)
            .chain((0..wanted.len()).map(|j| source_id(given.len() + j)))
            .collect();
        let mut states = self.run(ids, template, &system)?;
        let mixture = states.remove(0);
        Ok(PartialOutput {
            wanted: states,
            given: given.iter().map(|(x, _)| x.clone()).collect(),
            mixture,
        })
    }

    pub fn separator_system(&self, task: &SeparationTask) -> Result<ConstrainedSystem<'a>> {
        task.validate()?;
        for s in &task.sources {
            if s.embedding.dim() != task.sources[0].embedding.dim() {
                return Err(Error::config("source embeddings differ in dimension"));
            }
        }
        Ok(ConstrainedSystem {
            model: self.model,
            cfg: self.cfg,
            mixture: task.mixture.clone(),
            free_embeddings: task
                .sources
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != task.constrained_index)
                .map(|(_, s)| s.embedding.clone())
                .collect(),
            constrained_embedding: task.sources[task.constrained_index].embedding.clone(),
        })
    }

    /// Separates all sources; the constrained one is the residual
    /// `y0 − Σ others`, so the outputs sum to the mixture exactly.
    pub fn separate(&self, task: &SeparationTask) -> Result<Vec<AudioTensor>> {
        let system = self.separator_system(task)?;
        let free: Vec<usize> = (0..task.sources.len())
            .filter(|&k| k != task.constrained_index)
            .collect();
        let ids = free.iter().map(|&k| source_id(k)).collect();
        let mut states = self.run(ids, &task.mixture, &system)?;
        snap_to_common_grid(&mut states, &task.mixture);
        let constrained = system.constrained_part(&states)?;
        let mut states = states.into_iter();
        Ok((0..task.sources.len())
            .map(|k| {
                if k == task.constrained_index {
                    constrained.clone()
                } else {
                    states.next().expect("one state per free source")
                }
            })
            .collect())
    }

    pub fn extractor_system<S: AsRef<str>>(
        &self,
        mixture: &AudioTensor,
        target: &SourceSpec,
        complement_labels: &[S],
    ) -> Result<ConstrainedSystem<'a>> {
        if complement_labels.is_empty() {
            return Err(Error::config("extraction needs complement labels"));
        }
        Ok(ConstrainedSystem {
            model: self.model,
            cfg: self.cfg,
            mixture: mixture.clone(),
            free_embeddings: vec![target.embedding.clone()],
            constrained_embedding: self.encoder.encode(complement_labels)?,
        })
    }

    /// Extracts a single source, constraining the complementary submix.
    pub fn extract<S: AsRef<str>>(
        &self,
        mixture: &AudioTensor,
        target: &SourceSpec,
        complement_labels: &[S],
    ) -> Result<AudioTensor> {
        let system = self.extractor_system(mixture, target, complement_labels)?;
        Ok(self.run(vec![source_id(0)], mixture, &system)?.remove(0))
    }
}

/// Index and value of the candidate with the largest L2 norm (lowest index
/// on ties).
pub fn rejection_by_norm(candidates: &[AudioTensor]) -> Result<(usize, &AudioTensor)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let n = c.norm_sq();
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((i, n));
        }
    }
    let (i, _) = best.ok_or_else(|| Error::config("no candidates to select from"))?;
    Ok((i, &candidates[i]))
}
