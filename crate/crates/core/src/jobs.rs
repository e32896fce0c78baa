//! Job descriptions for every command, and run manifests that record
//! enough of a job to replay it.
//!
//! A job is a plain serializable config. [`execute`] runs it into an output
//! directory and writes `run.json` next to the results; [`replay`] reads
//! such a manifest, runs the recorded config again and compares output
//! hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::audio::{mix, AudioTensor};
use crate::data::{
    read_wav, synth_dataset, write_wav, DatasetManifest, Instrument, SynthConfig, WavEncoding,
};
use crate::denoiser::{sha256_hex, train_denoiser, DenoiserConfig, SpectralDenoiser, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{
    grid_search_w, si_sdr_improvement, GridContext, SeparationReport, Variant, DEFAULT_W_GRID,
};
use crate::gmsdi::{rejection_by_norm, Gamma, GammaConfig, Gmsdi, PartialGenConfig, SeparationTask};
use crate::partition::Partition;
use crate::rng::derive_seed;
use crate::samplers::{IntegratorConfig, SamplerKind};
use crate::schedule::{build_sigma_schedule, NoiseSchedule};
use crate::score::{split_labels, CfgConfig, LabelEncoder, SourceSpec};

pub const RUN_MANIFEST_FORMAT: &str = "gmsdi-run";
pub const RUN_MANIFEST_VERSION: u32 = 1;
pub const RUN_MANIFEST_FILE: &str = "run.json";

/// Sampler, schedule and guidance settings shared by the inference jobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub sampler: SamplerKind,
    pub steps: usize,
    pub s_churn: f64,
    #[serde(default = "one")]
    pub s_noise: f64,
    pub rho: f64,
    /// Defaults to the checkpoint's training range when unset.
    #[serde(default)]
    pub sigma_min: Option<f64>,
    #[serde(default)]
    pub sigma_max: Option<f64>,
    pub w: f64,
    pub seed: u64,
    /// Negative prompts: target prompt to reference prompt, e.g.
    /// `"drums" = "bass"`.
    #[serde(default)]
    pub negatives: BTreeMap<String, String>,
}

fn one() -> f64 {
    1.0
}

impl SamplingParams {
    /// ADPM2 on a uniform ladder, 600 steps.
    pub fn generation() -> Self {
        Self {
            sampler: SamplerKind::Adpm2,
            steps: 600,
            s_churn: 0.0,
            s_noise: 1.0,
            rho: 1.0,
            sigma_min: None,
            sigma_max: None,
            w: 3.0,
            seed: 0,
            negatives: toy_negatives(&Instrument::ALL),
        }
    }

    /// Euler-ancestral with `s_churn = 20` on a `ρ = 7` ladder.
    pub fn separation() -> Self {
        Self {
            sampler: SamplerKind::EulerAncestral,
            steps: 300,
            s_churn: 20.0,
            s_noise: 1.0,
            rho: 7.0,
            sigma_min: None,
            sigma_max: None,
            w: 3.0,
            seed: 0,
            negatives: BTreeMap::new(),
        }
    }

    pub fn schedule(&self, model: &DenoiserConfig) -> Result<NoiseSchedule> {
        build_sigma_schedule(
            self.sigma_min.unwrap_or(model.sigma_min),
            self.sigma_max.unwrap_or(model.sigma_max),
            self.rho,
            self.steps,
        )
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            kind: self.sampler,
            n_steps: self.steps,
            s_churn: self.s_churn,
            s_noise: self.s_noise,
            rng_seed: self.seed,
        }
    }

    /// Guidance against the null embedding, with the configured negative
    /// prompts as per-target references.
    pub fn guidance(&self, encoder: &LabelEncoder) -> Result<CfgConfig> {
        let mut cfg = CfgConfig::new(self.w, encoder.unconditional())?;
        for (target, negative) in &self.negatives {
            let key = encoder.canonical_key(&split_labels(target))?;
            cfg = cfg.with_negative(key, &encoder.negative(&split_labels(negative))?);
        }
        Ok(cfg)
    }
}

/// Negative prompts for the toy instruments: each sparse source is steered
/// away from the rest of the band.
pub fn toy_negatives(vocabulary: &[Instrument]) -> BTreeMap<String, String> {
    let has = |i: Instrument| vocabulary.contains(&i);
    [
        (Instrument::Bass, &[Instrument::Drums, Instrument::Guitar, Instrument::Piano][..]),
        (Instrument::Drums, &[Instrument::Bass][..]),
        (Instrument::Guitar, &[Instrument::Bass, Instrument::Drums][..]),
        (Instrument::Piano, &[Instrument::Bass, Instrument::Drums][..]),
    ]
    .into_iter()
    .filter(|(t, negs)| has(*t) && negs.iter().all(|n| has(*n)))
    .map(|(t, negs)| {
        let neg: Vec<&str> = negs.iter().map(|n| n.label()).collect();
        (t.label().to_string(), neg.join(","))
    })
    .collect()
}

fn extractor_negatives(vocabulary: &[Instrument]) -> BTreeMap<String, String> {
    toy_negatives(vocabulary)
        .into_iter()
        .filter(|(t, _)| t == "bass" || t == "drums")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDataJob {
    #[serde(default)]
    pub dataset: SynthConfig,
    #[serde(default)]
    pub encoding: WavEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub embedding_dim: usize,
    pub encoder_seed: u64,
    pub n_bands: usize,
    pub hidden: usize,
    pub sigma_harmonics: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let base = DenoiserConfig::new(LabelEncoder::DEFAULT_DIM, 8000, 2e-3, 2.0);
        Self {
            embedding_dim: base.embedding_dim,
            encoder_seed: 0,
            n_bands: base.n_bands,
            hidden: base.hidden,
            sigma_harmonics: base.sigma_harmonics,
            sigma_min: base.sigma_min,
            sigma_max: base.sigma_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    /// Dataset manifest; only mixtures and labels are read.
    pub manifest: PathBuf,
    /// Label vocabulary; defaults to the labels seen in the manifest.
    #[serde(default)]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateJob {
    pub checkpoint: PathBuf,
    /// One prompt per generated trajectory. A prompt naming several labels
    /// ("drums,guitar") produces one submix for that subset.
    pub sources: Vec<String>,
    #[serde(default = "scaled_one")]
    pub gamma_x: Gamma,
    #[serde(default = "infinite")]
    pub gamma_y: Gamma,
    #[serde(default = "default_length")]
    pub length: usize,
    /// Candidates drawn with derived seeds; the loudest sum is kept.
    #[serde(default = "one_usize")]
    pub candidates: usize,
    #[serde(default = "SamplingParams::generation")]
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GivenSource {
    pub path: PathBuf,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccompanyJob {
    pub checkpoint: PathBuf,
    pub given: Vec<GivenSource>,
    pub wanted: Vec<String>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "scaled_one")]
    pub gamma_x: Gamma,
    #[serde(default = "scaled_one")]
    pub gamma_y: Gamma,
    #[serde(default = "accompany_sampling")]
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparateJob {
    pub checkpoint: PathBuf,
    pub mixture: PathBuf,
    /// One prompt per source.
    pub sources: Vec<String>,
    /// Source defined as the residual; the last one when unset.
    #[serde(default)]
    pub constrained: Option<String>,
    #[serde(default = "SamplingParams::separation")]
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractJob {
    pub checkpoint: PathBuf,
    pub mixture: PathBuf,
    pub target: String,
    /// Labels of everything else in the mixture.
    pub complement: Vec<String>,
    #[serde(default = "extract_sampling")]
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSearchJob {
    pub checkpoint: PathBuf,
    /// Dataset manifest with stems.
    pub manifest: PathBuf,
    #[serde(default = "default_w_grid")]
    pub w_grid: Vec<f64>,
    /// `extractor` and `separator:<label>` entries; all of them when empty.
    #[serde(default)]
    pub variants: Vec<String>,
    #[serde(default)]
    pub max_tasks: Option<usize>,
    #[serde(default = "SamplingParams::separation")]
    pub sampling: SamplingParams,
    /// Negative prompts for the extractor only.
    #[serde(default = "default_extractor_negatives")]
    pub extractor_negatives: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalJob {
    /// Reference dataset manifest with stems.
    pub manifest: PathBuf,
    /// Directory holding `<clip id>/<label>.wav` estimates.
    pub estimates: PathBuf,
    #[serde(default = "default_method")]
    pub method: String,
}

fn scaled_one() -> Gamma {
    Gamma::Scaled(1.0)
}
fn infinite() -> Gamma {
    Gamma::Infinite
}
fn default_length() -> usize {
    crate::data::DEFAULT_CLIP_LENGTH
}
fn one_usize() -> usize {
    1
}
fn default_w_grid() -> Vec<f64> {
    DEFAULT_W_GRID.to_vec()
}
fn default_method() -> String {
    "estimates".to_string()
}
fn default_extractor_negatives() -> BTreeMap<String, String> {
    extractor_negatives(&Instrument::ALL)
}
fn accompany_sampling() -> SamplingParams {
    SamplingParams {
        steps: 300,
        ..SamplingParams::generation()
    }
}
fn extract_sampling() -> SamplingParams {
    SamplingParams {
        w: 7.5,
        negatives: extractor_negatives(&Instrument::ALL),
        ..SamplingParams::separation()
    }
}

impl SeparateJob {
    pub fn new(checkpoint: PathBuf, mixture: PathBuf, sources: Vec<String>) -> Self {
        Self {
            checkpoint,
            mixture,
            sources,
            constrained: None,
            sampling: SamplingParams::separation(),
        }
    }
}

impl ExtractJob {
    pub fn new(checkpoint: PathBuf, mixture: PathBuf, target: String, complement: Vec<String>) -> Self {
        Self {
            checkpoint,
            mixture,
            target,
            complement,
            sampling: extract_sampling(),
        }
    }
}

impl GenerateJob {
    pub fn new(checkpoint: PathBuf, sources: Vec<String>) -> Self {
        Self {
            checkpoint,
            sources,
            gamma_x: scaled_one(),
            gamma_y: infinite(),
            length: default_length(),
            candidates: 1,
            sampling: SamplingParams::generation(),
        }
    }
}

impl AccompanyJob {
    pub fn new(checkpoint: PathBuf, given: Vec<GivenSource>, wanted: Vec<String>) -> Self {
        Self {
            checkpoint,
            given,
            wanted,
            alpha: 1.0,
            beta: 1.0,
            gamma_x: scaled_one(),
            gamma_y: scaled_one(),
            sampling: accompany_sampling(),
        }
    }
}

impl GridSearchJob {
    pub fn new(checkpoint: PathBuf, manifest: PathBuf) -> Self {
        Self {
            checkpoint,
            manifest,
            w_grid: default_w_grid(),
            variants: Vec::new(),
            max_tasks: None,
            sampling: SamplingParams::separation(),
            extractor_negatives: default_extractor_negatives(),
        }
    }
}

/// Every job the command-line tool can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum JobConfig {
    SynthData(SynthDataJob),
    Train(TrainJob),
    Generate(GenerateJob),
    Accompany(AccompanyJob),
    Separate(SeparateJob),
    Extract(ExtractJob),
    Gridsearch(GridSearchJob),
    Eval(EvalJob),
}

/// Schedule parameters as resolved for the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub n_steps: usize,
}

impl From<&NoiseSchedule> for ScheduleRecord {
    fn from(s: &NoiseSchedule) -> Self {
        Self {
            sigma_min: s.sigma_min,
            sigma_max: s.sigma_max,
            rho: s.rho,
            n_steps: s.n_steps,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct JobOutcome {
    files: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    schedule: Option<ScheduleRecord>,
    checkpoint_sha256: Option<String>,
    summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub config: JobConfig,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub schedule: Option<ScheduleRecord>,
    /// SHA-256 of the checkpoint read (or written, for training).
    #[serde(default)]
    pub checkpoint_sha256: Option<String>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub platform: String,
    pub package_version: String,
    /// Output path (relative to the run directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub summary: String,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::format("run manifest", e.to_string()))?;
        if m.format != RUN_MANIFEST_FORMAT {
            return Err(Error::format("format", format!("not a run manifest: `{}`", m.format)));
        }
        if m.version != RUN_MANIFEST_VERSION {
            return Err(Error::format("version", format!("unsupported version {}", m.version)));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format("run manifest", e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| Error::io(p, e))
}

fn load_model(path: &Path) -> Result<(SpectralDenoiser, LabelEncoder, String)> {
    SpectralDenoiser::load(path)
}

fn file_key(labels: &str) -> String {
    split_labels(labels).join("+")
}

impl JobConfig {
    pub fn command(&self) -> &'static str {
        match self {
            JobConfig::SynthData(_) => "synth-data",
            JobConfig::Train(_) => "train",
            JobConfig::Generate(_) => "generate",
            JobConfig::Accompany(_) => "accompany",
            JobConfig::Separate(_) => "separate",
            JobConfig::Extract(_) => "extract",
            JobConfig::Gridsearch(_) => "gridsearch",
            JobConfig::Eval(_) => "eval",
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("job config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("job config: {e}")))
    }

    /// Rewrites input paths as absolute paths so the recorded config does
    /// not depend on the working directory. Missing inputs fail here,
    /// before any compute.
    pub fn absolutize(&mut self) -> Result<()> {
        match self {
            JobConfig::SynthData(_) => {}
            JobConfig::Train(j) => j.manifest = absolute(&j.manifest)?,
            JobConfig::Generate(j) => j.checkpoint = absolute(&j.checkpoint)?,
            JobConfig::Accompany(j) => {
                j.checkpoint = absolute(&j.checkpoint)?;
                for g in &mut j.given {
                    g.path = absolute(&g.path)?;
                }
            }
            JobConfig::Separate(j) => {
                j.checkpoint = absolute(&j.checkpoint)?;
                j.mixture = absolute(&j.mixture)?;
            }
            JobConfig::Extract(j) => {
                j.checkpoint = absolute(&j.checkpoint)?;
                j.mixture = absolute(&j.mixture)?;
            }
            JobConfig::Gridsearch(j) => {
                j.checkpoint = absolute(&j.checkpoint)?;
                j.manifest = absolute(&j.manifest)?;
            }
            JobConfig::Eval(j) => {
                j.manifest = absolute(&j.manifest)?;
                j.estimates = absolute(&j.estimates)?;
            }
        }
        Ok(())
    }

    fn run(&self, out: &Path) -> Result<JobOutcome> {
        match self {
            JobConfig::SynthData(j) => run_synth(j, out),
            JobConfig::Train(j) => run_train(j, out),
            JobConfig::Generate(j) => run_generate(j, out),
            JobConfig::Accompany(j) => run_accompany(j, out),
            JobConfig::Separate(j) => run_separate(j, out),
            JobConfig::Extract(j) => run_extract(j, out),
            JobConfig::Gridsearch(j) => run_gridsearch(j, out),
            JobConfig::Eval(j) => run_eval(j, out),
        }
    }
}

fn run_synth(job: &SynthDataJob, out: &Path) -> Result<JobOutcome> {
    let manifest = synth_dataset(&job.dataset, out, job.encoding)?;
    let mut files = vec![PathBuf::from(crate::data::MANIFEST_FILE)];
    for c in &manifest.clips {
        files.push(c.mixture.clone());
        files.extend(c.stems.iter().flatten().cloned());
    }
    Ok(JobOutcome {
        files,
        seeds: [("dataset".to_string(), job.dataset.seed)].into(),
        summary: format!("{} clips written to {}", manifest.clips.len(), out.display()),
        ..JobOutcome::default()
    })
}

fn run_train(job: &TrainJob, out: &Path) -> Result<JobOutcome> {
    let manifest = DatasetManifest::read(&job.manifest)?;
    let vocabulary: Vec<String> = if job.vocabulary.is_empty() {
        let mut v: Vec<String> = manifest.clips.iter().flat_map(|c| c.labels.clone()).collect();
        v.sort();
        v.dedup();
        v
    } else {
        job.vocabulary.clone()
    };
    let encoder = LabelEncoder::new(&vocabulary, job.model.embedding_dim, job.model.encoder_seed)?;
    let examples = manifest.mixtures().training_examples(&encoder)?;
    let m = &job.model;
    let config = DenoiserConfig {
        n_bands: m.n_bands,
        hidden: m.hidden,
        embedding_dim: m.embedding_dim,
        sigma_harmonics: m.sigma_harmonics,
        sample_rate: manifest.sample_rate,
        sigma_min: m.sigma_min,
        sigma_max: m.sigma_max,
    };
    let (model, report) = train_denoiser(&examples, config, &encoder.unconditional(), &job.train)?;
    let hash = model.save(&out.join("model.json"), &encoder)?;
    let losses = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::format("training report", e.to_string()))?;
    std::fs::write(out.join("losses.json"), losses).map_err(|e| Error::io(out.join("losses.json"), e))?;
    encoder.write_vocabulary_file(&out.join("vocabulary.txt"))?;
    let summary = match (report.epoch_losses.first(), report.epoch_losses.last()) {
        (Some(a), Some(b)) => format!("trained on {} mixtures; loss {a:.4} -> {b:.4}", examples.len()),
        _ => "no epochs run".to_string(),
    };
    Ok(JobOutcome {
        files: vec!["model.json".into(), "losses.json".into(), "vocabulary.txt".into()],
        seeds: [
            ("train".to_string(), job.train.seed),
            ("encoder".to_string(), job.model.encoder_seed),
        ]
        .into(),
        checkpoint_sha256: Some(hash),
        summary,
        ..JobOutcome::default()
    })
}

/// Labels of each prompt, and the partition grouping them.
fn prompts_to_partition(
    encoder: &LabelEncoder,
    prompts: &[String],
) -> Result<(Vec<SourceSpec>, Partition)> {
    let mut specs = Vec::new();
    let mut subsets = Vec::new();
    for p in prompts {
        let labels = split_labels(p);
        if labels.is_empty() {
            return Err(Error::config("empty source prompt"));
        }
        let mut subset = Vec::new();
        for l in labels {
            subset.push(specs.len());
            specs.push(SourceSpec::new(encoder, &[l])?);
        }
        subsets.push(subset);
    }
    let n = specs.len();
    Ok((specs, Partition::new(subsets, n)?))
}

fn run_generate(job: &GenerateJob, out: &Path) -> Result<JobOutcome> {
    if job.sources.is_empty() {
        return Err(Error::config("generate needs at least one source prompt"));
    }
    if job.candidates == 0 || job.length == 0 {
        return Err(Error::config("candidates and length must be positive"));
    }
    let (model, encoder, hash) = load_model(&job.checkpoint)?;
    let (specs, partition) = prompts_to_partition(&encoder, &job.sources)?;
    let schedule = job.sampling.schedule(model.config())?;
    let cfg = job.sampling.guidance(&encoder)?;
    let gamma = GammaConfig::uniform(job.gamma_x, job.gamma_y);
    let template = AudioTensor::zeros(1, job.length, model.config().sample_rate);
    let mut runs = Vec::new();
    for c in 0..job.candidates {
        let mut sampler = job.sampling.integrator();
        if c > 0 {
            sampler.rng_seed = derive_seed(job.sampling.seed, c as u64);
        }
        let engine = Gmsdi {
            model: &model,
            encoder: &encoder,
            schedule: &schedule,
            sampler: &sampler,
            cfg: &cfg,
        };
        runs.push(engine.total_generate_partition(&partition, &specs, &gamma, &template)?);
    }
    let sums: Vec<AudioTensor> = runs.iter().map(|(s, _)| mix(s)).collect::<Result<_>>()?;
    let (best, _) = rejection_by_norm(&sums)?;
    let (stems, mixture) = &runs[best];
    let mut files = Vec::new();
    for (k, (stem, prompt)) in stems.iter().zip(&job.sources).enumerate() {
        let name = PathBuf::from(format!("source{k}_{}.wav", file_key(prompt)));
        write_wav(&out.join(&name), stem, WavEncoding::Float32)?;
        files.push(name);
    }
    write_wav(&out.join("mixture.wav"), mixture, WavEncoding::Float32)?;
    write_wav(&out.join("sum.wav"), &sums[best], WavEncoding::Float32)?;
    files.push("mixture.wav".into());
    files.push("sum.wav".into());
    let residual = mixture.sub(&sums[best])?.norm() / mixture.norm().max(f64::MIN_POSITIVE);
    Ok(JobOutcome {
        files,
        seeds: [("sampler".to_string(), job.sampling.seed)].into(),
        schedule: Some((&schedule).into()),
        checkpoint_sha256: Some(hash),
        summary: format!(
            "generated {} sources (candidate {best} of {}), mixture residual {residual:.3}",
            stems.len(),
            job.candidates
        ),
    })
}

fn run_accompany(job: &AccompanyJob, out: &Path) -> Result<JobOutcome> {
    if job.wanted.is_empty() {
        return Err(Error::config("accompany needs at least one wanted prompt"));
    }
    let (model, encoder, hash) = load_model(&job.checkpoint)?;
    let given: Vec<(AudioTensor, SourceSpec)> = job
        .given
        .iter()
        .map(|g| Ok((read_wav(&g.path)?, SourceSpec::new(&encoder, &split_labels(&g.labels))?)))
        .collect::<Result<_>>()?;
    let template = match given.first() {
        Some((x, _)) => x.zeros_like(),
        None => AudioTensor::zeros(1, default_length(), model.config().sample_rate),
    };
    let wanted: Vec<SourceSpec> = job
        .wanted
        .iter()
        .map(|w| SourceSpec::new(&encoder, &split_labels(w)))
        .collect::<Result<_>>()?;
    let schedule = job.sampling.schedule(model.config())?;
    let sampler = job.sampling.integrator();
    let cfg = job.sampling.guidance(&encoder)?;
    let engine = Gmsdi {
        model: &model,
        encoder: &encoder,
        schedule: &schedule,
        sampler: &sampler,
        cfg: &cfg,
    };
    let result = engine.partial_generate(
        &given,
        &wanted,
        PartialGenConfig {
            alpha: job.alpha,
            beta: job.beta,
        },
        &GammaConfig::uniform(job.gamma_x, job.gamma_y),
        &template,
    )?;
    let mut files = Vec::new();
    for (k, (x, prompt)) in result.wanted.iter().zip(&job.wanted).enumerate() {
        let name = PathBuf::from(format!("wanted{k}_{}.wav", file_key(prompt)));
        write_wav(&out.join(&name), x, WavEncoding::Float32)?;
        files.push(name);
    }
    let all: Vec<AudioTensor> = result.given.iter().chain(&result.wanted).cloned().collect();
    write_wav(&out.join("full_mix.wav"), &mix(&all)?, WavEncoding::Float32)?;
    write_wav(&out.join("mixture.wav"), &result.mixture, WavEncoding::Float32)?;
    files.push("full_mix.wav".into());
    files.push("mixture.wav".into());
    Ok(JobOutcome {
        files,
        seeds: [("sampler".to_string(), job.sampling.seed)].into(),
        schedule: Some((&schedule).into()),
        checkpoint_sha256: Some(hash),
        summary: format!("generated {} accompaniment sources", result.wanted.len()),
    })
}

fn run_separate(job: &SeparateJob, out: &Path) -> Result<JobOutcome> {
    let (model, encoder, hash) = load_model(&job.checkpoint)?;
    let mixture = read_wav(&job.mixture)?;
    let sources: Vec<SourceSpec> = job
        .sources
        .iter()
        .map(|s| SourceSpec::new(&encoder, &split_labels(s)))
        .collect::<Result<_>>()?;
    if sources.len() < 2 {
        return Err(Error::config("separate needs at least two source prompts"));
    }
    let constrained_index = match &job.constrained {
        None => sources.len() - 1,
        Some(c) => {
            let key = encoder.canonical_key(&split_labels(c))?;
            sources
                .iter()
                .position(|s| s.embedding.key == key)
                .ok_or_else(|| Error::config(format!("constrained source `{c}` is not among the sources")))?
        }
    };
    let schedule = job.sampling.schedule(model.config())?;
    let sampler = job.sampling.integrator();
    let cfg = job.sampling.guidance(&encoder)?;
    let engine = Gmsdi {
        model: &model,
        encoder: &encoder,
        schedule: &schedule,
        sampler: &sampler,
        cfg: &cfg,
    };
    let estimates = engine.separate(&SeparationTask {
        mixture,
        sources,
        constrained_index,
    })?;
    let mut files = Vec::new();
    for (est, prompt) in estimates.iter().zip(&job.sources) {
        let name = PathBuf::from(format!("{}.wav", file_key(prompt)));
        write_wav(&out.join(&name), est, WavEncoding::Float32)?;
        files.push(name);
    }
    Ok(JobOutcome {
        files,
        seeds: [("sampler".to_string(), job.sampling.seed)].into(),
        schedule: Some((&schedule).into()),
        checkpoint_sha256: Some(hash),
        summary: format!(
            "separated {} sources, constrained `{}`",
            estimates.len(),
            job.sources[constrained_index]
        ),
    })
}

fn run_extract(job: &ExtractJob, out: &Path) -> Result<JobOutcome> {
    let (model, encoder, hash) = load_model(&job.checkpoint)?;
    let mixture = read_wav(&job.mixture)?;
    let target = SourceSpec::new(&encoder, &split_labels(&job.target))?;
    let complement: Vec<String> = job.complement.iter().flat_map(|c| split_labels(c)).collect();
    let schedule = job.sampling.schedule(model.config())?;
    let sampler = job.sampling.integrator();
    let cfg = job.sampling.guidance(&encoder)?;
    let engine = Gmsdi {
        model: &model,
        encoder: &encoder,
        schedule: &schedule,
        sampler: &sampler,
        cfg: &cfg,
    };
    let est = engine.extract(&mixture, &target, &complement)?;
    let name = PathBuf::from(format!("{}.wav", file_key(&job.target)));
    write_wav(&out.join(&name), &est, WavEncoding::Float32)?;
    Ok(JobOutcome {
        files: vec![name],
        seeds: [("sampler".to_string(), job.sampling.seed)].into(),
        schedule: Some((&schedule).into()),
        checkpoint_sha256: Some(hash),
        summary: format!("extracted `{}`", job.target),
    })
}

fn run_gridsearch(job: &GridSearchJob, out: &Path) -> Result<JobOutcome> {
    let (model, encoder, hash) = load_model(&job.checkpoint)?;
    let manifest = DatasetManifest::read(&job.manifest)?;
    let mut tasks = manifest.benchmark_tasks()?;
    tasks.retain(|t| t.sources.len() >= 2);
    if let Some(n) = job.max_tasks {
        tasks.truncate(n);
    }
    let variants: Vec<Variant> = if job.variants.is_empty() {
        let mut labels: Vec<String> = tasks.iter().flat_map(|t| t.labels()).map(String::from).collect();
        labels.sort();
        labels.dedup();
        std::iter::once(Variant::Extractor)
            .chain(labels.into_iter().map(|constrained| Variant::Separator { constrained }))
            .collect()
    } else {
        job.variants.iter().map(|v| v.parse()).collect::<Result<_>>()?
    };
    let schedule = job.sampling.schedule(model.config())?;
    let separator_cfg = job.sampling.guidance(&encoder)?;
    let extractor_cfg = SamplingParams {
        negatives: job.extractor_negatives.clone(),
        ..job.sampling.clone()
    }
    .guidance(&encoder)?;
    let ctx = GridContext {
        model: &model,
        encoder: &encoder,
        schedule: &schedule,
        sampler: job.sampling.integrator(),
        separator_cfg,
        extractor_cfg,
    };
    let report = grid_search_w(&ctx, &tasks, &job.w_grid, &variants)?;
    let text = report.text_table();
    std::fs::write(out.join("grid.json"), report.to_json()?).map_err(|e| Error::io(out.join("grid.json"), e))?;
    std::fs::write(out.join("grid.txt"), &text).map_err(|e| Error::io(out.join("grid.txt"), e))?;
    Ok(JobOutcome {
        files: vec!["grid.json".into(), "grid.txt".into()],
        seeds: [("sampler".to_string(), job.sampling.seed)].into(),
        schedule: Some((&schedule).into()),
        checkpoint_sha256: Some(hash),
        summary: text,
    })
}

fn run_eval(job: &EvalJob, out: &Path) -> Result<JobOutcome> {
    let manifest = DatasetManifest::read(&job.manifest)?;
    let tasks = manifest.benchmark_tasks()?;
    if tasks.is_empty() {
        return Err(Error::config("reference manifest has no clips with stems"));
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for task in &tasks {
        for (label, stem) in &task.sources {
            let est = read_wav(&job.estimates.join(&task.id).join(format!("{label}.wav")))?;
            let v = si_sdr_improvement(&est, stem, &task.mixture)?;
            let e = sums.entry(label.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let per_source = sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect();
    let mut report = SeparationReport::new(job.method.clone(), per_source)?;
    let run = job.estimates.join(RUN_MANIFEST_FILE);
    if run.exists() {
        report.manifest = Some(run.display().to_string());
    }
    let json = serde_json::json!({
        "schema": crate::eval::REPORT_SCHEMA,
        "version": crate::eval::REPORT_VERSION,
        "n_clips": tasks.len(),
        "report": report,
    });
    let text = SeparationReport::text_table(std::slice::from_ref(&report));
    std::fs::write(out.join("eval.json"), serde_json::to_string_pretty(&json).expect("plain json"))
        .map_err(|e| Error::io(out.join("eval.json"), e))?;
    std::fs::write(out.join("eval.txt"), &text).map_err(|e| Error::io(out.join("eval.txt"), e))?;
    Ok(JobOutcome {
        files: vec!["eval.json".into(), "eval.txt".into()],
        summary: text,
        ..JobOutcome::default()
    })
}

/// Runs `job` into `out_dir` and writes `run.json` there. A directory
/// created here is removed again if the job fails.
pub fn execute(job: &JobConfig, out_dir: &Path) -> Result<RunManifest> {
    let mut job = job.clone();
    job.absolutize()?;
    let fresh = !out_dir.exists();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started_at = now();
    let outcome = match job.run(out_dir) {
        Ok(o) => o,
        Err(e) => {
            // a failed job leaves no partial output behind
            if fresh {
                let _ = std::fs::remove_dir_all(out_dir);
            }
            return Err(e);
        }
    };
    let mut outputs = BTreeMap::new();
    for f in &outcome.files {
        let p = out_dir.join(f);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        outputs.insert(f.to_string_lossy().replace('\\', "/"), sha256_hex(&bytes));
    }
    let manifest = RunManifest {
        format: RUN_MANIFEST_FORMAT.to_string(),
        version: RUN_MANIFEST_VERSION,
        command: job.command().to_string(),
        config: job,
        seeds: outcome.seeds,
        schedule: outcome.schedule,
        checkpoint_sha256: outcome.checkpoint_sha256,
        started_at,
        finished_at: now(),
        platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        summary: outcome.summary,
    };
    manifest.write(&out_dir.join(RUN_MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub original: RunManifest,
    pub replayed: RunManifest,
    /// Outputs whose hashes differ, or that exist in only one run.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-runs the job recorded in `manifest_path` into `out_dir` and compares
/// every output hash with the recorded one.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ReplayReport> {
    let original = RunManifest::read(manifest_path)?;
    let checkpoint = match &original.config {
        JobConfig::Generate(j) => Some(&j.checkpoint),
        JobConfig::Accompany(j) => Some(&j.checkpoint),
        JobConfig::Separate(j) => Some(&j.checkpoint),
        JobConfig::Extract(j) => Some(&j.checkpoint),
        JobConfig::Gridsearch(j) => Some(&j.checkpoint),
        _ => None,
    };
    if let (Some(path), Some(expected)) = (checkpoint, &original.checkpoint_sha256) {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::format(
                "checkpoint_sha256",
                format!("{} changed since the recorded run", path.display()),
            ));
        }
    }
    let replayed = execute(&original.config, out_dir)?;
    let mut mismatches: Vec<String> = original
        .outputs
        .iter()
        .filter(|(k, v)| replayed.outputs.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    mismatches.extend(
        replayed
            .outputs
            .keys()
            .filter(|k| !original.outputs.contains_key(*k))
            .cloned(),
    );
    if original.checkpoint_sha256.is_some() && replayed.checkpoint_sha256 != original.checkpoint_sha256 {
        mismatches.push("checkpoint_sha256".to_string());
    }
    Ok(ReplayReport {
        original,
        replayed,
        mismatches,
    })
}
