//! `gmsdi`: one reproducible job per invocation.
//!
//! Flags are collected into a job table, a `--config` TOML file is merged
//! over them, and the result is deserialized into a [`JobConfig`]. Every run
//! writes `run.json` next to its outputs.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration, 3 unknown label,
//! 4 I/O, 5 file format, 6 numerical failure, 7 replay mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmsdi_core::jobs::{
    execute, replay, AccompanyJob, ExtractJob, GenerateJob, GridSearchJob, JobConfig, SamplingParams, SeparateJob,
    RUN_MANIFEST_FILE,
};
use gmsdi_core::Error;
use toml::{Table, Value};

/// Environment variable naming the root directory for default output paths.
const OUT_ENV: &str = "GMSDI_OUT";

#[derive(Parser)]
#[command(name = "gmsdi", version, about = "Generate, accompany and separate sources with a mixture score model")]
struct Cli {
    /// Output directory [default: $GMSDI_OUT/<command>, or runs/<command>]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML job file; its keys override the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic band-disjoint dataset with its manifest
    SynthData(SynthArgs),
    /// Train the toy denoiser on a manifest's mixtures and labels
    Train(TrainArgs),
    /// Generate a coherent set of sources and their mixture
    Generate(GenerateArgs),
    /// Generate accompaniments for given stems
    Accompany(AccompanyArgs),
    /// Separate every source of a mixture
    Separate(SeparateArgs),
    /// Extract one source from a mixture
    Extract(ExtractArgs),
    /// Grid-search the embedding scale over a benchmark
    Gridsearch(GridArgs),
    /// Score a directory of estimates against a dataset
    Eval(EvalArgs),
    /// Re-run a recorded job and compare output hashes
    Replay(ReplayArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    clips: Option<i64>,
    /// Samples per clip
    #[arg(long)]
    length: Option<i64>,
    #[arg(long)]
    seed: Option<i64>,
    /// Exact number of sources per clip
    #[arg(long)]
    sources_per_clip: Option<i64>,
    /// Comma-separated instrument labels
    #[arg(long)]
    labels: Option<String>,
    /// float32 or pcm16
    #[arg(long)]
    encoding: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<i64>,
    #[arg(long)]
    batch_size: Option<i64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden: Option<i64>,
    #[arg(long)]
    seed: Option<i64>,
}

#[derive(Args)]
struct Sampling {
    /// euler_ancestral or adpm2
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    steps: Option<i64>,
    /// Embedding scale of classifier-free guidance
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    s_churn: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    seed: Option<i64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// One per source; "drums,guitar" asks for a joint submix
    #[arg(long = "source")]
    sources: Vec<String>,
    #[arg(long)]
    length: Option<i64>,
    #[arg(long)]
    candidates: Option<i64>,
    /// infinite, scaled:<c> or a constant
    #[arg(long)]
    gamma_x: Option<String>,
    #[arg(long)]
    gamma_y: Option<String>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct AccompanyArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// PATH=LABELS, e.g. bass.wav=bass
    #[arg(long = "given")]
    given: Vec<String>,
    #[arg(long = "wanted")]
    wanted: Vec<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma_x: Option<String>,
    #[arg(long)]
    gamma_y: Option<String>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    mixture: Option<PathBuf>,
    #[arg(long = "source")]
    sources: Vec<String>,
    /// Source defined as the residual [default: the last one]
    #[arg(long)]
    constrained: Option<String>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    mixture: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated labels of the rest of the mixture
    #[arg(long)]
    complement: Option<String>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated embedding scales
    #[arg(long = "w-grid")]
    w_grid: Option<String>,
    /// `extractor` or `separator:<label>`; all of them when omitted
    #[arg(long = "variant")]
    variants: Vec<String>,
    #[arg(long)]
    max_tasks: Option<i64>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory of <clip id>/<label>.wav estimates
    #[arg(long)]
    estimates: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct ReplayArgs {
    /// A run.json, or the run directory holding it
    run: PathBuf,
}

enum Failure {
    Job(Error),
    Mismatch(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Job(e)
    }
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 2,
        "vocabulary" => 3,
        "io" => 4,
        "format" => 5,
        "numeric" => 6,
        "mismatch" => 7,
        _ => 1,
    }
}

#[derive(Default)]
struct Flags(Table);

impl Flags {
    fn set(&mut self, key: &str, v: Option<impl Into<Value>>) {
        if let Some(v) = v {
            self.0.insert(key.to_string(), v.into());
        }
    }
    fn path(&mut self, key: &str, p: Option<PathBuf>) {
        self.set(key, p.map(|p| p.to_string_lossy().into_owned()));
    }
    fn list(&mut self, key: &str, items: Vec<String>) {
        if !items.is_empty() {
            self.0.insert(key.to_string(), Value::Array(items.into_iter().map(Value::String).collect()));
        }
    }
    fn sub(&mut self, key: &str, t: Flags) {
        if !t.0.is_empty() {
            self.0.insert(key.to_string(), Value::Table(t.0));
        }
    }
}

fn csv(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn sampling_table(s: Sampling) -> Flags {
    let mut t = Flags::default();
    t.set("sampler", s.sampler);
    t.set("steps", s.steps);
    t.set("w", s.w);
    t.set("s_churn", s.s_churn);
    t.set("rho", s.rho);
    t.set("sigma_min", s.sigma_min);
    t.set("sigma_max", s.sigma_max);
    t.set("seed", s.seed);
    t
}

/// Command name, the table the flags produce, and the command's default
/// sampling settings.
fn flag_table(command: Command) -> Result<(&'static str, Flags, Option<SamplingParams>), Error> {
    let none = PathBuf::new;
    let mut t = Flags::default();
    Ok(match command {
        Command::SynthData(a) => {
            let mut d = Flags::default();
            d.set("n_clips", a.clips);
            d.set("clip_length", a.length);
            d.set("seed", a.seed);
            d.set("sources_per_clip", a.sources_per_clip);
            if let Some(l) = a.labels {
                d.list("vocabulary", csv(&l));
            }
            t.sub("dataset", d);
            t.set("encoding", a.encoding);
            ("synth-data", t, None)
        }
        Command::Train(a) => {
            t.path("manifest", a.manifest);
            let mut m = Flags::default();
            m.set("hidden", a.hidden);
            t.sub("model", m);
            let mut tr = Flags::default();
            tr.set("epochs", a.epochs);
            tr.set("batch_size", a.batch_size);
            tr.set("learning_rate", a.learning_rate);
            tr.set("seed", a.seed);
            t.sub("train", tr);
            ("train", t, None)
        }
        Command::Generate(a) => {
            t.path("checkpoint", a.checkpoint);
            t.list("sources", a.sources);
            t.set("length", a.length);
            t.set("candidates", a.candidates);
            t.set("gamma_x", a.gamma_x);
            t.set("gamma_y", a.gamma_y);
            t.sub("sampling", sampling_table(a.sampling));
            ("generate", t, Some(GenerateJob::new(none(), vec![]).sampling))
        }
        Command::Accompany(a) => {
            t.path("checkpoint", a.checkpoint);
            let given: Vec<Value> = a
                .given
                .iter()
                .map(|g| {
                    let (path, labels) = g
                        .split_once('=')
                        .ok_or_else(|| Error::config(format!("--given expects PATH=LABELS, got `{g}`")))?;
                    let mut e = Table::new();
                    e.insert("path".into(), Value::String(path.into()));
                    e.insert("labels".into(), Value::String(labels.into()));
                    Ok(Value::Table(e))
                })
                .collect::<Result<_, Error>>()?;
            if !given.is_empty() {
                t.0.insert("given".into(), Value::Array(given));
            }
            t.list("wanted", a.wanted);
            t.set("alpha", a.alpha);
            t.set("beta", a.beta);
            t.set("gamma_x", a.gamma_x);
            t.set("gamma_y", a.gamma_y);
            t.sub("sampling", sampling_table(a.sampling));
            ("accompany", t, Some(AccompanyJob::new(none(), vec![], vec![]).sampling))
        }
        Command::Separate(a) => {
            t.path("checkpoint", a.checkpoint);
            t.path("mixture", a.mixture);
            t.list("sources", a.sources);
            t.set("constrained", a.constrained);
            t.sub("sampling", sampling_table(a.sampling));
            ("separate", t, Some(SeparateJob::new(none(), none(), vec![]).sampling))
        }
        Command::Extract(a) => {
            t.path("checkpoint", a.checkpoint);
            t.path("mixture", a.mixture);
            t.set("target", a.target);
            if let Some(c) = a.complement {
                t.list("complement", csv(&c));
            }
            t.sub("sampling", sampling_table(a.sampling));
            ("extract", t, Some(ExtractJob::new(none(), none(), String::new(), vec![]).sampling))
        }
        Command::Gridsearch(a) => {
            t.path("checkpoint", a.checkpoint);
            t.path("manifest", a.manifest);
            if let Some(w) = a.w_grid {
                let ws = csv(&w)
                    .iter()
                    .map(|x| x.parse::<f64>().map(Value::Float))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| Error::config(format!("cannot parse --w-grid `{w}`")))?;
                t.0.insert("w_grid".into(), Value::Array(ws));
            }
            t.list("variants", a.variants);
            t.set("max_tasks", a.max_tasks);
            t.sub("sampling", sampling_table(a.sampling));
            ("gridsearch", t, Some(GridSearchJob::new(none(), none()).sampling))
        }
        Command::Eval(a) => {
            t.path("manifest", a.manifest);
            t.path("estimates", a.estimates);
            t.set("method", a.method);
            ("eval", t, None)
        }
        Command::Replay(_) => unreachable!("replay takes no job table"),
    })
}

/// Merges `over` into `base`, recursing into tables.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_config(path: &Path, command: &str) -> Result<Table, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut t: Table = text.parse().map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    if let Some(c) = t.remove("command") {
        if c.as_str() != Some(command) {
            return Err(Error::config(format!("{} is a `{c}` job, not `{command}`", path.display())));
        }
    }
    Ok(t)
}

fn build_job(command: Command, config: Option<&Path>) -> Result<JobConfig, Error> {
    let (name, flags, sampling) = flag_table(command)?;
    let mut job = Table::new();
    if let Some(s) = sampling {
        let t = Table::try_from(&s).map_err(|e| Error::config(format!("sampling defaults: {e}")))?;
        job.insert("sampling".into(), Value::Table(t));
    }
    merge(&mut job, flags.0);
    if let Some(path) = config {
        merge(&mut job, read_config(path, name)?);
    }
    job.insert("command".into(), Value::String(name.into()));
    JobConfig::from_toml(&toml::to_string(&job).map_err(|e| Error::config(e.to_string()))?)
}

fn default_out(command: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(command)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Replay(a) = cli.command {
        if cli.config.is_some() {
            return Err(Error::config("replay takes its config from the run manifest").into());
        }
        let manifest = if a.run.is_dir() { a.run.join(RUN_MANIFEST_FILE) } else { a.run };
        let out = cli.out.unwrap_or_else(|| default_out("replay"));
        let report = replay(&manifest, &out)?;
        if !report.identical() {
            return Err(Failure::Mismatch(report.mismatches));
        }
        println!("replay of `{}` is identical over {} outputs", report.original.command, report.original.outputs.len());
        return Ok(());
    }
    let job = build_job(cli.command, cli.config.as_deref())?;
    let out = cli.out.unwrap_or_else(|| default_out(job.command()));
    let manifest = execute(&job, &out)?;
    println!("{}: {}", manifest.command, manifest.summary);
    println!("wrote {} files and {} to {}", manifest.outputs.len(), RUN_MANIFEST_FILE, out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Job(e)) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(e.category()))
        }
        Err(Failure::Mismatch(files)) => {
            eprintln!("error[mismatch]: replay differs in {}", files.join(", "));
            ExitCode::from(exit_code("mismatch"))
        }
    }
}
