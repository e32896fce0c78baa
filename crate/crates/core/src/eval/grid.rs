//! Embedding-scale grid search over separation variants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::si_sdr_improvement;
use crate::audio::AudioTensor;
use crate::error::{Error, Result};
use crate::gmsdi::{Gmsdi, SeparationTask};
use crate::rng::derive_seed;
use crate::samplers::IntegratorConfig;
use crate::schedule::NoiseSchedule;
use crate::score::{CfgConfig, LabelEncoder, ScoreField, SourceSpec};

pub const REPORT_SCHEMA: &str = "gmsdi-separation-report";
pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_W_GRID: [f64; 4] = [3.0, 7.5, 15.0, 24.0];

/// Per-source SI-SDRi of one method, plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub method: String,
    pub per_source: BTreeMap<String, f64>,
    pub mean: f64,
    /// Path of the run manifest the numbers came from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl SeparationReport {
    pub fn new(method: impl Into<String>, per_source: BTreeMap<String, f64>) -> Result<Self> {
        if per_source.is_empty() {
            return Err(Error::UndefinedMetric("report has no sources".into()));
        }
        let mean = per_source.values().sum::<f64>() / per_source.len() as f64;
        Ok(Self {
            method: method.into(),
            per_source,
            mean,
            manifest: None,
        })
    }

    pub fn text_table(reports: &[SeparationReport]) -> String {
        let labels: Vec<&String> = {
            let mut l: Vec<&String> = reports.iter().flat_map(|r| r.per_source.keys()).collect();
            l.sort();
            l.dedup();
            l
        };
        let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:width$}", "Method");
        for l in &labels {
            let _ = write!(out, " {:>8}", l);
        }
        let _ = writeln!(out, " {:>8}", "All");
        for r in reports {
            let _ = write!(out, "{:width$}", r.method);
            for l in &labels {
                match r.per_source.get(*l) {
                    Some(v) => {
                        let _ = write!(out, " {:>8.2}", v);
                    }
                    None => {
                        let _ = write!(out, " {:>8}", "-");
                    }
                }
            }
            let _ = writeln!(out, " {:>8.2}", r.mean);
        }
        out
    }
}

/// Per-source maxima over several methods.
pub fn ensemble(reports: &[SeparationReport]) -> Result<SeparationReport> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for r in reports {
        for (label, &v) in &r.per_source {
            best.entry(label.clone())
                .and_modify(|b| *b = b.max(v))
                .or_insert(v);
        }
    }
    SeparationReport::new("Ensemble", best)
}

/// One benchmark mixture with its single-label ground-truth stems.
#[derive(Debug, Clone)]
pub struct BenchmarkTask {
    pub id: String,
    pub mixture: AudioTensor,
    pub sources: Vec<(String, AudioTensor)>,
}

impl BenchmarkTask {
    pub fn labels(&self) -> Vec<&str> {
        self.sources.iter().map(|(l, _)| l.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Dirac separator with the given source defined as the residual.
    Separator { constrained: String },
    /// One extraction per source against its complement.
    Extractor,
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::Separator { constrained } => format!("GMSDI Separator ({constrained})"),
            Variant::Extractor => "GMSDI Extractor".to_string(),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "extractor" {
            return Ok(Variant::Extractor);
        }
        match s.strip_prefix("separator:") {
            Some(label) if !label.is_empty() => Ok(Variant::Separator {
                constrained: label.to_string(),
            }),
            _ => Err(Error::config(format!(
                "unknown variant '{s}' (expected 'extractor' or 'separator:<label>')"
            ))),
        }
    }
}

/// Everything needed to run separation, apart from `w`.
pub struct GridContext<'a> {
    pub model: &'a dyn ScoreField,
    pub encoder: &'a LabelEncoder,
    pub schedule: &'a NoiseSchedule,
    pub sampler: IntegratorConfig,
    pub separator_cfg: CfgConfig,
    pub extractor_cfg: CfgConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    #[serde(default)]
    pub per_source: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn run_task(
    ctx: &GridContext<'_>,
    task: &BenchmarkTask,
    index: usize,
    variant: &Variant,
    w: f64,
) -> Result<BTreeMap<String, f64>> {
    let mut sampler = ctx.sampler.clone();
    sampler.rng_seed = derive_seed(ctx.sampler.rng_seed, index as u64);
    let specs: Vec<SourceSpec> = task
        .sources
        .iter()
        .map(|(l, _)| SourceSpec::new(ctx.encoder, &[l.as_str()]))
        .collect::<Result<_>>()?;
    let estimates: Vec<AudioTensor> = match variant {
        Variant::Separator { constrained } => {
            let cfg = ctx.separator_cfg.with_w(w);
            let engine = Gmsdi {
                model: ctx.model,
                encoder: ctx.encoder,
                schedule: ctx.schedule,
                sampler: &sampler,
                cfg: &cfg,
            };
            let constrained_index = task
                .sources
                .iter()
                .position(|(l, _)| l == constrained)
                .ok_or_else(|| Error::config(format!("task {} has no {constrained}", task.id)))?;
            engine.separate(&SeparationTask {
                mixture: task.mixture.clone(),
                sources: specs,
                constrained_index,
            })?
        }
        Variant::Extractor => {
            let cfg = ctx.extractor_cfg.with_w(w);
            let engine = Gmsdi {
                model: ctx.model,
                encoder: ctx.encoder,
                schedule: ctx.schedule,
                sampler: &sampler,
                cfg: &cfg,
            };
            let labels = task.labels();
            specs
                .iter()
                .enumerate()
                .map(|(k, spec)| {
                    let complement: Vec<&str> = labels
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, l)| *l)
                        .collect();
                    engine.extract(&task.mixture, spec, &complement)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut out = BTreeMap::new();
    for ((label, stem), est) in task.sources.iter().zip(&estimates) {
        out.insert(label.clone(), si_sdr_improvement(est, stem, &task.mixture)?);
    }
    Ok(out)
}

fn applies(variant: &Variant, task: &BenchmarkTask) -> bool {
    match variant {
        Variant::Separator { constrained } => task.sources.iter().any(|(l, _)| l == constrained),
        Variant::Extractor => task.sources.len() >= 2,
    }
}

/// Runs one variant at one `w` over every applicable task. Failures are
/// recorded in the outcome rather than returned.
pub fn evaluate_variant(
    ctx: &GridContext<'_>,
    tasks: &[BenchmarkTask],
    variant: &Variant,
    w: f64,
) -> Vec<TaskOutcome> {
    let jobs: Vec<(usize, &BenchmarkTask)> = tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| applies(variant, t))
        .collect();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len().max(1));
    let run = |&(i, t): &(usize, &BenchmarkTask)| match run_task(ctx, t, i, variant, w) {
        Ok(per_source) => TaskOutcome {
            task_id: t.id.clone(),
            per_source,
            error: None,
        },
        Err(e) => {
            log::warn!("task {} failed for {} at w={w}: {e}", t.id, variant.name());
            TaskOutcome {
                task_id: t.id.clone(),
                per_source: BTreeMap::new(),
                error: Some(e.to_string()),
            }
        }
    };
    if workers <= 1 {
        return jobs.iter().map(run).collect();
    }
    let chunk = jobs.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(run).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("grid worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub w: f64,
    pub attempted: usize,
    pub completed: usize,
    /// False when fewer than half the attempted tasks completed.
    pub valid: bool,
    /// Mean over per-source means; `None` if nothing completed.
    pub mean: Option<f64>,
    pub per_source: BTreeMap<String, f64>,
    pub outcomes: Vec<TaskOutcome>,
}

impl GridCell {
    fn from_outcomes(w: f64, outcomes: Vec<TaskOutcome>) -> Self {
        let attempted = outcomes.len();
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut completed = 0;
        for o in outcomes.iter().filter(|o| o.error.is_none()) {
            completed += 1;
            for (l, v) in &o.per_source {
                let e = sums.entry(l.clone()).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
        let per_source: BTreeMap<String, f64> =
            sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect();
        let mean = (!per_source.is_empty())
            .then(|| per_source.values().sum::<f64>() / per_source.len() as f64);
        Self {
            w,
            attempted,
            completed,
            valid: attempted > 0 && 2 * completed >= attempted,
            mean,
            per_source,
            outcomes,
        }
    }

    fn score(&self) -> Option<f64> {
        if self.valid && self.mean.is_some_and(f64::is_finite) {
            self.mean
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub variant: Variant,
    pub name: String,
    pub cells: Vec<GridCell>,
}

impl GridRow {
    fn best(&self) -> Option<&GridCell> {
        self.cells
            .iter()
            .filter(|c| c.score().is_some())
            .max_by(|a, b| a.score().partial_cmp(&b.score()).expect("finite means"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub schema: String,
    pub version: u32,
    pub w_grid: Vec<f64>,
    pub n_tasks: usize,
    pub rows: Vec<GridRow>,
    /// Best separator cell, best extractor cell, and their ensemble.
    pub selected: Vec<SeparationReport>,
}

impl GridReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("report", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: GridReport =
            serde_json::from_str(text).map_err(|e| Error::format("report", e.to_string()))?;
        if r.schema != REPORT_SCHEMA || r.version != REPORT_VERSION {
            return Err(Error::format(
                "schema",
                format!("unsupported report {} v{}", r.schema, r.version),
            ));
        }
        Ok(r)
    }

    /// Variants × w table in SI-SDRi dB, followed by the selected methods.
    pub fn text_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:width$}", "Method");
        for w in &self.w_grid {
            let _ = write!(out, " {:>9}", format!("w={w:.1}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:width$}", row.name);
            for cell in &row.cells {
                match cell.score() {
                    Some(v) => {
                        let _ = write!(out, " {:>9.2}", v);
                    }
                    None => {
                        let _ = write!(out, " {:>9}", "invalid");
                    }
                }
            }
            out.push('\n');
        }
        if !self.selected.is_empty() {
            out.push('\n');
            out.push_str(&SeparationReport::text_table(&self.selected));
        }
        out
    }
}

/// Runs every variant at every `w` and selects the best separator and
/// extractor settings, plus their per-source ensemble.
pub fn grid_search_w(
    ctx: &GridContext<'_>,
    tasks: &[BenchmarkTask],
    w_grid: &[f64],
    variants: &[Variant],
) -> Result<GridReport> {
    if tasks.is_empty() {
        return Err(Error::config("grid search needs at least one task"));
    }
    if w_grid.is_empty() || variants.is_empty() {
        return Err(Error::config("grid search needs a non-empty w grid and variant list"));
    }
    if let Some(w) = w_grid.iter().find(|w| !w.is_finite()) {
        return Err(Error::config(format!("embedding scale {w} is not finite")));
    }
    let mut rows = Vec::new();
    for variant in variants {
        let cells = w_grid
            .iter()
            .map(|&w| {
                log::info!("{} at w={w}", variant.name());
                GridCell::from_outcomes(w, evaluate_variant(ctx, tasks, variant, w))
            })
            .collect();
        rows.push(GridRow {
            variant: variant.clone(),
            name: variant.name(),
            cells,
        });
    }
    let pick = |extractor: bool| -> Option<SeparationReport> {
        rows.iter()
            .filter(|r| matches!(r.variant, Variant::Extractor) == extractor)
            .filter_map(|r| r.best().map(|c| (r, c)))
            .max_by(|a, b| a.1.score().partial_cmp(&b.1.score()).expect("finite means"))
            .and_then(|(r, c)| {
                SeparationReport::new(format!("{} w={}", r.name, c.w), c.per_source.clone()).ok()
            })
    };
    let mut selected: Vec<SeparationReport> = [pick(false), pick(true)].into_iter().flatten().collect();
    if selected.len() == 2 {
        selected.push(ensemble(&selected)?);
    }
    Ok(GridReport {
        schema: REPORT_SCHEMA.to_string(),
        version: REPORT_VERSION,
        w_grid: w_grid.to_vec(),
        n_tasks: tasks.len(),
        rows,
        selected,
    })
}
