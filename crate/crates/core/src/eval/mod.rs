//! Separation metrics, the embedding-scale grid search, and a spectral
//! Fréchet distance between clip sets.

mod frechet;
mod grid;
mod sisdr;

pub use frechet::{frechet_gaussian, spectral_features, spectral_frechet, FeatureConfig};
pub use grid::{
    ensemble, evaluate_variant, grid_search_w, BenchmarkTask, GridCell, GridContext, GridReport,
    GridRow, SeparationReport, TaskOutcome, Variant, DEFAULT_W_GRID, REPORT_SCHEMA,
    REPORT_VERSION,
};
pub use sisdr::{si_sdr, si_sdr_improvement, SI_SDR_CAP_DB};
