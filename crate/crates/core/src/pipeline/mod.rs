//! Cascade orchestration and corpus utilities.

mod data;
mod ensemble;
mod run;

pub use data::{back_translation_pair, kfold_split, BackTranslation};
pub use ensemble::{
    ensemble_distributions, ensemble_distributions_log, greedy_ensemble_decode, DecodeOptions,
    EnsembleSpace, TokenDistribution,
};
pub use run::{run_pipeline, run_to_dir, summarize, PipelineConfig, PipelineReport, PipelineResult, Stage};
