//! Datasets, configuration, experiment orchestration and on-disk formats.
//!
//! [`run_experiment`] is the end-to-end path: resolve a config, generate or
//! load the dataset, build the reference posterior oracle, train the
//! configured ensemble under its budget plan, evaluate both predictives on a
//! deterministic input grid, and write the metric report, loss trace,
//! persisted ensemble and resolved config. Reruns with the same config and
//! seed produce byte-identical artifacts.

mod compare;
mod config;
mod data;
mod experiment;

pub use compare::{compare_runs, ComparisonCell, ComparisonTable};
pub use config::{
    ArchConfig, BudgetConfig, ChainSettings, DatasetConfig, EvalSettings, ExperimentConfig,
    Method, PriorConfig, ReferenceKind, TrainSettings,
};
pub use data::{generate_synthetic, load_csv, SyntheticName, SyntheticSpec};
pub use experiment::{
    build_dataset, build_reference, eval_inputs, reference_predictive_for, run_experiment,
    write_posterior_summary, LossTrace, LossTraceEntry, RunArtifacts,
};
