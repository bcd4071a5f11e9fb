//! Experiment plumbing: configuration, runs, metrics files, timing and the
//! named presets.

mod config;
mod metrics;
pub mod presets;
mod run;
mod timing;

pub use crate::federation::{evaluate, RoundMetrics};
pub use config::{parse_config, ConfigLayer, DatasetKind, ExperimentConfig};
pub use metrics::{read_metrics, write_metrics, MetricsLog, CSV_HEADER};
pub use presets::{format_millions, param_count, preset, Preset};
pub use run::{
    bp_hyper, build_partition, federation_config, ff_hyper, init_bp, init_ff, load_datasets,
    run_experiment, run_with_data, ExperimentOutcome, RunOptions,
};
pub use timing::{time_rounds, TimingRow};
