//! Declarative experiments: configuration, seeded parallel execution,
//! persistence, bundled presets.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::ExperimentConfig;
pub use output::{write_run, write_sweep};
pub use presets::{preset, preset_names};
pub use run::{
    best_of_k, run_chain, run_experiment, sweep, with_axis, ChainOutcome, ChainRecord, MetricRow, Problem,
    RunOptions, RunResult, SweepRow, DEFAULT_BEST_OF,
};
