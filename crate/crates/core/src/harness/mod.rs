//! Experiment harness: configuration files, the evaluated modes, evaluation
//! and ablation suites, latency benchmarks and the command-line front end.

pub mod bench;
pub mod cli;
pub mod config;
mod mode;
pub mod presets;
pub mod stats;
mod suite;

pub use bench::{bench_latency, BenchConfig, BenchReport};
pub use config::RunConfig;
pub use mode::Mode;
pub use presets::Preset;
pub use suite::{
    ablation_matrix, episode_seed, run_episode, run_modes, run_suite, write_episodes_jsonl,
    AblationAnchors, AblationReport, AblationRow, Axis, EpisodeRecord, EpisodeStats, EvalSettings,
    ExperimentConfig, ModeReport, PolicySet, StepRecord, SuiteReport,
};
