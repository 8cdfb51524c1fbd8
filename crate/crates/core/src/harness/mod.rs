pub mod config;
pub mod corpus;
pub mod runner;
pub mod synth;
pub mod trace;

pub use config::{Algo, Budget, ConfigError, DataSource, ExperimentConfig, Model, RawConfig};
pub use runner::{load_dataset, run_experiment, run_on, Dataset, RunError, RunOutcome};
pub use trace::{read_trace, read_trace_from, write_trace, write_trace_to, RunTrace, TraceReader, TraceRecord};
