//! Optimisation loop, metric traces and run aggregation.

pub mod config;
pub mod optim;
pub mod run;
pub mod step;
pub mod trace;

pub use config::{apply_override, resolve_config, TrainConfig};
pub use optim::{Optimizer, OptimizerKind};
pub use run::{build_vocab, max_train_sentences, stream_rng, streams, train, train_with, TrainData, TrainOutcome};
pub use step::{training_step, StepOutput, StepRngs};
pub use trace::{aggregate_runs, read_trace, select_best_step, write_trace, BestStep, MetricRecord, MetricTrace, RunSummary};
