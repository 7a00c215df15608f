//! Ablation grids, perturbation controls and the synthetic benchmark.

pub mod benchmark;
pub mod grid;
pub mod perturb;

pub use benchmark::{Benchmark, BenchmarkConfig, MIN_WORDS};
pub use grid::{desk_config, run_cell, run_grid, CellOutcome, CellResult, ExperimentGrid, GridAxis, GridCell, GridReport};
pub use perturb::{apply_perturbation, derangement, EntityPipelineState, PerturbationMode};
