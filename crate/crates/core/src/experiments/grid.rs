//! One-axis ablation grids over a base training configuration.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::perturb::PerturbationMode;
use crate::batching::DedupStrategy;
use crate::encoder::EntityEncoderVariant;
use crate::training::{aggregate_runs, train, OptimizerKind, RunSummary, TrainConfig, TrainData};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum GridAxis {
    Lambda(Vec<f64>),
    EntFraction(Vec<f64>),
    Strategy(Vec<DedupStrategy>),
    EntityEncoder(Vec<EntityEncoderVariant>),
    /// Every mode is crossed with the naive and replace strategies.
    Perturbation(Vec<PerturbationMode>),
}

impl GridAxis {
    pub fn name(&self) -> &'static str {
        match self {
            GridAxis::Lambda(_) => "lambda",
            GridAxis::EntFraction(_) => "ent_fraction",
            GridAxis::Strategy(_) => "strategy",
            GridAxis::EntityEncoder(_) => "entity_encoder",
            GridAxis::Perturbation(_) => "perturbation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub name: String,
    pub axis: GridAxis,
    #[serde(default = "desk_config")]
    pub base: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub config: TrainConfig,
}

/// Base configuration of the desk-scale recipes.
pub fn desk_config() -> TrainConfig {
    TrainConfig {
        total_steps: 500,
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-3,
        ent_fraction: 1.0,
        ..TrainConfig::default()
    }
}

fn finite(values: &[f64], axis: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(format!("axis.{axis}"), "no values"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::config(format!("axis.{axis}"), format!("non-finite value {v}")));
    }
    Ok(())
}

impl ExperimentGrid {
    pub const RECIPES: [&'static str; 5] = ["lambda", "ratio", "strategy", "variant", "perturbation"];

    /// Built-in grid by name, on [`desk_config`].
    pub fn recipe(name: &str) -> Result<Self> {
        let axis = match name {
            "lambda" => GridAxis::Lambda(vec![0.001, 0.01, 0.05, 0.1, 0.2, 0.25, 0.5]),
            "ratio" => GridAxis::EntFraction(vec![0.0, 0.03, 0.06, 0.10, 0.25, 0.50, 0.75, 1.0]),
            "strategy" => GridAxis::Strategy(DedupStrategy::ALL.to_vec()),
            "variant" => GridAxis::EntityEncoder(EntityEncoderVariant::ALL.to_vec()),
            "perturbation" => GridAxis::Perturbation(PerturbationMode::ALL.to_vec()),
            other => {
                return Err(Error::config(
                    "grid",
                    format!("unknown recipe {other:?} (one of {})", Self::RECIPES.join(", ")),
                ))
            }
        };
        Ok(Self {
            name: name.to_string(),
            axis,
            base: desk_config(),
        })
    }

    /// Expands the axis into fully specified cells.
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        let base = &self.base;
        let cell = |label: String, config: TrainConfig| GridCell { label, config };
        let cells: Vec<GridCell> = match &self.axis {
            GridAxis::Lambda(v) => {
                finite(v, "lambda")?;
                v.iter()
                    .map(|&l| cell(format!("lambda={l}"), TrainConfig { lambda: l, ..base.clone() }))
                    .collect()
            }
            GridAxis::EntFraction(v) => {
                finite(v, "ent_fraction")?;
                v.iter()
                    .map(|&f| cell(format!("ent_fraction={f}"), TrainConfig { ent_fraction: f, ..base.clone() }))
                    .collect()
            }
            GridAxis::Strategy(v) => v
                .iter()
                .map(|&s| cell(format!("strategy={s}"), TrainConfig { strategy: s, ..base.clone() }))
                .collect(),
            GridAxis::EntityEncoder(v) => v
                .iter()
                .map(|&e| {
                    let mut c = base.clone();
                    c.encoder.entity_encoder = e;
                    cell(format!("entity_encoder={}", e.as_str()), c)
                })
                .collect(),
            GridAxis::Perturbation(v) => v
                .iter()
                .flat_map(|&p| {
                    [DedupStrategy::Naive, DedupStrategy::Replace].map(|s| {
                        cell(
                            format!("perturbation={p},strategy={s}"),
                            TrainConfig {
                                perturbation: p,
                                strategy: s,
                                ..base.clone()
                            },
                        )
                    })
                })
                .collect(),
        };
        if cells.is_empty() {
            return Err(Error::config(format!("axis.{}", self.axis.name()), "no values"));
        }
        for c in &cells {
            c.config.validate()?;
        }
        Ok(cells)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok { summary: RunSummary },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    pub config: TrainConfig,
    pub outcome: CellOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub name: String,
    pub axis: String,
    pub cells: Vec<CellResult>,
}

/// Trains every seed of one configuration and aggregates best steps.
pub fn run_cell(config: &TrainConfig, data: &TrainData<'_>) -> Result<RunSummary> {
    let traces = config
        .seeds
        .iter()
        .map(|&seed| train(config, data, seed, None).map(|o| o.trace))
        .collect::<Result<Vec<_>>>()?;
    aggregate_runs(&traces)
}

/// Runs all cells on up to `workers` threads. Failed cells are recorded and
/// the grid continues; the report lists cells in axis order.
pub fn run_grid(grid: &ExperimentGrid, data: &TrainData<'_>, workers: usize) -> Result<GridReport> {
    let cells = grid.cells()?;
    let results: Vec<Mutex<Option<CellOutcome>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(cell) = cells.get(i) else { break };
        log::info!("grid {}: cell {}", grid.name, cell.label);
        let outcome = match run_cell(&cell.config, data) {
            Ok(summary) => CellOutcome::Ok { summary },
            Err(e) => {
                log::warn!("cell {} failed: {e}", cell.label);
                CellOutcome::Failed { error: e.to_string() }
            }
        };
        *results[i].lock().expect("result slot") = Some(outcome);
    };
    let workers = workers.clamp(1, cells.len());
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    Ok(GridReport {
        name: grid.name.clone(),
        axis: grid.axis.name().to_string(),
        cells: cells
            .into_iter()
            .zip(results)
            .map(|(c, r)| CellResult {
                label: c.label,
                config: c.config,
                outcome: r.into_inner().expect("result slot").expect("every cell ran"),
            })
            .collect(),
    })
}

impl GridReport {
    pub fn summary(&self, label: &str) -> Option<&RunSummary> {
        self.cells.iter().find(|c| c.label == label).and_then(|c| match &c.outcome {
            CellOutcome::Ok { summary } => Some(summary),
            CellOutcome::Failed { .. } => None,
        })
    }

    fn rows(&self) -> Vec<[String; 4]> {
        self.cells
            .iter()
            .map(|c| match &c.outcome {
                CellOutcome::Ok { summary: s } => [
                    c.label.clone(),
                    "ok".into(),
                    format!("{:.4} ± {:.4}", s.train_mean, s.train_std),
                    format!("{:.4} ± {:.4}", s.test_mean, s.test_std),
                ],
                CellOutcome::Failed { error } => [c.label.clone(), format!("failed: {error}"), "-".into(), "-".into()],
            })
            .collect()
    }

    /// Aligned plain-text table.
    pub fn to_text_table(&self) -> String {
        let header = ["cell".to_string(), "status".into(), "train srocc".into(), "test srocc".into()];
        let rows = self.rows();
        let mut widths = header.clone().map(|h| h.chars().count());
        for r in &rows {
            for (w, v) in widths.iter_mut().zip(r) {
                *w = (*w).max(v.chars().count());
            }
        }
        let line = |r: &[String; 4]| {
            r.iter()
                .zip(widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = format!("{} ({})\n{}\n", self.name, self.axis, line(&header));
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 6));
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell", "status", "train_mean", "train_std", "test_mean", "test_std", "runs", "error"])
            .expect("in-memory write");
        for c in &self.cells {
            let record = match &c.outcome {
                CellOutcome::Ok { summary: s } => [
                    c.label.clone(),
                    "ok".into(),
                    s.train_mean.to_string(),
                    s.train_std.to_string(),
                    s.test_mean.to_string(),
                    s.test_std.to_string(),
                    s.runs.len().to_string(),
                    String::new(),
                ],
                CellOutcome::Failed { error } => [
                    c.label.clone(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "0".into(),
                    error.clone(),
                ],
            };
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
