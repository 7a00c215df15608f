//! Metric traces, best-step selection and multi-seed aggregation.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One evaluation record. Loss fields describe the update that produced the
/// evaluated parameters and are absent at step 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub train_srocc: f64,
    pub test_srocc: f64,
    pub loss: Option<f64>,
    pub sentence_loss: Option<f64>,
    pub entity_loss: Option<f64>,
    pub alignment: Option<f64>,
    pub uniformity: f64,
}

pub type MetricTrace = Vec<MetricRecord>;

pub fn write_trace(path: &Path, trace: &[MetricRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in trace {
        serde_json::to_writer(&mut out, r).expect("record serialises");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<MetricTrace> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut trace = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: MetricRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        trace.push(r);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestStep {
    pub step: usize,
    pub train_srocc: f64,
    pub test_srocc: f64,
}

/// Record with the highest train SROCC, earliest on ties. Test SROCC is
/// only reported, never compared.
pub fn select_best_step(trace: &[MetricRecord]) -> Result<BestStep> {
    let mut best: Option<&MetricRecord> = None;
    for r in trace {
        if best.is_none_or(|b| r.train_srocc > b.train_srocc) {
            best = Some(r);
        }
    }
    let b = best.ok_or_else(|| Error::InvalidInput("empty metric trace".into()))?;
    Ok(BestStep {
        step: b.step,
        train_srocc: b.train_srocc,
        test_srocc: b.test_srocc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: Vec<BestStep>,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Best step per run, then mean and population standard deviation.
pub fn aggregate_runs(traces: &[MetricTrace]) -> Result<RunSummary> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no runs to aggregate".into()));
    }
    let runs = traces.iter().map(|t| select_best_step(t)).collect::<Result<Vec<_>>>()?;
    let (train_mean, train_std) = mean_std(runs.iter().map(|r| r.train_srocc));
    let (test_mean, test_std) = mean_std(runs.iter().map(|r| r.test_srocc));
    Ok(RunSummary {
        runs,
        train_mean,
        train_std,
        test_mean,
        test_std,
    })
}
