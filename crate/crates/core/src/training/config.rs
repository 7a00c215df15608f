//! Training configuration, TOML loading and `key=value` overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use crate::batching::DedupStrategy;
use crate::encoder::{AugmentMode, EncoderConfig, PoolingStrategy};
use crate::experiments::PerturbationMode;
use crate::losses::{LossConfig, Reduction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: usize,
    pub eval_every: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub temperature: f64,
    pub lambda: f64,
    pub reduction: Reduction,
    pub strategy: DedupStrategy,
    pub pooling: PoolingStrategy,
    pub augment: AugmentMode,
    /// Fraction of word tokens cut when `augment = "cutoff"`.
    pub cutoff_rate: f64,
    /// Share of training sentences drawn from the entity set.
    pub ent_fraction: f64,
    /// Training-set size; 0 takes the largest mix the pools allow.
    pub train_sentences: usize,
    pub seeds: Vec<u64>,
    pub freeze_definition_encoder: bool,
    /// When false the entity path is never built.
    pub entity_module: bool,
    pub perturbation: PerturbationMode,
    pub vocab_min_count: usize,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            total_steps: 2000,
            eval_every: 25,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Sgd,
            temperature: 0.05,
            lambda: 0.1,
            reduction: Reduction::Sum,
            strategy: DedupStrategy::Replace,
            pooling: PoolingStrategy::FirstLastAvg,
            augment: AugmentMode::Dropout,
            cutoff_rate: 0.15,
            ent_fraction: 0.9,
            train_sentences: 0,
            seeds: vec![0, 1, 2, 3, 4],
            freeze_definition_encoder: false,
            entity_module: true,
            perturbation: PerturbationMode::None,
            vocab_min_count: 1,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            temperature: self.temperature,
            lambda: self.lambda,
            reduction: self.reduction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if self.total_steps < self.eval_every {
            return Err(Error::config("total_steps", "must be at least eval_every"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ent_fraction) {
            return Err(Error::config("ent_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.cutoff_rate) {
            return Err(Error::config("cutoff_rate", "must lie in [0, 1)"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        self.loss().validate()?;
        self.encoder.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Parses TOML text, applies overrides, rejects unknown keys and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: TrainConfig = resolve_config(text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }
}

/// Parses `text` as a `T`, applying `key=value` overrides first. Keys absent
/// from `T::default()` are rejected, and type errors name the offending key.
pub fn resolve_config<T>(text: &str, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config("<config>", e.message()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let reference = toml::Table::try_from(T::default()).expect("default serialises");
    check_keys(&table, &reference, "")?;
    match table.clone().try_into() {
        Ok(c) => Ok(c),
        Err(e) => Err(locate_error::<T>(&table, &reference, e.message())),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets a dotted `key=value` inside `table`.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let mut cursor = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("{p} is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn check_keys(table: &toml::Table, reference: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match reference.get(k) {
            None => return Err(Error::config(path, "unknown key")),
            Some(toml::Value::Table(r)) => match v {
                toml::Value::Table(t) => check_keys(t, r, &path)?,
                _ => return Err(Error::config(path, "expected a table")),
            },
            Some(_) => {}
        }
    }
    Ok(())
}

fn leaves(table: &toml::Table, prefix: &str, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => leaves(t, &path, out),
            other => out.push((path, other.clone())),
        }
    }
}

/// Finds the first leaf that fails to deserialize on its own.
fn locate_error<T: DeserializeOwned>(table: &toml::Table, reference: &toml::Table, message: &str) -> Error {
    let mut found = Vec::new();
    leaves(table, "", &mut found);
    for (path, value) in found {
        let mut probe = reference.clone();
        let raw = toml::to_string(&toml::Table::from_iter([("v".to_string(), value)])).unwrap_or_default();
        let raw = raw.trim_start_matches("v = ").trim_end();
        if apply_override(&mut probe, &format!("{path}={raw}")).is_ok() {
            if let Err(e) = probe.try_into::<T>() {
                return Error::config(path, e.message());
            }
        }
    }
    Error::config("<config>", message)
}
