//! Cartesian parameter sweeps, one sub-dataset per combination.

use std::fs;

use serde::Serialize;
use serde_json::Value;

use super::dataset::{generate_dataset, DatasetReport};
use super::PipelineError;
use crate::config::{DatasetConfig, SweepConfig, SweepSeeding};
use crate::rng;

pub const SWEEP_INDEX: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    /// Subdirectory name, empty for a sweep without axes.
    pub name: String,
    pub overrides: Vec<(String, Value)>,
    pub report: DatasetReport,
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    index: usize,
    dir: &'a str,
    overrides: serde_json::Map<String, Value>,
    seed_root: u64,
    config_hash: String,
}

/// Directory name for a combination: `path=value` pairs joined by `__`,
/// with characters outside `[A-Za-z0-9._=-]` replaced by `_`.
pub fn combination_name(overrides: &[(String, Value)]) -> String {
    overrides
        .iter()
        .map(|(path, value)| {
            let v = match value {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            format!("{path}={v}")
        })
        .collect::<Vec<_>>()
        .join("__")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '=' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// All combinations in row-major order: the last axis varies fastest.
fn combinations(sweep: &SweepConfig) -> Vec<Vec<(String, Value)>> {
    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for axis in &sweep.axes {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push((axis.path.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
}

/// Resolves every combination's configuration; fails on the first invalid
/// path or value without touching the output root.
pub fn plan_sweep(cfg: &DatasetConfig) -> Result<Vec<(String, Vec<(String, Value)>, DatasetConfig)>, PipelineError> {
    for axis in &cfg.sweep.axes {
        cfg.check_path(&axis.path)?;
    }
    let mut base = cfg.clone();
    base.sweep = SweepConfig::default();
    combinations(&cfg.sweep)
        .into_iter()
        .enumerate()
        .map(|(index, overrides)| {
            let mut sub = base.clone();
            for (path, value) in &overrides {
                sub = sub.with_override(path, value.clone())?;
            }
            if cfg.sweep.seeding == SweepSeeding::PerCombination {
                sub.seed_root = rng::derive_seed(cfg.seed_root, "sweep", index as u64);
            }
            let name = combination_name(&overrides);
            sub.output_root = cfg.output_root.join(&name);
            sub.validate()?;
            Ok((name, overrides, sub))
        })
        .collect()
}

/// Runs every combination of `cfg.sweep`. Without axes this is exactly
/// [`generate_dataset`] on `cfg`.
pub fn run_sweep(cfg: &DatasetConfig, workers: usize) -> Result<Vec<SweepRun>, PipelineError> {
    cfg.validate()?;
    if cfg.sweep.axes.is_empty() {
        return Ok(vec![SweepRun {
            name: String::new(),
            overrides: Vec::new(),
            report: generate_dataset(cfg, workers)?,
        }]);
    }
    let plan = plan_sweep(cfg)?;
    let root = &cfg.output_root;
    fs::create_dir_all(root).map_err(|e| PipelineError::io(root, e))?;
    let entries: Vec<SweepEntry> = plan
        .iter()
        .enumerate()
        .map(|(index, (name, overrides, sub))| SweepEntry {
            index,
            dir: name,
            overrides: overrides.iter().cloned().collect(),
            seed_root: sub.seed_root,
            config_hash: sub.content_hash(),
        })
        .collect();
    let index_path = root.join(SWEEP_INDEX);
    let mut text = serde_json::to_string_pretty(&entries).expect("sweep index serializes");
    text.push('\n');
    fs::write(&index_path, text).map_err(|e| PipelineError::io(&index_path, e))?;

    let mut runs = Vec::with_capacity(plan.len());
    for (name, overrides, sub) in plan {
        log::info!("sweep combination {name}");
        let report = generate_dataset(&sub, workers)?;
        runs.push(SweepRun {
            name,
            overrides,
            report,
        });
    }
    Ok(runs)
}
