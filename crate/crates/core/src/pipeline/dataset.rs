//! Dataset generation with a bounded worker pool, resume and manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::storage::{self, sha256_hex, META_FILE};
use super::{generate_sample, phenotype_for, PipelineError, SampleMeta};
use crate::config::{DatasetConfig, GENERATOR_VERSION, SCHEMA_VERSION};
use crate::geometry::Phenotype;

pub const MANIFEST_HEADER: &str = "manifest.json";
pub const MANIFEST_INDEX: &str = "manifest.jsonl";

/// Dataset-level header written to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub generator_version: String,
    pub config_hash: String,
    pub total_samples: u64,
    pub healthy_samples: u64,
    pub keratoconus_samples: u64,
    pub index_file: String,
    /// SHA-256 of the index file.
    pub index_checksum: String,
    pub config: Value,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: u64,
    pub phenotype: Phenotype,
    /// Sample directory relative to the dataset root.
    pub dir: String,
    /// Files inside `dir`, `meta.json` last.
    pub files: Vec<String>,
    pub seed: u64,
    /// SHA-256 of the sample's `meta.json`, which lists every file digest.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    fn index_text(rows: &[ManifestRow]) -> String {
        rows.iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect()
    }

    /// Writes `manifest.jsonl` then `manifest.json`.
    pub fn write(&self, root: &Path) -> Result<(), PipelineError> {
        let index = root.join(MANIFEST_INDEX);
        fs::write(&index, Self::index_text(&self.rows)).map_err(|e| PipelineError::io(&index, e))?;
        let header = root.join(MANIFEST_HEADER);
        let mut text = serde_json::to_string_pretty(&self.header).expect("header serializes");
        text.push('\n');
        fs::write(&header, text).map_err(|e| PipelineError::io(&header, e))
    }

    pub fn read(root: &Path) -> Result<Self, PipelineError> {
        let header_path = root.join(MANIFEST_HEADER);
        let bytes = fs::read(&header_path).map_err(|e| PipelineError::io(&header_path, e))?;
        let header: ManifestHeader = serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::corrupt(&header_path, e.to_string()))?;
        let index_path = root.join(&header.index_file);
        let text = fs::read_to_string(&index_path).map_err(|e| PipelineError::io(&index_path, e))?;
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line).map_err(|e| {
                    PipelineError::corrupt(&index_path, format!("line {}: {e}", i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    /// Recomputed checksum of the index rows, for comparison with the header.
    pub fn index_checksum(&self) -> String {
        sha256_hex(Self::index_text(&self.rows).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleFailure {
    pub sample_id: u64,
    pub error: String,
}

/// Outcome of [`generate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub generated: u64,
    /// Samples found valid on disk and kept.
    pub skipped: u64,
    pub failures: Vec<SampleFailure>,
}

impl DatasetReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Directory name of a sample.
pub fn sample_dir_name(sample_id: u64) -> String {
    format!("{sample_id:06}")
}

fn row_for(meta: &SampleMeta, meta_bytes: &[u8]) -> ManifestRow {
    let mut files: Vec<String> = meta.files.keys().cloned().collect();
    files.push(META_FILE.to_owned());
    ManifestRow {
        sample_id: meta.sample_id,
        phenotype: meta.phenotype,
        dir: sample_dir_name(meta.sample_id),
        files,
        seed: meta.seeds.sample,
        checksum: sha256_hex(meta_bytes),
    }
}

/// An existing sample directory is reused only if it belongs to this
/// configuration and every file digest matches.
fn existing_valid(dir: &Path, cfg_hash: &str, sample_id: u64) -> Option<ManifestRow> {
    let (meta, bytes) = storage::read_meta(dir).ok()?;
    if meta.config_hash != cfg_hash || meta.sample_id != sample_id {
        return None;
    }
    for (name, digest) in &meta.files {
        let data = fs::read(dir.join(name)).ok()?;
        if sha256_hex(&data) != *digest {
            return None;
        }
    }
    Some(row_for(&meta, &bytes))
}

fn produce(cfg: &DatasetConfig, root: &Path, sample_id: u64) -> Result<ManifestRow, PipelineError> {
    let dir = root.join(sample_dir_name(sample_id));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    }
    let record = generate_sample(cfg, sample_id)?;
    storage::write_sample(&dir, &record)?;
    Ok(row_for(&record.meta, &storage::meta_bytes(&record.meta)))
}

/// Generates every sample of `cfg` under `cfg.output_root` with `workers`
/// concurrent samples, then writes the manifest. Valid samples already on
/// disk are kept; failed samples are reported and left out of the manifest.
pub fn generate_dataset(cfg: &DatasetConfig, workers: usize) -> Result<DatasetReport, PipelineError> {
    cfg.validate()?;
    let root = cfg.output_root.clone();
    fs::create_dir_all(&root).map_err(|e| PipelineError::io(&root, e))?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::io(&root, std::io::Error::other(e)))?;

    let hash = cfg.content_hash();
    let total = cfg.total_samples;
    let next = AtomicU64::new(0);
    let done = AtomicU64::new(0);
    let results: Mutex<Vec<(u64, Result<(ManifestRow, bool), String>)>> = Mutex::new(Vec::new());

    // Each worker thread pulls sample ids and runs one sample at a time, so
    // at most `workers` samples are in flight; the per-column transport of
    // that sample is spread over the shared pool.
    std::thread::scope(|scope| {
        for _ in 0..workers.min(total as usize) {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::Relaxed);
                if id >= total {
                    break;
                }
                let dir = root.join(sample_dir_name(id));
                let outcome = match existing_valid(&dir, &hash, id) {
                    Some(row) => Ok((row, true)),
                    None => pool
                        .install(|| produce(cfg, &root, id))
                        .map(|row| (row, false))
                        .map_err(|e| e.to_string()),
                };
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                match &outcome {
                    Ok((_, true)) => log::info!("[{n}/{total}] sample {id} already valid, kept"),
                    Ok((_, false)) => log::info!("[{n}/{total}] sample {id} generated"),
                    Err(e) => log::error!("[{n}/{total}] sample {id} failed: {e}"),
                }
                results.lock().expect("results lock").push((id, outcome));
            });
        }
    });

    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(id, _)| *id);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let (mut generated, mut skipped) = (0, 0);
    for (sample_id, outcome) in results {
        match outcome {
            Ok((row, kept)) => {
                if kept {
                    skipped += 1;
                } else {
                    generated += 1;
                }
                rows.push(row);
            }
            Err(error) => failures.push(SampleFailure { sample_id, error }),
        }
    }
    let healthy = (0..total)
        .filter(|&id| phenotype_for(cfg, id) == Phenotype::Healthy)
        .count() as u64;
    let mut manifest = Manifest {
        header: ManifestHeader {
            schema_version: SCHEMA_VERSION,
            generator_version: GENERATOR_VERSION.to_owned(),
            config_hash: hash,
            total_samples: total,
            healthy_samples: healthy,
            keratoconus_samples: total - healthy,
            index_file: MANIFEST_INDEX.to_owned(),
            index_checksum: String::new(),
            config: cfg.content_value(),
        },
        rows,
    };
    manifest.header.index_checksum = manifest.index_checksum();
    manifest.write(&root)?;
    Ok(DatasetReport {
        root,
        manifest,
        generated,
        skipped,
        failures,
    })
}
