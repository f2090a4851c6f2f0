//! End-to-end sample generation, on-disk packaging, dataset manifests,
//! validation and parameter sweeps.

mod dataset;
pub mod preview;
mod storage;
mod sweep;
mod validate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, DatasetConfig, GENERATOR_VERSION, SCHEMA_VERSION};
use crate::geometry::{
    self, anterior_surface, calibrate_and_crop, lateral_grid, sample_geometry, stack_layers,
    BoundarySet, CropWindow, GeometryError, GeometryParams, Phenotype, ThicknessProfiles,
};
use crate::grid::Grid;
use crate::optics::{
    corneal_mask, project_coefficients, rasterize_labels, thickness_map, CoefficientMaps,
    OpticsError,
};
use crate::rng;
use crate::system::{add_noise, apply_system_effects, render_bscan, SystemError};
use crate::transport::{simulate_b_scan, TransportError};

pub use dataset::{
    generate_dataset, sample_dir_name, DatasetReport, Manifest, ManifestHeader, ManifestRow,
    SampleFailure, MANIFEST_HEADER, MANIFEST_INDEX,
};
pub use storage::{read_sample, write_sample, SampleFiles};
pub use sweep::{combination_name, plan_sweep, run_sweep, SweepRun, SWEEP_INDEX};
pub use validate::{validate_path, validate_sample, CheckResult, ValidationReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("optics: {0}")]
    Optics(#[from] OpticsError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("system model: {0}")]
    System(#[from] SystemError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("not a sample directory or dataset root: {0}")]
    NotFound(PathBuf),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        PipelineError::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Seeds used by one sample, all derived from `(seed_root, sample_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSeeds {
    pub seed_root: u64,
    pub sample: u64,
    pub geometry: u64,
    pub thickness: u64,
    pub noise: u64,
}

impl SampleSeeds {
    pub fn derive(seed_root: u64, sample_id: u64) -> Self {
        let sample = rng::sample_seed(seed_root, sample_id);
        Self {
            seed_root,
            sample,
            geometry: rng::derive_seed(sample, "geometry", 0),
            thickness: rng::derive_seed(sample, "thickness", 0),
            noise: rng::derive_seed(sample, "noise", 0),
        }
    }
}

/// Weight totals over all A-lines of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransportTotals {
    pub photons: u64,
    pub launched: f64,
    pub detected: f64,
    pub detected_beyond_window: f64,
    pub reflected: f64,
    pub absorbed: f64,
    pub transmitted: f64,
    pub roulette_killed: f64,
    pub roulette_gained: f64,
    pub truncated: f64,
}

/// Geometry stage of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGeometry {
    pub params: GeometryParams,
    /// Uncropped stack on the extended lateral grid.
    pub full: BoundarySet,
    /// Stack cropped and calibrated to the simulation window.
    pub window: BoundarySet,
    pub thickness_scale: f64,
    pub drawn_thickness_scale: f64,
    pub damping_iterations: u32,
    pub lower_bounds: [f64; geometry::LAYER_COUNT],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub x_min_um: f64,
    pub x_max_um: f64,
    pub z_top_um: f64,
    pub z_bottom_um: f64,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub schema_version: u32,
    pub generator_version: String,
    pub sample_id: u64,
    pub phenotype: Phenotype,
    pub width: usize,
    pub height: usize,
    pub seeds: SampleSeeds,
    pub geometry: GeometryParams,
    pub thickness_scale: f64,
    pub drawn_thickness_scale: f64,
    pub damping_iterations: u32,
    pub window: WindowMeta,
    pub render_degenerate: bool,
    pub transport: TransportTotals,
    pub config_hash: String,
    /// Resolved content configuration.
    pub config: Value,
    /// SHA-256 of every other file in the sample directory.
    pub files: std::collections::BTreeMap<String, String>,
}

impl SampleMeta {
    /// Rebuilds the dataset configuration recorded in the metadata.
    pub fn dataset_config(&self) -> Result<DatasetConfig, ConfigError> {
        serde_json::from_value(self.config.clone()).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// One packaged sample: paired image, masks, maps and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub image: Grid<f32>,
    /// Seven-class labels 1..=7.
    pub labels: Grid<u8>,
    /// Five corneal classes 1..=5, 0 elsewhere.
    pub mask5: Grid<u8>,
    pub maps: CoefficientMaps,
    pub r_raw: Option<Grid<f32>>,
    pub r_sys: Option<Grid<f32>>,
    pub meta: SampleMeta,
}

/// Phenotype by id partition: the first `ceil(fraction * N)` ids are healthy.
pub fn phenotype_for(cfg: &DatasetConfig, sample_id: u64) -> Phenotype {
    if sample_id < cfg.healthy_count() {
        Phenotype::Healthy
    } else {
        Phenotype::Keratoconus
    }
}

/// Samples, stacks, crops and calibrates the geometry of one sample.
pub fn build_geometry(
    cfg: &DatasetConfig,
    seeds: &SampleSeeds,
    phenotype: Phenotype,
) -> Result<SampleGeometry, PipelineError> {
    let width = cfg.width;
    let lateral = cfg.window.lateral_width_um;
    let pitch = lateral / width as f64;
    let margin = (width as f64 * cfg.window.margin_fraction).round() as usize;
    let full_cols = width + 2 * margin;
    let x_lo = -0.5 * lateral - margin as f64 * pitch;
    let x = lateral_grid(x_lo, x_lo + full_cols as f64 * pitch, full_cols);

    let params = sample_geometry(&cfg.geometry.ranges, seeds.geometry, phenotype)?;
    let anterior = anterior_surface(&x, &params)?;
    let nominal = cfg.optics.nominal_thickness_um();
    let top: Vec<f64> = anterior.iter().map(|a| a - nominal[0]).collect();
    let profiles = ThicknessProfiles::uniform(nominal, full_cols, cfg.geometry.lower_bound_fraction);
    let stacked = stack_layers(
        &x,
        &top,
        &profiles,
        cfg.geometry.ranges.delta,
        seeds.thickness,
        cfg.geometry.damping,
    )?;

    let (x_min, x_max) = (-0.5 * lateral, 0.5 * lateral);
    let full = stacked.boundaries;
    let z_top = full
        .x
        .iter()
        .zip(&full.boundaries[0])
        .filter(|(xi, _)| **xi >= x_min && **xi <= x_max)
        .map(|(_, y)| *y)
        .fold(f64::INFINITY, f64::min);
    let window = calibrate_and_crop(
        &full,
        CropWindow {
            x_min,
            x_max,
            z_top,
            z_bottom: z_top + cfg.window.axial_depth_um(),
        },
        Some(cfg.window.aspect),
    )?;
    if let Some((layer, column)) = window.lower_bound_violation(&profiles.lower_bounds) {
        return Err(GeometryError::Unsatisfiable { layer, column }.into());
    }
    Ok(SampleGeometry {
        params,
        full,
        window,
        thickness_scale: stacked.thickness_scale,
        drawn_thickness_scale: stacked.drawn_scale,
        damping_iterations: stacked.damping_iterations,
        lower_bounds: profiles.lower_bounds,
    })
}

/// Generates sample `sample_id` with its partition phenotype.
pub fn generate_sample(cfg: &DatasetConfig, sample_id: u64) -> Result<SampleRecord, PipelineError> {
    generate_sample_as(cfg, sample_id, phenotype_for(cfg, sample_id))
}

/// Generates sample `sample_id` with an explicit phenotype.
pub fn generate_sample_as(
    cfg: &DatasetConfig,
    sample_id: u64,
    phenotype: Phenotype,
) -> Result<SampleRecord, PipelineError> {
    cfg.validate()?;
    let seeds = SampleSeeds::derive(cfg.seed_root, sample_id);
    let geo = build_geometry(cfg, &seeds, phenotype)?;

    let tmap = thickness_map(&geo.window)?;
    let labels = rasterize_labels(&geo.window, cfg.width, cfg.height);
    let maps = project_coefficients(&labels, &cfg.optics);
    let mask5 = corneal_mask(&labels);

    let transport_cfg = cfg.transport_config();
    let signal = simulate_b_scan(&tmap, &cfg.optics, &transport_cfg, sample_id)?;
    let r_sys = apply_system_effects(&signal.reflectance, &cfg.system_params())?;
    let rendered = render_bscan(&r_sys, &cfg.render)?;
    let image = add_noise(&rendered.pixels, &cfg.noise, seeds.noise)?;

    let mut totals = TransportTotals::default();
    for acc in &signal.columns {
        totals.photons += acc.photons;
        totals.launched += acc.launched;
        totals.detected += acc.detected;
        totals.detected_beyond_window += acc.detected_beyond_window;
        totals.reflected += acc.reflected;
        totals.absorbed += acc.absorbed;
        totals.transmitted += acc.transmitted;
        totals.roulette_killed += acc.roulette_killed;
        totals.roulette_gained += acc.roulette_gained;
        totals.truncated += acc.truncated;
    }

    let (r_raw, r_sys) = if cfg.store_signals {
        (
            Some(signal.reflectance.map(|v| *v as f32)),
            Some(r_sys.map(|v| *v as f32)),
        )
    } else {
        (None, None)
    };

    let meta = SampleMeta {
        schema_version: SCHEMA_VERSION,
        generator_version: GENERATOR_VERSION.to_owned(),
        sample_id,
        phenotype,
        width: cfg.width,
        height: cfg.height,
        seeds,
        geometry: geo.params,
        thickness_scale: geo.thickness_scale,
        drawn_thickness_scale: geo.drawn_thickness_scale,
        damping_iterations: geo.damping_iterations,
        window: WindowMeta {
            x_min_um: geo.window.lateral_extent.0,
            x_max_um: geo.window.lateral_extent.1,
            z_top_um: geo.window.axial_extent.0,
            z_bottom_um: geo.window.axial_extent.1,
        },
        render_degenerate: rendered.degenerate,
        transport: totals,
        config_hash: cfg.content_hash(),
        config: cfg.content_value(),
        files: Default::default(),
    };
    let mut record = SampleRecord {
        image,
        labels,
        mask5,
        maps,
        r_raw,
        r_sys,
        meta,
    };
    record.meta.files = storage::encode(&record)?.digests();
    Ok(record)
}

/// Regenerates a stored sample from its own metadata.
pub fn regenerate(meta: &SampleMeta) -> Result<SampleRecord, PipelineError> {
    let cfg = meta.dataset_config()?;
    generate_sample_as(&cfg, meta.sample_id, meta.phenotype)
}
