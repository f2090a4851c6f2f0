//! Dataset configuration: JSON file format, defaults, dotted-path overrides
//! and the content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{DampingSchedule, SamplingRanges};
use crate::optics::{OpticsTable, UM_TO_CM};
use crate::system::{NoiseConfig, RenderParams, SystemParams};
use crate::transport::TransportConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const GENERATOR_VERSION: &str = concat!("cornea-oct ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown parameter path `{0}`")]
    UnknownPath(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Lateral width of the simulation window (µm).
    pub lateral_width_um: f64,
    /// Axial-to-lateral aspect ratio; the axial depth is `aspect * width`.
    pub aspect: f64,
    /// Extra geometry generated on each side before cropping, as a fraction
    /// of the window width.
    pub margin_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            lateral_width_um: 6000.0,
            aspect: 1.0 / 3.0,
            margin_fraction: 0.25,
        }
    }
}

impl WindowConfig {
    pub fn axial_depth_um(&self) -> f64 {
        self.aspect * self.lateral_width_um
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub ranges: SamplingRanges,
    /// Corneal layer lower bound as a fraction of nominal thickness.
    pub lower_bound_fraction: f64,
    pub damping: DampingSchedule,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            ranges: SamplingRanges::default(),
            lower_bound_fraction: 0.2,
            damping: DampingSchedule::default(),
        }
    }
}

/// Transport settings exposed in the dataset config. The bin count follows
/// the image height and the seed root follows the dataset seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSettings {
    pub photons_per_aline: u64,
    pub roulette_threshold: f64,
    pub roulette_survival: f64,
    /// Radians.
    pub acceptance_half_angle: f64,
    /// cm.
    pub aperture_radius: f64,
    pub max_interactions: u64,
}

impl Default for TransportSettings {
    fn default() -> Self {
        let t = TransportConfig::default();
        Self {
            photons_per_aline: t.photons_per_aline,
            roulette_threshold: t.roulette_threshold,
            roulette_survival: t.roulette_survival,
            acceptance_half_angle: t.acceptance_half_angle,
            aperture_radius: t.aperture_radius,
            max_interactions: t.max_interactions,
        }
    }
}

impl TransportSettings {
    pub fn to_config(&self, axial_bins: usize, seed_root: u64) -> TransportConfig {
        TransportConfig {
            photons_per_aline: self.photons_per_aline,
            axial_bins,
            roulette_threshold: self.roulette_threshold,
            roulette_survival: self.roulette_survival,
            acceptance_half_angle: self.acceptance_half_angle,
            aperture_radius: self.aperture_radius,
            max_interactions: self.max_interactions,
            seed_root,
        }
    }
}

/// System model settings with depths expressed as fractions of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSettings {
    pub focal_depth_fraction: f64,
    pub confocal_width_fraction: f64,
    pub eta: f64,
    pub w_min: f64,
}

impl Default for SystemSettings {
    fn default() -> Self {
        Self {
            focal_depth_fraction: 0.3,
            confocal_width_fraction: 0.25,
            eta: 0.5,
            w_min: 1e-6,
        }
    }
}

impl SystemSettings {
    pub fn resolve(&self, z_max: f64) -> SystemParams {
        SystemParams {
            z0: self.focal_depth_fraction * z_max,
            sigma_c: self.confocal_width_fraction * z_max,
            z_max,
            eta: self.eta,
            w_min: self.w_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    /// Dotted config path, e.g. `transport.photons_per_aline`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepSeeding {
    /// Each combination gets a seed root derived from its index.
    #[default]
    PerCombination,
    /// All combinations share the dataset seed root.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    pub seeding: SweepSeeding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub schema_version: u32,
    pub total_samples: u64,
    pub healthy_fraction: f64,
    pub width: usize,
    pub height: usize,
    pub seed_root: u64,
    pub window: WindowConfig,
    pub geometry: GeometryConfig,
    pub optics: OpticsTable,
    pub transport: TransportSettings,
    pub system: SystemSettings,
    pub render: RenderParams,
    pub noise: NoiseConfig,
    /// Also store the raw and system-weighted A-line grids.
    pub store_signals: bool,
    pub output_root: PathBuf,
    pub sweep: SweepConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            total_samples: 10_000,
            healthy_fraction: 0.8,
            width: 1024,
            height: 1024,
            seed_root: 0,
            window: WindowConfig::default(),
            geometry: GeometryConfig::default(),
            optics: OpticsTable::default(),
            transport: TransportSettings::default(),
            system: SystemSettings::default(),
            render: RenderParams::default(),
            noise: NoiseConfig::default(),
            store_signals: true,
            output_root: PathBuf::from("dataset"),
            sweep: SweepConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl DatasetConfig {
    /// Parses a JSON config; an empty document yields the defaults.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Number of healthy samples: the first `ceil(fraction * N)` ids.
    pub fn healthy_count(&self) -> u64 {
        let n = (self.healthy_fraction * self.total_samples as f64).ceil() as u64;
        n.min(self.total_samples)
    }

    /// Axial window depth (cm), the `z_max` of the system model.
    pub fn window_depth_cm(&self) -> f64 {
        self.window.axial_depth_um() * UM_TO_CM
    }

    pub fn transport_config(&self) -> TransportConfig {
        self.transport.to_config(self.height, self.seed_root)
    }

    pub fn system_params(&self) -> SystemParams {
        self.system.resolve(self.window_depth_cm())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_samples < 1 {
            return Err(invalid("total_samples must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.healthy_fraction) {
            return Err(invalid("healthy_fraction must lie in [0, 1]"));
        }
        if self.width < 1 || self.height < 1 {
            return Err(invalid("width and height must be at least 1"));
        }
        let w = &self.window;
        if !(w.lateral_width_um > 0.0 && w.aspect > 0.0 && w.margin_fraction >= 0.0) {
            return Err(invalid("window width and aspect must be positive, margin non-negative"));
        }
        self.geometry
            .ranges
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        let half_extent = 0.5 * w.lateral_width_um * (1.0 + 2.0 * w.margin_fraction);
        if self.geometry.ranges.radius.min <= half_extent {
            return Err(invalid(format!(
                "minimum dome radius {} µm must exceed the geometry half-extent {half_extent} µm",
                self.geometry.ranges.radius.min
            )));
        }
        let f = self.geometry.lower_bound_fraction;
        if !(0.0..1.0).contains(&f) {
            return Err(invalid("lower_bound_fraction must lie in [0, 1)"));
        }
        let d = self.geometry.damping;
        if !(d.factor >= 0.0 && d.factor < 1.0) {
            return Err(invalid("damping factor must lie in [0, 1)"));
        }
        self.optics.validate().map_err(|e| invalid(e.to_string()))?;
        self.transport_config()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.system_params()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.render.validate().map_err(|e| invalid(e.to_string()))?;
        self.noise.validate().map_err(|e| invalid(e.to_string()))?;
        for axis in &self.sweep.axes {
            if axis.values.is_empty() {
                return Err(invalid(format!("sweep axis `{}` has no values", axis.path)));
            }
        }
        Ok(())
    }

    /// The configuration that determines sample content: everything
    /// except the output location and the sweep description.
    pub fn content_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_root");
            map.remove("sweep");
        }
        v
    }

    /// SHA-256 of the canonical JSON of [`Self::content_value`].
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.content_value()).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Sets the value at a dotted path. The path must already exist in the
    /// serialized config and the result must deserialize.
    pub fn with_override(&self, path: &str, value: Value) -> Result<Self, ConfigError> {
        let mut root = serde_json::to_value(self).expect("config serializes");
        let mut slot = &mut root;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map
                    .get_mut(key)
                    .ok_or_else(|| ConfigError::UnknownPath(path.to_owned()))?,
                Value::Array(items) => key
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| ConfigError::UnknownPath(path.to_owned()))?,
                _ => return Err(ConfigError::UnknownPath(path.to_owned())),
            };
        }
        *slot = value;
        serde_json::from_value(root)
            .map_err(|e| ConfigError::Invalid(format!("override `{path}`: {e}")))
    }

    /// Checks that a path names an existing field.
    pub fn check_path(&self, path: &str) -> Result<(), ConfigError> {
        let root = serde_json::to_value(self).expect("config serializes");
        let pointer = format!("/{}", path.replace('.', "/"));
        root.pointer(&pointer)
            .map(|_| ())
            .ok_or_else(|| ConfigError::UnknownPath(path.to_owned()))
    }
}

/// Parses `path=value`, reading the value as JSON and falling back to a
/// plain string.
pub fn parse_assignment(text: &str) -> Result<(String, Value), ConfigError> {
    let (path, raw) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("expected PATH=VALUE, got `{text}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    Ok((path.trim().to_owned(), value))
}
