//! OCT system model: confocal gating, sensitivity roll-off, signal floor,
//! log-compressed rendering and optional post-render noise.

use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    #[error("depth {z} outside [0, {z_max}]")]
    Domain { z: f64, z_max: f64 },
    #[error("invalid render parameters: {0}")]
    InvalidRender(String),
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
}

/// Resolved system constants. Depths share the units of the A-line bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Focal depth.
    pub z0: f64,
    /// Confocal Gaussian width.
    pub sigma_c: f64,
    /// Depth of the axial window.
    pub z_max: f64,
    /// Extra attenuation past mid-range.
    pub eta: f64,
    /// Signal floor.
    pub w_min: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        let fail = |m: &str| Err(SystemError::InvalidParams(m.to_owned()));
        if !(self.sigma_c > 0.0) {
            return fail("sigma_c must be positive");
        }
        if !(self.z_max > 0.0) {
            return fail("z_max must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return fail("eta must lie in (0, 1)");
        }
        if !(self.w_min > 0.0) {
            return fail("w_min must be positive");
        }
        if !self.z0.is_finite() {
            return fail("z0 must be finite");
        }
        Ok(())
    }
}

/// Gaussian confocal envelope, 1 at the focus.
pub fn confocal_weight(z: f64, z0: f64, sigma_c: f64) -> f64 {
    let d = z - z0;
    (-(d * d) / (2.0 * sigma_c * sigma_c)).exp()
}

/// `cos^4(pi z / z_max)`, scaled by `eta` for `z > z_max / 2`.
pub fn rolloff_weight(z: f64, z_max: f64, eta: f64) -> Result<f64, SystemError> {
    if !(0.0..=z_max).contains(&z) {
        return Err(SystemError::Domain { z, z_max });
    }
    let c = (std::f64::consts::PI * z / z_max).cos();
    let w = c * c * c * c;
    Ok(if z > 0.5 * z_max { eta * w } else { w })
}

/// Depth of bin centre `i` of `bins` equal bins over `[0, z_max]`.
pub fn bin_center(i: usize, bins: usize, z_max: f64) -> f64 {
    (i as f64 + 0.5) * z_max / bins as f64
}

/// `max(R * W_conf * W_roll, w_min)` with weights at bin centres.
pub fn apply_system_effects(r: &Grid<f64>, p: &SystemParams) -> Result<Grid<f64>, SystemError> {
    p.validate()?;
    let rows = r.height();
    let weights = (0..rows)
        .map(|i| {
            let z = bin_center(i, rows, p.z_max);
            Ok(confocal_weight(z, p.z0, p.sigma_c) * rolloff_weight(z, p.z_max, p.eta)?)
        })
        .collect::<Result<Vec<f64>, SystemError>>()?;
    Ok(Grid::from_fn(r.width(), rows, |c, row| {
        (r.get(c, row) * weights[row]).max(p.w_min)
    }))
}

/// Pixels over which the contrast percentiles are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PercentileSupport {
    /// Every pixel.
    All,
    /// Pixels above the image minimum (the signal floor), so that a
    /// floor-dominated B-scan still stretches over its detected signal.
    /// Falls back to every pixel for a constant image.
    #[default]
    AboveMinimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    /// Offset added to the peak-normalized signal before the logarithm.
    pub epsilon: f64,
    pub low_percentile: f64,
    pub high_percentile: f64,
    pub percentile_support: PercentileSupport,
    /// Quantization depth of the rendered levels.
    pub bit_depth: u8,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            low_percentile: 1.0,
            high_percentile: 99.5,
            percentile_support: PercentileSupport::AboveMinimum,
            bit_depth: 16,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.epsilon > 0.0) {
            return Err(SystemError::InvalidRender("epsilon must be positive".into()));
        }
        if !(0.0 <= self.low_percentile
            && self.low_percentile < self.high_percentile
            && self.high_percentile <= 100.0)
        {
            return Err(SystemError::InvalidRender(
                "percentiles must satisfy 0 <= low < high <= 100".into(),
            ));
        }
        if !(1..=16).contains(&self.bit_depth) {
            return Err(SystemError::InvalidRender("bit_depth must lie in 1..=16".into()));
        }
        Ok(())
    }

    pub fn max_level(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    /// Quantized levels `k / max_level` in `[0, 1]`.
    pub pixels: Grid<f32>,
    /// Set when the percentile range collapsed; `pixels` is then all zero.
    pub degenerate: bool,
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Log compression followed by percentile contrast stretch and
/// quantization.
///
/// The signal is divided by its maximum before `ln(x + epsilon)`, so a
/// global positive rescaling of the input leaves the output unchanged.
pub fn render_bscan(r_sys: &Grid<f64>, rp: &RenderParams) -> Result<RenderedImage, SystemError> {
    rp.validate()?;
    let (w, h) = r_sys.dims();
    if r_sys.as_slice().is_empty() {
        return Ok(RenderedImage {
            pixels: Grid::filled(w, h, 0.0),
            degenerate: true,
        });
    }
    let peak = r_sys.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(SystemError::InvalidRender("signal must be positive and finite".into()));
    }
    let log = r_sys.map(|v| (v / peak + rp.epsilon).ln());
    let floor = r_sys.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted: Vec<f64> = match rp.percentile_support {
        PercentileSupport::AboveMinimum if floor < peak => r_sys
            .as_slice()
            .iter()
            .zip(log.as_slice())
            .filter(|(v, _)| **v > floor)
            .map(|(_, l)| *l)
            .collect(),
        _ => log.as_slice().to_vec(),
    };
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, rp.low_percentile);
    let hi = percentile(&sorted, rp.high_percentile);
    if !(hi > lo) {
        log::warn!("degenerate contrast: percentile range collapsed at {lo}");
        return Ok(RenderedImage {
            pixels: Grid::filled(w, h, 0.0),
            degenerate: true,
        });
    }
    let levels = f64::from(rp.max_level());
    let span = hi - lo;
    let pixels = log.map(|&v| {
        let t = ((v - lo) / span).clamp(0.0, 1.0);
        ((t * levels).round() / levels) as f32
    });
    Ok(RenderedImage {
        pixels,
        degenerate: false,
    })
}

/// Post-render noise. Each component is disabled when `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Shape `k` of unit-mean multiplicative gamma (speckle-like) noise.
    pub speckle_shape: Option<f64>,
    /// Standard deviation of additive zero-mean Gaussian noise.
    pub gaussian_std: Option<f64>,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), SystemError> {
        if let Some(k) = self.speckle_shape {
            if !(k > 0.0 && k.is_finite()) {
                return Err(SystemError::InvalidNoise(format!("speckle shape {k} must be positive")));
            }
        }
        if let Some(s) = self.gaussian_std {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SystemError::InvalidNoise(format!("gaussian std {s} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn is_disabled(&self) -> bool {
        self.speckle_shape.is_none() && self.gaussian_std.is_none()
    }
}

/// `clamp(v * G + N, 0, 1)` per pixel, drawn row-major from `seed`.
pub fn add_noise(image: &Grid<f32>, cfg: &NoiseConfig, seed: u64) -> Result<Grid<f32>, SystemError> {
    cfg.validate()?;
    if cfg.is_disabled() {
        return Ok(image.clone());
    }
    let mut stream = rng::stream(rng::derive_seed(seed, "noise", 0));
    let speckle = cfg
        .speckle_shape
        .map(|k| Gamma::new(k, 1.0 / k))
        .transpose()
        .map_err(|e| SystemError::InvalidNoise(e.to_string()))?;
    let additive = cfg
        .gaussian_std
        .map(|s| Normal::new(0.0, s))
        .transpose()
        .map_err(|e| SystemError::InvalidNoise(e.to_string()))?;
    Ok(image.map(|&v| {
        let mut x = f64::from(v);
        if let Some(g) = &speckle {
            x *= g.sample(&mut stream);
        }
        if let Some(n) = &additive {
            x += n.sample(&mut stream);
        }
        x.clamp(0.0, 1.0) as f32
    }))
}
