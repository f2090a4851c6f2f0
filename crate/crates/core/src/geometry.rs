//! Parametric five-layer corneal geometry.
//!
//! The anterior surface is a semicircular dome with a sinusoidal-Gaussian
//! deformation on top. Deeper interfaces are stacked from nominal thickness
//! profiles scaled by a single per-sample factor `s`, which is damped
//! toward 1 whenever the stacked result violates ordering or thickness
//! bounds. All lengths here are micrometres, axial coordinate increasing
//! downward.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Number of layers between the window top and bottom (Air..Vitreous).
pub const LAYER_COUNT: usize = 7;
/// Number of interface curves, including the window top and bottom.
pub const BOUNDARY_COUNT: usize = LAYER_COUNT + 1;
/// Layer indices (0-based) of the five corneal layers.
pub const CORNEAL_LAYERS: std::ops::RangeInclusive<usize> = 1..=5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid sampling range for `{name}`: min {min} > max {max}")]
    InvalidRange { name: &'static str, min: f64, max: f64 },
    #[error("invalid geometry parameter: {0}")]
    InvalidParams(String),
    #[error("lateral coordinate {x} µm lies outside the dome radius {radius} µm")]
    Domain { x: f64, radius: f64 },
    #[error("invalid thickness profiles: {0}")]
    InvalidProfiles(String),
    #[error("layer constraints unsatisfiable even at nominal thickness (layer {layer}, column {column})")]
    Unsatisfiable { layer: usize, column: usize },
    #[error("crop window out of bounds: {0}")]
    WindowOutOfBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phenotype {
    Healthy,
    Keratoconus,
}

impl std::fmt::Display for Phenotype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phenotype::Healthy => "healthy",
            Phenotype::Keratoconus => "keratoconus",
        })
    }
}

impl std::str::FromStr for Phenotype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "healthy" => Ok(Phenotype::Healthy),
            "keratoconus" | "kc" => Ok(Phenotype::Keratoconus),
            other => Err(format!("unknown phenotype `{other}`")),
        }
    }
}

/// Sampled shape parameters of one anterior surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Baseline dome radius R.
    pub radius: f64,
    /// Lateral decentering D.
    pub decentering: f64,
    /// Low-frequency amplitude A1.
    pub amp_low: f64,
    /// High-frequency amplitude A2.
    pub amp_high: f64,
    /// Low-frequency multiplier f1.
    pub freq_low: f64,
    /// High-frequency multiplier f2.
    pub freq_high: f64,
    /// Gaussian bulge height H.
    pub bulge_height: f64,
    /// Bulge centre x0.
    pub bulge_center: f64,
    /// Bulge width sigma.
    pub bulge_width: f64,
    pub phenotype: Phenotype,
    pub seed: u64,
}

impl GeometryParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let checks = [
            (self.radius > 0.0, "radius must be positive"),
            (self.bulge_width > 0.0, "bulge width must be positive"),
            (self.freq_low > 0.0, "f1 must be positive"),
            (self.freq_high > 0.0, "f2 must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(GeometryError::InvalidParams(msg.into()));
            }
        }
        let finite = [
            self.radius,
            self.decentering,
            self.amp_low,
            self.amp_high,
            self.freq_low,
            self.freq_high,
            self.bulge_height,
            self.bulge_center,
            self.bulge_width,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidParams("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.min + (self.max - self.min) * u
    }
}

/// Closed intervals every geometry parameter is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingRanges {
    pub radius: Interval,
    pub decentering: Interval,
    pub amp_low: Interval,
    pub amp_high: Interval,
    pub freq_low: Interval,
    pub freq_high: Interval,
    pub bulge_height_healthy: Interval,
    pub bulge_height_keratoconus: Interval,
    pub bulge_center: Interval,
    pub bulge_width: Interval,
    /// Half-width of the thickness scale distribution, s ~ U(1-delta, 1+delta).
    pub delta: f64,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            radius: Interval::new(7000.0, 9000.0),
            decentering: Interval::new(-500.0, 500.0),
            amp_low: Interval::new(0.0, 30.0),
            amp_high: Interval::new(0.0, 30.0),
            freq_low: Interval::new(0.5, 1.5),
            freq_high: Interval::new(2.0, 5.0),
            bulge_height_healthy: Interval::new(0.0, 5.0),
            bulge_height_keratoconus: Interval::new(40.0, 120.0),
            // central third of the default 6 mm window
            bulge_center: Interval::new(-1000.0, 1000.0),
            bulge_width: Interval::new(300.0, 900.0),
            delta: 0.05,
        }
    }
}

impl SamplingRanges {
    fn intervals(&self) -> [(&'static str, Interval); 10] {
        [
            ("radius", self.radius),
            ("decentering", self.decentering),
            ("amp_low", self.amp_low),
            ("amp_high", self.amp_high),
            ("freq_low", self.freq_low),
            ("freq_high", self.freq_high),
            ("bulge_height_healthy", self.bulge_height_healthy),
            ("bulge_height_keratoconus", self.bulge_height_keratoconus),
            ("bulge_center", self.bulge_center),
            ("bulge_width", self.bulge_width),
        ]
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, iv) in self.intervals() {
            if !(iv.min.is_finite() && iv.max.is_finite()) || iv.min > iv.max {
                return Err(GeometryError::InvalidRange {
                    name,
                    min: iv.min,
                    max: iv.max,
                });
            }
        }
        let positive = [
            ("radius", self.radius),
            ("bulge_width", self.bulge_width),
            ("freq_low", self.freq_low),
            ("freq_high", self.freq_high),
        ];
        for (name, iv) in positive {
            if iv.min <= 0.0 {
                return Err(GeometryError::InvalidParams(format!(
                    "`{name}` range must be strictly positive"
                )));
            }
        }
        if self.bulge_height_keratoconus.min <= 0.0 {
            return Err(GeometryError::InvalidParams(
                "keratoconus bulge band must be strictly positive".into(),
            ));
        }
        if self.bulge_height_healthy.max >= self.bulge_height_keratoconus.min {
            return Err(GeometryError::InvalidParams(
                "healthy and keratoconus bulge bands must not overlap".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(GeometryError::InvalidParams(format!(
                "delta {} outside [0, 1)",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn bulge_band(&self, phenotype: Phenotype) -> Interval {
        match phenotype {
            Phenotype::Healthy => self.bulge_height_healthy,
            Phenotype::Keratoconus => self.bulge_height_keratoconus,
        }
    }

    /// True when every field of `p` lies in its interval.
    pub fn admits(&self, p: &GeometryParams) -> bool {
        self.radius.contains(p.radius)
            && self.decentering.contains(p.decentering)
            && self.amp_low.contains(p.amp_low)
            && self.amp_high.contains(p.amp_high)
            && self.freq_low.contains(p.freq_low)
            && self.freq_high.contains(p.freq_high)
            && self.bulge_band(p.phenotype).contains(p.bulge_height)
            && self.bulge_center.contains(p.bulge_center)
            && self.bulge_width.contains(p.bulge_width)
    }
}

/// Semicircular dome `R - sqrt(R^2 - x^2)`: zero at the apex.
pub fn baseline_profile(x: &[f64], radius: f64) -> Result<Vec<f64>, GeometryError> {
    if radius <= 0.0 {
        return Err(GeometryError::InvalidParams("radius must be positive".into()));
    }
    x.iter()
        .map(|&xi| {
            let rem = radius * radius - xi * xi;
            if rem < 0.0 {
                Err(GeometryError::Domain { x: xi, radius })
            } else {
                Ok(radius - rem.sqrt())
            }
        })
        .collect()
}

/// Sinusoidal-Gaussian deformation added to the dome.
pub fn deformation(x: &[f64], p: &GeometryParams) -> Result<Vec<f64>, GeometryError> {
    p.validate()?;
    let r = p.radius;
    let two_sigma2 = 2.0 * p.bulge_width * p.bulge_width;
    Ok(x.iter()
        .map(|&xi| {
            let phase = PI * (xi + p.decentering) / r;
            let d = xi - p.bulge_center;
            p.amp_low * (p.freq_low * phase).cos()
                + p.amp_high * (p.freq_high * phase).sin()
                + p.bulge_height * (-(d * d) / two_sigma2).exp()
        })
        .collect())
}

/// Anterior surface `y_base(x) + Δy(x)`.
pub fn anterior_surface(x: &[f64], p: &GeometryParams) -> Result<Vec<f64>, GeometryError> {
    let base = baseline_profile(x, p.radius)?;
    let dy = deformation(x, p)?;
    Ok(base.iter().zip(&dy).map(|(b, d)| b + d).collect())
}

/// Draws every parameter uniformly from its interval. The draw order is
/// fixed, so `(ranges, seed, phenotype)` fully determines the result.
pub fn sample_geometry(
    ranges: &SamplingRanges,
    seed: u64,
    phenotype: Phenotype,
) -> Result<GeometryParams, GeometryError> {
    ranges.validate()?;
    let mut rng = rng::stream(rng::derive_seed(seed, "geometry", 0));
    let radius = ranges.radius.sample(&mut rng);
    let decentering = ranges.decentering.sample(&mut rng);
    let amp_low = ranges.amp_low.sample(&mut rng);
    let amp_high = ranges.amp_high.sample(&mut rng);
    let freq_low = ranges.freq_low.sample(&mut rng);
    let freq_high = ranges.freq_high.sample(&mut rng);
    // both bands are drawn so the remaining stream does not depend on phenotype
    let h_healthy = ranges.bulge_height_healthy.sample(&mut rng);
    let h_kc = ranges.bulge_height_keratoconus.sample(&mut rng);
    let bulge_center = ranges.bulge_center.sample(&mut rng);
    let bulge_width = ranges.bulge_width.sample(&mut rng);
    let bulge_height = match phenotype {
        Phenotype::Healthy => h_healthy,
        Phenotype::Keratoconus => h_kc,
    };
    let p = GeometryParams {
        radius,
        decentering,
        amp_low,
        amp_high,
        freq_low,
        freq_high,
        bulge_height,
        bulge_center,
        bulge_width,
        phenotype,
        seed,
    };
    p.validate()?;
    Ok(p)
}

/// Nominal per-layer thickness profiles (µm) for the seven layers
/// Air..Vitreous, with per-layer bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessProfiles {
    pub nominal: [Vec<f64>; LAYER_COUNT],
    pub lower_bounds: [f64; LAYER_COUNT],
    /// Optional per-layer ceilings; `None` means unbounded.
    pub upper_bounds: [Option<f64>; LAYER_COUNT],
}

impl ThicknessProfiles {
    /// Laterally uniform profiles with lower bounds at `lower_fraction` of
    /// each nominal value.
    pub fn uniform(nominal_um: [f64; LAYER_COUNT], columns: usize, lower_fraction: f64) -> Self {
        Self {
            nominal: nominal_um.map(|t| vec![t; columns]),
            lower_bounds: nominal_um.map(|t| t * lower_fraction),
            upper_bounds: [None; LAYER_COUNT],
        }
    }

    pub fn columns(&self) -> usize {
        self.nominal[0].len()
    }

    pub fn validate(&self, columns: usize) -> Result<(), GeometryError> {
        for (k, profile) in self.nominal.iter().enumerate() {
            if profile.len() != columns {
                return Err(GeometryError::InvalidProfiles(format!(
                    "layer {k} has {} columns, expected {columns}",
                    profile.len()
                )));
            }
            if let Some(c) = profile.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(GeometryError::InvalidProfiles(format!(
                    "layer {k} nominal thickness not positive at column {c}"
                )));
            }
            if let Some(c) = profile.iter().position(|t| *t < self.lower_bounds[k]) {
                return Err(GeometryError::InvalidProfiles(format!(
                    "layer {k} lower bound exceeds nominal at column {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Ordered interface curves on a lateral grid.
///
/// `boundaries[0]` is the window top and `boundaries[7]` the window bottom;
/// layer `k` (0 = Air .. 6 = Vitreous) lies between `boundaries[k]` and
/// `boundaries[k + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    /// Column centres (µm).
    pub x: Vec<f64>,
    pub boundaries: [Vec<f64>; BOUNDARY_COUNT],
    /// Lateral span covered by the columns (µm).
    pub lateral_extent: (f64, f64),
    /// Axial span mapped onto the image rows (µm).
    pub axial_extent: (f64, f64),
    /// Axial-to-lateral aspect ratio of the extents.
    pub scale: f64,
}

impl BoundarySet {
    pub fn columns(&self) -> usize {
        self.x.len()
    }

    /// Thickness of layer `k` at column `c` (µm).
    pub fn thickness(&self, k: usize, c: usize) -> f64 {
        self.boundaries[k + 1][c] - self.boundaries[k][c]
    }

    /// First strict-ordering violation as `(layer, column)`.
    pub fn ordering_violation(&self) -> Option<(usize, usize)> {
        for c in 0..self.columns() {
            for k in 0..LAYER_COUNT {
                let (a, b) = (self.boundaries[k][c], self.boundaries[k + 1][c]);
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Some((k, c));
                }
            }
        }
        None
    }

    /// First corneal layer thinner than its lower bound, as `(layer, column)`.
    pub fn lower_bound_violation(&self, lower_bounds: &[f64; LAYER_COUNT]) -> Option<(usize, usize)> {
        for c in 0..self.columns() {
            for k in CORNEAL_LAYERS {
                if self.thickness(k, c) < lower_bounds[k] {
                    return Some((k, c));
                }
            }
        }
        None
    }
}

/// Geometric damping of the thickness perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DampingSchedule {
    /// Factor applied to `s - 1` per iteration.
    pub factor: f64,
    pub max_iterations: u32,
}

impl Default for DampingSchedule {
    fn default() -> Self {
        Self {
            factor: 0.5,
            max_iterations: 20,
        }
    }
}

/// Result of stacking: the boundaries and the thickness scale actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedLayers {
    pub boundaries: BoundarySet,
    pub thickness_scale: f64,
    /// Scale that was drawn before any damping.
    pub drawn_scale: f64,
    pub damping_iterations: u32,
}

fn stack_at_scale(
    x: &[f64],
    top: &[f64],
    profiles: &ThicknessProfiles,
    s: f64,
) -> Result<BoundarySet, (usize, usize)> {
    let cols = x.len();
    let mut boundaries: [Vec<f64>; BOUNDARY_COUNT] = Default::default();
    boundaries[0] = top.to_vec();
    for k in 0..LAYER_COUNT {
        let next: Vec<f64> = (0..cols)
            .map(|c| boundaries[k][c] + s * profiles.nominal[k][c])
            .collect();
        boundaries[k + 1] = next;
    }
    for c in 0..cols {
        for k in 0..LAYER_COUNT {
            let t = s * profiles.nominal[k][c];
            let above_floor = t >= profiles.lower_bounds[k];
            let below_ceiling = profiles.upper_bounds[k].is_none_or(|ub| t <= ub);
            let ordered = boundaries[k][c] < boundaries[k + 1][c];
            if !(above_floor && below_ceiling && ordered) {
                return Err((k, c));
            }
        }
    }
    let lateral_extent = lateral_extent_of(x);
    let axial_extent = (
        boundaries[0].iter().copied().fold(f64::INFINITY, f64::min),
        boundaries[LAYER_COUNT]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    );
    let scale = (axial_extent.1 - axial_extent.0) / (lateral_extent.1 - lateral_extent.0);
    Ok(BoundarySet {
        x: x.to_vec(),
        boundaries,
        lateral_extent,
        axial_extent,
        scale,
    })
}

/// Span of a uniform grid of column centres, half a pitch beyond each end.
fn lateral_extent_of(x: &[f64]) -> (f64, f64) {
    match x {
        [] => (0.0, 0.0),
        [only] => (*only, *only),
        [first, .., last] => {
            let half = 0.5 * (last - first) / (x.len() - 1) as f64;
            (first - half, last + half)
        }
    }
}

/// Stacks interfaces from a given initial scale, damping `s - 1` until all
/// constraints hold.
pub fn stack_with_scale(
    x: &[f64],
    top: &[f64],
    profiles: &ThicknessProfiles,
    initial_scale: f64,
    schedule: DampingSchedule,
) -> Result<StackedLayers, GeometryError> {
    if top.len() != x.len() {
        return Err(GeometryError::InvalidProfiles(format!(
            "top curve has {} points, grid has {}",
            top.len(),
            x.len()
        )));
    }
    if top.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::InvalidProfiles("top curve not finite".into()));
    }
    profiles.validate(x.len())?;
    let mut deviation = initial_scale - 1.0;
    for iteration in 0..=schedule.max_iterations {
        let s = 1.0 + deviation;
        if let Ok(boundaries) = stack_at_scale(x, top, profiles, s) {
            return Ok(StackedLayers {
                boundaries,
                thickness_scale: s,
                drawn_scale: initial_scale,
                damping_iterations: iteration,
            });
        }
        deviation *= schedule.factor;
    }
    match stack_at_scale(x, top, profiles, 1.0) {
        Ok(boundaries) => Ok(StackedLayers {
            boundaries,
            thickness_scale: 1.0,
            drawn_scale: initial_scale,
            damping_iterations: schedule.max_iterations + 1,
        }),
        Err((layer, column)) => Err(GeometryError::Unsatisfiable { layer, column }),
    }
}

/// Draws `s ~ U(1 - delta, 1 + delta)` from `seed` and stacks the layers.
pub fn stack_layers(
    x: &[f64],
    top: &[f64],
    profiles: &ThicknessProfiles,
    delta: f64,
    seed: u64,
    schedule: DampingSchedule,
) -> Result<StackedLayers, GeometryError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(GeometryError::InvalidParams(format!("delta {delta} outside [0, 1)")));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, "thickness", 0));
    let u: f64 = rng.random();
    let s = 1.0 - delta + 2.0 * delta * u;
    stack_with_scale(x, top, profiles, s, schedule)
}

/// Simulation window in geometry coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x_min: f64,
    pub x_max: f64,
    pub z_top: f64,
    pub z_bottom: f64,
}

/// Crops to the lateral window and replaces the outer curves by the flat
/// window limits. With `aspect = Some(a)` the axial span becomes
/// `a * (x_max - x_min)`, otherwise the window's own axial span is kept.
pub fn calibrate_and_crop(
    b: &BoundarySet,
    window: CropWindow,
    aspect: Option<f64>,
) -> Result<BoundarySet, GeometryError> {
    let CropWindow {
        x_min,
        x_max,
        z_top,
        ..
    } = window;
    if !(x_min < x_max) {
        return Err(GeometryError::WindowOutOfBounds(format!(
            "empty lateral window [{x_min}, {x_max}]"
        )));
    }
    let z_bottom = match aspect {
        Some(a) if a > 0.0 && a.is_finite() => z_top + a * (x_max - x_min),
        Some(a) => {
            return Err(GeometryError::InvalidParams(format!("aspect {a} must be positive")))
        }
        None => window.z_bottom,
    };
    if !(z_top < z_bottom) {
        return Err(GeometryError::WindowOutOfBounds(format!(
            "empty axial window [{z_top}, {z_bottom}]"
        )));
    }
    let tol = 1e-9 * (b.lateral_extent.1 - b.lateral_extent.0).abs().max(1.0);
    if x_min < b.lateral_extent.0 - tol || x_max > b.lateral_extent.1 + tol {
        return Err(GeometryError::WindowOutOfBounds(format!(
            "lateral window [{x_min}, {x_max}] exceeds geometry extent [{}, {}]",
            b.lateral_extent.0, b.lateral_extent.1
        )));
    }
    let keep: Vec<usize> = (0..b.columns())
        .filter(|&c| b.x[c] >= x_min - tol && b.x[c] <= x_max + tol)
        .collect();
    if keep.is_empty() {
        return Err(GeometryError::WindowOutOfBounds("no columns inside window".into()));
    }
    let mut boundaries: [Vec<f64>; BOUNDARY_COUNT] = Default::default();
    boundaries[0] = vec![z_top; keep.len()];
    boundaries[LAYER_COUNT] = vec![z_bottom; keep.len()];
    for k in 1..LAYER_COUNT {
        boundaries[k] = keep.iter().map(|&c| b.boundaries[k][c]).collect();
    }
    for (i, &c) in keep.iter().enumerate() {
        if boundaries[1][i] <= z_top {
            return Err(GeometryError::WindowOutOfBounds(format!(
                "anterior surface above window top at x = {} µm",
                b.x[c]
            )));
        }
        if boundaries[LAYER_COUNT - 1][i] >= z_bottom {
            return Err(GeometryError::WindowOutOfBounds(format!(
                "posterior surface below window bottom at x = {} µm",
                b.x[c]
            )));
        }
    }
    let out = BoundarySet {
        x: keep.iter().map(|&c| b.x[c]).collect(),
        boundaries,
        lateral_extent: (x_min, x_max),
        axial_extent: (z_top, z_bottom),
        scale: (z_bottom - z_top) / (x_max - x_min),
    };
    if let Some((layer, column)) = out.ordering_violation() {
        return Err(GeometryError::WindowOutOfBounds(format!(
            "ordering lost at layer {layer}, column {column}"
        )));
    }
    Ok(out)
}

/// Column centres of `columns` equal-width pixels spanning `[x_min, x_max]`.
pub fn lateral_grid(x_min: f64, x_max: f64, columns: usize) -> Vec<f64> {
    let pitch = (x_max - x_min) / columns as f64;
    (0..columns)
        .map(|i| x_min + (i as f64 + 0.5) * pitch)
        .collect()
}
