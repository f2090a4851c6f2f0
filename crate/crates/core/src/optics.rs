//! Layer optical constants and their projection onto the pixel grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundarySet, LAYER_COUNT};
use crate::grid::Grid;

/// Micrometres to centimetres.
pub const UM_TO_CM: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid optics table: {0}")]
    InvalidTable(String),
    #[error("boundary ordering violated at layer {layer}, column {column}")]
    Ordering { layer: usize, column: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOptics {
    pub name: String,
    /// Refractive index.
    pub n: f64,
    /// Absorption coefficient (cm⁻¹).
    pub mu_a: f64,
    /// Scattering coefficient (cm⁻¹).
    pub mu_s: f64,
    /// Henyey-Greenstein anisotropy.
    pub g: f64,
    /// Nominal thickness (cm).
    pub d: f64,
}

impl LayerOptics {
    pub fn mu_t(&self) -> f64 {
        self.mu_a + self.mu_s
    }
}

/// Seven layers in anatomical order: Air, Epithelium, Bowman, Stroma,
/// Descemet, Endothelium, Vitreous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpticsTable {
    pub layers: Vec<LayerOptics>,
}

pub const LAYER_NAMES: [&str; LAYER_COUNT] = [
    "Air",
    "Epithelium",
    "Bowman",
    "Stroma",
    "Descemet",
    "Endothelium",
    "Vitreous",
];

fn row(name: &str, n: f64, mu_a: f64, mu_s: f64, g: f64, d: f64) -> LayerOptics {
    LayerOptics {
        name: name.to_owned(),
        n,
        mu_a,
        mu_s,
        g,
        d,
    }
}

/// Literature-based corneal constants used for the forward simulation.
pub fn default_optics_table() -> OpticsTable {
    OpticsTable {
        layers: vec![
            row("Air", 1.000, 0.00, 0.00, 0.00, 0.0262),
            row("Epithelium", 1.400, 0.20, 10.00, 0.92, 0.0052),
            row("Bowman", 1.400, 0.20, 8.00, 0.92, 8.3612e-4),
            row("Stroma", 1.376, 0.20, 4.50, 0.94, 0.0489),
            row("Descemet", 1.375, 0.30, 8.00, 0.93, 0.0011),
            row("Endothelium", 1.375, 0.30, 10.00, 0.93, 4.4537e-4),
            row("Vitreous", 1.336, 0.06, 0.02, 0.93, 0.0124),
        ],
    }
}

impl Default for OpticsTable {
    fn default() -> Self {
        default_optics_table()
    }
}

impl OpticsTable {
    pub fn validate(&self) -> Result<(), OpticsError> {
        if self.layers.len() != LAYER_COUNT {
            return Err(OpticsError::InvalidTable(format!(
                "expected {LAYER_COUNT} layers, found {}",
                self.layers.len()
            )));
        }
        for l in &self.layers {
            let ok = l.n >= 1.0
                && l.mu_a >= 0.0
                && l.mu_s >= 0.0
                && (-1.0..=1.0).contains(&l.g)
                && l.d > 0.0;
            if !ok {
                return Err(OpticsError::InvalidTable(format!("layer `{}` out of range", l.name)));
            }
        }
        Ok(())
    }

    /// Layer by 1-based label.
    pub fn by_label(&self, label: u8) -> &LayerOptics {
        &self.layers[usize::from(label) - 1]
    }

    /// Nominal thicknesses in µm.
    pub fn nominal_thickness_um(&self) -> [f64; LAYER_COUNT] {
        std::array::from_fn(|k| self.layers[k].d / UM_TO_CM)
    }

    /// The `(n, mu_a, mu_s, g)` tuple of every label as stored in f32 maps.
    pub fn tuples_f32(&self) -> Vec<[f32; 4]> {
        self.layers
            .iter()
            .map(|l| [l.n as f32, l.mu_a as f32, l.mu_s as f32, l.g as f32])
            .collect()
    }
}

/// Per-column layer thicknesses in cm, `columns[x][layer]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessMap {
    pub columns: Vec<[f64; LAYER_COUNT]>,
}

impl ThicknessMap {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column_depth(&self, c: usize) -> f64 {
        self.columns[c].iter().sum()
    }
}

/// Adjacent boundary differences converted from µm to cm.
pub fn thickness_map(b: &BoundarySet) -> Result<ThicknessMap, OpticsError> {
    let columns = (0..b.columns())
        .map(|c| {
            let mut t = [0.0; LAYER_COUNT];
            for (k, slot) in t.iter_mut().enumerate() {
                let um = b.thickness(k, c);
                if !(um > 0.0) {
                    return Err(OpticsError::Ordering { layer: k, column: c });
                }
                *slot = um * UM_TO_CM;
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ThicknessMap { columns })
}

/// Layer labels 1..=7, row-major `(column, row)`.
pub type LabelMap = Grid<u8>;

/// Assigns each pixel centre the label of the half-open interval
/// `[y_{l-1}, y_l)` containing it: a centre exactly on an interface belongs
/// to the deeper layer. The pixel grid spans `b.axial_extent` and
/// `b.lateral_extent`; columns map to the nearest boundary column.
pub fn rasterize_labels(b: &BoundarySet, width: usize, height: usize) -> LabelMap {
    let (z0, z1) = b.axial_extent;
    let dz = (z1 - z0) / height as f64;
    let cols = b.columns();
    let source: Vec<usize> = if width == cols {
        (0..width).collect()
    } else {
        let (x0, x1) = b.lateral_extent;
        let dx = (x1 - x0) / width as f64;
        (0..width)
            .map(|i| {
                let xc = x0 + (i as f64 + 0.5) * dx;
                nearest(&b.x, xc)
            })
            .collect()
    };
    let mut labels = Grid::filled(width, height, 1u8);
    for (px, &c) in source.iter().enumerate() {
        // interior interfaces y_1..y_6
        let interfaces: [f64; LAYER_COUNT - 1] = std::array::from_fn(|k| b.boundaries[k + 1][c]);
        let mut label = 1u8;
        let mut next = 0usize;
        for row in 0..height {
            let z = z0 + (row as f64 + 0.5) * dz;
            while next < interfaces.len() && interfaces[next] <= z {
                next += 1;
                label += 1;
            }
            *labels.get_mut(px, row) = label;
        }
    }
    labels
}

fn nearest(xs: &[f64], v: f64) -> usize {
    let idx = xs.partition_point(|x| *x < v);
    match idx {
        0 => 0,
        i if i >= xs.len() => xs.len() - 1,
        i => {
            if (v - xs[i - 1]) <= (xs[i] - v) {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Pixel-aligned `n`, `mu_a`, `mu_s` and `g` maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMaps {
    pub n: Grid<f32>,
    pub mu_a: Grid<f32>,
    pub mu_s: Grid<f32>,
    pub g: Grid<f32>,
}

/// Piecewise-constant lookup of each pixel's layer constants.
pub fn project_coefficients(labels: &LabelMap, table: &OpticsTable) -> CoefficientMaps {
    let tuples = table.tuples_f32();
    let pick = |i: usize| labels.map(|&l| tuples[usize::from(l) - 1][i]);
    CoefficientMaps {
        n: pick(0),
        mu_a: pick(1),
        mu_s: pick(2),
        g: pick(3),
    }
}

/// Label whose table tuple equals `tuple` exactly, if any.
pub fn identify_label(tuple: [f32; 4], table: &OpticsTable) -> Option<u8> {
    table
        .tuples_f32()
        .iter()
        .position(|t| t.iter().zip(&tuple).all(|(a, b)| a.to_bits() == b.to_bits()))
        .map(|i| i as u8 + 1)
}

/// Five-class corneal mask: 0 outside the cornea, 1..=5 for Epithelium..Endothelium.
pub fn corneal_mask(labels: &LabelMap) -> Grid<u8> {
    labels.map(|&l| if (2..=6).contains(&l) { l - 1 } else { 0 })
}
