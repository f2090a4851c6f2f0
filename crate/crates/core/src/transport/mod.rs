//! Monte Carlo photon transport through planar layered media.
//!
//! Each A-line is an independent one-dimensional layered stack built from
//! that column's thickness vector. Photons random-walk with exponential
//! free paths, partial absorption at each collision, Henyey-Greenstein
//! scattering, Fresnel boundaries and Russian roulette. Photons leaving the
//! top surface inside the acceptance cone and aperture are binned by
//! half their round-trip path, which is the backscatter depth.

mod engine;
mod fresnel;
mod interaction;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{simulate_a_line, simulate_b_scan, AScanAccumulator, BScanSignal, LayeredStack, StackLayer};
pub use fresnel::{fresnel_interface, fresnel_reflectance, snell_residual, BoundaryOutcome};
pub use interaction::{absorb, russian_roulette, sample_hg_cos, sample_step, scatter_direction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("invalid transport configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid layered stack: {0}")]
    InvalidStack(String),
}

/// Unit propagation direction (direction cosines).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
}

impl Direction {
    pub const DOWN: Direction = Direction {
        ux: 0.0,
        uy: 0.0,
        uz: 1.0,
    };

    pub fn new(ux: f64, uy: f64, uz: f64) -> Self {
        Self { ux, uy, uz }
    }

    pub fn norm(&self) -> f64 {
        (self.ux * self.ux + self.uy * self.uy + self.uz * self.uz).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self {
            ux: self.ux / n,
            uy: self.uy / n,
            uz: self.uz / n,
        }
    }

    /// Sine of the angle to the z axis.
    pub fn sin_polar(&self) -> f64 {
        (self.ux * self.ux + self.uy * self.uy).sqrt()
    }
}

/// An in-flight photon packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonState {
    /// Position (cm); z measured down from the stack surface.
    pub pos: [f64; 3],
    pub dir: Direction,
    pub weight: f64,
    pub layer: usize,
    /// Refractive-index-weighted path length (cm).
    pub optical_path: f64,
    /// Geometric path length (cm).
    pub geometric_path: f64,
}

impl PhotonState {
    /// Pencil beam at the origin heading straight down into layer 0.
    pub fn launch() -> Self {
        Self {
            pos: [0.0; 3],
            dir: Direction::DOWN,
            weight: 1.0,
            layer: 0,
            optical_path: 0.0,
            geometric_path: 0.0,
        }
    }

    fn advance(&mut self, distance: f64, n: f64) {
        self.pos[0] += self.dir.ux * distance;
        self.pos[1] += self.dir.uy * distance;
        self.pos[2] += self.dir.uz * distance;
        self.optical_path += n * distance;
        self.geometric_path += distance;
    }

    /// Detection depth: half the optical path divided by the path-averaged
    /// refractive index.
    pub fn detection_depth(&self) -> f64 {
        if self.geometric_path <= 0.0 {
            return 0.0;
        }
        let mean_index = self.optical_path / self.geometric_path;
        0.5 * self.optical_path / mean_index
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    pub photons_per_aline: u64,
    /// Number of depth bins in each detected A-line.
    pub axial_bins: usize,
    pub roulette_threshold: f64,
    /// Survival probability `m`; survivors are boosted by `1/m`.
    pub roulette_survival: f64,
    /// Detection cone half-angle (radians) measured from the outward normal.
    pub acceptance_half_angle: f64,
    /// Detection aperture radius around the launch axis (cm).
    pub aperture_radius: f64,
    /// Hard cap on collisions plus boundary events per photon.
    pub max_interactions: u64,
    pub seed_root: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            photons_per_aline: 10_000,
            axial_bins: 1024,
            roulette_threshold: 1e-4,
            roulette_survival: 0.1,
            acceptance_half_angle: 5f64.to_radians(),
            aperture_radius: 0.05,
            max_interactions: 1_000_000,
            seed_root: 0,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<(), TransportError> {
        let fail = |m: &str| Err(TransportError::InvalidConfig(m.to_owned()));
        if self.photons_per_aline < 1 {
            return fail("photons_per_aline must be at least 1");
        }
        if self.axial_bins < 1 {
            return fail("axial_bins must be at least 1");
        }
        if !(self.roulette_threshold > 0.0 && self.roulette_threshold < 1.0) {
            return fail("roulette_threshold must lie in (0, 1)");
        }
        if !(self.roulette_survival > 0.0 && self.roulette_survival <= 1.0) {
            return fail("roulette_survival must lie in (0, 1]");
        }
        if !(self.acceptance_half_angle > 0.0
            && self.acceptance_half_angle <= std::f64::consts::FRAC_PI_2)
        {
            return fail("acceptance_half_angle must lie in (0, pi/2]");
        }
        if !(self.aperture_radius > 0.0) {
            return fail("aperture_radius must be positive");
        }
        if self.max_interactions < 1 {
            return fail("max_interactions must be at least 1");
        }
        Ok(())
    }
}
