use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fresnel::{fresnel_interface, BoundaryOutcome};
use super::interaction::{absorb, russian_roulette, scatter_direction};
use super::{PhotonState, TransportConfig, TransportError};
use crate::grid::Grid;
use crate::optics::{OpticsTable, ThicknessMap};
use crate::rng::ColumnStreams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackLayer {
    /// Thickness (cm).
    pub thickness: f64,
    pub n: f64,
    pub mu_a: f64,
    pub mu_s: f64,
    pub g: f64,
}

impl StackLayer {
    fn mu_t(&self) -> f64 {
        self.mu_a + self.mu_s
    }
}

/// Planar layers between an ambient medium above and a terminal medium
/// below.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredStack {
    layers: Vec<StackLayer>,
    n_above: f64,
    n_below: f64,
    /// Depths of the layer interfaces, `depths[0] = 0`.
    depths: Vec<f64>,
}

impl LayeredStack {
    pub fn new(layers: Vec<StackLayer>, n_above: f64, n_below: f64) -> Result<Self, TransportError> {
        if layers.is_empty() {
            return Err(TransportError::InvalidStack("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            let ok = l.thickness > 0.0
                && l.thickness.is_finite()
                && l.n >= 1.0
                && l.mu_a >= 0.0
                && l.mu_s >= 0.0
                && l.g > -1.0
                && l.g < 1.0;
            if !ok {
                return Err(TransportError::InvalidStack(format!("layer {i} out of range: {l:?}")));
            }
        }
        if !(n_above >= 1.0 && n_below >= 1.0) {
            return Err(TransportError::InvalidStack("ambient indices must be >= 1".into()));
        }
        let mut depths = Vec::with_capacity(layers.len() + 1);
        depths.push(0.0);
        for l in &layers {
            let last = *depths.last().expect("non-empty");
            depths.push(last + l.thickness);
        }
        if depths.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(TransportError::InvalidStack("depths not increasing".into()));
        }
        Ok(Self {
            layers,
            n_above,
            n_below,
            depths,
        })
    }

    /// One column of a thickness map with the table's optics. The medium
    /// above is air; the window bottom is index-matched to the last layer.
    pub fn from_column(thickness_cm: &[f64], table: &OpticsTable) -> Result<Self, TransportError> {
        if thickness_cm.len() != table.layers.len() {
            return Err(TransportError::InvalidStack(format!(
                "{} thicknesses for {} table layers",
                thickness_cm.len(),
                table.layers.len()
            )));
        }
        let layers: Vec<StackLayer> = thickness_cm
            .iter()
            .zip(&table.layers)
            .map(|(&thickness, l)| StackLayer {
                thickness,
                n: l.n,
                mu_a: l.mu_a,
                mu_s: l.mu_s,
                g: l.g,
            })
            .collect();
        let n_below = layers.last().expect("non-empty").n;
        Self::new(layers, 1.0, n_below)
    }

    pub fn layers(&self) -> &[StackLayer] {
        &self.layers
    }

    pub fn total_depth(&self) -> f64 {
        *self.depths.last().expect("non-empty")
    }

    /// Layer containing depth `z` (interfaces belong to the deeper layer).
    pub fn layer_at(&self, z: f64) -> Option<usize> {
        if z < 0.0 || z >= self.total_depth() {
            return None;
        }
        Some(self.depths.partition_point(|d| *d <= z) - 1)
    }
}

/// Detected-weight histogram and weight bookkeeping for one A-line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AScanAccumulator {
    /// Detected weight per depth bin.
    pub bins: Vec<f64>,
    /// Depth covered by the bins (cm).
    pub depth: f64,
    pub photons: u64,
    pub launched: f64,
    /// Weight leaving the top surface inside the acceptance cone and aperture.
    pub detected: f64,
    /// Detected weight whose depth fell past the last bin.
    pub detected_beyond_window: f64,
    /// Weight leaving the top surface outside the acceptance.
    pub reflected: f64,
    pub absorbed: f64,
    /// Weight leaving through the bottom of the stack.
    pub transmitted: f64,
    pub roulette_killed: f64,
    pub roulette_gained: f64,
    /// Weight of packets stopped by the interaction cap.
    pub truncated: f64,
}

impl AScanAccumulator {
    fn new(bins: usize, depth: f64) -> Self {
        Self {
            bins: vec![0.0; bins],
            depth,
            ..Default::default()
        }
    }

    /// Exact bookkeeping residual; zero up to round-off.
    pub fn ledger_residual(&self) -> f64 {
        self.launched + self.roulette_gained
            - (self.detected
                + self.reflected
                + self.absorbed
                + self.transmitted
                + self.roulette_killed
                + self.truncated)
    }

    /// Relative mismatch between launched weight and the weight accounted
    /// for by detection, reflection, absorption and transmission. Roulette
    /// is unbiased, so its expected net contribution is zero.
    pub fn conservation_error(&self) -> f64 {
        let accounted = self.detected + self.reflected + self.absorbed + self.transmitted;
        (self.launched - accounted).abs() / self.launched
    }

    /// Bins normalized by the number of launched photons.
    pub fn reflectance(&self) -> Vec<f64> {
        let per = 1.0 / self.photons.max(1) as f64;
        self.bins.iter().map(|b| b * per).collect()
    }
}

enum Fate {
    Exit,
    Transmitted,
    Absorbed,
    Killed,
    Truncated,
}

fn propagate_photon<R: Rng + ?Sized>(
    stack: &LayeredStack,
    cfg: &TransportConfig,
    cos_accept: f64,
    rng: &mut R,
    acc: &mut AScanAccumulator,
) {
    let mut p = PhotonState::launch();
    acc.photons += 1;
    acc.launched += p.weight;
    let mut events: u64 = 0;
    let last = stack.layers.len() - 1;

    let fate = 'life: loop {
        let mut tau = -rng.sample::<f64, _>(Open01).ln();
        // move until the sampled optical depth is used up
        loop {
            events += 1;
            if events > cfg.max_interactions {
                break 'life Fate::Truncated;
            }
            let layer = stack.layers[p.layer];
            let mu_t = layer.mu_t();
            let (top, bottom) = (stack.depths[p.layer], stack.depths[p.layer + 1]);
            let uz = p.dir.uz;
            let to_boundary = if uz > 0.0 {
                (bottom - p.pos[2]) / uz
            } else if uz < 0.0 {
                (top - p.pos[2]) / uz
            } else {
                f64::INFINITY
            };
            let to_collision = if mu_t > 0.0 { tau / mu_t } else { f64::INFINITY };
            if to_collision < to_boundary {
                p.advance(to_collision, layer.n);
                break;
            }
            if !to_boundary.is_finite() {
                break 'life Fate::Truncated;
            }
            p.advance(to_boundary, layer.n);
            p.pos[2] = if uz > 0.0 { bottom } else { top };
            if mu_t > 0.0 {
                tau = (tau - to_boundary * mu_t).max(0.0);
            }
            let downward = uz > 0.0;
            let n2 = match (downward, p.layer) {
                (true, l) if l == last => stack.n_below,
                (true, l) => stack.layers[l + 1].n,
                (false, 0) => stack.n_above,
                (false, l) => stack.layers[l - 1].n,
            };
            match fresnel_interface(layer.n, n2, p.dir, rng.random()) {
                BoundaryOutcome::Reflected(d) => p.dir = d,
                BoundaryOutcome::Transmitted(d) => {
                    p.dir = d;
                    if downward {
                        if p.layer == last {
                            break 'life Fate::Transmitted;
                        }
                        p.layer += 1;
                    } else {
                        if p.layer == 0 {
                            break 'life Fate::Exit;
                        }
                        p.layer -= 1;
                    }
                }
            }
        }

        let layer = stack.layers[p.layer];
        let (deposited, after) = absorb(p, layer.mu_a, layer.mu_t());
        acc.absorbed += deposited;
        p = after;
        if p.weight <= 0.0 {
            break Fate::Absorbed;
        }
        p.dir = scatter_direction(p.dir, layer.g, rng);
        if p.weight < cfg.roulette_threshold {
            let before = p.weight;
            match russian_roulette(before, cfg.roulette_threshold, cfg.roulette_survival, rng.random()) {
                Some(w) => {
                    acc.roulette_gained += w - before;
                    p.weight = w;
                }
                None => break Fate::Killed,
            }
        }
    };

    match fate {
        Fate::Exit => {
            let radial = p.pos[0].hypot(p.pos[1]);
            if -p.dir.uz >= cos_accept && radial <= cfg.aperture_radius {
                acc.detected += p.weight;
                let z = p.detection_depth();
                let bin = (z / acc.depth * acc.bins.len() as f64).floor();
                if bin >= 0.0 && (bin as usize) < acc.bins.len() {
                    acc.bins[bin as usize] += p.weight;
                } else {
                    acc.detected_beyond_window += p.weight;
                }
            } else {
                acc.reflected += p.weight;
            }
        }
        Fate::Transmitted => acc.transmitted += p.weight,
        Fate::Absorbed => {}
        Fate::Killed => acc.roulette_killed += p.weight,
        Fate::Truncated => acc.truncated += p.weight,
    }
}

/// Runs `photons_per_aline` packets through `stack`. Photon `i` draws from
/// the stream keyed by `(seed_root, sample_id, column_id, i)`.
pub fn simulate_a_line(
    stack: &LayeredStack,
    cfg: &TransportConfig,
    column_id: u64,
    sample_id: u64,
) -> Result<AScanAccumulator, TransportError> {
    cfg.validate()?;
    let mut acc = AScanAccumulator::new(cfg.axial_bins, stack.total_depth());
    let mut streams = ColumnStreams::new(cfg.seed_root, sample_id, column_id);
    let cos_accept = cfg.acceptance_half_angle.cos();
    for photon in 0..cfg.photons_per_aline {
        let rng = streams.photon(photon);
        propagate_photon(stack, cfg, cos_accept, rng, &mut acc);
    }
    Ok(acc)
}

/// Per-photon reflectance `R(z, x)` with per-column diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BScanSignal {
    /// `axial_bins` rows by `width` columns.
    pub reflectance: Grid<f64>,
    pub columns: Vec<AScanAccumulator>,
}

/// Simulates every column independently (in parallel on the current rayon
/// pool). Output does not depend on the number of threads.
pub fn simulate_b_scan(
    tmap: &ThicknessMap,
    table: &OpticsTable,
    cfg: &TransportConfig,
    sample_id: u64,
) -> Result<BScanSignal, TransportError> {
    cfg.validate()?;
    let columns: Vec<AScanAccumulator> = tmap
        .columns
        .par_iter()
        .enumerate()
        .map(|(c, t)| {
            let stack = LayeredStack::from_column(t, table)?;
            simulate_a_line(&stack, cfg, c as u64, sample_id)
        })
        .collect::<Result<_, _>>()?;
    let width = columns.len();
    let mut reflectance = Grid::filled(width, cfg.axial_bins, 0.0);
    for (c, acc) in columns.iter().enumerate() {
        for (row, v) in acc.reflectance().into_iter().enumerate() {
            *reflectance.get_mut(c, row) = v;
        }
    }
    Ok(BScanSignal {
        reflectance,
        columns,
    })
}
