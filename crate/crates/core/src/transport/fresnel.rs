//! Fresnel reflection and Snell refraction at planar layer interfaces.
//!
//! Interfaces are normal to the axial (z) direction, so the incidence cosine
//! is `|uz|`.

use super::Direction;

/// Cosines closer to 1 than this are treated as normal incidence.
const COS_NORMAL: f64 = 1.0 - 1e-12;
/// Cosines below this are treated as grazing incidence.
const COS_GRAZING: f64 = 1e-12;

/// Unpolarized reflectance (mean of s and p) and transmitted cosine for
/// light going from index `n1` to `n2` with incidence cosine `cos_i`.
/// Returns a transmitted cosine of 0 under total internal reflection.
pub fn fresnel_reflectance(n1: f64, n2: f64, cos_i: f64) -> (f64, f64) {
    let cos_i = cos_i.abs().min(1.0);
    if n1 == n2 {
        return (0.0, cos_i);
    }
    if cos_i > COS_NORMAL {
        let r = (n1 - n2) / (n1 + n2);
        return (r * r, cos_i);
    }
    if cos_i < COS_GRAZING {
        return (1.0, 0.0);
    }
    let sin_i = (1.0 - cos_i * cos_i).sqrt();
    let sin_t = n1 / n2 * sin_i;
    if sin_t >= 1.0 {
        return (1.0, 0.0);
    }
    let cos_t = (1.0 - sin_t * sin_t).sqrt();
    let rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t);
    let rp = (n2 * cos_i - n1 * cos_t) / (n2 * cos_i + n1 * cos_t);
    (0.5 * (rs * rs + rp * rp), cos_t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryOutcome {
    Reflected(Direction),
    Transmitted(Direction),
}

impl BoundaryOutcome {
    pub fn direction(&self) -> Direction {
        match *self {
            BoundaryOutcome::Reflected(d) | BoundaryOutcome::Transmitted(d) => d,
        }
    }
}

/// Reflects with probability `R_F` (when `xi < R_F`), otherwise refracts.
pub fn fresnel_interface(n1: f64, n2: f64, dir: Direction, xi: f64) -> BoundaryOutcome {
    let (reflectance, cos_t) = fresnel_reflectance(n1, n2, dir.uz);
    if xi < reflectance {
        return BoundaryOutcome::Reflected(Direction { uz: -dir.uz, ..dir });
    }
    if n1 == n2 {
        return BoundaryOutcome::Transmitted(dir);
    }
    let ratio = n1 / n2;
    let refracted = Direction {
        ux: dir.ux * ratio,
        uy: dir.uy * ratio,
        uz: cos_t.copysign(dir.uz),
    };
    BoundaryOutcome::Transmitted(refracted.normalized())
}

/// `n1 sin(theta_i) - n2 sin(theta_t)` for a refraction event.
pub fn snell_residual(n1: f64, n2: f64, incident: Direction, refracted: Direction) -> f64 {
    n1 * incident.sin_polar() - n2 * refracted.sin_polar()
}
