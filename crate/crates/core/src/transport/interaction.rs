use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;

use super::{Direction, PhotonState};

/// Free path `-ln(xi) / mu_t`. A non-interacting layer (`mu_t == 0`) gives
/// an infinite step, i.e. ballistic transit to the next boundary.
pub fn sample_step(mu_t: f64, xi: f64) -> f64 {
    if mu_t <= 0.0 {
        return f64::INFINITY;
    }
    -xi.ln() / mu_t
}

/// Deposits the fraction `mu_a / mu_t` of the packet weight.
pub fn absorb(state: PhotonState, mu_a: f64, mu_t: f64) -> (f64, PhotonState) {
    let deposited = state.weight * mu_a / mu_t;
    let remaining = PhotonState {
        weight: state.weight - deposited,
        ..state
    };
    (deposited, remaining)
}

/// Henyey-Greenstein deflection cosine by inverse-CDF sampling.
pub fn sample_hg_cos(g: f64, xi: f64) -> f64 {
    let cos = if g.abs() < 1e-9 {
        2.0 * xi - 1.0
    } else {
        let g2 = g * g;
        let f = (1.0 - g2) / (1.0 - g + 2.0 * g * xi);
        (1.0 + g2 - f * f) / (2.0 * g)
    };
    cos.clamp(-1.0, 1.0)
}

/// Rotates `dir` by an HG polar angle and a uniform azimuth.
pub fn scatter_direction<R: Rng + ?Sized>(dir: Direction, g: f64, rng: &mut R) -> Direction {
    let cos_t = sample_hg_cos(g, rng.sample(Open01));
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    let (sin_p, cos_p) = phi.sin_cos();
    let Direction { ux, uy, uz } = dir;
    let out = if uz.abs() > 1.0 - 1e-12 {
        Direction {
            ux: sin_t * cos_p,
            uy: sin_t * sin_p,
            uz: cos_t * uz.signum(),
        }
    } else {
        let root = (1.0 - uz * uz).sqrt();
        Direction {
            ux: sin_t * (ux * uz * cos_p - uy * sin_p) / root + ux * cos_t,
            uy: sin_t * (uy * uz * cos_p + ux * sin_p) / root + uy * cos_t,
            uz: -sin_t * cos_p * root + uz * cos_t,
        }
    };
    out.normalized()
}

/// Roulette for packets below `threshold`: survive with probability
/// `survival` (when `xi < survival`) boosted by `1/survival`, else `None`.
pub fn russian_roulette(weight: f64, threshold: f64, survival: f64, xi: f64) -> Option<f64> {
    if weight >= threshold {
        Some(weight)
    } else if xi < survival {
        Some(weight / survival)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn step_closed_form() {
        let s = sample_step(5.0, (-1.0f64).exp());
        assert!((s - 0.2).abs() < 1e-15);
        let xi = 0.37;
        assert!((sample_step(4.0, xi) - 2.0 * sample_step(8.0, xi)).abs() < 1e-15);
        assert_eq!(sample_step(0.0, 0.5), f64::INFINITY);
    }

    #[test]
    fn absorption_fraction() {
        let p = PhotonState::launch();
        let (dep, q) = absorb(p, 0.0, 4.5);
        assert_eq!((dep, q.weight), (0.0, 1.0));
        let (dep, q) = absorb(p, 0.2, 4.7);
        assert!((dep - 0.042553).abs() < 1e-6);
        assert!((q.weight - 0.957447).abs() < 1e-6);
    }

    #[test]
    fn absorption_telescopes() {
        let mut p = PhotonState::launch();
        let mut total = 0.0;
        for i in 0..200 {
            let mu_a = 0.1 + 0.01 * i as f64;
            let (dep, q) = absorb(p, mu_a, mu_a + 5.0);
            total += dep;
            p = q;
        }
        assert!((total + p.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roulette_rules() {
        assert_eq!(russian_roulette(0.5, 1e-4, 0.1, 0.99), Some(0.5));
        let boosted = russian_roulette(1e-5, 1e-4, 0.1, 0.05).unwrap();
        assert!((boosted - 1e-4).abs() < 1e-18);
        assert_eq!(russian_roulette(1e-5, 1e-4, 0.1, 0.5), None);
    }

    #[test]
    fn hg_endpoints() {
        assert_eq!(sample_hg_cos(0.0, 0.0), -1.0);
        assert_eq!(sample_hg_cos(0.0, 1.0), 1.0);
        assert!((sample_hg_cos(0.9, 1.0) - 1.0).abs() < 1e-12);
        assert!((sample_hg_cos(0.9, 0.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn scatter_keeps_unit_norm() {
        let mut r = rng::stream(3);
        let mut d = Direction::DOWN;
        for i in 0..10_000 {
            let g = [0.0, 0.92, 0.94, -0.5][i % 4];
            d = scatter_direction(d, g, &mut r);
            assert!((d.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scatter_polar_angle_is_relative_to_incident() {
        // the deflection cosine is the dot product with the incident direction
        let mut r = rng::stream(11);
        let d0 = Direction::new(0.3, -0.4, 0.866).normalized();
        let n = 200_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let d1 = scatter_direction(d0, 0.8, &mut r);
                d0.ux * d1.ux + d0.uy * d1.uy + d0.uz * d1.uz
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.8).abs() < 0.005, "{mean}");
    }
}
