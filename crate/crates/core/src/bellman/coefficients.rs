//! Feasibility of the coefficient vector.
//!
//! Each component contributes a lower bound for its Hessian in terms of
//! `|dx|, |dy|, |dr|, |ds|`. Writing `u = |dx|/|x|`, `v = |dy|/|y|`,
//! `p = |dr|/r`, `q = |ds|/s` and dividing by `|x||y|/Q`, the requirement
//! that the weighted sum dominates `(2/Q)|dx||dy|` becomes nonnegativity of
//!
//! ```text
//! f = 4 c1 (u - p)(v - q) + a2 p (v - q) + a3 q (u - p) + a7 p q - 2 u v
//! ```
//!
//! on the closed positive orthant, with `a2 = sqrt(3) c2 / 2`,
//! `a3 = sqrt(3) c3 / 2` and `a7 = c7 / 256`. The form is homogeneous of
//! degree two, so it suffices to check the unit sphere.

use std::f64::consts::FRAC_PI_2;

use super::{BellmanError, Coefficients, Result};

/// Angular resolution of the grid on the positive orthant of the unit
/// 3-sphere used by [`validate_coefficients`].
pub const DEFAULT_GRID: usize = 24;

const TOLERANCE: f64 = 1e-12;

/// Outcome of a successful validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientCertificate {
    pub coefficients: Coefficients,
    /// Smallest value of the reduced form over the grid.
    pub min_margin: f64,
    /// Normalized `(u, v, p, q)` where it is attained.
    pub worst_direction: [f64; 4],
    /// Number of grid directions checked.
    pub directions: usize,
}

fn scaled_constants(c: &Coefficients) -> (f64, f64, f64) {
    let h = 3f64.sqrt() / 2.0;
    (h * c.c2, h * c.c3, c.c7 / 256.0)
}

/// The reduced form `f` at `dir = (u, v, p, q)`.
pub fn reduced_form(c: &Coefficients, dir: [f64; 4]) -> f64 {
    let [u, v, p, q] = dir;
    let (a2, a3, a7) = scaled_constants(c);
    4.0 * c.c1 * (u - p) * (v - q) + a2 * p * (v - q) + a3 * q * (u - p) + a7 * p * q
        - 2.0 * u * v
}

/// Reduced form minus `slack (u q + p v + p q)`, used when searching for
/// coefficients that stay feasible under perturbation of the component
/// bounds.
fn slack_form(c: &Coefficients, dir: [f64; 4], slack: f64) -> f64 {
    let [u, v, p, q] = dir;
    reduced_form(c, dir) - slack * (u * q + p * v + p * q)
}

/// Points of the positive orthant of the unit 3-sphere on a grid of
/// `n + 1` angles per hyperspherical coordinate, endpoints included.
pub(crate) fn orthant_directions(n: usize) -> impl Iterator<Item = [f64; 4]> {
    let n = n.max(1);
    let angle = move |i: usize| FRAC_PI_2 * i as f64 / n as f64;
    (0..=n).flat_map(move |i| {
        (0..=n).flat_map(move |j| {
            (0..=n).map(move |k| {
                let (s1, c1) = angle(i).sin_cos();
                let (s2, c2) = angle(j).sin_cos();
                let (s3, c3) = angle(k).sin_cos();
                [c1, s1 * c2, s1 * s2 * c3, s1 * s2 * s3]
            })
        })
    })
}

fn worst(c: &Coefficients, grid: usize, slack: f64) -> ([f64; 4], f64, usize) {
    let mut best = ([0.0; 4], f64::INFINITY);
    let mut count = 0;
    for dir in orthant_directions(grid) {
        count += 1;
        let m = slack_form(c, dir, slack);
        if m < best.1 {
            best = (dir, m);
        }
    }
    (best.0, best.1, count)
}

/// Checks nonnegativity of the reduced form on the grid.
///
/// Fails with [`BellmanError::Infeasible`] naming the worst direction.
pub fn validate_coefficients(c: &Coefficients, grid: usize) -> Result<CoefficientCertificate> {
    let (dir, margin, count) = worst(c, grid, 0.0);
    if margin < -TOLERANCE {
        return Err(BellmanError::Infeasible {
            direction: dir,
            margin,
        });
    }
    Ok(CoefficientCertificate {
        coefficients: *c,
        min_margin: margin,
        worst_direction: dir,
        directions: count,
    })
}

/// Validates a draft on the default grid and returns it together with its
/// certificate.
pub fn determine_coefficients(draft: &Coefficients) -> Result<CoefficientCertificate> {
    if draft.as_array().iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(BellmanError::Configuration(format!(
            "coefficients must be positive, got {:?}",
            draft.as_array()
        )));
    }
    validate_coefficients(draft, DEFAULT_GRID)
}

fn bisect(mut lo: f64, mut hi: f64, ok: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Searches for small coefficients whose reduced form keeps a margin of
/// `slack` on each cross term.
///
/// `c1` is fixed at its lower limit 1/2 (the `u v` term), then `a2 = a3` and
/// finally `a7` are found by bisection on the grid. The results are rounded
/// up to multiples of 1/8 for `a2, a3` and to a power of two for `c7`, and
/// the rounded vector is validated again.
pub fn search_coefficients(slack: f64, grid: usize) -> Result<CoefficientCertificate> {
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(BellmanError::Configuration(format!(
            "slack must be nonnegative, got {slack}"
        )));
    }
    let h = 3f64.sqrt() / 2.0;
    let make = |a23: f64, a7: f64| Coefficients {
        c1: 0.5,
        c2: a23 / h,
        c3: a23 / h,
        c7: 256.0 * a7,
    };
    let feasible = |c: &Coefficients| worst(c, grid, slack).1 >= -TOLERANCE;
    // Large a7 decouples the p q term, isolating the conditions on a2, a3.
    let a23 = bisect(0.0, 64.0, |a| feasible(&make(a, 1e6)));
    let a23 = ((a23 - 1e-9) * 8.0).ceil() / 8.0;
    let a7 = bisect(0.0, 1e6, |a| feasible(&make(a23, a)));
    let c7 = (256.0 * (a7 - 1e-9)).log2().ceil().exp2();
    let c = Coefficients {
        c7,
        ..make(a23, 0.0)
    };
    let (dir, margin, count) = worst(&c, grid, slack);
    if margin < -TOLERANCE {
        return Err(BellmanError::Infeasible {
            direction: dir,
            margin,
        });
    }
    Ok(CoefficientCertificate {
        coefficients: c,
        min_margin: validate_coefficients(&c, grid)?.min_margin,
        worst_direction: dir,
        directions: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certified_defaults_pass() {
        let cert = determine_coefficients(&Coefficients::certified()).unwrap();
        assert!(cert.min_margin >= -TOLERANCE);
        assert_eq!(cert.directions, 25 * 25 * 25);
    }

    #[test]
    fn missing_b7_fails_on_a_pure_weight_direction() {
        let draft = Coefficients {
            c7: 1e-9,
            ..Coefficients::certified()
        };
        match determine_coefficients(&draft) {
            Err(BellmanError::Infeasible { direction, margin }) => {
                assert!(margin < 0.0);
                assert!(direction[0].abs() < 1e-12 && direction[1].abs() < 1e-12);
                assert!(direction[2] > 0.5 && direction[3] > 0.5);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn small_c1_fails() {
        let draft = Coefficients {
            c1: 0.4,
            ..Coefficients::certified()
        };
        assert!(determine_coefficients(&draft).is_err());
    }

    #[test]
    fn search_recovers_the_defaults() {
        let cert = search_coefficients(0.5, DEFAULT_GRID).unwrap();
        let c = cert.coefficients;
        let d = Coefficients::certified();
        assert_eq!(c.c1, d.c1);
        assert!((c.c2 - d.c2).abs() < 1e-12);
        assert!((c.c3 - d.c3).abs() < 1e-12);
        assert_eq!(c.c7, d.c7);
    }

    #[test]
    fn grid_includes_axes() {
        let dirs: Vec<_> = orthant_directions(4).collect();
        for e in 0..4 {
            assert!(dirs
                .iter()
                .any(|d| (d[e] - 1.0).abs() < 1e-15 && d.iter().map(|t| t * t).sum::<f64>() > 0.999));
        }
    }
}
