use rand::Rng;

use super::tree::{
    bilinear_form, check_subordination, random_martingale_with, terminal_pairing, weighted_norm,
    DyadicMartingale,
};
use super::{Result, SimConfig, SimError};
use crate::golden;
use crate::rng::substream;
use crate::weights::WeightTree;

/// Default constant of the estimates, checked against observed ratios.
pub const C_TARGET: f64 = 10.0;

/// Relative tolerance of the duality identity for the weighted norm.
pub const DUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearReport {
    /// `|<Y_0, Z_0>| + E sum |<dY, dZ>|`.
    pub lhs: f64,
    /// `Q2(w) ||X||_w ||Z||_{1/w}`.
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
    /// `lambda^2 = (E G)^{1/2} (E F)^{-1/2}`.
    pub lambda_sq: f64,
    /// `Q2 (lambda^2 E F + lambda^{-2} E G) / 2` at the closed-form `lambda`.
    pub rhs_at_lambda: f64,
    /// Same quantity minimized numerically over `lambda`.
    pub rhs_searched: f64,
}

fn require_subordinate(x: &DyadicMartingale, y: &DyadicMartingale) -> Result<()> {
    let s = check_subordination(x, y)?;
    match s.first_violation {
        None => Ok(()),
        Some((level, index)) => Err(SimError::Subordination { level, index }),
    }
}

/// Checks `lhs <= c_target rhs` for a subordinate pair `(X, Y)` and a test
/// martingale `Z`.
pub fn verify_bilinear_estimate(
    x: &DyadicMartingale,
    y: &DyadicMartingale,
    z: &DyadicMartingale,
    w: &WeightTree,
    c_target: f64,
) -> Result<BilinearReport> {
    require_subordinate(x, y)?;
    let u = w.inverse();
    let lhs = bilinear_form(y, z)?;
    let nx = weighted_norm(x, w)?;
    let nz = weighted_norm(z, &u)?;
    let q2 = w.a2_characteristic();
    let rhs = q2 * nx * nz;
    let ef = nx * nx;
    let eg = nz * nz;
    let at = |l2: f64| 0.5 * q2 * (l2 * ef + eg / l2);
    let (lambda_sq, rhs_at_lambda, rhs_searched) = if ef > 0.0 && eg > 0.0 {
        let l2 = eg.sqrt() / ef.sqrt();
        let c = l2.ln();
        let (_, m) = golden::minimize(c - 20.0, c + 20.0, 1e-12, 300, |t| at(t.exp()));
        (l2, at(l2), m)
    } else {
        (f64::NAN, 0.0, 0.0)
    };
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(BilinearReport {
        lhs,
        rhs,
        ratio,
        pass: lhs <= c_target * rhs,
        lambda_sq,
        rhs_at_lambda,
        rhs_searched,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MainReport {
    /// `||Y||_w`.
    pub lhs: f64,
    /// `Q2(w) ||X||_w`.
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
    /// `sup_Z |E <Y_n, Z_n>| / ||Z||_{1/w}` over the tested `Z`.
    pub dual_value: f64,
    /// Best ratio among the random test functions alone.
    pub random_dual_value: f64,
    /// `|dual_value - lhs| / lhs`.
    pub duality_gap: f64,
    /// Ratio `bilinear_form(Y, Yw) / (Q2 ||X||_w ||Yw||_{1/w})` from the
    /// bilinear estimate at the extremal test function.
    pub bilinear_ratio: f64,
}

/// Checks `||Y||_w <= c_target Q2(w) ||X||_w` through duality with test
/// functions `Z`: `cfg.num_paths` random ones and the extremal `Z = Y w`.
pub fn verify_main_theorem(
    x: &DyadicMartingale,
    y: &DyadicMartingale,
    w: &WeightTree,
    c_target: f64,
    cfg: &SimConfig,
) -> Result<MainReport> {
    require_subordinate(x, y)?;
    let u = w.inverse();
    let lhs = weighted_norm(y, w)?;
    let rhs = w.a2_characteristic() * weighted_norm(x, w)?;
    let dual = |z: &DyadicMartingale| -> Result<f64> {
        let nz = weighted_norm(z, &u)?;
        Ok(if nz > 0.0 {
            terminal_pairing(y, z)?.abs() / nz
        } else {
            0.0
        })
    };
    let mut rng = substream(cfg.seed, 0x5EED);
    let mut random_best: f64 = 0.0;
    for _ in 0..cfg.num_paths {
        let z = random_martingale_with(&mut rng, y.depth(), y.dim())?;
        // Mix in Y w so that some test functions are correlated with Y.
        let t: f64 = rng.random();
        let zw = y.times_weight(w)?;
        let leaves: Vec<f64> = z
            .leaves()
            .iter()
            .zip(zw.leaves())
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        let z = DyadicMartingale::from_leaves(y.dim(), leaves)?;
        random_best = random_best.max(dual(&z)?);
    }
    let extremal = y.times_weight(w)?;
    let dual_value = random_best.max(dual(&extremal)?);
    let duality_gap = if lhs > 0.0 { (dual_value - lhs).abs() / lhs } else { dual_value };
    let bil = verify_bilinear_estimate(x, y, &extremal, w, c_target)?;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(MainReport {
        lhs,
        rhs,
        ratio,
        pass: lhs <= c_target * rhs && duality_gap <= DUALITY_TOLERANCE,
        dual_value,
        random_dual_value: random_best,
        duality_gap,
        bilinear_ratio: bil.ratio,
    })
}
