//! Discrete form of the dissipation estimate.
//!
//! Along the filtration the process `V_k = (X^a_k, Z^a_k, u_k, w_k)` moves by
//! jumps only, so one-leg convexity of `B` is the single mechanism at work:
//! at every internal node and each of its two children,
//!
//! ```text
//! B(V_child) - B(V_node) - dB(V_node)(V_child - V_node) >= (2/Q)|dX||dZ|.
//! ```
//!
//! The linear terms of the two children cancel, so summing conditional
//! expectations gives
//! `E sum (2/Q)|dX||dZ| <= E B(V_n) - B(V_0) <= C_size (E F + E G + 2 a^2 / eps)`.
//! Here `X^a = (a, X)` carries the anchor `a >= ell` as an extra
//! coordinate, which keeps `|X^a|, |Z^a| >= ell`.

use rayon::prelude::*;

use super::tree::{dot, same_depth_weight, same_shape, DyadicMartingale};
use super::{Result, SimError};
use crate::bellman::{eval_b, BellmanConfig, StatePoint, DOMAIN_SLACK};
use crate::certify::{one_leg_margin, MARGIN_TOLERANCE};
use crate::weights::WeightTree;

/// Tolerance on the normalized conditional mean of the linear term.
pub const LINEAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeReport {
    pub anchor: f64,
    /// `E sum_k (2/Q)|dX_k||dZ_k|`.
    pub sum_increments: f64,
    /// `E B(V_n) - B(V_0)`.
    pub bellman_gain: f64,
    /// `C_size (E F + E G + 2 a^2 / eps)`.
    pub bellman_bound: f64,
    /// Smallest normalized one-leg margin on each level.
    pub per_step_margins: Vec<f64>,
    pub min_margin: f64,
    /// Node `(level, index)` attaining `min_margin`.
    pub worst_node: (usize, usize),
    /// Largest normalized `|dB(V)(dV_+) + dB(V)(dV_-)|`.
    pub max_linear: f64,
    pub pass: bool,
}

fn anchored(a: f64, v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(a);
    out.extend_from_slice(v);
    out
}

fn state(x: &DyadicMartingale, z: &DyadicMartingale, w: &WeightTree, a: f64, k: usize, j: usize) -> StatePoint {
    StatePoint::new(
        anchored(a, x.node(k, j)),
        anchored(a, z.node(k, j)),
        w.avg_u(k, j),
        w.avg_w(k, j),
    )
}

struct NodeOutcome {
    margin: f64,
    linear: f64,
    cross: f64,
}

/// Runs the telescoping argument with anchor `a`.
pub fn bellman_telescope(
    x: &DyadicMartingale,
    z: &DyadicMartingale,
    w: &WeightTree,
    cfg: &BellmanConfig,
    a: f64,
) -> Result<TelescopeReport> {
    same_shape(x, z)?;
    same_depth_weight(x, w)?;
    if x.dim() != cfg.dim {
        return Err(SimError::Shape(format!(
            "martingale dimension {} vs configuration {}",
            x.dim(),
            cfg.dim
        )));
    }
    if !(a >= cfg.ell) {
        return Err(SimError::InvalidInput(format!(
            "anchor a = {a} below ell = {}: anchored states would leave D_Q^(eps, ell)",
            cfg.ell
        )));
    }
    let (lo, hi) = w.range();
    if lo < cfg.eps * (1.0 - DOMAIN_SLACK) || hi > (1.0 + DOMAIN_SLACK) / cfg.eps {
        return Err(SimError::InvalidInput(format!(
            "weight values [{lo}, {hi}] not within [eps, 1/eps]; truncate it first"
        )));
    }
    let q2 = w.a2_characteristic();
    if q2 > cfg.q * (1.0 + DOMAIN_SLACK) {
        return Err(SimError::InvalidInput(format!(
            "weight characteristic {q2} exceeds Q = {}",
            cfg.q
        )));
    }
    let acfg = cfg.with_dim(cfg.dim + 1)?;
    let n = x.depth();

    let diagnose = |k: usize, j: usize, e: crate::bellman::BellmanError| {
        SimError::Domain(format!(
            "node ({k}, {j}) outside the domain with anchor a = {a} (ell = {}): {e}",
            cfg.ell
        ))
    };

    let levels: Vec<Vec<(usize, NodeOutcome)>> = (0..n)
        .map(|k| {
            (0..1usize << k)
                .into_par_iter()
                .map(|j| {
                    let v0 = state(x, z, w, a, k, j);
                    let e0 = eval_b(&v0, &acfg).map_err(|e| diagnose(k, j, e))?;
                    let mut margin = f64::INFINITY;
                    let mut lin = [0.0; 2];
                    let mut cross = 0.0;
                    for (c, child) in [2 * j, 2 * j + 1].into_iter().enumerate() {
                        let v = state(x, z, w, a, k + 1, child);
                        let b = eval_b(&v, &acfg).map_err(|e| diagnose(k + 1, child, e))?;
                        let m = one_leg_margin(&e0, &v0, b.value, &v, cfg.q, 2.0);
                        margin = margin.min(m.normalized());
                        let dv = v.diff(&v0);
                        lin[c] = e0.directional(&dv);
                        cross += 2.0 / cfg.q * dv.norm_dx() * dv.norm_dy();
                    }
                    let scale = lin[0].abs() + lin[1].abs();
                    let linear = if scale > 0.0 { (lin[0] + lin[1]).abs() / scale } else { 0.0 };
                    Ok((j, NodeOutcome { margin, linear, cross }))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut per_step = Vec::with_capacity(n);
    let mut min_margin = f64::INFINITY;
    let mut worst = (0, 0);
    let mut max_linear: f64 = 0.0;
    let mut sum = 0.0;
    for (k, level) in levels.iter().enumerate() {
        let p = 0.5f64.powi(k as i32 + 1);
        let mut lm = f64::INFINITY;
        for (j, o) in level {
            if o.margin < min_margin {
                min_margin = o.margin;
                worst = (k, *j);
            }
            lm = lm.min(o.margin);
            max_linear = max_linear.max(o.linear);
            sum += p * o.cross;
        }
        per_step.push(lm);
    }

    let root = eval_b(&state(x, z, w, a, 0, 0), &acfg).map_err(|e| diagnose(0, 0, e))?;
    let leaves: Vec<f64> = (0..1usize << n)
        .into_par_iter()
        .map(|j| eval_b(&state(x, z, w, a, n, j), &acfg).map(|e| e.value).map_err(|e| diagnose(n, j, e)))
        .collect::<Result<_>>()?;
    let mean_leaf = leaves.iter().sum::<f64>() / leaves.len() as f64;
    let gain = mean_leaf - root.value;

    let count = (1usize << n) as f64;
    let d = x.dim();
    let ef: f64 = x
        .leaves()
        .chunks(d)
        .zip(w.leaves())
        .map(|(v, wi)| dot(v, v) * wi)
        .sum::<f64>()
        / count;
    let eg: f64 = z
        .leaves()
        .chunks(d)
        .zip(w.leaves())
        .map(|(v, wi)| dot(v, v) / wi)
        .sum::<f64>()
        / count;
    let bound = cfg.coefficients.size_constant() * (ef + eg + 2.0 * a * a / cfg.eps);

    let tol = MARGIN_TOLERANCE * (gain.abs() + sum);
    let pass = (n == 0 || min_margin >= -MARGIN_TOLERANCE)
        && max_linear <= LINEAR_TOLERANCE
        && sum <= gain + tol
        && gain <= bound;
    Ok(TelescopeReport {
        anchor: a,
        sum_increments: sum,
        bellman_gain: gain,
        bellman_bound: bound,
        per_step_margins: per_step,
        min_margin,
        worst_node: worst,
        max_linear,
        pass,
    })
}

/// Telescope at the anchors `ell`, `2 ell` and `10 ell`.
pub fn anchor_sensitivity(
    x: &DyadicMartingale,
    z: &DyadicMartingale,
    w: &WeightTree,
    cfg: &BellmanConfig,
) -> Result<Vec<TelescopeReport>> {
    [1.0, 2.0, 10.0]
        .iter()
        .map(|m| bellman_telescope(x, z, w, cfg, m * cfg.ell))
        .collect()
}
