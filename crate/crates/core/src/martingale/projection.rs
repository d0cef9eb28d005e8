//! Restriction to the first `m` coordinates.
//!
//! With `P` the coordinate projection and `P' = I - P`,
//! `<P a, P b> = <a, b> - <P' a, P' b>`, so the bilinear form of the
//! projections is at most the full one plus `E sum |P' dY||P' dZ|`. Norms
//! are nested sums of squares and grow with `m` up to the full value.

use super::tree::{bilinear_form, norm, same_depth_weight, same_shape, weighted_norm, DyadicMartingale};
use super::{Result, SimError};
use crate::weights::WeightTree;

const RELATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub m: usize,
    pub norm_x: f64,
    pub norm_y: f64,
    /// `||P X||_w^2 + ||P Y||_{1/w}^2`, the terms of the telescope bound.
    pub bound_terms: f64,
    pub bilinear: f64,
    /// `|<P' Y_0, P' X_0>| + E sum |P' dY||P' dX|`.
    pub cross: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    /// One row per `m = 1..=dim`.
    pub rows: Vec<ProjectionRow>,
    pub d_sub: usize,
    pub dominated: bool,
    pub monotone: bool,
    pub exact_at_full: bool,
    pub cross_bound_holds: bool,
}

impl ProjectionReport {
    pub fn pass(&self) -> bool {
        self.dominated && self.monotone && self.exact_at_full && self.cross_bound_holds
    }

    pub fn at(&self, m: usize) -> &ProjectionRow {
        &self.rows[m - 1]
    }
}

/// Complement part `P' v` of every node value.
fn complement(x: &DyadicMartingale, m: usize) -> Result<DyadicMartingale> {
    let d = x.dim();
    let leaves = x
        .leaves()
        .chunks(d)
        .flat_map(|v| v.iter().enumerate().map(move |(i, c)| if i < m { 0.0 } else { *c }))
        .collect();
    DyadicMartingale::from_leaves(d, leaves)
}

fn cross_term(y: &DyadicMartingale, x: &DyadicMartingale) -> f64 {
    let n = y.depth();
    let mut total = norm(y.root()) * norm(x.root());
    for k in 0..n {
        let p = 0.5f64.powi(k as i32);
        for j in 0..1usize << k {
            total += p * norm(&y.increment(k, j)) * norm(&x.increment(k, j));
        }
    }
    total
}

/// Compares every projection `m = 1..=dim` with the full quantities, for the
/// pair `(X, Y)` and the weight `w`; `d_sub` selects the row of interest.
pub fn projection_consistency(
    x: &DyadicMartingale,
    y: &DyadicMartingale,
    w: &WeightTree,
    d_sub: usize,
) -> Result<ProjectionReport> {
    same_shape(x, y)?;
    same_depth_weight(x, w)?;
    let dim = x.dim();
    if d_sub == 0 || d_sub > dim {
        return Err(SimError::InvalidInput(format!(
            "d_sub = {d_sub} outside 1..={dim}"
        )));
    }
    let u = w.inverse();
    let rows = (1..=dim)
        .map(|m| {
            let (px, py) = (x.project(m)?, y.project(m)?);
            let (nx, ny) = (weighted_norm(&px, w)?, weighted_norm(&py, w)?);
            let nyu = weighted_norm(&py, &u)?;
            Ok(ProjectionRow {
                m,
                norm_x: nx,
                norm_y: ny,
                bound_terms: nx * nx + nyu * nyu,
                bilinear: bilinear_form(&py, &px)?,
                cross: cross_term(&complement(y, m)?, &complement(x, m)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let full = rows.last().unwrap().clone();
    let le = |a: f64, b: f64| a <= b + RELATIVE_SLACK * b.abs().max(1.0);
    let dominated = rows.iter().all(|r| {
        le(r.norm_x, full.norm_x) && le(r.norm_y, full.norm_y) && le(r.bound_terms, full.bound_terms)
    });
    let monotone = rows.windows(2).all(|p| {
        le(p[0].norm_x, p[1].norm_x)
            && le(p[0].norm_y, p[1].norm_y)
            && le(p[0].bound_terms, p[1].bound_terms)
    });
    let full_x = weighted_norm(x, w)?;
    let full_y = weighted_norm(y, w)?;
    let exact_at_full = full.norm_x == full_x && full.norm_y == full_y && full.cross == 0.0;
    let full_bil = bilinear_form(y, x)?;
    let cross_bound_holds = rows.iter().all(|r| le(r.bilinear, full_bil + r.cross));
    Ok(ProjectionReport {
        rows,
        d_sub,
        dominated,
        monotone,
        exact_at_full,
        cross_bound_holds,
    })
}
