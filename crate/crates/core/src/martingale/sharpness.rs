//! Lower estimates for the norm of sign transforms on `L^2(w)`.
//!
//! For scalar martingales on the dyadic tree the transform `T_sigma` with
//! `sigma = +-1` is diagonal in the Haar basis, hence self-adjoint in
//! unweighted `L^2`. Its norm on `L^2(w)` is the largest singular value of
//! `W^{1/2} T W^{-1/2}`, found by power iteration. The signs are improved
//! greedily: flipping node `I` changes `J = E |T f|^2 w` by
//! `E[1_I w (4 c^2 - 4 c T f)]` where `c` is the contribution of that node's
//! increment, and flips on one level act on disjoint subtrees. Greedy
//! rounds alternate with power iteration from several random starts. The
//! result is a lower bound for the supremum over `sigma`.

use rand::Rng;
use rayon::prelude::*;

use super::estimates::C_TARGET;
use super::{Result, SimConfig, SimError};
use crate::rng::tagged_substream;
use crate::weights::{power_weight_family, WeightTree};

/// Random sign patterns tried besides the alternating one.
pub const RESTARTS: usize = 32;

const MAX_ROUNDS: usize = 40;
const FIRST_ITERATIONS: usize = 300;
const WARM_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessRow {
    pub delta: f64,
    pub depth: usize,
    pub q2: f64,
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessReport {
    pub rows: Vec<SharpnessRow>,
    /// Least-squares slope of `log worst_ratio` against `log Q2`.
    pub slope: f64,
    /// Whether every ratio stays below `C_TARGET Q2`.
    pub consistent: bool,
}

/// Signs of the Haar increments, `levels[k][j]`, and of the mean.
#[derive(Debug, Clone)]
struct Signs {
    root: f64,
    levels: Vec<Vec<f64>>,
}

/// Node means and Haar increments of a scalar function on the leaves.
fn haar(f: &[f64], depth: usize) -> (f64, Vec<Vec<f64>>) {
    let mut means = vec![f.to_vec()];
    for _ in 0..depth {
        let below = means.last().unwrap();
        means.push(below.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect());
    }
    means.reverse();
    let incs = (0..depth)
        .map(|k| {
            means[k + 1]
                .chunks(2)
                .map(|c| 0.5 * (c[0] - c[1]))
                .collect()
        })
        .collect();
    (means[0][0], incs)
}

fn apply(f: &[f64], depth: usize, s: &Signs) -> Vec<f64> {
    let (mean, incs) = haar(f, depth);
    let mut cur = vec![s.root * mean];
    for k in 0..depth {
        let mut next = Vec::with_capacity(2 * cur.len());
        for (j, p) in cur.iter().enumerate() {
            let c = s.levels[k][j] * incs[k][j];
            next.push(p + c);
            next.push(p - c);
        }
        cur = next;
    }
    cur
}

fn normalize(g: &mut [f64]) -> f64 {
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        g.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Largest singular value of `W^{1/2} T W^{-1/2}` by power iteration from
/// `g`, which is updated to the approximate top singular vector.
fn operator_norm(w: &[f64], depth: usize, s: &Signs, g: &mut Vec<f64>, iters: usize) -> f64 {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut rq = 0.0;
    normalize(g);
    for _ in 0..iters {
        let f: Vec<f64> = g.iter().zip(&sw).map(|(a, b)| a / b).collect();
        let tf = apply(&f, depth, s);
        let wtf: Vec<f64> = tf.iter().zip(w).map(|(a, b)| a * b).collect();
        let back = apply(&wtf, depth, s);
        let mut next: Vec<f64> = back.iter().zip(&sw).map(|(a, b)| a / b).collect();
        // <g, A^T A g> with |g| = 1
        rq = next.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
        normalize(&mut next);
        *g = next;
    }
    rq.max(0.0).sqrt()
}

/// One greedy pass over all levels; returns whether any sign changed.
fn greedy_pass(f: &[f64], w: &[f64], depth: usize, s: &mut Signs) -> bool {
    let (mean, incs) = haar(f, depth);
    let mut tf = apply(f, depth, s);
    let mut changed = false;
    let tiny = 1e-13 * tf.iter().zip(w).map(|(a, b)| a * a * b).sum::<f64>();
    // Mean: contribution constant over all leaves.
    let c = s.root * mean;
    let gain: f64 = tf.iter().zip(w).map(|(t, wi)| wi * (4.0 * c * c - 4.0 * c * t)).sum();
    if gain > tiny {
        s.root = -s.root;
        tf.iter_mut().for_each(|t| *t -= 2.0 * c);
        changed = true;
    }
    for k in 0..depth {
        let width = 1usize << (depth - k);
        let half = width / 2;
        for j in 0..1usize << k {
            let c = s.levels[k][j] * incs[k][j];
            let range = j * width..(j + 1) * width;
            let gain: f64 = range
                .clone()
                .map(|l| {
                    let ci = if l - j * width < half { c } else { -c };
                    w[l] * (4.0 * ci * ci - 4.0 * ci * tf[l])
                })
                .sum();
            if gain > tiny {
                s.levels[k][j] = -s.levels[k][j];
                for l in range {
                    let ci = if l - j * width < half { c } else { -c };
                    tf[l] -= 2.0 * ci;
                }
                changed = true;
            }
        }
    }
    changed
}

fn search_from(w: &[f64], depth: usize, mut s: Signs) -> f64 {
    let n = w.len();
    let mut g = vec![1.0; n];
    // A non-constant start avoids the invariant subspaces of special signs.
    for (i, v) in g.iter_mut().enumerate() {
        *v += ((i * 7919) % 97) as f64 / 97.0;
    }
    let mut best = operator_norm(w, depth, &s, &mut g, FIRST_ITERATIONS);
    for _ in 0..MAX_ROUNDS {
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let f: Vec<f64> = g.iter().zip(&sw).map(|(a, b)| a / b).collect();
        if !greedy_pass(&f, w, depth, &mut s) {
            break;
        }
        let r = operator_norm(w, depth, &s, &mut g, WARM_ITERATIONS);
        best = best.max(r);
    }
    best
}

/// Lower estimate of `sup_sigma ||T_sigma||_{L^2(w)}`.
pub fn worst_ratio(w: &WeightTree, seed: u64) -> f64 {
    let depth = w.depth();
    let leaves = w.leaves();
    let mut starts = vec![Signs {
        root: 1.0,
        levels: (0..depth)
            .map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }; 1 << k])
            .collect(),
    }];
    for i in 0..RESTARTS {
        let mut rng = tagged_substream(seed, 0x5A4E, i as u64);
        let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
        let root = sign();
        let levels = (0..depth)
            .map(|k| (0..1usize << k).map(|_| sign()).collect())
            .collect();
        starts.push(Signs { root, levels });
    }
    starts
        .into_par_iter()
        .map(|s| search_from(leaves, depth, s))
        .reduce(|| 0.0, f64::max)
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Runs the search for the power weight of each `delta` at the given depth.
pub fn sharpness_experiment(
    deltas: &[f64],
    depth: usize,
    cfg: &SimConfig,
) -> Result<SharpnessReport> {
    if depth > 14 {
        return Err(SimError::InvalidInput(format!("depth {depth} exceeds 14")));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > -1.0 && **d <= 0.0)) {
        return Err(SimError::InvalidInput(format!("delta {d} outside (-1, 0]")));
    }
    let rows = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let w = power_weight_family(delta, depth)?;
            Ok(SharpnessRow {
                delta,
                depth,
                q2: w.a2_characteristic(),
                worst_ratio: worst_ratio(&w, cfg.seed.wrapping_add(i as u64)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.q2.ln(), r.worst_ratio.ln()))
        .collect();
    let consistent = rows.iter().all(|r| r.worst_ratio <= C_TARGET * r.q2);
    Ok(SharpnessReport {
        slope: slope(&pts),
        rows,
        consistent,
    })
}

/// CSV with columns `delta,depth,Q2,worst_ratio`.
pub fn sharpness_to_csv(rep: &SharpnessReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["delta", "depth", "Q2", "worst_ratio"]);
    for r in &rep.rows {
        let _ = w.write_record([
            r.delta.to_string(),
            r.depth.to_string(),
            r.q2.to_string(),
            r.worst_ratio.to_string(),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}
