//! Continuity of the gradient of `B4` across the cuts of `H4`.
//!
//! For each sample a base point is placed on a cut and moved to relative
//! distance `delta` on either side. The difference of the two one-sided
//! gradients, relative to their size, should shrink linearly with `delta`.

use rand::Rng;
use rayon::prelude::*;

use super::sampling::{sample_rs, unit_vector, SampleSpec};
use crate::bellman::{
    eval_component, eval_k, BellmanConfig, Component, Result, StatePoint,
};
use crate::rng::tagged_substream;

/// Distances at which the one-sided gradients are compared.
pub const CUT_DELTAS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Smallest per-sample log-log slope accepted as linear decay.
pub const MIN_DECAY_SLOPE: f64 = 0.9;


/// Which cut a sample straddles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cut {
    /// `|x| s = |y| K`, between R1 and R2.
    XsYk,
    /// `|y| r = |x| K`, between R1 and R3.
    YrXk,
}

impl Cut {
    pub fn name(&self) -> &'static str {
        match self {
            Cut::XsYk => "xs=yK",
            Cut::YrXk => "yr=xK",
        }
    }
}

/// Aggregate over all samples near one cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutReport {
    pub cut: Cut,
    pub samples: usize,
    /// Largest relative mismatch at each entry of [`CUT_DELTAS`].
    pub max_mismatch: [f64; 3],
    /// Smallest least-squares slope of `log mismatch` against `log delta`.
    pub min_slope: f64,
    pub pass: bool,
}

/// Report of [`check_c1_across_cuts`].
#[derive(Debug, Clone, PartialEq)]
pub struct C1Report {
    pub cuts: Vec<CutReport>,
    pub pass: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// Points on both sides of the cut through a base point with the given
/// `(r, s, |other|)`: the moving norm is its value on the cut times
/// `1 +- delta`. `H4` is homogeneous of degree two in `(x, y)`, so this
/// distance does not depend on the overall scale.
fn straddle(
    cut: Cut,
    other: f64,
    r: f64,
    s: f64,
    k: f64,
    dirs: (&[f64], &[f64]),
    delta: f64,
) -> (StatePoint, StatePoint) {
    let mk = |nx: f64, ny: f64| {
        StatePoint::new(
            dirs.0.iter().map(|t| t * nx).collect(),
            dirs.1.iter().map(|t| t * ny).collect(),
            r,
            s,
        )
    };
    match cut {
        // |x| s = |y| K
        Cut::XsYk => {
            let nx0 = other * k / s;
            (mk(nx0 * (1.0 + delta), other), mk(nx0 * (1.0 - delta), other))
        }
        // |y| r = |x| K
        Cut::YrXk => {
            let ny0 = other * k / r;
            (mk(other, ny0 * (1.0 + delta)), mk(other, ny0 * (1.0 - delta)))
        }
    }
}

fn mismatch(a: &StatePoint, b: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let ga = eval_component(Component::B4, a, cfg)?.gradient;
    let gb = eval_component(Component::B4, b, cfg)?.gradient;
    let scale = ga.norm().max(gb.norm()).max(f64::MIN_POSITIVE);
    Ok((ga - gb).norm() / scale)
}

fn one_cut(cut: Cut, cfg: &BellmanConfig, n: usize, seed: u64) -> Result<CutReport> {
    let spec = SampleSpec::new(cfg, n, seed);
    let tag = match cut {
        Cut::XsYk => 1,
        Cut::YrXk => 2,
    };
    let per_sample: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = tagged_substream(seed, tag, i as u64);
            let lo = cfg.ell.ln();
            let hi = (1.0 / cfg.eps).ln();
            let (r, s) = sample_rs(&mut rng, &spec);
            let k = eval_k(r, s, cfg.q)?;
            let other = (lo + rng.random::<f64>() * (hi - lo)).exp();
            let dx = unit_vector(&mut rng, cfg.dim);
            let dy = unit_vector(&mut rng, cfg.dim);
            let mut out = [0.0; 3];
            for (j, &delta) in CUT_DELTAS.iter().enumerate() {
                let (a, b) = straddle(cut, other, r, s, k, (&dx, &dy), delta);
                out[j] = mismatch(&a, &b, cfg)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let logd: Vec<f64> = CUT_DELTAS.iter().map(|d| d.ln()).collect();
    let mut max_mismatch = [0.0f64; 3];
    let mut min_slope = f64::INFINITY;
    for m in &per_sample {
        for j in 0..3 {
            max_mismatch[j] = max_mismatch[j].max(m[j]);
        }
        // Exactly matching gradients decay faster than any rate.
        if m.iter().all(|t| *t > 0.0) {
            let logm: Vec<f64> = m.iter().map(|t| t.ln()).collect();
            min_slope = min_slope.min(slope(&logd, &logm));
        }
    }
    let pass = n == 0 || min_slope >= MIN_DECAY_SLOPE;
    Ok(CutReport {
        cut,
        samples: n,
        max_mismatch,
        min_slope,
        pass,
    })
}

/// Samples `n` straddling pairs near each cut at every distance in
/// [`CUT_DELTAS`].
pub fn check_c1_across_cuts(cfg: &BellmanConfig, n: usize, seed: u64) -> Result<C1Report> {
    let cuts = vec![one_cut(Cut::XsYk, cfg, n, seed)?, one_cut(Cut::YrXk, cfg, n, seed)?];
    let pass = cuts.iter().all(|c| c.pass);
    Ok(C1Report { cuts, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::Region;

    #[test]
    fn straddling_points_lie_in_the_expected_regions() {
        let cfg = BellmanConfig::new(16.0, 0.1, 0.05, 1).unwrap();
        let (r, s) = (2.0, 3.0);
        let k = eval_k(r, s, cfg.q).unwrap();
        let (a, b) = straddle(Cut::XsYk, 1.5, r, s, k, (&[1.0], &[1.0]), 1e-3);
        let ra = eval_component(Component::B4, &a, &cfg).unwrap().region;
        let rb = eval_component(Component::B4, &b, &cfg).unwrap().region;
        assert_eq!((ra, rb), (Region::R1, Region::R2));
        let (a, b) = straddle(Cut::YrXk, 1.5, r, s, k, (&[1.0], &[1.0]), 1e-3);
        let ra = eval_component(Component::B4, &a, &cfg).unwrap().region;
        let rb = eval_component(Component::B4, &b, &cfg).unwrap().region;
        assert_eq!((ra, rb), (Region::R1, Region::R3));
    }

    #[test]
    fn x_gradient_vanishes_on_the_r2_side() {
        let cfg = BellmanConfig::new(16.0, 0.1, 0.05, 1).unwrap();
        let (r, s) = (2.0, 3.0);
        let k = eval_k(r, s, cfg.q).unwrap();
        let (_, b) = straddle(Cut::XsYk, 1.5, r, s, k, (&[1.0], &[1.0]), 1e-3);
        let g = eval_component(Component::B4, &b, &cfg).unwrap().gradient;
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn small_run_passes() {
        let cfg = BellmanConfig::new(16.0, 0.1, 0.05, 2).unwrap();
        let rep = check_c1_across_cuts(&cfg, 50, 1).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
