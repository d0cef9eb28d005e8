//! Smoothing of `H4` by convolution with a compactly supported bump.
//!
//! `H4` is only `C^1` across its cuts. Convolving it, as a function of the
//! five real variables `(x, y, r, s, K)` with `x, y` standing for signed
//! norms, with a bump of radius `ell` gives a `C^infinity` convex function.
//! The convolution is discretized on the lattice of spacing `ell/4`, which
//! resolves the bump with about 5000 nodes.

use rayon::prelude::*;

use super::components::h4_jet;
use super::eval::{evaluate_with, Component, Evaluation};
use super::{require_dq_eps, BellmanConfig, BellmanError, Result, StatePoint};
use crate::jet::Jet;

/// Lattice nodes per unit of `ell` along each axis.
const NODES_PER_RADIUS: i32 = 4;

fn bump(rho2: f64) -> f64 {
    if rho2 < 1.0 {
        (-1.0 / (1.0 - rho2)).exp()
    } else {
        0.0
    }
}

/// Discretized `phi_ell`.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    ell: f64,
    offsets: Vec<[f64; 5]>,
    weights: Vec<f64>,
}

impl MollifierKernel {
    pub fn new(ell: f64) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(BellmanError::Configuration(format!(
                "mollifier radius must be positive, got {ell}"
            )));
        }
        let n = NODES_PER_RADIUS;
        let h = ell / n as f64;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for a in -n..=n {
            for b in -n..=n {
                for c in -n..=n {
                    for d in -n..=n {
                        for e in -n..=n {
                            let k = [a, b, c, d, e];
                            let k2: i32 = k.iter().map(|t| t * t).sum();
                            if k2 >= n * n {
                                continue;
                            }
                            let w = bump(k2 as f64 / (n * n) as f64);
                            offsets.push(k.map(|t| t as f64 * h));
                            weights.push(w);
                        }
                    }
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            ell,
            offsets,
            weights,
        })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Lattice spacing of the discretization.
    pub fn spacing(&self) -> f64 {
        self.ell / NODES_PER_RADIUS as f64
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the discrete weights.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `int_{R^5} exp(-1/(1 - |u|^2)) du` by Simpson's rule in the radius.
    pub fn continuous_normalizer() -> f64 {
        let m = 20_000;
        let h = 1.0 / m as f64;
        let f = |rho: f64| bump(rho * rho) * rho.powi(4);
        let mut acc = f(0.0) + f(1.0);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let radial = acc * h / 3.0;
        8.0 * std::f64::consts::PI.powi(2) / 3.0 * radial
    }

    /// Riemann sum of the unnormalized scaled bump on the lattice divided by
    /// its exact integral. Measures how well the lattice resolves the bump.
    pub fn lattice_mass(&self) -> f64 {
        let n = NODES_PER_RADIUS as f64;
        let raw: f64 = self
            .offsets
            .iter()
            .map(|o| bump(o.iter().map(|t| t * t).sum::<f64>() / (self.ell * self.ell)))
            .sum();
        raw / n.powi(5) / Self::continuous_normalizer()
    }

    /// `(H4 * phi)(z)` together with its gradient and Hessian, `z` being
    /// `(x, y, r, s, K)`.
    pub fn convolve_h4(&self, z: [f64; 5]) -> Result<Jet<5>> {
        let mut acc = Jet::<5>::constant(0.0);
        for (o, &w) in self.offsets.iter().zip(&self.weights) {
            let v: [Jet<5>; 5] = std::array::from_fn(|i| Jet::variable(i, z[i] - o[i]));
            let (h, _) = h4_jet(v[0].abs(), v[1].abs(), v[2], v[3], v[4]).map_err(|e| {
                BellmanError::Domain(format!(
                    "mollifier support around {z:?} leaves the domain of H4: {e}"
                ))
            })?;
            acc = acc + h * w;
        }
        Ok(acc)
    }
}

/// Regular grid in the five variables `(x, y, r, s, K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: [f64; 5],
    pub counts: [usize; 5],
    pub spacing: f64,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: [usize; 5]) -> [f64; 5] {
        std::array::from_fn(|i| self.lo[i] + idx[i] as f64 * self.spacing)
    }

    fn flat(&self, idx: [usize; 5]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    fn unflat(&self, mut f: usize) -> [usize; 5] {
        let mut idx = [0; 5];
        for i in (0..5).rev() {
            idx[i] = f % self.counts[i];
            f /= self.counts[i];
        }
        idx
    }
}

/// `H4 * phi_ell` sampled on a grid.
#[derive(Debug, Clone)]
pub struct MollifiedH4 {
    pub grid: GridSpec,
    values: Vec<f64>,
}

impl MollifiedH4 {
    /// Samples the mollified function on `grid`, whose spacing may not
    /// exceed `ell/4`.
    pub fn build(kernel: &MollifierKernel, grid: GridSpec) -> Result<Self> {
        if !(grid.spacing > 0.0) || grid.spacing > kernel.spacing() * (1.0 + 1e-12) {
            return Err(BellmanError::Configuration(format!(
                "grid spacing {} must lie in (0, ell/4 = {}]",
                grid.spacing,
                kernel.spacing()
            )));
        }
        let values = (0..grid.len())
            .into_par_iter()
            .map(|f| kernel.convolve_h4(grid.point(grid.unflat(f))).map(|j| j.v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, values })
    }

    pub fn value(&self, idx: [usize; 5]) -> f64 {
        self.values[self.grid.flat(idx)]
    }

    /// Second difference `f(z + h e) - 2 f(z) + f(z - h e)` along the lattice
    /// direction `e` with integer components. `None` if the stencil leaves
    /// the grid.
    pub fn second_difference(&self, idx: [usize; 5], e: [i64; 5]) -> Option<f64> {
        let shift = |sign: i64| -> Option<[usize; 5]> {
            let mut out = [0; 5];
            for i in 0..5 {
                let t = idx[i] as i64 + sign * e[i];
                if t < 0 || t >= self.grid.counts[i] as i64 {
                    return None;
                }
                out[i] = t as usize;
            }
            Some(out)
        };
        let (p, m) = (shift(1)?, shift(-1)?);
        Some(self.value(p) - 2.0 * self.value(idx) + self.value(m))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `B` with its `H4` block replaced by the mollified one.
#[derive(Debug, Clone)]
pub struct RegularizedBellman {
    pub cfg: BellmanConfig,
    kernel: MollifierKernel,
}

impl RegularizedBellman {
    /// Uses the radius `cfg.ell`.
    pub fn new(cfg: BellmanConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            kernel: MollifierKernel::new(cfg.ell)?,
        })
    }

    pub fn kernel(&self) -> &MollifierKernel {
        &self.kernel
    }

    /// Evaluates on `D_Q^eps`.
    pub fn eval(&self, v: &StatePoint) -> Result<Evaluation> {
        require_dq_eps(v, &self.cfg)?;
        self.eval_component(Component::Full, v)
    }

    /// One component, without the domain check.
    pub fn eval_component(&self, c: Component, v: &StatePoint) -> Result<Evaluation> {
        let smooth = |p: Jet<4>, q: Jet<4>, r: Jet<4>, s: Jet<4>, k: Jet<4>| {
            let region = super::classify_region(p.v, q.v, r.v, s.v, k.v);
            let m = self.kernel.convolve_h4([p.v, q.v, r.v, s.v, k.v])?;
            let j = Jet::compose(m.v, &m.g, &m.h, &[p, q, r, s, k]);
            Ok::<_, BellmanError>((j, region))
        };
        let mut e = evaluate_with(c, v, &self.cfg, &smooth, false)?;
        e.degraded = false;
        Ok(e)
    }
}
