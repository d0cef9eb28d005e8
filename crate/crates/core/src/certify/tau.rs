//! Ellipse parameters of the Hessian.
//!
//! At a point where `d^2 B >= (2/Q)|dx||dy|`, one looks for `tau > 0` with
//!
//! ```text
//! Q (d^2 B dV, dV) >= tau |dx|^2 + |dy|^2 / tau   for all dV.
//! ```
//!
//! Minimizing the left side over `(dr, ds)` replaces the Hessian by the Schur
//! complement `S` of its `(r, s)` block, and the condition becomes
//! `kappa(tau) >= 1` for
//!
//! ```text
//! kappa(tau) = lambda_min(D^{-1/2} Q S D^{-1/2}),  D = diag(tau I, I / tau).
//! ```
//!
//! `kappa` is invariant under rescaling the Hessian's units, and its
//! logarithm is concave in `log tau`, so a golden-section search in
//! `log tau` finds its maximizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::checks::{structured_directions, Margin};
use crate::bellman::{eval_b, BellmanConfig, BellmanError, Evaluation, Perturbation, Result, StatePoint};
use crate::golden;

/// Tolerance on the normalized sampled margin of the returned `tau`.
pub const TAU_TOLERANCE: f64 = 1e-6;

/// Result of [`extract_tau`].
#[derive(Debug, Clone, PartialEq)]
pub struct TauResult {
    pub tau: f64,
    /// `kappa(tau)`; at least 1 when `tau` is admissible in every direction.
    pub kappa: f64,
    /// Smallest normalized value of `Q d^2B(dV) - tau|dx|^2 - |dy|^2/tau`
    /// over the tested directions.
    pub sampled_margin: f64,
    /// Direction attaining `sampled_margin`.
    pub worst_direction: Perturbation,
    /// Direction minimizing the quadratic form at `tau` exactly.
    pub extremal_direction: Perturbation,
    pub feasible: bool,
}

/// Schur complement data of the Hessian at one point.
pub(crate) struct Reduced {
    s: DMatrix<f64>,
    /// `-H_WW^{-1} H_WX`, giving the optimal `(dr, ds)` for a given `(dx, dy)`.
    back: DMatrix<f64>,
    d: usize,
}

impl Reduced {
    pub(crate) fn new(e: &Evaluation, d: usize) -> Result<Self> {
        let n = 2 * d;
        let h = &e.hessian;
        let hxx = h.view((0, 0), (n, n)).into_owned();
        let hxw = h.view((0, n), (n, 2)).into_owned();
        let hww = h.view((n, n), (2, 2)).into_owned();
        let inv = hww.clone().try_inverse().filter(|_| {
            hww[(0, 0)] > 0.0 && hww[(0, 0)] * hww[(1, 1)] - hww[(0, 1)] * hww[(1, 0)] > 0.0
        });
        let inv = inv.ok_or_else(|| {
            BellmanError::Domain(format!("weight block of the Hessian is not positive definite: {hww}"))
        })?;
        let back = -(&inv * hxw.transpose());
        let s = &hxx + &hxw * &back;
        let s = (&s + s.transpose()) * 0.5;
        Ok(Self { s, back, d })
    }

    fn scaled(&self, tau: f64, q: f64) -> DMatrix<f64> {
        let d = self.d;
        let mut m = &self.s * q;
        let f = |i: usize| if i < d { tau.sqrt() } else { 1.0 / tau.sqrt() };
        for i in 0..2 * d {
            for j in 0..2 * d {
                m[(i, j)] /= f(i) * f(j);
            }
        }
        m
    }

    pub(crate) fn kappa(&self, tau: f64, q: f64) -> f64 {
        SymmetricEigen::new(self.scaled(tau, q))
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn extremal(&self, tau: f64, q: f64) -> Perturbation {
        let eig = SymmetricEigen::new(self.scaled(tau, q));
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, &l)| if l < b.1 { (i, l) } else { b });
        let d = self.d;
        let mut dxy: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        for i in 0..2 * d {
            dxy[i] /= if i < d { tau.sqrt() } else { 1.0 / tau.sqrt() };
        }
        let w = &self.back * &dxy;
        let mut v: Vec<f64> = dxy.iter().cloned().collect();
        v.push(w[0]);
        v.push(w[1]);
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        Perturbation::from_slice(&v.iter().map(|t| t / n).collect::<Vec<_>>())
    }
}

/// `Q d^2B(dV) - tau |dx|^2 - |dy|^2 / tau`, normalized.
pub fn ellipse_margin(e: &Evaluation, dv: &Perturbation, tau: f64, q: f64) -> Margin {
    let form = q * e.hessian_form(dv);
    let x2 = dv.norm_dx().powi(2);
    let y2 = dv.norm_dy().powi(2);
    let rhs = tau * x2 + y2 / tau;
    Margin::new(form - rhs, form.abs() + rhs)
}

/// Interval searched for `tau`: `[eps/(100 Q), 100 Q/eps]`.
pub fn tau_search_interval(cfg: &BellmanConfig) -> (f64, f64) {
    (cfg.eps / (100.0 * cfg.q), 100.0 * cfg.q / cfg.eps)
}

/// Searches `tau` from an existing evaluation; `extra` directions are tested
/// on top of the structured ones and the exact extremal direction.
pub fn extract_tau_from(
    e: &Evaluation,
    v: &StatePoint,
    cfg: &BellmanConfig,
    extra: &[Perturbation],
) -> Result<TauResult> {
    let red = Reduced::new(e, v.dim())?;
    let (lo, hi) = tau_search_interval(cfg);
    let (t, kappa) = golden::maximize(lo.ln(), hi.ln(), 1e-10, 200, |t| red.kappa(t.exp(), cfg.q));
    let tau = t.exp();
    let extremal = red.extremal(tau, cfg.q);
    let mut worst = (extremal.clone(), ellipse_margin(e, &extremal, tau, cfg.q).normalized());
    for dv in structured_directions(v).iter().chain(extra) {
        let m = ellipse_margin(e, dv, tau, cfg.q).normalized();
        if m < worst.1 {
            worst = (dv.clone(), m);
        }
    }
    Ok(TauResult {
        tau,
        kappa,
        sampled_margin: worst.1,
        worst_direction: worst.0,
        extremal_direction: extremal,
        feasible: kappa >= 1.0 - TAU_TOLERANCE && worst.1 >= -TAU_TOLERANCE,
    })
}

/// Ellipse parameter at `v`.
pub fn extract_tau(v: &StatePoint, cfg: &BellmanConfig, extra: &[Perturbation]) -> Result<TauResult> {
    extract_tau_from(&eval_b(v, cfg)?, v, cfg, extra)
}
