use nalgebra::{DMatrix, DVector};

use super::components::{
    b1_jet, h4_jet, k_jet, n_jet, one_leg_x_jet, one_leg_y_jet, Region,
};
use super::{
    require_dq_eps, BellmanConfig, BellmanError, Perturbation, Result, StatePoint, FD_STEP,
};
use crate::jet::Jet;

/// Which function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    /// The weighted sum `c1 B1 + c2 B2 + c3 B3 + c7 B7`.
    Full,
}

impl Component {
    pub const ALL: [Component; 8] = [
        Component::B1,
        Component::B2,
        Component::B3,
        Component::B4,
        Component::B5,
        Component::B6,
        Component::B7,
        Component::Full,
    ];
}

/// Value, gradient and Hessian at one state.
///
/// Coordinates are ordered `(x, y, r, s)`, so both the gradient and the
/// Hessian have size `2 d + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// Region of the `H4` block at this state.
    pub region: Region,
    /// Set when the Hessian was obtained from finite differences because the
    /// state lies on a cut of `H4`.
    pub degraded: bool,
}

impl Evaluation {
    /// `(d^2 B dV, dV)`.
    pub fn hessian_form(&self, dv: &Perturbation) -> f64 {
        let v = DVector::from_vec(dv.to_vec());
        v.dot(&(&self.hessian * &v))
    }

    /// `dB(V) dV`.
    pub fn directional(&self, dv: &Perturbation) -> f64 {
        self.gradient.iter().zip(dv.to_vec()).map(|(g, d)| g * d).sum()
    }

    /// The `x`-block of the Hessian applied to `dx` twice.
    pub fn xx_form(&self, dx: &[f64]) -> f64 {
        let d = dx.len();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += dx[i] * self.hessian[(i, j)] * dx[j];
            }
        }
        acc
    }

    /// The `y`-block of the Hessian applied to `dy` twice.
    pub fn yy_form(&self, dy: &[f64]) -> f64 {
        let d = dy.len();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += dy[i] * self.hessian[(d + i, d + j)] * dy[j];
            }
        }
        acc
    }
}

/// Seeds for the four scalar variables `(|x|, |y|, r, s)`.
pub(crate) fn seeds(v: &StatePoint) -> [Jet<4>; 4] {
    [
        Jet::variable(0, v.norm_x()),
        Jet::variable(1, v.norm_y()),
        Jet::variable(2, v.r),
        Jet::variable(3, v.s),
    ]
}

/// The `H4` block as a function of the scalar variables and of `K`.
pub(crate) type H4Fn<'a> = dyn Fn(Jet<4>, Jet<4>, Jet<4>, Jet<4>, Jet<4>) -> Result<(Jet<4>, Region)> + 'a;

/// Scalar profile `Phi(|x|, |y|, r, s)` of a component, with `h4` supplying
/// the `H4` block.
pub(crate) fn profile(
    c: Component,
    v: &StatePoint,
    cfg: &BellmanConfig,
    h4: &H4Fn<'_>,
) -> Result<(Jet<4>, Region)> {
    let [p, q, r, s] = seeds(v);
    let k = k_jet(r, s, cfg.q);
    let n = n_jet(r, s, cfg.q);
    let b4 = || h4(p, q, r, s, k);
    let region_only = || h4(p, q, r, s, k).map(|(_, g)| g);
    let out = match c {
        Component::B1 => (b1_jet(p, q, r, s), region_only()?),
        Component::B2 => (one_leg_x_jet(p, q, r, s, n), region_only()?),
        Component::B3 => (one_leg_y_jet(p, q, r, s, n), region_only()?),
        Component::B4 => b4()?,
        Component::B5 => (one_leg_x_jet(p, q, r, s, k), region_only()?),
        Component::B6 => (one_leg_y_jet(p, q, r, s, k), region_only()?),
        Component::B7 => {
            let (j4, g) = b4()?;
            (j4 + one_leg_x_jet(p, q, r, s, k) + one_leg_y_jet(p, q, r, s, k), g)
        }
        Component::Full => {
            let cf = &cfg.coefficients;
            let (j4, g) = b4()?;
            let b7 = j4 + one_leg_x_jet(p, q, r, s, k) + one_leg_y_jet(p, q, r, s, k);
            let sum = b1_jet(p, q, r, s) * cf.c1
                + one_leg_x_jet(p, q, r, s, n) * cf.c2
                + one_leg_y_jet(p, q, r, s, n) * cf.c3
                + b7 * cf.c7;
            (sum, g)
        }
    };
    Ok(out)
}

fn unit(a: &[f64], n: f64) -> Vec<f64> {
    if n > 0.0 {
        a.iter().map(|t| t / n).collect()
    } else {
        vec![0.0; a.len()]
    }
}

/// Lifts the derivatives of a radial profile to the `2d + 2` coordinates.
pub(crate) fn lift(phi: &Jet<4>, v: &StatePoint) -> (DVector<f64>, DMatrix<f64>) {
    let d = v.dim();
    let n = 2 * d + 2;
    let (p, q) = (v.norm_x(), v.norm_y());
    let xh = unit(&v.x, p);
    let yh = unit(&v.y, q);
    let (ir, is) = (2 * d, 2 * d + 1);
    let g = &phi.g;
    let h = &phi.h;

    let mut grad = DVector::zeros(n);
    for i in 0..d {
        grad[i] = g[0] * xh[i];
        grad[d + i] = g[1] * yh[i];
    }
    grad[ir] = g[2];
    grad[is] = g[3];

    // At the origin of a block the profile is even in the norm, so the
    // tangential coefficient Phi_p / p tends to Phi_pp.
    let tang_x = if p > 0.0 { g[0] / p } else { h[0][0] };
    let tang_y = if q > 0.0 { g[1] / q } else { h[1][1] };

    let mut hess = DMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            let delta = if i == j { 1.0 } else { 0.0 };
            hess[(i, j)] = h[0][0] * xh[i] * xh[j] + tang_x * (delta - xh[i] * xh[j]);
            hess[(d + i, d + j)] = h[1][1] * yh[i] * yh[j] + tang_y * (delta - yh[i] * yh[j]);
            hess[(i, d + j)] = h[0][1] * xh[i] * yh[j];
            hess[(d + j, i)] = hess[(i, d + j)];
        }
        for (col, a) in [(ir, 2), (is, 3)] {
            hess[(i, col)] = h[0][a] * xh[i];
            hess[(col, i)] = hess[(i, col)];
            hess[(d + i, col)] = h[1][a] * yh[i];
            hess[(col, d + i)] = hess[(d + i, col)];
        }
    }
    hess[(ir, ir)] = h[2][2];
    hess[(is, is)] = h[3][3];
    hess[(ir, is)] = h[2][3];
    hess[(is, ir)] = h[3][2];
    (grad, hess)
}

/// Evaluates a component given its `H4` block, replacing the Hessian by
/// central differences of the gradient on cuts.
pub(crate) fn evaluate_with(
    c: Component,
    v: &StatePoint,
    cfg: &BellmanConfig,
    h4: &H4Fn<'_>,
    fd_on_cut: bool,
) -> Result<Evaluation> {
    if v.x.len() != v.y.len() {
        return Err(BellmanError::InvalidInput("x and y differ in dimension".into()));
    }
    let (phi, region) = profile(c, v, cfg, h4)?;
    if !phi.is_finite() {
        return Err(BellmanError::Domain("non-finite derivatives".into()));
    }
    let (gradient, mut hessian) = lift(&phi, v);
    let uses_h4 = matches!(c, Component::B4 | Component::B7 | Component::Full);
    let degraded = fd_on_cut && uses_h4 && region == Region::Cut;
    if degraded {
        hessian = fd_hessian(c, v, cfg, h4)?;
    }
    Ok(Evaluation {
        value: phi.v,
        gradient,
        hessian,
        region,
        degraded,
    })
}

fn fd_hessian(
    c: Component,
    v: &StatePoint,
    cfg: &BellmanConfig,
    h4: &H4Fn<'_>,
) -> Result<DMatrix<f64>> {
    let base = v.to_vec();
    let n = base.len();
    let d = v.dim();
    let vec_scale = v.norm_x().max(v.norm_y()).max(1.0);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let scale = if i < 2 * d { vec_scale } else { base[i] };
        let h = FD_STEP * scale;
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += h;
        minus[i] -= h;
        let vp = StatePoint::from_slice(&plus);
        let vm = StatePoint::from_slice(&minus);
        let gp = lift(&profile(c, &vp, cfg, h4)?.0, &vp).0;
        let gm = lift(&profile(c, &vm, cfg, h4)?.0, &vm).0;
        for j in 0..n {
            hess[(j, i)] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

fn exact_h4(p: Jet<4>, q: Jet<4>, r: Jet<4>, s: Jet<4>, k: Jet<4>) -> Result<(Jet<4>, Region)> {
    h4_jet(p, q, r, s, k)
}

/// Evaluates `B` on `D_Q^eps`.
pub fn eval_b(v: &StatePoint, cfg: &BellmanConfig) -> Result<Evaluation> {
    eval_component(Component::Full, v, cfg)
}

/// Evaluates one component on `D_Q^eps`.
pub fn eval_component(c: Component, v: &StatePoint, cfg: &BellmanConfig) -> Result<Evaluation> {
    require_dq_eps(v, cfg)?;
    evaluate_with(c, v, cfg, &exact_h4, true)
}

/// Evaluates `B` without any domain check. The closed forms stay meaningful
/// slightly outside `D_Q`, which finite-difference stencils rely on.
pub fn eval_unchecked(v: &StatePoint, cfg: &BellmanConfig) -> Result<Evaluation> {
    if !(v.r > 0.0 && v.s > 0.0) || !v.is_finite() {
        return Err(BellmanError::InvalidInput("r, s must be positive and finite".into()));
    }
    evaluate_with(Component::Full, v, cfg, &exact_h4, true)
}
