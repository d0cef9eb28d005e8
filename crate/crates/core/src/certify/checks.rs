use crate::bellman::{
    domain_check, eval_b, BellmanConfig, BellmanError, CutDistances, Evaluation, Perturbation,
    Result, StatePoint, DOMAIN_SLACK,
};

/// A margin together with the magnitude it should be compared against.
///
/// A check passes when `value >= -tolerance * scale`, i.e. when
/// [`Margin::normalized`] is at least `-tolerance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub scale: f64,
}

impl Margin {
    pub fn new(value: f64, scale: f64) -> Self {
        Self { value, scale }
    }

    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.value / self.scale
        } else {
            self.value
        }
    }
}

/// Distance of `v` to the nearer cut, in the units of the region
/// classification.
pub fn cut_distance(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let k = crate::bellman::eval_k(v.r, v.s, cfg.q)?;
    Ok(CutDistances::new(v.norm_x(), v.norm_y(), v.r, v.s, k).min_abs())
}

/// `(d^2 B dV, dV) - (2/Q)|dx||dy|` from an existing evaluation.
pub fn hessian_margin(e: &Evaluation, dv: &Perturbation, q: f64) -> Margin {
    let form = e.hessian_form(dv);
    let cross = 2.0 / q * dv.norm_dx() * dv.norm_dy();
    Margin::new(form - cross, form.abs() + cross)
}

/// Hessian lower bound at `v` in direction `dv`. `Ok(None)` marks a sample
/// skipped because `v` is within `exclusion_margin` of a cut.
pub fn check_hessian_lower(
    v: &StatePoint,
    dv: &Perturbation,
    cfg: &BellmanConfig,
    exclusion_margin: f64,
) -> Result<Option<Margin>> {
    if cut_distance(v, cfg)? < exclusion_margin {
        return Ok(None);
    }
    let e = eval_b(v, cfg)?;
    Ok(Some(hessian_margin(&e, dv, cfg.q)))
}

fn require_regularized(v: &StatePoint, cfg: &BellmanConfig) -> Result<()> {
    let f = domain_check(v, cfg)?;
    let lo = cfg.ell * (1.0 - DOMAIN_SLACK);
    if f.in_dq_eps_ell || (v.norm_x() >= lo && v.norm_y() >= lo && slack_ok(v, cfg)) {
        Ok(())
    } else {
        Err(BellmanError::Domain(format!(
            "point outside D_Q^(eps, ell): r = {}, s = {}, |x| = {}, |y| = {}",
            v.r,
            v.s,
            v.norm_x(),
            v.norm_y()
        )))
    }
}

fn slack_ok(v: &StatePoint, cfg: &BellmanConfig) -> bool {
    let (lo, hi) = (1.0 - DOMAIN_SLACK, 1.0 + DOMAIN_SLACK);
    let rs = v.r * v.s;
    let boxed = |t: f64| t >= cfg.eps * lo && t <= hi / cfg.eps;
    rs >= lo && rs <= cfg.q * hi && boxed(v.r) && boxed(v.s)
}

/// One-leg margin from evaluations at both ends:
/// `B(V) - B(V0) - dB(V0)(V - V0) - (constant/Q)|x - x0||y - y0|`.
pub fn one_leg_margin(
    e0: &Evaluation,
    v0: &StatePoint,
    value: f64,
    v: &StatePoint,
    q: f64,
    constant: f64,
) -> Margin {
    let dv = v.diff(v0);
    let lin = e0.directional(&dv);
    let cross = constant / q * dv.norm_dx() * dv.norm_dy();
    let m = value - e0.value - lin - cross;
    Margin::new(m, value.abs() + e0.value.abs() + lin.abs() + cross)
}

/// One-leg convexity of `B` between two points of `D_Q^{eps, ell}`.
pub fn check_one_leg(
    v0: &StatePoint,
    v: &StatePoint,
    cfg: &BellmanConfig,
    constant: f64,
) -> Result<Margin> {
    require_regularized(v0, cfg)?;
    require_regularized(v, cfg)?;
    let e0 = eval_b(v0, cfg)?;
    let b = eval_b(v, cfg)?.value;
    Ok(one_leg_margin(&e0, v0, b, v, cfg.q, constant))
}

/// `C_xx / eps |dx|^2 - (d^2_x B dx, dx)` from an evaluation.
pub fn xx_margin(e: &Evaluation, dx: &[f64], cfg: &BellmanConfig) -> Margin {
    let bound = cfg.xx_constant() / cfg.eps * dx.iter().map(|t| t * t).sum::<f64>();
    let form = e.xx_form(dx);
    Margin::new(bound - form, bound + form.abs())
}

/// `C_xx / eps |dy|^2 - (d^2_y B dy, dy)` from an evaluation.
pub fn yy_margin(e: &Evaluation, dy: &[f64], cfg: &BellmanConfig) -> Margin {
    let bound = cfg.xx_constant() / cfg.eps * dy.iter().map(|t| t * t).sum::<f64>();
    let form = e.yy_form(dy);
    Margin::new(bound - form, bound + form.abs())
}

/// Upper bound for the `x`-block of the Hessian.
pub fn check_partial_xx_bound(v: &StatePoint, dx: &[f64], cfg: &BellmanConfig) -> Result<Margin> {
    Ok(xx_margin(&eval_b(v, cfg)?, dx, cfg))
}

/// Upper bound for the `y`-block of the Hessian.
pub fn check_partial_yy_bound(v: &StatePoint, dy: &[f64], cfg: &BellmanConfig) -> Result<Margin> {
    Ok(yy_margin(&eval_b(v, cfg)?, dy, cfg))
}

/// `0 <= B(V) <= C_size (|x|^2/r + |y|^2/s)`: the smaller of the two gaps.
pub fn size_margin(value: f64, v: &StatePoint, cfg: &BellmanConfig) -> Margin {
    let bound = cfg.coefficients.size_constant() * v.size();
    Margin::new(value.min(bound - value), bound)
}

/// Size bound at `v`.
pub fn check_size(v: &StatePoint, cfg: &BellmanConfig) -> Result<Margin> {
    Ok(size_margin(eval_b(v, cfg)?.value, v, cfg))
}

/// Unit test directions that hit the extremal cases: pure `dx`, `dy`, `dr`,
/// `ds` and four mixed pairs, with `dx, dy` along `x, y`.
pub fn structured_directions(v: &StatePoint) -> Vec<Perturbation> {
    let d = v.dim();
    let unit = |a: &[f64]| {
        let n = a.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n > 0.0 {
            a.iter().map(|t| t / n).collect()
        } else {
            let mut e = vec![0.0; a.len()];
            e[0] = 1.0;
            e
        }
    };
    let xh: Vec<f64> = unit(&v.x);
    let yh: Vec<f64> = unit(&v.y);
    let z = vec![0.0; d];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let scale = |a: &[f64], t: f64| a.iter().map(|u| u * t).collect::<Vec<_>>();
    let mk = |dx: Vec<f64>, dy: Vec<f64>, dr: f64, ds: f64| Perturbation { dx, dy, dr, ds };
    vec![
        mk(xh.clone(), z.clone(), 0.0, 0.0),
        mk(z.clone(), yh.clone(), 0.0, 0.0),
        mk(z.clone(), z.clone(), 1.0, 0.0),
        mk(z.clone(), z.clone(), 0.0, 1.0),
        mk(scale(&xh, h), scale(&yh, h), 0.0, 0.0),
        mk(scale(&xh, h), scale(&yh, -h), 0.0, 0.0),
        mk(z.clone(), z.clone(), h, h),
        mk(z.clone(), z, h, -h),
    ]
}
