//! The explicit four-variable Bellman function and its building blocks.
//!
//! A state is a quadruplet `V = (x, y, r, s)` with `x, y` vectors of a
//! finite-dimensional Hilbert space and `r, s > 0` the values of a weight pair.
//! The function
//!
//! ```text
//! B = c1 B1 + c2 B2 + c3 B3 + c7 (B4 + B5 + B6)
//! ```
//!
//! only depends on `|x|`, `|y|`, `r` and `s`. Every component is written once
//! over [`Jet`](crate::jet::Jet)s in those four scalar variables and then
//! lifted to the full `2d + 2` dimensional state space by the chain rule, so
//! values, gradients and Hessians all come from the same closed forms.

mod coefficients;
mod components;
mod eval;
mod mollify;

pub use coefficients::{
    determine_coefficients, reduced_form, search_coefficients, validate_coefficients,
    CoefficientCertificate, DEFAULT_GRID,
};
pub use components::{
    classify_region, eval_b1, eval_b2, eval_b3, eval_b4, eval_b5, eval_b6, eval_b7, eval_h4,
    eval_k, eval_m, eval_n, h4_jet, CutDistances, Region,
};
pub use eval::{eval_b, eval_component, eval_unchecked, Component, Evaluation};
pub use mollify::{GridSpec, MollifiedH4, MollifierKernel, RegularizedBellman};

use thiserror::Error;

/// Relative tolerance used to classify a point as lying on one of the cuts of
/// the `H4` supremum.
pub const CUT_TOLERANCE: f64 = 1e-8;

/// Relative step of the central finite differences used where analytic second
/// derivatives are unavailable.
pub const FD_STEP: f64 = 1e-5;

/// Relative slack accepted by the evaluation routines on the constraints
/// `1 <= rs <= Q` and `eps <= r, s <= 1/eps`. Node averages such as
/// `w * (1/w)` round to either side of 1, and the closed forms remain valid
/// there. [`domain_check`] itself is strict.
pub const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BellmanError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Configuration(String),
    #[error(
        "coefficients infeasible: margin {margin:e} in normalized direction \
         (|dx|, |dy|, |dr|, |ds|) = {direction:?}"
    )]
    Infeasible { direction: [f64; 4], margin: f64 },
}

pub type Result<T> = std::result::Result<T, BellmanError>;

/// Weights of the four blocks of `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c7: f64,
}

impl Coefficients {
    /// Coefficients certified by [`determine_coefficients`]; see
    /// `search_coefficients` for how they were obtained.
    pub fn certified() -> Self {
        let root3 = 3f64.sqrt();
        Self {
            c1: 0.5,
            c2: 5.0 / root3,
            c3: 5.0 / root3,
            c7: 1024.0,
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            c1: self.c1 * k,
            c2: self.c2 * k,
            c3: self.c3 * k,
            c7: self.c7 * k,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.c1, self.c2, self.c3, self.c7]
    }

    /// Constant in `B <= C_size (|x|^2/r + |y|^2/s)`: every block except `B7`
    /// is bounded by `B1`, and `B7` is a sum of three such blocks.
    pub fn size_constant(&self) -> f64 {
        self.c1 + self.c2 + self.c3 + 3.0 * self.c7
    }
}

impl Default for Coefficients {
    fn default() -> Self {
        Self::certified()
    }
}

/// Parameters of the Bellman function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellmanConfig {
    /// Upper bound for `rs`, i.e. for the weight characteristic.
    pub q: f64,
    /// Truncation level: `eps <= r, s <= 1/eps`.
    pub eps: f64,
    /// Lower bound for `|x|` and `|y|` on the regularized domain.
    pub ell: f64,
    /// Hilbert dimension of `x` and `y`.
    pub dim: usize,
    pub coefficients: Coefficients,
}

impl BellmanConfig {
    pub fn new(q: f64, eps: f64, ell: f64, dim: usize) -> Result<Self> {
        let cfg = Self {
            q,
            eps,
            ell,
            dim,
            coefficients: Coefficients::certified(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_coefficients(mut self, coefficients: Coefficients) -> Result<Self> {
        self.coefficients = coefficients;
        self.validate()?;
        Ok(self)
    }

    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        self.dim = dim;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BellmanError::Configuration(m));
        if !(self.q.is_finite() && self.q >= 1.0) {
            return bad(format!("Q must be >= 1, got {}", self.q));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.ell > 0.0 && self.ell <= self.eps / 2.0) {
            return bad(format!(
                "ell must lie in (0, eps/2] = (0, {}], got {}",
                self.eps / 2.0,
                self.ell
            ));
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        let c = self.coefficients.as_array();
        if c.iter().any(|&ci| !(ci.is_finite() && ci > 0.0)) {
            return bad(format!("coefficients must be positive, got {c:?}"));
        }
        validate_coefficients(&self.coefficients, coefficients::DEFAULT_GRID)?;
        Ok(())
    }

    /// Fixed constant `C_xx` in `(d^2_x B dx, dx) <= C_xx eps^-1 |dx|^2`.
    ///
    /// `B1, B2, B3, B5, B6` contribute at most `2/r` each, and the `H4` block
    /// at most `2 + 2 kappa_Q` where `kappa_Q` bounds `rs / (rs - K^2)`.
    pub fn xx_constant(&self) -> f64 {
        let c = &self.coefficients;
        2.0 * (c.c1 + c.c2 + c.c3) + 2.0 * c.c7 * (2.0 + kappa_q(self.q))
    }

    /// Interval `[eps/(10 Q), 10 Q/eps]` that extracted ellipse parameters must
    /// fall into.
    pub fn tau_bounds(&self) -> (f64, f64) {
        (self.eps / (10.0 * self.q), 10.0 * self.q / self.eps)
    }
}

impl Default for BellmanConfig {
    fn default() -> Self {
        Self {
            q: 16.0,
            eps: 0.1,
            ell: 0.05,
            dim: 2,
            coefficients: Coefficients::certified(),
        }
    }
}

/// Upper bound of `rs / (rs - K^2)` over `1 <= rs <= Q`.
///
/// Uses `K <= (1 - 1/(8 sqrt Q)) sqrt(rs/Q)`, which stays finite at `Q = 1`.
pub fn kappa_q(q: f64) -> f64 {
    let t = 1.0 - 1.0 / (8.0 * q.sqrt());
    1.0 / (1.0 - t * t / q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub r: f64,
    pub s: f64,
}

impl StatePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, r: f64, s: f64) -> Self {
        Self { x, y, r, s }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn norm_x(&self) -> f64 {
        norm(&self.x)
    }

    pub fn norm_y(&self) -> f64 {
        norm(&self.y)
    }

    /// `|x|^2/r + |y|^2/s`, the natural size of the state.
    pub fn size(&self) -> f64 {
        dot(&self.x, &self.x) / self.r + dot(&self.y, &self.y) / self.s
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
            && self.r.is_finite()
            && self.s.is_finite()
    }

    /// Coordinates `(x, y, r, s)` flattened into one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim() + 2);
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.push(self.r);
        v.push(self.s);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let d = (v.len() - 2) / 2;
        Self {
            x: v[..d].to_vec(),
            y: v[d..2 * d].to_vec(),
            r: v[2 * d],
            s: v[2 * d + 1],
        }
    }

    pub fn offset(&self, dv: &Perturbation, t: f64) -> StatePoint {
        StatePoint {
            x: self.x.iter().zip(&dv.dx).map(|(a, b)| a + t * b).collect(),
            y: self.y.iter().zip(&dv.dy).map(|(a, b)| a + t * b).collect(),
            r: self.r + t * dv.dr,
            s: self.s + t * dv.ds,
        }
    }

    /// `self - base` as a perturbation.
    pub fn diff(&self, base: &StatePoint) -> Perturbation {
        Perturbation {
            dx: self.x.iter().zip(&base.x).map(|(a, b)| a - b).collect(),
            dy: self.y.iter().zip(&base.y).map(|(a, b)| a - b).collect(),
            dr: self.r - base.r,
            ds: self.s - base.s,
        }
    }
}

/// A direction `dV = (dx, dy, dr, ds)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dr: f64,
    pub ds: f64,
}

impl Perturbation {
    pub fn zero(dim: usize) -> Self {
        Self {
            dx: vec![0.0; dim],
            dy: vec![0.0; dim],
            dr: 0.0,
            ds: 0.0,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dx.len() + 2);
        v.extend_from_slice(&self.dx);
        v.extend_from_slice(&self.dy);
        v.push(self.dr);
        v.push(self.ds);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let d = (v.len() - 2) / 2;
        Self {
            dx: v[..d].to_vec(),
            dy: v[d..2 * d].to_vec(),
            dr: v[2 * d],
            ds: v[2 * d + 1],
        }
    }

    pub fn norm_dx(&self) -> f64 {
        norm(&self.dx)
    }

    pub fn norm_dy(&self) -> f64 {
        norm(&self.dy)
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.dx, &self.dx) + dot(&self.dy, &self.dy) + self.dr * self.dr + self.ds * self.ds)
            .sqrt()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            dx: self.dx.iter().map(|v| v * t).collect(),
            dy: self.dy.iter().map(|v| v * t).collect(),
            dr: self.dr * t,
            ds: self.ds * t,
        }
    }
}

/// Membership of a state in the three nested domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainFlags {
    /// `1 <= rs <= Q`.
    pub in_dq: bool,
    /// Additionally `eps <= r, s <= 1/eps`.
    pub in_dq_eps: bool,
    /// Additionally `|x|, |y| >= ell`.
    pub in_dq_eps_ell: bool,
}

/// Strict membership test; no tolerance is applied.
pub fn domain_check(v: &StatePoint, cfg: &BellmanConfig) -> Result<DomainFlags> {
    if !v.is_finite() {
        return Err(BellmanError::InvalidInput("non-finite state".into()));
    }
    if !(v.r > 0.0 && v.s > 0.0) {
        return Err(BellmanError::InvalidInput(format!(
            "r and s must be positive, got r = {}, s = {}",
            v.r, v.s
        )));
    }
    let rs = v.r * v.s;
    let in_dq = (1.0..=cfg.q).contains(&rs);
    let box_ok = |t: f64| t >= cfg.eps && t <= 1.0 / cfg.eps;
    let in_dq_eps = in_dq && box_ok(v.r) && box_ok(v.s);
    let in_dq_eps_ell = in_dq_eps && v.norm_x() >= cfg.ell && v.norm_y() >= cfg.ell;
    Ok(DomainFlags {
        in_dq,
        in_dq_eps,
        in_dq_eps_ell,
    })
}

/// Like [`domain_check`] for `D_Q^eps`, but accepting [`DOMAIN_SLACK`]
/// relative violations.
pub(crate) fn require_dq_eps(v: &StatePoint, cfg: &BellmanConfig) -> Result<()> {
    if !v.is_finite() {
        return Err(BellmanError::InvalidInput("non-finite state".into()));
    }
    if v.x.len() != cfg.dim || v.y.len() != cfg.dim {
        return Err(BellmanError::InvalidInput(format!(
            "expected vectors of dimension {}, got {} and {}",
            cfg.dim,
            v.x.len(),
            v.y.len()
        )));
    }
    let lo = 1.0 - DOMAIN_SLACK;
    let hi = 1.0 + DOMAIN_SLACK;
    let rs = v.r * v.s;
    if !(v.r > 0.0 && v.s > 0.0 && rs >= lo && rs <= cfg.q * hi) {
        return Err(BellmanError::Domain(format!(
            "rs = {rs} outside [1, {}] (r = {}, s = {})",
            cfg.q, v.r, v.s
        )));
    }
    for (name, t) in [("r", v.r), ("s", v.s)] {
        if t < cfg.eps * lo || t > hi / cfg.eps {
            return Err(BellmanError::Domain(format!(
                "{name} = {t} outside [{}, {}]",
                cfg.eps,
                1.0 / cfg.eps
            )));
        }
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BellmanConfig {
        BellmanConfig::new(4.0, 0.1, 0.05, 1).unwrap()
    }

    #[test]
    fn domain_flags_on_boundary() {
        let v = StatePoint::new(vec![1.0], vec![1.0], 1.0, 1.0);
        let f = domain_check(&v, &cfg()).unwrap();
        assert_eq!(
            f,
            DomainFlags {
                in_dq: true,
                in_dq_eps: true,
                in_dq_eps_ell: true
            }
        );
    }

    #[test]
    fn product_below_one_is_outside() {
        let v = StatePoint::new(vec![1.0], vec![1.0], 0.5, 1.0);
        assert!(!domain_check(&v, &cfg()).unwrap().in_dq);
    }

    #[test]
    fn small_x_leaves_regularized_domain_only() {
        let v = StatePoint::new(vec![0.01], vec![1.0], 1.0, 2.0);
        let f = domain_check(&v, &cfg()).unwrap();
        assert!(f.in_dq_eps);
        assert!(!f.in_dq_eps_ell);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let v = StatePoint::new(vec![f64::NAN], vec![1.0], 1.0, 1.0);
        assert!(matches!(
            domain_check(&v, &cfg()),
            Err(BellmanError::InvalidInput(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(BellmanConfig::new(0.5, 0.1, 0.05, 2).is_err());
        assert!(BellmanConfig::new(4.0, 1.0, 0.05, 2).is_err());
        assert!(BellmanConfig::new(4.0, 0.1, 0.06, 2).is_err());
        assert!(BellmanConfig::new(4.0, 0.1, 0.05, 0).is_err());
        let bad = Coefficients {
            c7: 0.0,
            ..Coefficients::certified()
        };
        assert!(BellmanConfig::default().with_coefficients(bad).is_err());
    }

    #[test]
    fn kappa_bounds_the_k_denominator() {
        for &q in &[1.0, 2.0, 16.0, 256.0] {
            for i in 0..=100 {
                let rs = 1.0 + (q - 1.0) * i as f64 / 100.0;
                let k = eval_k(rs, 1.0, q).unwrap();
                assert!(rs / (rs - k * k) <= kappa_q(q) * (1.0 + 1e-12));
            }
        }
    }
}
