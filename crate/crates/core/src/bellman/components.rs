use super::{
    norm, BellmanConfig, BellmanError, Result, StatePoint, CUT_TOLERANCE, DOMAIN_SLACK,
};
use crate::jet::Jet;

/// Part of the domain of `H4` determined by the signs of
/// `A = |y| r - |x| K` and `C = |x| s - |y| K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// `A > 0` and `C > 0`: interior critical point.
    R1,
    /// `A > 0` and `C <= 0`: `H4 = |y|^2 / s`.
    R2,
    /// `C > 0` and `A <= 0`: `H4 = |x|^2 / r`.
    R3,
    /// Within [`CUT_TOLERANCE`] of one of the cuts `A = 0` or `C = 0`.
    Cut,
}

impl Region {
    pub fn name(&self) -> &'static str {
        match self {
            Region::R1 => "R1",
            Region::R2 => "R2",
            Region::R3 => "R3",
            Region::Cut => "CUT",
        }
    }
}

/// Signed cut quantities `A = |y| r - |x| K` and `C = |x| s - |y| K`
/// normalized by `max(|x|, |y|, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutDistances {
    pub a: f64,
    pub c: f64,
}

impl CutDistances {
    pub fn new(nx: f64, ny: f64, r: f64, s: f64, k: f64) -> Self {
        let scale = nx.max(ny).max(1.0);
        Self {
            a: (ny * r - nx * k) / scale,
            c: (nx * s - ny * k) / scale,
        }
    }

    /// Distance to the nearest cut in the normalized units.
    pub fn min_abs(&self) -> f64 {
        self.a.abs().min(self.c.abs())
    }
}

/// Region of `(|x|, |y|, r, s, K)`; `nx`, `ny` are the norms of `x`, `y`.
pub fn classify_region(nx: f64, ny: f64, r: f64, s: f64, k: f64) -> Region {
    let d = CutDistances::new(nx, ny, r, s, k);
    if d.a.abs() < CUT_TOLERANCE || d.c.abs() < CUT_TOLERANCE {
        return Region::Cut;
    }
    match (d.a > 0.0, d.c > 0.0) {
        (true, true) => Region::R1,
        (true, false) => Region::R2,
        (false, true) => Region::R3,
        // Only reachable for x = y = 0 or when K^2 >= rs.
        (false, false) => Region::Cut,
    }
}

fn check_rs(r: f64, s: f64, q: f64) -> Result<f64> {
    if !(r.is_finite() && s.is_finite() && q.is_finite()) {
        return Err(BellmanError::InvalidInput("non-finite argument".into()));
    }
    let rs = r * s;
    if !(r > 0.0 && s > 0.0) || rs < 1.0 - DOMAIN_SLACK || rs > q * (1.0 + DOMAIN_SLACK) {
        return Err(BellmanError::Domain(format!("rs = {rs} outside [1, {q}]")));
    }
    Ok(rs)
}

/// `K(r, s) = sqrt(rs/Q) (1 - sqrt(rs) / (8 sqrt Q))`.
pub fn eval_k(r: f64, s: f64, q: f64) -> Result<f64> {
    check_rs(r, s, q)?;
    Ok(k_jet::<1>(Jet::constant(r), Jet::constant(s), q).v)
}

/// `N(r, s) = sqrt(rs/Q) (1 - (rs)^2 / (128 Q^2))`.
pub fn eval_n(r: f64, s: f64, q: f64) -> Result<f64> {
    check_rs(r, s, q)?;
    Ok(n_jet::<1>(Jet::constant(r), Jet::constant(s), q).v)
}

/// `M(r, s) = r - 1 / (s (N(r, s) + 1))`.
pub fn eval_m(r: f64, s: f64, q: f64) -> Result<f64> {
    let n = eval_n(r, s, q)?;
    Ok(r - 1.0 / (s * (n + 1.0)))
}

pub(crate) fn k_jet<const N: usize>(r: Jet<N>, s: Jet<N>, q: f64) -> Jet<N> {
    let root = (r * s).sqrt();
    root / q.sqrt() * (1.0 - root / (8.0 * q.sqrt()))
}

pub(crate) fn n_jet<const N: usize>(r: Jet<N>, s: Jet<N>, q: f64) -> Jet<N> {
    let rs = r * s;
    rs.sqrt() / q.sqrt() * (1.0 - rs.square() / (128.0 * q * q))
}

/// `|x|^2 / r + |y|^2 / s` in the norms `p = |x|`, `q = |y|`.
pub(crate) fn b1_jet<const N: usize>(p: Jet<N>, q: Jet<N>, r: Jet<N>, s: Jet<N>) -> Jet<N> {
    p.square() / r + q.square() / s
}

/// `|x|^2 / (2 r - 1/(s (g + 1))) + |y|^2 / s` with `g` one of `N`, `K`.
pub(crate) fn one_leg_x_jet<const N: usize>(
    p: Jet<N>,
    q: Jet<N>,
    r: Jet<N>,
    s: Jet<N>,
    g: Jet<N>,
) -> Jet<N> {
    p.square() / (r * 2.0 - (s * (g + 1.0)).recip()) + q.square() / s
}

/// Mirror image of [`one_leg_x_jet`] with the roles of `(x, r)` and `(y, s)`
/// exchanged.
pub(crate) fn one_leg_y_jet<const N: usize>(
    p: Jet<N>,
    q: Jet<N>,
    r: Jet<N>,
    s: Jet<N>,
    g: Jet<N>,
) -> Jet<N> {
    p.square() / r + q.square() / (s * 2.0 - (r * (g + 1.0)).recip())
}

/// `H4(x, y, r, s, K) = sup_{a > 0} |x|^2/(r + a K) + |y|^2/(s + K/a)` in
/// closed form, with `p = |x|`, `q = |y|` and `k` treated as an independent
/// variable.
///
/// The branch is chosen from the signs of the cut quantities; on a cut either
/// neighbouring branch gives the same value and gradient.
pub fn h4_jet<const N: usize>(
    p: Jet<N>,
    q: Jet<N>,
    r: Jet<N>,
    s: Jet<N>,
    k: Jet<N>,
) -> Result<(Jet<N>, Region)> {
    let det = r * s - k.square();
    if !(det.v > 0.0) || !(r.v > 0.0) || !(s.v > 0.0) {
        return Err(BellmanError::Domain(format!(
            "H4 requires K^2 < rs, got K = {}, rs = {}",
            k.v,
            r.v * s.v
        )));
    }
    let region = classify_region(p.v, q.v, r.v, s.v, k.v);
    let a = q * r - p * k;
    let c = p * s - q * k;
    let value = if a.v > 0.0 && c.v > 0.0 {
        (p.square() * s - p * q * k * 2.0 + q.square() * r) / det
    } else if a.v > 0.0 {
        q.square() / s
    } else {
        // C > 0, or x = y = 0 where every branch vanishes
        p.square() / r
    };
    Ok((value, region))
}

/// Scalar `H4` at vectors `x`, `y`.
pub fn eval_h4(x: &[f64], y: &[f64], r: f64, s: f64, k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(BellmanError::Domain(format!("K = {k} outside [0, 1)")));
    }
    let (v, _) = h4_jet::<1>(
        Jet::constant(norm(x)),
        Jet::constant(norm(y)),
        Jet::constant(r),
        Jet::constant(s),
        Jet::constant(k),
    )?;
    Ok(v.v)
}

/// Per-component values in the four norm variables, used by the scalar
/// entry points below.
pub(crate) struct Scalars<const N: usize> {
    pub p: Jet<N>,
    pub q: Jet<N>,
    pub r: Jet<N>,
    pub s: Jet<N>,
}

impl<const N: usize> Scalars<N> {
    pub fn k(&self, qmax: f64) -> Jet<N> {
        k_jet(self.r, self.s, qmax)
    }
    pub fn n(&self, qmax: f64) -> Jet<N> {
        n_jet(self.r, self.s, qmax)
    }
}

fn scalars(v: &StatePoint) -> Scalars<1> {
    Scalars {
        p: Jet::constant(v.norm_x()),
        q: Jet::constant(v.norm_y()),
        r: Jet::constant(v.r),
        s: Jet::constant(v.s),
    }
}

fn guard(v: &StatePoint, cfg: &BellmanConfig) -> Result<Scalars<1>> {
    if !v.is_finite() {
        return Err(BellmanError::InvalidInput("non-finite state".into()));
    }
    check_rs(v.r, v.s, cfg.q)?;
    Ok(scalars(v))
}

/// `B1 = |x|^2 / r + |y|^2 / s`.
pub fn eval_b1(v: &StatePoint) -> Result<f64> {
    if !(v.r > 0.0 && v.s > 0.0) || !v.is_finite() {
        return Err(BellmanError::InvalidInput("r, s must be positive".into()));
    }
    let s = scalars(v);
    Ok(b1_jet(s.p, s.q, s.r, s.s).v)
}

pub fn eval_b2(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let s = guard(v, cfg)?;
    Ok(one_leg_x_jet(s.p, s.q, s.r, s.s, s.n(cfg.q)).v)
}

pub fn eval_b3(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let s = guard(v, cfg)?;
    Ok(one_leg_y_jet(s.p, s.q, s.r, s.s, s.n(cfg.q)).v)
}

/// `B4 = H4(x, y, r, s, K(r, s))`.
pub fn eval_b4(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let s = guard(v, cfg)?;
    Ok(h4_jet(s.p, s.q, s.r, s.s, s.k(cfg.q))?.0.v)
}

pub fn eval_b5(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let s = guard(v, cfg)?;
    Ok(one_leg_x_jet(s.p, s.q, s.r, s.s, s.k(cfg.q)).v)
}

pub fn eval_b6(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    let s = guard(v, cfg)?;
    Ok(one_leg_y_jet(s.p, s.q, s.r, s.s, s.k(cfg.q)).v)
}

/// `B7 = B4 + B5 + B6`.
pub fn eval_b7(v: &StatePoint, cfg: &BellmanConfig) -> Result<f64> {
    Ok(eval_b4(v, cfg)? + eval_b5(v, cfg)? + eval_b6(v, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(q: f64) -> BellmanConfig {
        BellmanConfig::new(q, 0.1, 0.05, 1).unwrap()
    }

    fn pt(x: f64, y: f64, r: f64, s: f64) -> StatePoint {
        StatePoint::new(vec![x], vec![y], r, s)
    }

    #[test]
    fn b1_values() {
        assert_eq!(eval_b1(&pt(1.0, 1.0, 1.0, 1.0)).unwrap(), 2.0);
        let zero = StatePoint::new(vec![0.0, 0.0], vec![0.0, 0.0], 2.0, 3.0);
        assert_eq!(eval_b1(&zero).unwrap(), 0.0);
        let v = StatePoint::new(vec![3.0, 4.0], vec![0.0, 0.0], 5.0, 1.0);
        assert_eq!(eval_b1(&v).unwrap(), 5.0);
    }

    #[test]
    fn k_and_n_at_boundaries() {
        let q = 9.0;
        // rs = Q
        assert!((eval_k(3.0, 3.0, q).unwrap() - 7.0 / 8.0).abs() < 1e-15);
        assert!((eval_n(3.0, 3.0, q).unwrap() - 127.0 / 128.0).abs() < 1e-15);
        // rs = 1, Q = 4
        assert!((eval_k(1.0, 1.0, 4.0).unwrap() - 15.0 / 32.0).abs() < 1e-15);
        assert!(eval_k(0.5, 1.0, 4.0).is_err());
        assert!(eval_n(4.0, 2.0, 4.0).is_err());
    }

    #[test]
    fn m_at_unit_point() {
        // Q = rs = 1: N = 127/128, M = 1 - 128/255
        let m = eval_m(1.0, 1.0, 1.0).unwrap();
        assert!((m - (1.0 - 128.0 / 255.0)).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn b2_and_b5_reduce_at_vanishing_x() {
        let c = cfg(4.0);
        let v = pt(0.0, 2.0, 1.0, 2.0);
        assert!((eval_b2(&v, &c).unwrap() - 2.0).abs() < 1e-15);
        assert!((eval_b5(&v, &c).unwrap() - 2.0).abs() < 1e-15);
        let w = pt(2.0, 0.0, 2.0, 1.0);
        assert!((eval_b3(&w, &c).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn region_examples() {
        assert_eq!(classify_region(1.0, 1.0, 2.0, 2.0, 0.5), Region::R1);
        assert_eq!(classify_region(0.0, 1.0, 2.0, 2.0, 0.5), Region::R2);
        assert_eq!(classify_region(1.0, 0.0, 2.0, 2.0, 0.5), Region::R3);
        assert_eq!(classify_region(0.0, 0.0, 2.0, 2.0, 0.5), Region::Cut);
        // |x| s = |y| K exactly
        assert_eq!(classify_region(0.25, 1.0, 2.0, 2.0, 0.5), Region::Cut);
    }

    #[test]
    fn h4_branches() {
        // K = 0 reduces to B1
        assert!((eval_h4(&[1.0], &[1.0], 1.0, 1.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        // A <= 0 < C gives |x|^2 / r
        let (x, y, r, s, k) = (2.0, 0.1, 1.0, 1.5, 0.6);
        assert!(y * r - x * k <= 0.0 && x * s - y * k > 0.0);
        assert!((eval_h4(&[x], &[y], r, s, k).unwrap() - x * x / r).abs() < 1e-15);
        assert!(eval_h4(&[1.0], &[1.0], 0.5, 0.5, 0.9).is_err());
    }

    #[test]
    fn b7_is_the_sum() {
        let c = cfg(16.0);
        let v = pt(0.7, 1.3, 2.0, 3.0);
        let sum = eval_b4(&v, &c).unwrap() + eval_b5(&v, &c).unwrap() + eval_b6(&v, &c).unwrap();
        assert_eq!(eval_b7(&v, &c).unwrap(), sum);
        let z = pt(0.0, 0.0, 2.0, 3.0);
        for f in [eval_b4, eval_b5, eval_b6, eval_b7] {
            assert_eq!(f(&z, &c).unwrap(), 0.0);
        }
    }
}
