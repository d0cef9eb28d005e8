use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bellman::{
    domain_check, BellmanConfig, BellmanError, Perturbation, Result, StatePoint, CUT_TOLERANCE,
};
use crate::rng::substream;

/// How sample points are distributed over `D_Q^{eps, ell}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointDistribution {
    /// `log(rs)` uniform, `log r` uniform on the admissible slice, directions
    /// of `x, y` uniform on the sphere and their norms log-uniform on
    /// `[ell, 1/eps]`.
    #[default]
    LogUniform,
}

impl PointDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            PointDistribution::LogUniform => "log-uniform",
        }
    }
}

/// What to sample and with which seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    pub q: f64,
    pub eps: f64,
    pub ell: f64,
    pub dim: usize,
    pub distribution: PointDistribution,
    /// Points closer than this to a cut of `H4` are excluded from the
    /// second-order checks.
    pub exclusion_margin: f64,
}

impl SampleSpec {
    pub fn new(cfg: &BellmanConfig, count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            q: cfg.q,
            eps: cfg.eps,
            ell: cfg.ell,
            dim: cfg.dim,
            distribution: PointDistribution::LogUniform,
            exclusion_margin: 10.0 * CUT_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BellmanError::Configuration(m));
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return bad(format!("empty sampling domain: Q = {} < 1", self.q));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.ell > 0.0 && self.ell <= 1.0 / self.eps) {
            return bad(format!("ell = {} leaves no room below 1/eps", self.ell));
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.exclusion_margin >= CUT_TOLERANCE) {
            return bad(format!(
                "exclusion margin must be >= {CUT_TOLERANCE}, got {}",
                self.exclusion_margin
            ));
        }
        Ok(())
    }

    /// Largest `rs` compatible with both `rs <= Q` and the box `[eps, 1/eps]`.
    pub fn rs_max(&self) -> f64 {
        self.q.min(self.eps.powi(-2))
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Uniform unit vector in `R^d`.
pub fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|t| t / n).collect();
        }
    }
}

/// Uniform direction on the unit sphere of the perturbation space.
pub fn random_perturbation<R: Rng>(rng: &mut R, d: usize) -> Perturbation {
    Perturbation::from_slice(&unit_vector(rng, 2 * d + 2))
}

/// `(r, s)` in the admissible slice, with the product nudged so that the
/// strict checks `1 <= rs <= Q` hold despite rounding.
pub(crate) fn sample_rs<R: Rng>(rng: &mut R, spec: &SampleSpec) -> (f64, f64) {
    let rs = log_uniform(rng, 1.0, spec.rs_max());
    let lo = spec.eps.max(rs * spec.eps);
    let hi = (1.0 / spec.eps).min(rs / spec.eps);
    let mut r = log_uniform(rng, lo, hi).clamp(spec.eps, 1.0 / spec.eps);
    let mut s = (rs / r).clamp(spec.eps, 1.0 / spec.eps);
    // For Q = 1 some r admit no float s with r s exactly 1; move r as well.
    let mut steps = 0;
    while !(1.0..=spec.q).contains(&(r * s)) {
        s = if r * s < 1.0 { s.next_up() } else { s.next_down() };
        steps += 1;
        if steps % 8 == 0 {
            r = if r < 1.0 { r.next_up() } else { r.next_down() };
        }
    }
    (r, s)
}

/// One sample point drawn from `rng`.
pub fn sample_point<R: Rng>(rng: &mut R, spec: &SampleSpec) -> StatePoint {
    let (r, s) = sample_rs(rng, spec);
    let hi = 1.0 / spec.eps;
    let mx = log_uniform(rng, spec.ell, hi);
    let my = log_uniform(rng, spec.ell, hi);
    let x = unit_vector(rng, spec.dim).into_iter().map(|t| t * mx).collect();
    let y = unit_vector(rng, spec.dim).into_iter().map(|t| t * my).collect();
    StatePoint::new(x, y, r, s)
}

/// `spec.count` points, point `i` drawn from substream `i` of `spec.seed`.
pub fn sample_domain(spec: &SampleSpec) -> Result<Vec<StatePoint>> {
    spec.validate()?;
    let cfg = BellmanConfig {
        q: spec.q,
        eps: spec.eps,
        ell: spec.ell,
        dim: spec.dim,
        ..BellmanConfig::default()
    };
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(spec.seed, i as u64);
            let v = sample_point(&mut rng, spec);
            let f = domain_check(&v, &cfg)?;
            debug_assert!(f.in_dq_eps_ell, "sampled point outside the domain: {v:?}");
            if !f.in_dq_eps_ell {
                return Err(BellmanError::Domain(format!("sampler produced {v:?}")));
            }
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_points() {
        let spec = SampleSpec::new(&BellmanConfig::default(), 1, 7);
        assert_eq!(sample_domain(&spec).unwrap(), sample_domain(&spec).unwrap());
    }

    #[test]
    fn q_below_one_is_rejected() {
        let mut spec = SampleSpec::new(&BellmanConfig::default(), 1, 7);
        spec.q = 0.5;
        assert!(matches!(sample_domain(&spec), Err(BellmanError::Configuration(_))));
    }

    #[test]
    fn large_q_is_capped_by_the_box() {
        let cfg = BellmanConfig::new(256.0, 0.1, 0.05, 2).unwrap();
        let pts = sample_domain(&SampleSpec::new(&cfg, 2000, 3)).unwrap();
        assert!(pts.iter().all(|v| v.r * v.s <= 100.0 * (1.0 + 1e-12)));
        assert!(pts.iter().any(|v| v.r * v.s > 50.0));
    }
}
