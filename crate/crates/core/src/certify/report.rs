use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use super::checks::{
    cut_distance, hessian_margin, one_leg_margin, size_margin, structured_directions, xx_margin,
    yy_margin,
};
use super::cuts::{check_c1_across_cuts, C1Report, MIN_DECAY_SLOPE};
use super::sampling::{random_perturbation, sample_domain, sample_point, unit_vector, SampleSpec};
use super::tau::extract_tau_from;
use crate::bellman::{
    domain_check, eval_b, BellmanConfig, BellmanError, Evaluation, RegularizedBellman, Result,
    StatePoint,
};
use crate::rng::tagged_substream;

/// Tolerance on normalized margins of the second-order and one-leg checks.
pub const MARGIN_TOLERANCE: f64 = 1e-8;

/// Random directions per point, on top of the structured ones.
pub const RANDOM_DIRECTIONS: usize = 64;

/// Points used for the one-leg check of the mollified function.
pub const REGULARIZED_SAMPLES: usize = 64;

/// Points near each cut for the continuity check.
pub const CUT_SAMPLES: usize = 1000;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub samples: usize,
    pub skipped: usize,
    pub min_margin: f64,
    pub tolerance: f64,
    pub worst_point: Option<StatePoint>,
    pub pass: bool,
}

impl CheckRecord {
    fn empty(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            samples: 0,
            skipped: 0,
            min_margin: f64::INFINITY,
            tolerance,
            worst_point: None,
            pass: true,
        }
    }

    fn record(&mut self, m: f64, v: &StatePoint) {
        self.samples += 1;
        if m < self.min_margin {
            self.min_margin = m;
            self.worst_point = Some(v.clone());
        }
    }

    fn finish(&mut self) {
        self.pass = self.samples == 0 || self.min_margin >= -self.tolerance;
    }

    pub fn status(&self) -> &'static str {
        match (self.samples, self.pass) {
            (0, _) => "no samples",
            (_, true) => "pass",
            (_, false) => "FAIL",
        }
    }
}

/// Summary of the extracted ellipse parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TauStats {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub min_kappa: f64,
    pub infeasible: usize,
    pub within_bounds: bool,
}

/// Full result of [`run_certification`].
#[derive(Debug, Clone)]
pub struct CertReport {
    pub cfg: BellmanConfig,
    pub spec: SampleSpec,
    pub checks: Vec<CheckRecord>,
    pub tau: TauStats,
    pub c1: C1Report,
    /// Smallest observed `Q (B(V) - B(V0) - dB(V0)(V - V0)) / (|dx||dy|)`.
    pub one_leg_best_constant: f64,
    /// Same for the mollified function.
    pub regularized_best_constant: f64,
    /// Wall-clock time; not part of the serialized report.
    pub runtime: Duration,
}

impl CertReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct PointResult {
    size: Option<f64>,
    hessian: Option<f64>,
    xx: Option<f64>,
    yy: Option<f64>,
    one_leg: Vec<f64>,
    one_leg_constant: f64,
    tau: Option<(f64, f64, bool)>,
    regularized: Option<Vec<f64>>,
    regularized_constant: f64,
    regularized_skipped: bool,
}

fn observed_constant(e0: &Evaluation, v0: &StatePoint, value: f64, v: &StatePoint, q: f64) -> f64 {
    let dv = v.diff(v0);
    let cross = dv.norm_dx() * dv.norm_dy();
    if cross > 0.0 {
        q * (value - e0.value - e0.directional(&dv)) / cross
    } else {
        f64::INFINITY
    }
}

/// Partners of `v0` for the one-leg check: an independent domain point, a
/// jump in `(x, y)` only, a jump in `(r, s)` only and two local steps.
fn partners<R: rand::Rng>(rng: &mut R, v0: &StatePoint, spec: &SampleSpec, cfg: &BellmanConfig) -> Vec<StatePoint> {
    let far = sample_point(rng, spec);
    let other = sample_point(rng, spec);
    let mut out = vec![
        far,
        StatePoint::new(other.x.clone(), other.y.clone(), v0.r, v0.s),
        StatePoint::new(v0.x.clone(), v0.y.clone(), other.r, other.s),
    ];
    for t in [0.3, 0.03] {
        let dv = random_perturbation(rng, v0.dim());
        let scaled = crate::bellman::Perturbation {
            dx: dv.dx.iter().map(|a| a * v0.norm_x()).collect(),
            dy: dv.dy.iter().map(|a| a * v0.norm_y()).collect(),
            dr: dv.dr * v0.r,
            ds: dv.ds * v0.s,
        };
        let v = v0.offset(&scaled, t);
        if domain_check(&v, cfg).map(|f| f.in_dq_eps_ell).unwrap_or(false) {
            out.push(v);
        }
    }
    out
}

fn lambda_max(e: &Evaluation, offset: usize, d: usize) -> (f64, Vec<f64>) {
    let block = e.hessian.view((offset, offset), (d, d)).into_owned();
    let eig = SymmetricEigen::new(block);
    let (k, l) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &l)| if l > b.1 { (i, l) } else { b });
    (l, eig.eigenvectors.column(k).iter().cloned().collect())
}

fn check_point(
    i: usize,
    v: &StatePoint,
    cfg: &BellmanConfig,
    spec: &SampleSpec,
    reg: Option<&RegularizedBellman>,
) -> Result<PointResult> {
    let mut rng = tagged_substream(spec.seed, 10, i as u64);
    let d = cfg.dim;
    let e = eval_b(v, cfg)?;
    let mut out = PointResult {
        size: Some(size_margin(e.value, v, cfg).normalized()),
        ..Default::default()
    };

    let dirs: Vec<_> = (0..RANDOM_DIRECTIONS)
        .map(|_| random_perturbation(&mut rng, d))
        .collect();
    let smooth = cut_distance(v, cfg)? >= spec.exclusion_margin;
    if smooth {
        let tau = extract_tau_from(&e, v, cfg, &dirs)?;
        let (lo, hi) = cfg.tau_bounds();
        let inside = (tau.tau / lo).ln().min((hi / tau.tau).ln());
        out.tau = Some((tau.tau, tau.kappa, tau.feasible && inside >= 0.0));
        let mut h = f64::INFINITY;
        for dv in dirs
            .iter()
            .chain(&structured_directions(v))
            .chain(std::iter::once(&tau.extremal_direction))
        {
            h = h.min(hessian_margin(&e, dv, cfg.q).normalized());
        }
        out.hessian = Some(h);

        let mut xx = f64::INFINITY;
        let mut yy = f64::INFINITY;
        let (_, ex) = lambda_max(&e, 0, d);
        let (_, ey) = lambda_max(&e, d, d);
        let rx = unit_vector(&mut rng, d);
        let ry = unit_vector(&mut rng, d);
        for dx in [&ex, &rx] {
            xx = xx.min(xx_margin(&e, dx, cfg).normalized());
        }
        for dy in [&ey, &ry] {
            yy = yy.min(yy_margin(&e, dy, cfg).normalized());
        }
        out.xx = Some(xx);
        out.yy = Some(yy);
    }

    out.one_leg_constant = f64::INFINITY;
    for w in partners(&mut rng, v, spec, cfg) {
        let b = eval_b(&w, cfg)?.value;
        out.one_leg
            .push(one_leg_margin(&e, v, b, &w, cfg.q, 2.0).normalized());
        out.one_leg_constant = out
            .one_leg_constant
            .min(observed_constant(&e, v, b, &w, cfg.q));
    }

    out.regularized_constant = f64::INFINITY;
    if let Some(reg) = reg {
        let w = sample_point(&mut rng, spec);
        let res: Result<Vec<f64>> = (|| {
            let e0 = reg.eval(v)?;
            let b = reg.eval(&w)?.value;
            out.regularized_constant = observed_constant(&e0, v, b, &w, cfg.q);
            Ok(vec![one_leg_margin(&e0, v, b, &w, cfg.q, 1.0).normalized()])
        })();
        match res {
            Ok(m) => out.regularized = Some(m),
            Err(BellmanError::Domain(_)) => out.regularized_skipped = true,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs every check on `spec.count` sampled points.
///
/// The report is produced even when checks fail; errors are returned only
/// for invalid configurations.
pub fn run_certification(cfg: &BellmanConfig, spec: &SampleSpec) -> Result<CertReport> {
    let start = Instant::now();
    cfg.validate()?;
    if spec.q != cfg.q || spec.eps != cfg.eps || spec.ell != cfg.ell || spec.dim != cfg.dim {
        return Err(BellmanError::Configuration(
            "sample spec and Bellman configuration disagree".into(),
        ));
    }
    let points = sample_domain(spec)?;
    let reg = RegularizedBellman::new(*cfg)?;
    let results: Vec<PointResult> = points
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let r = if i < REGULARIZED_SAMPLES { Some(&reg) } else { None };
            check_point(i, v, cfg, spec, r)
        })
        .collect::<Result<_>>()?;

    let mut size = CheckRecord::empty("size", 0.0);
    let mut hess = CheckRecord::empty("hessian_lower", MARGIN_TOLERANCE);
    let mut leg = CheckRecord::empty("one_leg", MARGIN_TOLERANCE);
    let mut xx = CheckRecord::empty("partial_xx", MARGIN_TOLERANCE);
    let mut yy = CheckRecord::empty("partial_yy", MARGIN_TOLERANCE);
    let mut tau_rec = CheckRecord::empty("tau", 0.0);
    let mut regl = CheckRecord::empty("one_leg_regularized", MARGIN_TOLERANCE);
    let (lo, hi) = cfg.tau_bounds();
    let mut tau = TauStats {
        samples: 0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        bound_lo: lo,
        bound_hi: hi,
        min_kappa: f64::INFINITY,
        infeasible: 0,
        within_bounds: true,
    };
    let mut best = f64::INFINITY;
    let mut best_reg = f64::INFINITY;

    for (v, r) in points.iter().zip(&results) {
        if let Some(m) = r.size {
            size.record(m, v);
        }
        let opt = |rec: &mut CheckRecord, m: Option<f64>| match m {
            Some(m) => rec.record(m, v),
            None => rec.skipped += 1,
        };
        opt(&mut hess, r.hessian);
        opt(&mut xx, r.xx);
        opt(&mut yy, r.yy);
        for &m in &r.one_leg {
            leg.record(m, v);
        }
        best = best.min(r.one_leg_constant);
        match r.tau {
            Some((t, kappa, ok)) => {
                tau.samples += 1;
                tau.min = tau.min.min(t);
                tau.max = tau.max.max(t);
                tau.min_kappa = tau.min_kappa.min(kappa);
                if !ok {
                    tau.infeasible += 1;
                }
                let inside = (t / lo).ln().min((hi / t).ln());
                tau_rec.record(inside.min(kappa - 1.0).min(if ok { 0.0 } else { -1.0 }), v);
            }
            None => tau_rec.skipped += 1,
        }
        if let Some(ms) = &r.regularized {
            for &m in ms {
                regl.record(m, v);
            }
            best_reg = best_reg.min(r.regularized_constant);
        }
        if r.regularized_skipped {
            regl.skipped += 1;
        }
    }
    tau.within_bounds = tau.samples == 0 || (tau.min >= lo && tau.max <= hi);

    let c1 = check_c1_across_cuts(cfg, spec.count.min(CUT_SAMPLES), spec.seed)?;
    let mut checks = vec![size, hess, leg, xx, yy, tau_rec, regl];
    for c in &c1.cuts {
        let mut rec = CheckRecord::empty(&format!("c1_{}", c.cut.name()), 0.0);
        rec.samples = c.samples;
        rec.min_margin = if c.samples == 0 {
            f64::INFINITY
        } else {
            c.min_slope - MIN_DECAY_SLOPE
        };
        checks.push(rec);
    }
    for c in &mut checks {
        c.finish();
    }
    Ok(CertReport {
        cfg: *cfg,
        spec: *spec,
        checks,
        tau,
        c1,
        one_leg_best_constant: best,
        regularized_best_constant: best_reg,
        runtime: start.elapsed(),
    })
}

fn fmt_point(v: &Option<StatePoint>) -> String {
    match v {
        None => "none".into(),
        Some(v) => format!("x={:?} y={:?} r={} s={}", v.x, v.y, v.r, v.s),
    }
}

/// Indented key-value rendering.
pub fn to_text(rep: &CertReport) -> String {
    let mut s = String::new();
    let c = &rep.cfg;
    let k = &c.coefficients;
    let _ = writeln!(s, "certification");
    let _ = writeln!(s, "  pass = {}", rep.pass());
    let _ = writeln!(s, "  config");
    let _ = writeln!(s, "    Q = {}", c.q);
    let _ = writeln!(s, "    eps = {}", c.eps);
    let _ = writeln!(s, "    ell = {}", c.ell);
    let _ = writeln!(s, "    dim = {}", c.dim);
    let _ = writeln!(s, "    coefficients = {} {} {} {}", k.c1, k.c2, k.c3, k.c7);
    let _ = writeln!(s, "    samples = {}", rep.spec.count);
    let _ = writeln!(s, "    seed = {}", rep.spec.seed);
    let _ = writeln!(s, "    distribution = {}", rep.spec.distribution.name());
    let _ = writeln!(s, "    exclusion_margin = {}", rep.spec.exclusion_margin);
    for ch in &rep.checks {
        let _ = writeln!(s, "  check {}", ch.name);
        let _ = writeln!(s, "    status = {}", ch.status());
        let _ = writeln!(s, "    samples = {}", ch.samples);
        let _ = writeln!(s, "    skipped = {}", ch.skipped);
        let _ = writeln!(s, "    min_margin = {}", ch.min_margin);
        let _ = writeln!(s, "    tolerance = {}", ch.tolerance);
        let _ = writeln!(s, "    worst_point = {}", fmt_point(&ch.worst_point));
        let _ = writeln!(s, "    pass = {}", ch.pass);
    }
    let t = &rep.tau;
    let _ = writeln!(s, "  tau");
    let _ = writeln!(s, "    samples = {}", t.samples);
    let _ = writeln!(s, "    min = {}", t.min);
    let _ = writeln!(s, "    max = {}", t.max);
    let _ = writeln!(s, "    bound_lo = {}", t.bound_lo);
    let _ = writeln!(s, "    bound_hi = {}", t.bound_hi);
    let _ = writeln!(s, "    min_kappa = {}", t.min_kappa);
    let _ = writeln!(s, "    infeasible = {}", t.infeasible);
    let _ = writeln!(s, "    within_bounds = {}", t.within_bounds);
    for cut in &rep.c1.cuts {
        let _ = writeln!(s, "  cut {}", cut.cut.name());
        let _ = writeln!(s, "    samples = {}", cut.samples);
        for (d, m) in super::cuts::CUT_DELTAS.iter().zip(cut.max_mismatch) {
            let _ = writeln!(s, "    max_mismatch[delta={d}] = {m}");
        }
        let _ = writeln!(s, "    min_slope = {}", cut.min_slope);
        let _ = writeln!(s, "    pass = {}", cut.pass);
    }
    let _ = writeln!(s, "  observed");
    let _ = writeln!(s, "    one_leg_best_constant = {}", rep.one_leg_best_constant);
    let _ = writeln!(
        s,
        "    regularized_best_constant = {}",
        rep.regularized_best_constant
    );
    s
}

/// One row per check.
pub fn to_csv(rep: &CertReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record([
        "check", "samples", "skipped", "min_margin", "tolerance", "pass", "worst_r", "worst_s",
        "worst_norm_x", "worst_norm_y",
    ]);
    for ch in &rep.checks {
        let p = ch.worst_point.as_ref();
        let f = |g: &dyn Fn(&StatePoint) -> f64| p.map(|v| g(v).to_string()).unwrap_or_default();
        let _ = w.write_record([
            ch.name.clone(),
            ch.samples.to_string(),
            ch.skipped.to_string(),
            ch.min_margin.to_string(),
            ch.tolerance.to_string(),
            ch.pass.to_string(),
            f(&|v| v.r),
            f(&|v| v.s),
            f(&|v| v.norm_x()),
            f(&|v| v.norm_y()),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// One row of a tau sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TauRow {
    pub id: usize,
    pub r: f64,
    pub s: f64,
    pub norm_x: f64,
    pub norm_y: f64,
    pub tau: f64,
    pub kappa: f64,
    pub feasible: bool,
}

/// Ellipse parameters at `spec.count` sampled points, in sample order.
/// Points on a cut are omitted.
pub fn tau_sweep(cfg: &BellmanConfig, spec: &SampleSpec) -> Result<Vec<TauRow>> {
    cfg.validate()?;
    let points = sample_domain(spec)?;
    let rows: Vec<Option<TauRow>> = points
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            if cut_distance(v, cfg)? < spec.exclusion_margin {
                return Ok(None);
            }
            let mut rng = tagged_substream(spec.seed, 10, i as u64);
            let dirs: Vec<_> = (0..RANDOM_DIRECTIONS)
                .map(|_| random_perturbation(&mut rng, cfg.dim))
                .collect();
            let t = extract_tau_from(&eval_b(v, cfg)?, v, cfg, &dirs)?;
            Ok(Some(TauRow {
                id: i,
                r: v.r,
                s: v.s,
                norm_x: v.norm_x(),
                norm_y: v.norm_y(),
                tau: t.tau,
                kappa: t.kappa,
                feasible: t.feasible,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// CSV with columns `id,r,s,norm_x,norm_y,tau`.
pub fn tau_rows_to_csv(rows: &[TauRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["id", "r", "s", "norm_x", "norm_y", "tau"]);
    for r in rows {
        let _ = w.write_record([
            r.id.to_string(),
            r.r.to_string(),
            r.s.to_string(),
            r.norm_x.to_string(),
            r.norm_y.to_string(),
            r.tau.to_string(),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}
