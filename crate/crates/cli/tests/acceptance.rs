//! End-to-end criteria, one verdict line each. Exits nonzero when any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use a2bellman::bellman::{classify_region, eval_h4, eval_k, Region};
use a2bellman::certify::{
    check_c1_across_cuts, extract_tau, run_certification, sample_domain, CertReport, SampleSpec,
    MARGIN_TOLERANCE,
};
use a2bellman::martingale::{
    anchor_sensitivity, random_martingale_with, rotation_pair, sharpness_experiment, transform,
    verify_main_theorem, Multiplier, SimConfig, C_TARGET,
};
use a2bellman::rng::{substream, tagged_substream};
use a2bellman::weights::{deltas_for_characteristics, power_weight_family, random_weight, random_weight_within};
use a2bellman::BellmanConfig;
use rand::Rng;
use rayon::prelude::*;

const QS: [f64; 3] = [2.0, 16.0, 256.0];
const EPS: f64 = 0.1;
const ELL: f64 = 0.05;
const SAMPLES: usize = 10_000;
const MAX_RUNTIME: Duration = Duration::from_secs(60);
const H4_TOLERANCE: f64 = 1e-6;
const CUT_POINTS: usize = 1_000;
const WEIGHTS_PER_DEPTH: usize = 1_000;
const INSTANCES: usize = 100;
const MIN_SLOPE: f64 = 0.8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Shared results: later criteria report quantities measured earlier.
#[derive(Default)]
struct Notes {
    certs: Vec<CertReport>,
    anchors: Vec<(f64, f64, f64)>,
}

fn cfg(q: f64) -> BellmanConfig {
    BellmanConfig::new(q, EPS, ELL, 2).unwrap()
}

fn certification(notes: &mut Notes) -> Verdict {
    let names = ["hessian_lower", "one_leg", "size", "partial_xx", "partial_yy"];
    let mut pass = true;
    let mut parts = Vec::new();
    for q in QS {
        let c = cfg(q);
        let t = Instant::now();
        let rep = match run_certification(&c, &SampleSpec::new(&c, SAMPLES, 1)) {
            Ok(r) => r,
            Err(e) => return verdict(false, format!("Q={q}: {e}")),
        };
        let elapsed = t.elapsed();
        let mut worst = f64::INFINITY;
        for n in names {
            let rec = rep.check(n).expect("check present");
            pass &= rec.pass;
            worst = worst.min(rec.min_margin);
        }
        pass &= elapsed <= MAX_RUNTIME;
        parts.push(format!("Q={q}: min margin {worst:.3e}, {:.1}s", elapsed.as_secs_f64()));
        notes.certs.push(rep);
    }
    verdict(pass, parts.join("; "))
}

/// `sup_a p^2/(r + aK) + q^2/(s + K/a)` by a log-grid scan plus golden refinement.
fn h4_brute(p: f64, q: f64, r: f64, s: f64, k: f64) -> f64 {
    let f = |t: f64| {
        let a = t.exp();
        p * p / (r + a * k) + q * q / (s + k / a)
    };
    let (lo, hi, n) = (-40.0, 40.0, 4000);
    let h = (hi - lo) / n as f64;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let t = lo + i as f64 * h;
        if f(t) > best.1 {
            best = (t, f(t));
        }
    }
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).max(best.1).max(p * p / r).max(q * q / s)
}

fn h4_oracle() -> Verdict {
    let q: f64 = 16.0;
    let results: Vec<(usize, f64)> = (0..SAMPLES)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(2, i as u64);
            loop {
                let r = (EPS.ln() + rng.random::<f64>() * (-2.0 * EPS.ln())).exp();
                let s = (rng.random::<f64>() * q.ln()).exp() / r;
                let k = eval_k(r, s, q).unwrap_or(0.0);
                let p = (rng.random::<f64>() * 6.0 - 3.0).exp();
                let y = (rng.random::<f64>() * 6.0 - 3.0).exp();
                let region = match classify_region(p, y, r, s, k) {
                    Region::R1 => 0,
                    Region::R2 => 1,
                    Region::R3 => 2,
                    Region::Cut => continue,
                };
                let got = eval_h4(&[p], &[y], r, s, k).unwrap();
                let want = h4_brute(p, y, r, s, k);
                return (region, (got - want).abs() / want);
            }
        })
        .collect();
    let mut hits = [0usize; 3];
    let mut worst: f64 = 0.0;
    for (region, err) in &results {
        hits[*region] += 1;
        worst = worst.max(*err);
    }
    verdict(
        worst <= H4_TOLERANCE && hits.iter().all(|h| *h > 0),
        format!("max relative error {worst:.2e}, region counts R1/R2/R3 = {hits:?}"),
    )
}

fn tau_bounds() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for q in QS {
        let c = cfg(q);
        let (lo, hi) = c.tau_bounds();
        let points = sample_domain(&SampleSpec::new(&c, SAMPLES, 3)).unwrap();
        let taus: Vec<Option<f64>> = points
            .par_iter()
            .map(|v| extract_tau(v, &c, &[]).ok().filter(|t| t.feasible).map(|t| t.tau))
            .collect();
        let failed = taus.iter().filter(|t| t.is_none()).count();
        let ok: Vec<f64> = taus.into_iter().flatten().collect();
        let outside = ok.iter().filter(|t| **t < lo || **t > hi).count();
        let (mn, mx) = ok.iter().fold((f64::INFINITY, 0f64), |(a, b), t| (a.min(*t), b.max(*t)));
        pass &= failed == 0 && outside == 0;
        parts.push(format!("Q={q}: tau in [{mn:.3e}, {mx:.3e}], failures {failed}, outside {outside}"));
    }
    verdict(pass, parts.join("; "))
}

fn c1_cuts() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for q in QS {
        let rep = match check_c1_across_cuts(&cfg(q), CUT_POINTS, 4) {
            Ok(r) => r,
            Err(e) => return verdict(false, format!("Q={q}: {e}")),
        };
        pass &= rep.pass;
        for c in &rep.cuts {
            parts.push(format!("Q={q} {}: slope {:.3}", c.cut.name(), c.min_slope));
        }
    }
    verdict(pass, parts.join("; "))
}

/// Largest `<w>_I <1/w>_I` over all dyadic intervals, from the leaves.
fn characteristic(leaves: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    let mut width = leaves.len();
    while width >= 1 {
        for chunk in leaves.chunks(width) {
            let m = chunk.len() as f64;
            let a = chunk.iter().sum::<f64>() / m;
            let b = chunk.iter().map(|w| 1.0 / w).sum::<f64>() / m;
            best = best.max(a * b);
        }
        width /= 2;
    }
    best
}

fn truncation() -> Verdict {
    let violations: usize = (2..=10usize)
        .into_par_iter()
        .map(|depth| {
            let mut bad = 0;
            for i in 0..WEIGHTS_PER_DEPTH {
                let mut rng = tagged_substream(5, depth as u64, i as u64);
                let sigma = rng.random_range(0.1..2.0);
                let w = random_weight(&mut rng, depth, sigma).unwrap();
                let before = characteristic(w.leaves());
                let (lo, hi) = w.range();
                let a = (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
                let above = w.truncate_above(a).unwrap();
                let two = w.truncate_two_sided(a.max(1.0 / a)).unwrap();
                for t in [above, two] {
                    if characteristic(t.leaves()) > before * (1.0 + 1e-12) {
                        bad += 1;
                    }
                }
            }
            bad
        })
        .sum();
    verdict(
        violations == 0,
        format!("{} truncations at depths 2..=10, {violations} violations", 2 * 9 * WEIGHTS_PER_DEPTH),
    )
}

fn telescope(notes: &mut Notes) -> Verdict {
    let c = cfg(16.0);
    let runs: Vec<Result<Vec<_>, String>> = (0..INSTANCES)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(6, i as u64);
            let x = random_martingale_with(&mut rng, 8, 2).map_err(|e| e.to_string())?;
            let z = if i % 2 == 1 {
                rotation_pair(&mut rng, &x)
            } else {
                random_martingale_with(&mut rng, 8, 2)
            }
            .map_err(|e| e.to_string())?;
            let w = random_weight_within(&mut rng, 8, c.q, c.eps).map_err(|e| e.to_string())?;
            anchor_sensitivity(&x, &z, &w, &c).map_err(|e| format!("instance {i}: {e}"))
        })
        .collect();
    let mut failed = 0;
    let mut min_margin = f64::INFINITY;
    let mut max_linear: f64 = 0.0;
    let mut per_anchor = [(0.0, 0.0); 3];
    for r in &runs {
        match r {
            Ok(reps) => {
                for (k, rep) in reps.iter().enumerate() {
                    failed += usize::from(!rep.pass);
                    min_margin = min_margin.min(rep.min_margin);
                    max_linear = max_linear.max(rep.max_linear);
                    per_anchor[k].0 += rep.sum_increments / INSTANCES as f64;
                    per_anchor[k].1 += rep.bellman_gain / INSTANCES as f64;
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("  telescope: {e}");
            }
        }
    }
    for (k, m) in [1.0, 2.0, 10.0].iter().enumerate() {
        notes.anchors.push((m * c.ell, per_anchor[k].0, per_anchor[k].1));
    }
    verdict(
        failed == 0 && min_margin >= -MARGIN_TOLERANCE && max_linear <= 1e-10,
        format!(
            "{INSTANCES} instances x 3 anchors, {failed} failures, min step margin {min_margin:.3e}, max linear term {max_linear:.1e}"
        ),
    )
}

fn main_estimate(notes: &Notes) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut calibrated: f64 = 0.0;
    for (d, delta) in [-0.5, 0.0, 1.0].into_iter().enumerate() {
        let w = power_weight_family(delta, 10).unwrap();
        let reps: Vec<_> = (0..INSTANCES)
            .into_par_iter()
            .map(|i| {
                let mut rng = tagged_substream(7, d as u64, i as u64);
                let x = random_martingale_with(&mut rng, 10, 2).unwrap();
                let y = if i % 2 == 1 {
                    rotation_pair(&mut rng, &x).unwrap()
                } else {
                    transform(&x, &Multiplier::random_signs(&mut rng, 10)).unwrap()
                };
                let sim = SimConfig {
                    depth: 10,
                    seed: i as u64,
                    num_paths: 16,
                    ..SimConfig::default()
                };
                verify_main_theorem(&x, &y, &w, C_TARGET, &sim)
            })
            .collect();
        let mut worst: f64 = 0.0;
        for r in reps {
            match r {
                Ok(r) => {
                    pass &= r.pass && r.duality_gap <= 1e-8;
                    worst = worst.max(r.ratio);
                }
                Err(_) => pass = false,
            }
        }
        calibrated = calibrated.max(worst);
        parts.push(format!("delta={delta}: max ratio {worst:.3}"));
    }
    parts.push(format!("C_target {C_TARGET} (largest observed {calibrated:.3})"));
    let molli: Vec<String> = notes
        .certs
        .iter()
        .map(|r| format!("Q={}: {:.3}/{:.3}", r.cfg.q, r.regularized_best_constant, r.one_leg_best_constant))
        .collect();
    parts.push(format!("one-leg constant mollified/exact {}", molli.join(", ")));
    let anchors: Vec<String> = notes
        .anchors
        .iter()
        .map(|(a, s, g)| format!("a={a}: E sum {s:.4} <= gain {g:.4}"))
        .collect();
    parts.push(format!("anchor {}", anchors.join(", ")));
    verdict(pass, parts.join("; "))
}

fn sharpness() -> Verdict {
    let deltas = deltas_for_characteristics(2.0, 100.0, 9, 12).unwrap();
    match sharpness_experiment(&deltas, 12, &SimConfig::default()) {
        Ok(rep) => {
            let rows: Vec<String> = rep
                .rows
                .iter()
                .map(|r| format!("{:.1}->{:.2}", r.q2, r.worst_ratio))
                .collect();
            verdict(
                rep.slope >= MIN_SLOPE,
                format!("slope {:.3} (need {MIN_SLOPE}), Q2->ratio {}", rep.slope, rows.join(" ")),
            )
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn cli(jobs: &str, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_a2bellman"))
        .arg("--jobs")
        .arg(jobs)
        .args(args)
        .output()
        .expect("binary runs");
    let mut bytes = out.stdout;
    bytes.extend(out.status.code().unwrap_or(-1).to_le_bytes());
    bytes
}

fn determinism() -> Verdict {
    let commands: [&[&str]; 5] = [
        &["certify", "--samples", "200", "--seed", "9", "--format", "csv"],
        &["tau-sweep", "--samples", "200", "--seed", "9"],
        &["simulate", "--depth", "6", "--samples", "6", "--seed", "9"],
        &["sharpness", "--delta-grid", "-0.8:-0.2:4", "--depth", "7", "--seed", "9"],
        &["telescope", "--depth", "5", "--eps", "0.25", "--samples", "3", "--seed", "9", "--format", "csv"],
    ];
    let mut differing = Vec::new();
    for args in commands {
        let base = cli("1", args);
        if cli("1", args) != base || cli("4", args) != base || cli("7", args) != base {
            differing.push(args[0]);
        }
    }
    verdict(
        differing.is_empty(),
        format!("{} commands x jobs 1/1/4/7, differing: {differing:?}", commands.len()),
    )
}

fn main() -> ExitCode {
    let mut notes = Notes::default();
    let mut all = true;
    let mut report = |n: usize, name: &str, v: Verdict| {
        all &= v.pass;
        println!("criterion {n} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    report(1, "Bellman certification", certification(&mut notes));
    report(2, "H4 supremum oracle", h4_oracle());
    report(3, "tau bounds", tau_bounds());
    report(4, "C1 across cuts", c1_cuts());
    report(5, "truncation monotonicity", truncation());
    report(6, "telescope", telescope(&mut notes));
    report(7, "main estimate", main_estimate(&notes));
    report(8, "sharpness slope", sharpness());
    report(9, "determinism", determinism());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
