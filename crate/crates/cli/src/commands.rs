use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use a2bellman::certify::{run_certification, tau_rows_to_csv, tau_sweep as sweep, to_csv, to_text, SampleSpec};
use a2bellman::martingale::{
    anchor_sensitivity, bellman_telescope, random_martingale_with, rotation_pair,
    sharpness_experiment, sharpness_to_csv, transform, verify_main_theorem, DyadicMartingale,
    MainReport, Multiplier, SimConfig, TelescopeReport,
};
use a2bellman::rng::tagged_substream;
use a2bellman::weights::{deltas_for_characteristics, power_weight_family, random_weight_within, WeightTree};
use a2bellman::BellmanConfig;
use rayon::prelude::*;

use crate::{check, emit, usage, CertifyArgs, Domain, Failure, Format, Mode, Outcome, SharpnessArgs,
    SimulateArgs, TauArgs, TelescopeArgs, TruncateArgs};

fn config(d: &Domain) -> Result<BellmanConfig, Failure> {
    BellmanConfig::new(d.q, d.eps, d.ell, d.dim).map_err(usage)
}

fn spec(cfg: &BellmanConfig, samples: usize, seed: u64) -> Result<SampleSpec, Failure> {
    let s = SampleSpec::new(cfg, samples, seed);
    s.validate().map_err(usage)?;
    Ok(s)
}

fn load_weight(p: &Path) -> Result<WeightTree, Failure> {
    let text = fs::read_to_string(p).map_err(|e| usage(format!("reading {}: {e}", p.display())))?;
    WeightTree::from_text(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
}

pub fn certify(a: CertifyArgs) -> Outcome {
    let cfg = config(&a.domain)?;
    let spec = spec(&cfg, a.samples, a.seed)?;
    let rep = run_certification(&cfg, &spec).map_err(check)?;
    eprintln!("certification finished in {:.1} s", rep.runtime.as_secs_f64());
    let text = match a.format {
        Format::Text => to_text(&rep),
        Format::Csv => to_csv(&rep),
    };
    emit(&a.output, &text)?;
    for ch in rep.checks.iter().filter(|c| !c.pass) {
        eprintln!("check {} failed: min margin {}", ch.name, ch.min_margin);
    }
    Ok(rep.pass())
}

pub fn tau_sweep(a: TauArgs) -> Outcome {
    let cfg = config(&a.domain)?;
    let spec = spec(&cfg, a.samples, a.seed)?;
    let rows = sweep(&cfg, &spec).map_err(check)?;
    emit(&a.output, &tau_rows_to_csv(&rows))?;
    let (lo, hi) = cfg.tau_bounds();
    let bad: Vec<_> = rows
        .iter()
        .filter(|r| !r.feasible || r.tau < lo || r.tau > hi)
        .collect();
    if let Some(r) = bad.first() {
        eprintln!(
            "{} of {} points failed; first at id {} (tau {}, kappa {})",
            bad.len(),
            rows.len(),
            r.id,
            r.tau,
            r.kappa
        );
    }
    Ok(bad.is_empty())
}

/// Weight of one instance: a power weight, a file, or a random weight.
enum WeightSource {
    Fixed(WeightTree),
    Random { q: f64, eps: f64 },
}

fn weight_source(
    delta: Option<f64>,
    file: Option<&Path>,
    q: f64,
    eps: f64,
    depth: usize,
) -> Result<WeightSource, Failure> {
    if let Some(p) = file {
        return Ok(WeightSource::Fixed(load_weight(p)?));
    }
    if let Some(d) = delta {
        return Ok(WeightSource::Fixed(power_weight_family(d, depth).map_err(usage)?));
    }
    if !(q >= 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(usage(format!("need Q >= 1 and 0 < eps < 1, got {q}, {eps}")));
    }
    Ok(WeightSource::Random { q, eps })
}

fn kind(i: usize, dim: usize) -> &'static str {
    if i % 2 == 1 && dim >= 2 {
        "rotation"
    } else {
        "signs"
    }
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let source = weight_source(a.delta, a.weight_file.as_deref(), a.q, a.eps, a.depth)?;
    let depth = match &source {
        WeightSource::Fixed(w) => w.depth(),
        WeightSource::Random { .. } => a.depth,
    };
    let base = SimConfig {
        depth,
        dim: a.dim,
        seed: a.seed,
        num_paths: a.num_paths,
        ..SimConfig::default()
    };
    base.validate().map_err(usage)?;
    let results: Vec<(MainReport, f64)> = (0..a.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = tagged_substream(a.seed, 0x51, i as u64);
            let x = random_martingale_with(&mut rng, depth, a.dim)?;
            let y = if kind(i, a.dim) == "rotation" {
                rotation_pair(&mut rng, &x)?
            } else {
                transform(&x, &Multiplier::random_signs(&mut rng, depth))?
            };
            let w = match &source {
                WeightSource::Fixed(w) => w.clone(),
                WeightSource::Random { q, eps } => random_weight_within(&mut rng, depth, *q, *eps)?,
            };
            let cfg = SimConfig {
                seed: a.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            Ok((verify_main_theorem(&x, &y, &w, a.c_target, &cfg)?, w.a2_characteristic()))
        })
        .collect::<a2bellman::martingale::Result<_>>()
        .map_err(check)?;

    let text = match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let _ = w.write_record([
                "instance", "kind", "Q2", "lhs", "rhs", "ratio", "duality_gap", "bilinear_ratio", "pass",
            ]);
            for (i, (r, q2)) in results.iter().enumerate() {
                let _ = w.write_record([
                    i.to_string(),
                    kind(i, a.dim).to_string(),
                    q2.to_string(),
                    r.lhs.to_string(),
                    r.rhs.to_string(),
                    r.ratio.to_string(),
                    r.duality_gap.to_string(),
                    r.bilinear_ratio.to_string(),
                    r.pass.to_string(),
                ]);
            }
            String::from_utf8(w.into_inner().map_err(check)?).map_err(check)?
        }
        Format::Text => {
            let mut s = String::new();
            let max_ratio = results.iter().map(|r| r.0.ratio).fold(0.0, f64::max);
            let _ = writeln!(s, "simulation");
            let _ = writeln!(s, "  depth = {depth}");
            let _ = writeln!(s, "  dim = {}", a.dim);
            let _ = writeln!(s, "  instances = {}", results.len());
            let _ = writeln!(s, "  c_target = {}", a.c_target);
            let _ = writeln!(s, "  max_ratio = {max_ratio}");
            for (i, (r, q2)) in results.iter().enumerate() {
                let _ = writeln!(s, "  instance {i}");
                let _ = writeln!(s, "    kind = {}", kind(i, a.dim));
                let _ = writeln!(s, "    Q2 = {q2}");
                let _ = writeln!(s, "    lhs = {}", r.lhs);
                let _ = writeln!(s, "    rhs = {}", r.rhs);
                let _ = writeln!(s, "    ratio = {}", r.ratio);
                let _ = writeln!(s, "    duality_gap = {}", r.duality_gap);
                let _ = writeln!(s, "    pass = {}", r.pass);
            }
            s
        }
    };
    emit(&a.output, &text)?;
    let worst = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.0.pass)
        .max_by(|p, q| p.1 .0.ratio.total_cmp(&q.1 .0.ratio));
    if let Some((i, (r, _))) = worst {
        eprintln!("instance {i} failed: {r:?}");
        return Ok(false);
    }
    Ok(true)
}

fn parse_triple(s: &str, name: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || usage(format!("--{name} expects start:end:count, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].parse().map_err(|_| bad())?;
    let hi = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

pub fn sharpness(a: SharpnessArgs) -> Outcome {
    let deltas: Vec<f64> = match (&a.delta_grid, &a.q2_range) {
        (Some(g), _) => {
            let (lo, hi, n) = parse_triple(g, "delta-grid")?;
            (0..n)
                .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
                .collect()
        }
        (None, r) => {
            let (lo, hi, n) = parse_triple(r.as_deref().unwrap_or("2:100:9"), "q2-range")?;
            deltas_for_characteristics(lo, hi, n, a.depth).map_err(usage)?
        }
    };
    let cfg = SimConfig {
        depth: a.depth,
        seed: a.seed,
        dim: 1,
        ..SimConfig::default()
    };
    let rep = sharpness_experiment(&deltas, a.depth, &cfg).map_err(usage)?;
    let text = match a.format {
        Format::Csv => format!(
            "{}# slope={} consistent={}\n",
            sharpness_to_csv(&rep),
            rep.slope,
            rep.consistent
        ),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "sharpness");
            let _ = writeln!(s, "  depth = {}", a.depth);
            let _ = writeln!(s, "  slope = {}", rep.slope);
            let _ = writeln!(s, "  consistent = {}", rep.consistent);
            for r in &rep.rows {
                let _ = writeln!(s, "  row");
                let _ = writeln!(s, "    delta = {}", r.delta);
                let _ = writeln!(s, "    Q2 = {}", r.q2);
                let _ = writeln!(s, "    worst_ratio = {}", r.worst_ratio);
            }
            s
        }
    };
    emit(&a.output, &text)?;
    Ok(true)
}

pub fn truncate(a: TruncateArgs) -> Outcome {
    let w = load_weight(&a.weight_file)?;
    let t = match a.mode {
        Mode::Above => w.truncate_above(a.a),
        Mode::TwoSided => w.truncate_two_sided(a.a),
    }
    .map_err(usage)?;
    let (before, after) = (w.a2_characteristic(), t.a2_characteristic());
    let summary = format!("Q2_before = {before}\nQ2_after = {after}\n");
    match &a.output.out {
        Some(p) => {
            fs::write(p, t.to_text()).map_err(|e| check(format!("writing {}: {e}", p.display())))?;
            print!("{summary}");
        }
        None => {
            print!("{}", t.to_text());
            eprint!("{summary}");
        }
    }
    if after > before {
        eprintln!("characteristic increased");
    }
    Ok(after <= before)
}

pub fn telescope(a: TelescopeArgs) -> Outcome {
    let cfg = config(&a.domain)?;
    let fixed = match &a.weight_file {
        Some(p) => Some(load_weight(p)?),
        None => None,
    };
    let depth = fixed.as_ref().map_or(a.depth, |w| w.depth());
    SimConfig {
        depth,
        ..SimConfig::default()
    }
    .validate()
    .map_err(usage)?;
    if let Some(x) = a.a {
        if !(x >= cfg.ell) {
            return Err(usage(format!("anchor --a {x} must be at least ell = {}", cfg.ell)));
        }
    }
    let dim = cfg.dim;
    let runs: Vec<Vec<TelescopeReport>> = (0..a.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = tagged_substream(a.seed, 0x7E, i as u64);
            let x = random_martingale_with(&mut rng, depth, dim)?;
            let z: DyadicMartingale = if kind(i, dim) == "rotation" {
                rotation_pair(&mut rng, &x)?
            } else {
                random_martingale_with(&mut rng, depth, dim)?
            };
            let w = match &fixed {
                Some(w) => w.clone(),
                None => random_weight_within(&mut rng, depth, cfg.q, cfg.eps)?,
            };
            match a.a {
                Some(anchor) => Ok(vec![bellman_telescope(&x, &z, &w, &cfg, anchor)?]),
                None => anchor_sensitivity(&x, &z, &w, &cfg),
            }
        })
        .collect::<a2bellman::martingale::Result<_>>()
        .map_err(check)?;

    let text = match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let _ = w.write_record([
                "instance", "kind", "anchor", "sum_increments", "bellman_gain", "bellman_bound",
                "min_margin", "max_linear", "pass",
            ]);
            for (i, reps) in runs.iter().enumerate() {
                for r in reps {
                    let _ = w.write_record([
                        i.to_string(),
                        kind(i, dim).to_string(),
                        r.anchor.to_string(),
                        r.sum_increments.to_string(),
                        r.bellman_gain.to_string(),
                        r.bellman_bound.to_string(),
                        r.min_margin.to_string(),
                        r.max_linear.to_string(),
                        r.pass.to_string(),
                    ]);
                }
            }
            String::from_utf8(w.into_inner().map_err(check)?).map_err(check)?
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "telescope");
            let _ = writeln!(s, "  depth = {depth}");
            let _ = writeln!(s, "  Q = {}", cfg.q);
            let _ = writeln!(s, "  eps = {}", cfg.eps);
            let _ = writeln!(s, "  ell = {}", cfg.ell);
            let _ = writeln!(s, "  dim = {dim}");
            for (i, reps) in runs.iter().enumerate() {
                for r in reps {
                    let _ = writeln!(s, "  instance {i} anchor {}", r.anchor);
                    let _ = writeln!(s, "    kind = {}", kind(i, dim));
                    let _ = writeln!(s, "    sum_increments = {}", r.sum_increments);
                    let _ = writeln!(s, "    bellman_gain = {}", r.bellman_gain);
                    let _ = writeln!(s, "    bellman_bound = {}", r.bellman_bound);
                    let _ = writeln!(s, "    min_margin = {}", r.min_margin);
                    let _ = writeln!(s, "    worst_node = {} {}", r.worst_node.0, r.worst_node.1);
                    let _ = writeln!(s, "    max_linear = {}", r.max_linear);
                    let _ = writeln!(s, "    pass = {}", r.pass);
                }
            }
            s
        }
    };
    emit(&a.output, &text)?;
    let failed = runs
        .iter()
        .enumerate()
        .flat_map(|(i, reps)| reps.iter().map(move |r| (i, r)))
        .filter(|(_, r)| !r.pass)
        .min_by(|p, q| p.1.min_margin.total_cmp(&q.1.min_margin));
    if let Some((i, r)) = failed {
        eprintln!("instance {i} failed: {r:?}");
        return Ok(false);
    }
    Ok(true)
}
