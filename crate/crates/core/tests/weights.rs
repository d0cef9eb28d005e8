use a2bellman::rng::substream;
use a2bellman::weights::{
    deltas_for_characteristics, power_weight_family, random_weight, random_weight_within,
    WeightError, WeightTree,
};
use proptest::prelude::*;

/// Largest `<w>_I <1/w>_I` over all dyadic intervals, from the leaves.
fn characteristic(leaves: &[f64]) -> f64 {
    let n = leaves.len();
    let mut best: f64 = 0.0;
    let mut width = n;
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

/// Atoms `(start, width)` of every stopping time of a tree with `n` leaves.
fn stopping_times(start: usize, width: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![vec![(start, width)]];
    if width > 1 {
        let h = width / 2;
        for l in stopping_times(start, h) {
            for r in stopping_times(start + h, h) {
                let mut atoms = l.clone();
                atoms.extend(r);
                out.push(atoms);
            }
        }
    }
    out
}

fn leaves() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=8).prop_flat_map(|d| prop::collection::vec(-4.0..4.0f64, 1 << d))
        .prop_map(|v| v.into_iter().map(f64::exp).collect())
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn node_maximum_equals_supremum_over_stopping_times() {
    let mut rng = substream(77, 0);
    for depth in 1..=4 {
        let n = 1usize << depth;
        let times = stopping_times(0, n);
        for _ in 0..20 {
            let w = random_weight(&mut rng, depth, 1.2).unwrap();
            let lv = w.leaves();
            let sup = times
                .iter()
                .map(|atoms| {
                    atoms
                        .iter()
                        .map(|&(s, k)| {
                            let c = &lv[s..s + k];
                            let a = c.iter().sum::<f64>() / k as f64;
                            let b = c.iter().map(|t| 1.0 / t).sum::<f64>() / k as f64;
                            a * b
                        })
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            let q2 = w.a2_characteristic();
            assert!((sup - q2).abs() <= 1e-12 * q2, "depth {depth}: {sup} vs {q2}");
        }
    }
    // 1, 2, 5, 26, 677 stopping times on trees of depth 0..=4
    assert_eq!(stopping_times(0, 16).len(), 677);
}

#[test]
fn power_weights_match_quadrature() {
    let depth = 6;
    let n = 1usize << depth;
    for delta in [-0.9, -0.5, 0.0, 1.0] {
        let w = power_weight_family(delta, depth).unwrap();
        for k in 1..n {
            let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
            let want = n as f64 * simpson(|t: f64| t.powf(delta), a, b, 200);
            let got = w.leaves()[k];
            assert!((got - want).abs() <= 1e-9 * want, "delta {delta}, leaf {k}: {got} vs {want}");
        }
        // Mean over [0, 1] fixes the singular first leaf.
        let mean = w.leaves().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0 / (1.0 + delta)).abs() < 1e-12);
    }
    let flat = power_weight_family(0.0, 5).unwrap();
    assert!(flat.leaves().iter().all(|w| (w - 1.0).abs() < 1e-14));
    assert!(power_weight_family(-1.0, 3).is_err());
}

#[test]
fn characteristic_targets_are_hit() {
    let deltas = deltas_for_characteristics(2.0, 100.0, 5, 12).unwrap();
    let q2: Vec<f64> = deltas
        .iter()
        .map(|d| power_weight_family(*d, 12).unwrap().a2_characteristic())
        .collect();
    for (i, q) in q2.iter().enumerate() {
        let target = (2f64.ln() + i as f64 / 4.0 * (50f64).ln()).exp();
        assert!((q - target).abs() < 1e-6 * target, "{q} vs {target}");
    }
    assert!(deltas.iter().all(|d| *d > -1.0 && *d < 0.0));
}

#[test]
fn random_weights_respect_the_box_and_the_bound() {
    let mut rng = substream(5, 5);
    for _ in 0..50 {
        let w = random_weight_within(&mut rng, 7, 16.0, 0.25).unwrap();
        let (lo, hi) = w.range();
        assert!(lo >= 0.25 && hi <= 4.0);
        assert!(w.a2_characteristic() <= 16.0);
    }
}

#[test]
fn malformed_files_are_rejected() {
    for text in ["", "depth x\n1\n", "depth 1\n1\n", "depth 1\n1\n-2\n", "depth 1\n1\nabc\n", "size 1\n1\n1\n"] {
        assert!(
            matches!(WeightTree::from_text(text), Err(WeightError::Parse(_))),
            "{text:?}"
        );
    }
}

proptest! {
    #[test]
    fn characteristic_matches_enumeration(lv in leaves()) {
        let w = WeightTree::from_leaves(lv.clone()).unwrap();
        let q2 = w.a2_characteristic();
        prop_assert!((q2 - characteristic(&lv)).abs() <= 1e-12 * q2);
        prop_assert!(q2 >= 1.0);
        let constant = lv.iter().all(|v| *v == lv[0]);
        if constant {
            prop_assert!((q2 - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(q2 > 1.0);
        }
        for (_, _, p) in w.node_products() {
            prop_assert!(p >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn truncation_never_increases_the_characteristic(lv in leaves(), t in 0.0..1.0f64) {
        let w = WeightTree::from_leaves(lv.clone()).unwrap();
        let (lo, hi) = w.range();
        let a = lo + t * (hi - lo);
        let q2 = characteristic(&lv);
        let above = w.truncate_above(a).unwrap();
        prop_assert!(characteristic(above.leaves()) <= q2 * (1.0 + 1e-12));
        let b = a.max(1.0);
        let two = w.truncate_two_sided(b).unwrap();
        prop_assert!(characteristic(two.leaves()) <= q2 * (1.0 + 1e-12));
        let (l2, h2) = two.range();
        prop_assert!(l2 >= 1.0 / b * (1.0 - 1e-15) && h2 <= b * (1.0 + 1e-15));
    }

    #[test]
    fn truncation_is_idempotent_and_monotone(lv in leaves(), a in 0.1..5.0f64, b in 0.1..5.0f64) {
        let w = WeightTree::from_leaves(lv).unwrap();
        let once = w.truncate_above(a).unwrap();
        let twice = once.truncate_above(a).unwrap();
        prop_assert_eq!(twice.leaves(), once.leaves());
        let (lo, hi) = (a.min(b), a.max(b));
        let (x, y) = (w.truncate_above(lo).unwrap(), w.truncate_above(hi).unwrap());
        prop_assert!(x.leaves().iter().zip(y.leaves()).all(|(p, q)| p <= q));
    }

    #[test]
    fn text_form_round_trips(lv in leaves()) {
        let w = WeightTree::from_leaves(lv).unwrap();
        let back = WeightTree::from_text(&w.to_text()).unwrap();
        prop_assert_eq!(back.leaves(), w.leaves());
    }
}
