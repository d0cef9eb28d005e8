use a2bellman::martingale::{
    bellman_telescope, bilinear_form, check_subordination, exhaustive_mean, projection_consistency,
    random_martingale_with, rotation_pair, sampled_mean, sharpness_experiment, terminal_pairing,
    transform, verify_bilinear_estimate, verify_main_theorem, weighted_norm, worst_ratio,
    DyadicMartingale, Multiplier, SimConfig,
};
use a2bellman::rng::substream;
use a2bellman::weights::{power_weight_family, random_weight, random_weight_within, WeightTree};
use a2bellman::{eval_b, BellmanConfig, StatePoint};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

/// Leaf index of the ancestor at level `k` of leaf `i` in a tree of depth `n`.
fn ancestor(i: usize, n: usize, k: usize) -> usize {
    i >> (n - k)
}

fn martingale() -> impl Strategy<Value = (DyadicMartingale, u64)> {
    (0usize..=6, 1usize..=3, any::<u64>()).prop_map(|(depth, dim, seed)| {
        let mut rng = substream(seed, 0);
        (random_martingale_with(&mut rng, depth, dim).unwrap(), seed)
    })
}

#[test]
fn telescope_matches_a_leaf_by_leaf_sum() {
    let cfg = BellmanConfig::new(16.0, 0.25, 0.05, 2).unwrap();
    let acfg = BellmanConfig::new(16.0, 0.25, 0.05, 3).unwrap();
    let mut rng = substream(41, 0);
    for depth in 1..=4 {
        let n = 1usize << depth;
        let x = random_martingale_with(&mut rng, depth, 2).unwrap();
        let z = rotation_pair(&mut rng, &x).unwrap();
        let w = random_weight_within(&mut rng, depth, 16.0, 0.25).unwrap();
        let a = 2.0 * cfg.ell;
        let rep = bellman_telescope(&x, &z, &w, &cfg, a).unwrap();

        let mut sum = 0.0;
        for i in 0..n {
            for k in 0..depth {
                let (p, c) = (ancestor(i, depth, k), ancestor(i, depth, k + 1));
                let dx = norm(&diff(x.node(k + 1, c), x.node(k, p)));
                let dz = norm(&diff(z.node(k + 1, c), z.node(k, p)));
                sum += 2.0 / cfg.q * dx * dz;
            }
        }
        sum /= n as f64;
        let at = |k: usize, j: usize| {
            let mut xv = vec![a];
            xv.extend_from_slice(x.node(k, j));
            let mut zv = vec![a];
            zv.extend_from_slice(z.node(k, j));
            StatePoint::new(xv, zv, w.avg_u(k, j), w.avg_w(k, j))
        };
        let leaves: f64 = (0..n).map(|i| eval_b(&at(depth, i), &acfg).unwrap().value).sum();
        let gain = leaves / n as f64 - eval_b(&at(0, 0), &acfg).unwrap().value;

        assert!((rep.sum_increments - sum).abs() <= 1e-12 * sum, "{} vs {sum}", rep.sum_increments);
        assert!((rep.bellman_gain - gain).abs() <= 1e-10 * gain.abs().max(1.0));
        assert!(rep.pass, "{rep:?}");
        assert!(sum <= gain);
    }
}

#[test]
fn sampled_expectations_agree_with_exhaustive_ones() {
    let cfg = SimConfig {
        depth: 10,
        num_paths: 4000,
        ..SimConfig::default()
    };
    let mut rng = substream(8, 0);
    let x = random_martingale_with(&mut rng, 10, 2).unwrap();
    let values: Vec<f64> = x.leaves().chunks(2).map(|v| v[0] * v[0] + v[1] * v[1]).collect();
    let exact = exhaustive_mean(&values);
    let est = sampled_mean(&values, &cfg).unwrap();
    assert!((est.mean - exact).abs() <= 4.0 * est.std_error, "{est:?} vs {exact}");
    assert!((x.l2_norm_squared() - x.bracket_expectation()).abs() <= 1e-10 * exact);
}

#[test]
fn second_moment_is_the_sum_of_increment_energies() {
    // Orthogonality of increments, summed level by level.
    let mut rng = substream(12, 0);
    let x = random_martingale_with(&mut rng, 10, 2).unwrap();
    let inc: f64 = (0..10)
        .map(|k| {
            let m = 1usize << k;
            (0..m).map(|j| norm(&x.increment(k, j)).powi(2)).sum::<f64>() / m as f64
        })
        .sum();
    let total = norm(x.root()).powi(2) + inc;
    assert!((x.l2_norm_squared() - total).abs() <= 1e-10 * total);
}

#[test]
fn identity_weight_gives_unit_ratios() {
    let mut rng = substream(2, 0);
    let w = WeightTree::constant(6, 1.0).unwrap();
    for _ in 0..20 {
        let x = random_martingale_with(&mut rng, 6, 2).unwrap();
        let y = transform(&x, &Multiplier::random_signs(&mut rng, 6)).unwrap();
        let z = random_martingale_with(&mut rng, 6, 2).unwrap();
        let b = verify_bilinear_estimate(&x, &y, &z, &w, 1.0).unwrap();
        assert!(b.ratio <= 1.0 + 1e-12, "{b:?}");
        // Sign transforms are isometries without a weight.
        let (nx, ny) = (weighted_norm(&x, &w).unwrap(), weighted_norm(&y, &w).unwrap());
        assert!((nx - ny).abs() <= 1e-12 * nx);
    }
    let flat = power_weight_family(0.0, 8).unwrap();
    assert!(worst_ratio(&flat, 3) <= 1.0 + 1e-9);
}

#[test]
fn main_estimate_holds_on_power_weights() {
    let cfg = SimConfig {
        depth: 8,
        num_paths: 8,
        ..SimConfig::default()
    };
    let mut rng = substream(21, 0);
    for delta in [-0.5, 0.0, 1.0] {
        let w = power_weight_family(delta, 8).unwrap();
        for _ in 0..5 {
            let x = random_martingale_with(&mut rng, 8, 2).unwrap();
            let y = rotation_pair(&mut rng, &x).unwrap();
            let r = verify_main_theorem(&x, &y, &w, 10.0, &cfg).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.duality_gap <= 1e-8, "{}", r.duality_gap);
        }
    }
}

#[test]
fn sharpness_at_the_trivial_weight() {
    let cfg = SimConfig::default();
    let rep = sharpness_experiment(&[0.0], 6, &cfg).unwrap();
    assert!(rep.rows[0].worst_ratio <= 1.0 + 1e-9);
    assert!(sharpness_experiment(&[0.5], 6, &cfg).is_err());
    assert!(sharpness_experiment(&[-0.5], 15, &cfg).is_err());
}

#[test]
fn non_subordinate_pairs_are_refused() {
    let mut rng = substream(4, 0);
    let x = random_martingale_with(&mut rng, 4, 2).unwrap();
    let y = x.scaled(2.0);
    assert!(!check_subordination(&x, &y).unwrap().holds);
    let w = WeightTree::constant(4, 1.0).unwrap();
    assert!(verify_main_theorem(&x, &y, &w, 10.0, &SimConfig::default()).is_err());
}

proptest! {
    #[test]
    fn bracket_identity((x, _) in martingale()) {
        let (a, b) = (x.l2_norm_squared(), x.bracket_expectation());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn transforms_and_rotations_are_subordinate((x, seed) in martingale()) {
        let mut rng = substream(seed, 1);
        let sigma = Multiplier::random_signs(&mut rng, x.depth());
        let y = transform(&x, &sigma).unwrap();
        prop_assert!(check_subordination(&x, &y).unwrap().holds);
        let z = rotation_pair(&mut rng, &x).unwrap();
        prop_assert!(check_subordination(&x, &z).unwrap().holds);
        prop_assert!(check_subordination(&z, &x).unwrap().holds);
    }

    #[test]
    fn pairing_is_bounded_by_the_bilinear_form((y, seed) in martingale()) {
        let mut rng = substream(seed, 2);
        let z = random_martingale_with(&mut rng, y.depth(), y.dim()).unwrap();
        let pairing = terminal_pairing(&y, &z).unwrap();
        let form = bilinear_form(&y, &z).unwrap();
        prop_assert!(pairing.abs() <= form * (1.0 + 1e-12) + 1e-14);
        let own = bilinear_form(&y, &y).unwrap();
        prop_assert!((own - y.l2_norm_squared()).abs() <= 1e-10 * own.max(1.0));
    }

    #[test]
    fn weighted_norm_scales((x, seed) in martingale(), lambda in -5.0..5.0f64, c in 0.1..10.0f64) {
        let mut rng = substream(seed, 3);
        let w = random_weight(&mut rng, x.depth(), 1.0).unwrap();
        let n = weighted_norm(&x, &w).unwrap();
        let scaled = weighted_norm(&x.scaled(lambda), &w).unwrap();
        prop_assert!((scaled - lambda.abs() * n).abs() <= 1e-12 * n.max(1e-300) * lambda.abs().max(1.0));
        let cw = WeightTree::from_leaves(w.leaves().iter().map(|v| v * c).collect()).unwrap();
        let m = weighted_norm(&x, &cw).unwrap();
        prop_assert!((m - c.sqrt() * n).abs() <= 1e-12 * m.max(1e-300));
    }

    #[test]
    fn projections_are_consistent(depth in 1usize..=5, seed in any::<u64>(), d_sub in 1usize..=3) {
        let mut rng = substream(seed, 4);
        let x = random_martingale_with(&mut rng, depth, 3).unwrap();
        let y = rotation_pair(&mut rng, &x).unwrap();
        let w = random_weight(&mut rng, depth, 1.0).unwrap();
        let rep = projection_consistency(&x, &y, &w, d_sub).unwrap();
        prop_assert!(rep.pass(), "{:?}", rep);
    }
}
