//! Weights on the dyadic filtration of depth `n`.
//!
//! A weight is given by its `2^n` positive leaf values. Node `(k, j)` is the
//! dyadic interval `[j 2^-k, (j + 1) 2^-k)`; its averages of `w` and of
//! `u = 1/w` are stored per level, the latter computed from the leaf
//! reciprocals.
//!
//! On a finite dyadic tree every stopping time is a union of nodes, so the
//! supremum over stopping times in the definition of the characteristic is
//! the maximum over nodes.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("invalid weight: {0}")]
    Invalid(String),
    #[error("argument outside its domain: {0}")]
    Domain(String),
    #[error("malformed weight file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, WeightError>;

/// Largest supported depth.
pub const MAX_DEPTH: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTree {
    depth: usize,
    /// `avg_w[k][j]`, level `depth` holding the leaves.
    avg_w: Vec<Vec<f64>>,
    avg_u: Vec<Vec<f64>>,
}

fn average_up(leaves: Vec<f64>, depth: usize) -> Vec<Vec<f64>> {
    let mut levels = vec![leaves];
    for _ in 0..depth {
        let below = levels.last().unwrap();
        let up = below.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        levels.push(up);
    }
    levels.reverse();
    levels
}

impl WeightTree {
    pub fn from_leaves(leaves: Vec<f64>) -> Result<Self> {
        let n = leaves.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(WeightError::Invalid(format!(
                "number of leaves must be a power of two, got {n}"
            )));
        }
        let depth = n.trailing_zeros() as usize;
        if depth > MAX_DEPTH {
            return Err(WeightError::Invalid(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        if let Some((i, w)) = leaves
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(WeightError::Invalid(format!("leaf {i} has value {w}")));
        }
        let recips = leaves.iter().map(|w| 1.0 / w).collect();
        Ok(Self {
            depth,
            avg_w: average_up(leaves, depth),
            avg_u: average_up(recips, depth),
        })
    }

    /// Constant weight `c`.
    pub fn constant(depth: usize, c: f64) -> Result<Self> {
        Self::from_leaves(vec![c; 1 << depth])
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaves(&self) -> &[f64] {
        &self.avg_w[self.depth]
    }

    /// `<w>` on node `(level, index)`.
    pub fn avg_w(&self, level: usize, index: usize) -> f64 {
        self.avg_w[level][index]
    }

    /// `<1/w>` on node `(level, index)`.
    pub fn avg_u(&self, level: usize, index: usize) -> f64 {
        self.avg_u[level][index]
    }

    /// `max_I <w>_I <1/w>_I` over all nodes.
    pub fn a2_characteristic(&self) -> f64 {
        self.node_products()
            .map(|(_, _, p)| p)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(level, index, <w><1/w>)` for every node.
    pub fn node_products(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..=self.depth).flat_map(move |k| {
            (0..1usize << k).map(move |j| (k, j, self.avg_w[k][j] * self.avg_u[k][j]))
        })
    }

    /// `1/w`.
    pub fn inverse(&self) -> Self {
        Self::from_leaves(self.leaves().iter().map(|w| 1.0 / w).collect())
            .expect("reciprocal of a valid weight is valid")
    }

    /// `w^theta`.
    pub fn power(&self, theta: f64) -> Result<Self> {
        Self::from_leaves(self.leaves().iter().map(|w| w.powf(theta)).collect())
    }

    /// Leaf-wise `min(w, a)`.
    pub fn truncate_above(&self, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(WeightError::Domain(format!(
                "truncation level must be positive, got {a}"
            )));
        }
        Self::from_leaves(self.leaves().iter().map(|w| w.min(a)).collect())
    }

    /// Leaf-wise clamp to `[1/a, a]`, obtained by truncating from above,
    /// inverting, truncating again and inverting back.
    pub fn truncate_two_sided(&self, a: f64) -> Result<Self> {
        if !(a >= 1.0 && a.is_finite()) {
            return Err(WeightError::Domain(format!(
                "two-sided truncation needs a >= 1, got {a}"
            )));
        }
        Ok(self.truncate_above(a)?.inverse().truncate_above(a)?.inverse())
    }

    /// Smallest and largest leaf value.
    pub fn range(&self) -> (f64, f64) {
        self.leaves()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
                (lo.min(w), hi.max(w))
            })
    }

    /// Text form: `depth n`, then one leaf value per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("depth {}\n", self.depth);
        for w in self.leaves() {
            let _ = writeln!(s, "{w}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| WeightError::Parse("empty input".into()))?;
        let depth: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["depth", n] => n
                .parse()
                .map_err(|_| WeightError::Parse(format!("bad depth {n:?}")))?,
            _ => return Err(WeightError::Parse(format!("bad header {header:?}"))),
        };
        if depth > MAX_DEPTH {
            return Err(WeightError::Parse(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        let leaves = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| WeightError::Parse(format!("bad value {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if leaves.len() != 1 << depth {
            return Err(WeightError::Parse(format!(
                "expected {} values for depth {depth}, found {}",
                1usize << depth,
                leaves.len()
            )));
        }
        Self::from_leaves(leaves).map_err(|e| WeightError::Parse(e.to_string()))
    }
}

/// `2^n int_{I_k} t^delta dt` on the leaves of depth `n`.
pub fn power_weight_family(delta: f64, depth: usize) -> Result<WeightTree> {
    if !(delta > -1.0 && delta.is_finite()) {
        return Err(WeightError::Domain(format!("delta must exceed -1, got {delta}")));
    }
    let a = delta + 1.0;
    let n = 1usize << depth;
    // 2^n ((k+1)^a - k^a) 2^{-n a} / a, the difference written without
    // cancellation for small a.
    let scale = (n as f64).powf(1.0 - a) / a;
    let leaves = (0..n)
        .map(|k| {
            let diff = if k == 0 {
                1.0
            } else {
                let kf = k as f64;
                kf.powf(a) * (a * (1.0 / kf).ln_1p()).exp_m1()
            };
            scale * diff
        })
        .collect();
    WeightTree::from_leaves(leaves)
}

/// Leaves `exp(sigma Z)` with independent standard normal `Z`.
pub fn random_weight<R: Rng>(rng: &mut R, depth: usize, sigma: f64) -> Result<WeightTree> {
    let leaves = (0..1usize << depth)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (sigma * z).exp()
        })
        .collect();
    WeightTree::from_leaves(leaves)
}

/// A random weight with values in `[eps, 1/eps]` and characteristic at most
/// `q`: a log-normal weight, clamped two-sidedly and then raised to the
/// largest power (found by bisection) keeping the characteristic below `q`.
pub fn random_weight_within<R: Rng>(
    rng: &mut R,
    depth: usize,
    q: f64,
    eps: f64,
) -> Result<WeightTree> {
    if !(q >= 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(WeightError::Domain(format!("need Q >= 1 and 0 < eps < 1, got {q}, {eps}")));
    }
    let w = random_weight(rng, depth, 1.5)?.truncate_two_sided(1.0 / eps)?;
    if w.a2_characteristic() <= q {
        return Ok(w);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if w.power(mid)?.a2_characteristic() <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    w.power(lo)
}

/// Deltas in `(-1, 0)` whose power weights of the given depth have
/// characteristics geometrically spaced between `q_lo` and `q_hi`.
pub fn deltas_for_characteristics(q_lo: f64, q_hi: f64, count: usize, depth: usize) -> Result<Vec<f64>> {
    if !(q_lo > 1.0 && q_hi >= q_lo) || count == 0 {
        return Err(WeightError::Domain(format!(
            "need 1 < q_lo <= q_hi and count >= 1, got {q_lo}, {q_hi}, {count}"
        )));
    }
    let q2 = |d: f64| power_weight_family(d, depth).map(|w| w.a2_characteristic());
    let top = q2(-1.0 + 1e-12)?;
    if top < q_hi {
        return Err(WeightError::Domain(format!(
            "depth {depth} reaches a characteristic of only {top} < {q_hi}"
        )));
    }
    (0..count)
        .map(|i| {
            let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            let target = (q_lo.ln() + t * (q_hi.ln() - q_lo.ln())).exp();
            // The characteristic decreases as delta increases towards 0.
            let (mut lo, mut hi) = (-1.0 + 1e-12, 0.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if q2(mid)? > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_weight_has_characteristic_one() {
        assert_eq!(WeightTree::constant(5, 3.0).unwrap().a2_characteristic(), 1.0);
    }

    #[test]
    fn two_leaf_example() {
        let w = WeightTree::from_leaves(vec![2.0, 0.5]).unwrap();
        assert_eq!(w.a2_characteristic(), 25.0 / 16.0);
        let t = w.truncate_above(1.0).unwrap();
        assert_eq!(t.leaves(), &[1.0, 0.5]);
        assert_eq!(t.a2_characteristic(), 9.0 / 8.0);
    }

    #[test]
    fn two_sided_at_one_is_constant() {
        let w = WeightTree::from_leaves(vec![2.0, 0.5, 7.0, 0.1]).unwrap();
        let t = w.truncate_two_sided(1.0).unwrap();
        assert!(t.leaves().iter().all(|&v| v == 1.0));
        assert!(w.truncate_two_sided(0.5).is_err());
    }

    #[test]
    fn power_weights() {
        let w = power_weight_family(1.0, 1).unwrap();
        assert!((w.leaves()[0] - 0.25).abs() < 1e-15);
        assert!((w.leaves()[1] - 0.75).abs() < 1e-15);
        let c = power_weight_family(0.0, 6).unwrap();
        assert!(c.leaves().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(power_weight_family(-1.0, 3).is_err());
    }

    #[test]
    fn text_round_trip() {
        let w = power_weight_family(-0.7, 4).unwrap();
        let back = WeightTree::from_text(&w.to_text()).unwrap();
        assert_eq!(w, back);
        assert!(WeightTree::from_text("depth 1\n1.0\n").is_err());
        assert!(WeightTree::from_text("depth 1\n1.0\n-2\n").is_err());
        assert!(WeightTree::from_text("deep 1\n1\n1\n").is_err());
    }

    #[test]
    fn invalid_leaves_are_rejected() {
        assert!(WeightTree::from_leaves(vec![1.0, 0.0]).is_err());
        assert!(WeightTree::from_leaves(vec![1.0, 1.0, 1.0]).is_err());
    }
}
