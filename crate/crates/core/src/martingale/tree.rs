use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Result, SimError};
use crate::weights::WeightTree;

/// Largest depth accepted by the exhaustive operations.
pub const MAX_DEPTH: usize = 20;

/// Relative slack of the subordination comparisons, which compare
/// increments recomputed from rounded node values.
pub const SUBORDINATION_TOLERANCE: f64 = 1e-12;

/// An `R^d`-valued martingale on the dyadic filtration of depth `n`.
///
/// Node `(k, j)` carries the conditional expectation on the dyadic interval
/// `[j 2^-k, (j + 1) 2^-k)`. Its children are `(k + 1, 2j)` and
/// `(k + 1, 2j + 1)`, equal to the parent plus and minus the Haar increment
/// of the node.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicMartingale {
    depth: usize,
    dim: usize,
    /// `levels[k]` holds the `2^k` node vectors of level `k`, concatenated.
    levels: Vec<Vec<f64>>,
}

impl DyadicMartingale {
    fn check_shape(depth: usize, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(SimError::InvalidInput("dimension must be >= 1".into()));
        }
        if depth > MAX_DEPTH {
            return Err(SimError::InvalidInput(format!(
                "depth {depth} exceeds {MAX_DEPTH}"
            )));
        }
        Ok(())
    }

    /// Builds the martingale closing at the given leaf vectors by averaging
    /// upwards.
    pub fn from_leaves(dim: usize, leaves: Vec<f64>) -> Result<Self> {
        if dim == 0 || leaves.len() % dim != 0 || !(leaves.len() / dim).is_power_of_two() {
            return Err(SimError::Shape(format!(
                "{} values do not form 2^n vectors of dimension {dim}",
                leaves.len()
            )));
        }
        let depth = (leaves.len() / dim).trailing_zeros() as usize;
        Self::check_shape(depth, dim)?;
        let mut levels = vec![leaves];
        for _ in 0..depth {
            let below = levels.last().unwrap();
            let mut up = Vec::with_capacity(below.len() / 2);
            for pair in below.chunks(2 * dim) {
                for c in 0..dim {
                    up.push(0.5 * (pair[c] + pair[dim + c]));
                }
            }
            levels.push(up);
        }
        levels.reverse();
        Ok(Self { depth, dim, levels })
    }

    /// Builds the martingale from its starting value and the Haar increments
    /// of every internal node, `increments[k]` holding level `k`.
    pub fn from_increments(root: Vec<f64>, increments: Vec<Vec<f64>>) -> Result<Self> {
        let dim = root.len();
        let depth = increments.len();
        Self::check_shape(depth, dim)?;
        let mut levels = vec![root];
        for (k, inc) in increments.iter().enumerate() {
            if inc.len() != (1 << k) * dim {
                return Err(SimError::Shape(format!(
                    "level {k} needs {} increment values, got {}",
                    (1usize << k) * dim,
                    inc.len()
                )));
            }
            let parent = &levels[k];
            let mut next = Vec::with_capacity(2 * parent.len());
            for j in 0..1usize << k {
                let p = &parent[j * dim..(j + 1) * dim];
                let h = &inc[j * dim..(j + 1) * dim];
                next.extend(p.iter().zip(h).map(|(a, b)| a + b));
                next.extend(p.iter().zip(h).map(|(a, b)| a - b));
            }
            levels.push(next);
        }
        Ok(Self { depth, dim, levels })
    }

    /// Martingale with every node equal to `c`.
    pub fn constant(depth: usize, c: Vec<f64>) -> Result<Self> {
        let dim = c.len();
        let leaves = (0..1usize << depth).flat_map(|_| c.iter().cloned()).collect();
        Self::from_leaves(dim, leaves)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at node `(level, index)`.
    pub fn node(&self, level: usize, index: usize) -> &[f64] {
        &self.levels[level][index * self.dim..(index + 1) * self.dim]
    }

    pub fn root(&self) -> &[f64] {
        self.node(0, 0)
    }

    /// All terminal values, concatenated.
    pub fn leaves(&self) -> &[f64] {
        &self.levels[self.depth]
    }

    pub fn leaf(&self, index: usize) -> &[f64] {
        self.node(self.depth, index)
    }

    /// Haar increment of internal node `(level, index)`: half the difference
    /// of its two children.
    pub fn increment(&self, level: usize, index: usize) -> Vec<f64> {
        let a = self.node(level + 1, 2 * index);
        let b = self.node(level + 1, 2 * index + 1);
        a.iter().zip(b).map(|(x, y)| 0.5 * (x - y)).collect()
    }

    /// Restriction to the first `m` coordinates.
    pub fn project(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.dim {
            return Err(SimError::InvalidInput(format!(
                "cannot project dimension {} onto {m}",
                self.dim
            )));
        }
        let levels = self
            .levels
            .iter()
            .map(|l| l.chunks(self.dim).flat_map(|v| v[..m].to_vec()).collect())
            .collect();
        Ok(Self {
            depth: self.depth,
            dim: m,
            levels,
        })
    }

    /// `lambda X`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            depth: self.depth,
            dim: self.dim,
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|v| v * lambda).collect())
                .collect(),
        }
    }

    /// Martingale closing at `X_n * w` leaf-wise.
    pub fn times_weight(&self, w: &WeightTree) -> Result<Self> {
        same_depth_weight(self, w)?;
        let d = self.dim;
        let leaves = self
            .leaves()
            .chunks(d)
            .zip(w.leaves())
            .flat_map(|(x, wi)| x.iter().map(move |v| v * wi).collect::<Vec<_>>())
            .collect();
        Self::from_leaves(d, leaves)
    }

    /// `E |X_n|^2 = |X_0|^2 + sum_k E |dX_k|^2` computed from the leaves.
    pub fn l2_norm_squared(&self) -> f64 {
        let n = (1usize << self.depth) as f64;
        self.leaves().iter().map(|v| v * v).sum::<f64>() / n
    }

    /// `|X_0|^2 + sum_k E |dX_k|^2` computed from the increments.
    pub fn bracket_expectation(&self) -> f64 {
        let mut acc = dot(self.root(), self.root());
        for k in 0..self.depth {
            let p = 0.5f64.powi(k as i32);
            for j in 0..1usize << k {
                let h = self.increment(k, j);
                acc += p * dot(&h, &h);
            }
        }
        acc
    }

    /// Text form: `depth n dim d`, then one node per line, level by level.
    pub fn to_text(&self) -> String {
        let mut s = format!("depth {} dim {}\n", self.depth, self.dim);
        for level in &self.levels {
            for v in level.chunks(self.dim) {
                let line: Vec<String> = v.iter().map(|t| t.to_string()).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    /// Reads [`to_text`](Self::to_text) output. Only the leaves determine
    /// the martingale; the internal nodes must match their averages.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| SimError::Parse("empty input".into()))?;
        let (depth, dim) = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["depth", n, "dim", d] => (
                n.parse::<usize>()
                    .map_err(|_| SimError::Parse(format!("bad depth {n:?}")))?,
                d.parse::<usize>()
                    .map_err(|_| SimError::Parse(format!("bad dim {d:?}")))?,
            ),
            _ => return Err(SimError::Parse(format!("bad header {header:?}"))),
        };
        Self::check_shape(depth, dim).map_err(|e| SimError::Parse(e.to_string()))?;
        let mut levels = Vec::with_capacity(depth + 1);
        let mut rows = lines;
        for k in 0..=depth {
            let mut level = Vec::with_capacity((1 << k) * dim);
            for _ in 0..1usize << k {
                let row = rows
                    .next()
                    .ok_or_else(|| SimError::Parse(format!("missing nodes on level {k}")))?;
                let vals = row
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| SimError::Parse(format!("bad value {t:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                if vals.len() != dim || vals.iter().any(|v| !v.is_finite()) {
                    return Err(SimError::Parse(format!("bad node {row:?} on level {k}")));
                }
                level.extend(vals);
            }
            levels.push(level);
        }
        if rows.next().is_some() {
            return Err(SimError::Parse("trailing data".into()));
        }
        let leaves = levels.pop().unwrap();
        let m = Self::from_leaves(dim, leaves)?;
        for (k, level) in levels.iter().enumerate() {
            for (a, b) in level.iter().zip(&m.levels[k]) {
                if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
                    return Err(SimError::Parse(format!(
                        "node values on level {k} are not averages of their children"
                    )));
                }
            }
        }
        Ok(m)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn same_shape(a: &DyadicMartingale, b: &DyadicMartingale) -> Result<()> {
    if a.depth != b.depth || a.dim != b.dim {
        return Err(SimError::Shape(format!(
            "depth/dim ({}, {}) vs ({}, {})",
            a.depth, a.dim, b.depth, b.dim
        )));
    }
    Ok(())
}

pub(crate) fn same_depth_weight(a: &DyadicMartingale, w: &WeightTree) -> Result<()> {
    if a.depth != w.depth() {
        return Err(SimError::Shape(format!(
            "martingale depth {} vs weight depth {}",
            a.depth,
            w.depth()
        )));
    }
    Ok(())
}

/// Leaves with independent standard normal coordinates.
pub fn random_martingale_with<R: Rng>(rng: &mut R, depth: usize, dim: usize) -> Result<DyadicMartingale> {
    DyadicMartingale::check_shape(depth, dim)?;
    let leaves = (0..(1usize << depth) * dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    DyadicMartingale::from_leaves(dim, leaves)
}

/// Predictable multipliers: `root` multiplies the starting value and
/// `nodes[k][j]` the increment of node `(k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    pub root: f64,
    pub nodes: Vec<Vec<f64>>,
}

impl Multiplier {
    pub fn constant(depth: usize, s: f64) -> Self {
        Self {
            root: s,
            nodes: (0..depth).map(|k| vec![s; 1 << k]).collect(),
        }
    }

    /// Independent uniform signs.
    pub fn random_signs<R: Rng>(rng: &mut R, depth: usize) -> Self {
        let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
        let root = sign();
        let nodes = (0..depth)
            .map(|k| (0..1usize << k).map(|_| sign()).collect())
            .collect();
        Self { root, nodes }
    }

    /// `(-1)^k` on level `k`.
    pub fn alternating(depth: usize) -> Self {
        Self {
            root: 1.0,
            nodes: (0..depth)
                .map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }; 1 << k])
                .collect(),
        }
    }
}

/// `dY = sigma dX` node-wise and `Y_0 = sigma_0 X_0`.
pub fn transform(x: &DyadicMartingale, sigma: &Multiplier) -> Result<DyadicMartingale> {
    if sigma.nodes.len() != x.depth
        || sigma.nodes.iter().enumerate().any(|(k, l)| l.len() != 1 << k)
    {
        return Err(SimError::Shape("multiplier does not match the tree".into()));
    }
    let all = std::iter::once(&sigma.root).chain(sigma.nodes.iter().flatten());
    if let Some(s) = all.clone().find(|s| !(s.abs() <= 1.0)) {
        return Err(SimError::InvalidInput(format!(
            "multiplier {s} exceeds 1 in absolute value"
        )));
    }
    let root = x.root().iter().map(|v| v * sigma.root).collect();
    let incs = (0..x.depth)
        .map(|k| {
            (0..1usize << k)
                .flat_map(|j| {
                    let s = sigma.nodes[k][j];
                    x.increment(k, j).into_iter().map(move |h| h * s)
                })
                .collect()
        })
        .collect();
    DyadicMartingale::from_increments(root, incs)
}

/// Uniformly random orthogonal `d x d` matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DMatrix::from_diagonal(&r.diagonal().map(|v| if v < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// `Y` whose starting value and every increment are those of `X` rotated by
/// an independent random orthogonal matrix per node. Subordinate to `X`
/// without being a multiplier transform when `d >= 2`.
pub fn rotation_pair<R: Rng>(rng: &mut R, x: &DyadicMartingale) -> Result<DyadicMartingale> {
    let d = x.dim;
    let rot = |rng: &mut R, v: &[f64]| -> Vec<f64> {
        let m = random_orthogonal(rng, d);
        (&m * nalgebra::DVector::from_column_slice(v)).iter().cloned().collect()
    };
    let root = rot(rng, x.root());
    let mut incs = Vec::with_capacity(x.depth);
    for k in 0..x.depth {
        let mut level = Vec::with_capacity((1 << k) * d);
        for j in 0..1usize << k {
            level.extend(rot(rng, &x.increment(k, j)));
        }
        incs.push(level);
    }
    DyadicMartingale::from_increments(root, incs)
}

/// Result of [`check_subordination`].
#[derive(Debug, Clone, PartialEq)]
pub struct Subordination {
    pub holds: bool,
    /// First violating node in level order; `(0, 0)` with `at_root` for the
    /// starting values.
    pub first_violation: Option<(usize, usize)>,
    pub at_root: bool,
}

fn dominated(y: f64, x: f64) -> bool {
    y <= x * (1.0 + SUBORDINATION_TOLERANCE) + f64::MIN_POSITIVE
}

/// `|Y_0| <= |X_0|` and `|dY| <= |dX|` at every node.
pub fn check_subordination(x: &DyadicMartingale, y: &DyadicMartingale) -> Result<Subordination> {
    if x.depth != y.depth {
        return Err(SimError::Shape(format!("depths {} and {}", x.depth, y.depth)));
    }
    if !dominated(norm(y.root()), norm(x.root())) {
        return Ok(Subordination {
            holds: false,
            first_violation: Some((0, 0)),
            at_root: true,
        });
    }
    for k in 0..x.depth {
        for j in 0..1usize << k {
            if !dominated(norm(&y.increment(k, j)), norm(&x.increment(k, j))) {
                return Ok(Subordination {
                    holds: false,
                    first_violation: Some((k, j)),
                    at_root: false,
                });
            }
        }
    }
    Ok(Subordination {
        holds: true,
        first_violation: None,
        at_root: false,
    })
}

/// `(E |X_n|^2 w_n)^{1/2}`.
pub fn weighted_norm(x: &DyadicMartingale, w: &WeightTree) -> Result<f64> {
    same_depth_weight(x, w)?;
    let n = w.leaves().len() as f64;
    let s: f64 = x
        .leaves()
        .chunks(x.dim)
        .zip(w.leaves())
        .map(|(v, wi)| dot(v, v) * wi)
        .sum();
    Ok((s / n).sqrt())
}

/// `|<Y_0, Z_0>| + E sum_k |<dY_k, dZ_k>|`.
pub fn bilinear_form(y: &DyadicMartingale, z: &DyadicMartingale) -> Result<f64> {
    same_shape(y, z)?;
    let mut acc = dot(y.root(), z.root()).abs();
    for k in 0..y.depth {
        let p = 0.5f64.powi(k as i32);
        for j in 0..1usize << k {
            acc += p * dot(&y.increment(k, j), &z.increment(k, j)).abs();
        }
    }
    Ok(acc)
}

/// `E <Y_n, Z_n>`.
pub fn terminal_pairing(y: &DyadicMartingale, z: &DyadicMartingale) -> Result<f64> {
    same_shape(y, z)?;
    let n = (1usize << y.depth) as f64;
    Ok(dot(y.leaves(), z.leaves()) / n)
}
