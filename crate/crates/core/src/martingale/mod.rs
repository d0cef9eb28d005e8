//! Dyadic martingales, weights along the filtration and the discrete
//! versions of the estimates.
//!
//! In discrete time every increment is a jump, so the split into continuous
//! and jump parts collapses and one-leg convexity of `B` is the only
//! mechanism the telescope needs. Norms are evaluated at the terminal level:
//! on a finite tree `sup_t ||X_t||` is attained there by conditional Jensen.

use rand::Rng;
use thiserror::Error;

use crate::bellman::BellmanError;
use crate::rng::substream;
use crate::weights::WeightError;

mod estimates;
mod projection;
mod sharpness;
mod telescope;
mod tree;

pub use estimates::{
    verify_bilinear_estimate, verify_main_theorem, BilinearReport, MainReport, C_TARGET,
    DUALITY_TOLERANCE,
};
pub use projection::{projection_consistency, ProjectionReport, ProjectionRow};
pub use sharpness::{
    sharpness_experiment, sharpness_to_csv, worst_ratio, SharpnessReport, SharpnessRow, RESTARTS,
};
pub use telescope::{anchor_sensitivity, bellman_telescope, TelescopeReport, LINEAR_TOLERANCE};
pub use tree::{
    bilinear_form, check_subordination, random_martingale_with, random_orthogonal, rotation_pair,
    terminal_pairing, transform, weighted_norm, DyadicMartingale, Multiplier, Subordination,
    MAX_DEPTH, SUBORDINATION_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("subordination violated at node ({level}, {index})")]
    Subordination { level: usize, index: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Bellman(#[from] BellmanError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Which `lambda` the bilinear estimate reports as its optimized bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaStrategy {
    /// `lambda^2 = (E G)^{1/2} (E F)^{-1/2}`.
    #[default]
    ClosedForm,
    /// Golden-section minimization over `log lambda`.
    Search,
}

impl BilinearReport {
    pub fn lambda_bound(&self, strategy: LambdaStrategy) -> f64 {
        match strategy {
            LambdaStrategy::ClosedForm => self.rhs_at_lambda,
            LambdaStrategy::Search => self.rhs_searched,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub depth: usize,
    pub dim: usize,
    pub seed: u64,
    /// Paths drawn when an expectation is sampled instead of enumerated.
    pub num_paths: usize,
    pub lambda_strategy: LambdaStrategy,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            depth: 10,
            dim: 2,
            seed: 0,
            num_paths: 1000,
            lambda_strategy: LambdaStrategy::ClosedForm,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth > MAX_DEPTH {
            return Err(SimError::InvalidInput(format!(
                "depth {} exceeds {MAX_DEPTH}",
                self.depth
            )));
        }
        if self.dim == 0 {
            return Err(SimError::InvalidInput("dimension must be positive".into()));
        }
        Ok(())
    }
}

/// Martingale with i.i.d. standard normal leaf coordinates, seeded by `cfg`.
pub fn random_martingale(cfg: &SimConfig) -> Result<DyadicMartingale> {
    cfg.validate()?;
    random_martingale_with(&mut substream(cfg.seed, 0), cfg.depth, cfg.dim)
}

/// Mean of a leaf quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Exact expectation over equally likely leaves.
pub fn exhaustive_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Expectation estimated from `cfg.num_paths` uniformly drawn root-to-leaf
/// paths.
pub fn sampled_mean(values: &[f64], cfg: &SimConfig) -> Result<Estimate> {
    if values.is_empty() || cfg.num_paths < 2 {
        return Err(SimError::InvalidInput(
            "need leaves and at least two paths".into(),
        ));
    }
    let mut rng = substream(cfg.seed, 0xA7);
    let draws: Vec<f64> = (0..cfg.num_paths)
        .map(|_| values[rng.random_range(0..values.len())])
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate {
        mean,
        std_error: (var / n).sqrt(),
    })
}
