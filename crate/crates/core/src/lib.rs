//! Explicit Bellman function for the weighted L^2 estimate of differentially
//! subordinate martingales, with sampled certification of its properties and
//! simulations on dyadic filtrations.
//!
//! - [`bellman`]: the function `B(x, y, r, s)`, its components, derivatives and
//!   the mollified variant.
//! - [`certify`]: sampled checks of size, convexity, one-leg convexity,
//!   ellipse parameters and continuity across cuts.
//! - [`weights`]: weights on dyadic trees, their characteristic and truncation.
//! - [`martingale`]: dyadic martingales, subordination, the telescoping
//!   argument and the sharpness experiment.

pub mod bellman;
pub mod certify;
pub mod golden;
pub mod jet;
pub mod martingale;
pub mod rng;
pub mod weights;

pub use bellman::{
    domain_check, eval_b, BellmanConfig, BellmanError, Coefficients, DomainFlags, Evaluation,
    Perturbation, Region, StatePoint,
};

// The book's listings run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/bellman.md")]
    mod bellman {}
    #[doc = include_str!("../../../book/src/certification.md")]
    mod certification {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/martingales.md")]
    mod martingales {}
    #[doc = include_str!("../../../book/src/sharpness.md")]
    mod sharpness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
