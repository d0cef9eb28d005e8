//! Sampled certification of the properties of `B`.
//!
//! Every check samples points of `D_Q^{eps, ell}` (and directions or partner
//! points) from per-sample substreams of one seed, so reports do not depend on
//! the number of worker threads. Margins are normalized by the size of the
//! quantities they compare; a check passes when its smallest normalized
//! margin is at least `-tolerance`.

mod checks;
mod cuts;
mod report;
mod sampling;
mod tau;

pub use checks::{
    check_hessian_lower, check_one_leg, check_partial_xx_bound, check_partial_yy_bound,
    check_size, cut_distance, hessian_margin, one_leg_margin, size_margin, structured_directions,
    xx_margin, yy_margin, Margin,
};
pub use cuts::{
    check_c1_across_cuts, C1Report, Cut, CutReport, CUT_DELTAS, MIN_DECAY_SLOPE,
};
pub use report::{
    run_certification, tau_rows_to_csv, tau_sweep, to_csv, to_text, CertReport, CheckRecord,
    TauRow, TauStats, CUT_SAMPLES, MARGIN_TOLERANCE, RANDOM_DIRECTIONS, REGULARIZED_SAMPLES,
};
pub use sampling::{
    random_perturbation, sample_domain, sample_point, unit_vector, PointDistribution, SampleSpec,
};
pub use tau::{
    ellipse_margin, extract_tau, extract_tau_from, tau_search_interval, TauResult, TAU_TOLERANCE,
};
