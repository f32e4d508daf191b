//! Monte Carlo laboratory on top of [`convdiff`]: study configuration,
//! replicate scheduling, rate-slope fitting, CSV/SVG reporting and the
//! bump-alternative test-function generator.

pub mod config;
pub mod csvout;
pub mod slope;
pub mod study;
pub mod svg;

pub use config::StudyConfig;
pub use slope::fit_loglog_slope;
pub use study::{
    run_bandwidth_sweep, run_fisher_study, run_integrated_risk_study, run_rate_study,
    run_trajectory, LabError,
};

use convdiff::model::ThetaSpec;

/// The conservative bump alternative `θ(y) = c₄ h^β (∇V)((y-x)/h)` with
/// the smooth bump `V(y) = exp(-1/(1-|2y|²))` supported in [-1/2,1/2]^d:
/// an exactly-Hölder-β gradient field used as a hard test function.
pub fn make_bump_alternative(center: Vec<f64>, h: f64, beta: f64, c4: f64) -> ThetaSpec {
    ThetaSpec::Bump {
        center,
        bandwidth: h,
        beta,
        amplitude: c4,
    }
}

/// Replicate seed derivation: `master ⊕ mix(cell index, replicate index)`.
/// Index-local, so adding or removing other replicates never changes a
/// replicate's stream.
pub fn replicate_seed(master: u64, cell_idx: usize, rep_idx: usize) -> u64 {
    master ^ splitmix64(((cell_idx as u64) << 32) | rep_idx as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
