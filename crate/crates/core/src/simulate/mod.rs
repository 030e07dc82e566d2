//! Exact event-driven simulation and Monte Carlo estimators.
//!
//! Every trajectory draws from its own ChaCha8 stream selected by
//! `(seed, trajectory index)`, and per-chunk accumulators are merged in chunk
//! order, so estimates do not depend on the number of threads.

mod array2d;
mod dual;
mod estimate;
mod pushasep;
mod queue;

pub use array2d::{sample_array2d, sample_array2d_with, InterlacingArray};
pub use dual::{sample_dual_weighted, sample_dual_weighted_with};
pub use estimate::{
    mc_moment, mc_moments, mc_moments_array2d, mc_observables, mc_qlaplace, moment_observable, ComplexEstimate,
    MomentEstimate, Welford,
};
pub use pushasep::{run_pushasep, sample_pushasep, sample_pushasep_trajectory, Trajectory};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for trajectory `index` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
