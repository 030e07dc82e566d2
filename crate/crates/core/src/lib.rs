//! q-PushASEP laboratory.
//!
//! Particles `x_1 > x_2 > ... > x_N` on `Z` jump right (blocked by the
//! particle ahead) and left (pushing the particles behind). The crate
//! computes the q-moments `E[prod_j q^{x_{n_j} + n_j}]` three independent
//! ways: Monte Carlo, the true-evolution ODE on the dual state space, and
//! nested contour integrals. It also carries the Fredholm determinant check,
//! the stationary gap measure, the two-dimensional array dynamics and the
//! weak-noise SDE hierarchy.
//!
//! Particle labels are 1-based throughout (`x_1` is the rightmost particle),
//! matching the usual notation; `y` occupation vectors are indexed `0..=N`
//! where site 0 is the absorbing virtual particle at `+infinity`.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod contour;
pub mod error;
pub mod evolve;
pub mod fredholm;
pub mod model;
pub mod scaling;
pub mod simulate;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{Gap, Move, MultiIndex, OccupationState, Params, ParticleConfig};
