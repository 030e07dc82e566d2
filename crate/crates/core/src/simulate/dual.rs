use rand::Rng;
use rand_distr::Exp1;

use super::trajectory_rng;
use crate::model::{dual_markov_transitions, exit_rate, OccupationState, Params};
use crate::{Error, Result};

/// Runs the dual Markov process from `y0` up to time `t` and returns the final
/// state with the weight `exp(int_0^t C(y(s)) ds)`.
pub fn sample_dual_weighted(params: &Params, y0: &OccupationState, t: f64, seed: u64) -> Result<(OccupationState, f64)> {
    let mut rng = trajectory_rng(seed, 0);
    sample_dual_weighted_with(params, y0, t, &mut rng)
}

pub fn sample_dual_weighted_with<R: Rng>(
    params: &Params,
    y0: &OccupationState,
    t: f64,
    rng: &mut R,
) -> Result<(OccupationState, f64)> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if y0.n_particles() != params.n_particles() {
        return Err(Error::InvalidConfig("occupation vector length does not match N + 1".into()));
    }
    let mut y = y0.clone();
    let mut now = 0.0;
    let mut log_weight = 0.0;
    loop {
        let moves = dual_markov_transitions(params, &y);
        let total: f64 = moves.iter().map(|m| m.rate).sum();
        let c = exit_rate(params, &y);
        let dt = if total > 0.0 { rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };
        if now + dt > t {
            log_weight += c * (t - now);
            break;
        }
        log_weight += c * dt;
        now += dt;
        let mut u = rng.random::<f64>() * total;
        let mut pick = moves[moves.len() - 1];
        for m in &moves {
            if u < m.rate {
                pick = *m;
                break;
            }
            u -= m.rate;
        }
        y = y.transfer(pick.from, pick.to).expect("transition from an occupied site");
    }
    Ok((y, log_weight.exp()))
}
