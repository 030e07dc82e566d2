use serde::{Deserialize, Serialize};

use super::{Params, ParticleConfig};

/// A transition of the particle system. Labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    /// Particle `i` moves one step right.
    RightJump { i: usize },
    /// Particles `i..=j` each move one step left (particle `i` initiated, the rest were pushed).
    LeftBlock { i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatedMove {
    pub mv: Move,
    pub rate: f64,
}

/// All moves with positive rate out of `cfg`.
///
/// `LeftBlock(i, j)` has rate `(L/a_i) q^{x_i - x_j - (j - i)} (1 - q^{gap_{j+1}})`:
/// particle `i` initiates, each following particle is pushed with probability
/// `q^{gap}` and the cascade stops at `j`.
pub fn enumerate_moves(params: &Params, cfg: &ParticleConfig) -> Vec<RatedMove> {
    let n = cfg.len();
    let q = params.q;
    let mut out = Vec::new();
    for i in 1..=n {
        let rate = params.right * params.speed(i) * (1.0 - cfg.gap(i).qpow(q));
        if rate > 0.0 {
            out.push(RatedMove { mv: Move::RightJump { i }, rate });
        }
    }
    if params.left > 0.0 {
        for i in 1..=n {
            let base = params.left / params.speed(i);
            let mut chain = 1.0;
            for j in i..=n {
                if j > i {
                    chain *= cfg.gap(j).qpow(q);
                }
                let stop = if j == n { 1.0 } else { 1.0 - cfg.gap(j + 1).qpow(q) };
                let rate = base * chain * stop;
                if rate > 0.0 {
                    out.push(RatedMove { mv: Move::LeftBlock { i, j }, rate });
                }
                if chain == 0.0 {
                    break;
                }
            }
        }
    }
    out
}

pub fn apply_move(cfg: &ParticleConfig, mv: Move) -> ParticleConfig {
    let mut next = cfg.clone();
    let x = next.positions_mut();
    match mv {
        Move::RightJump { i } => x[i - 1] += 1,
        Move::LeftBlock { i, j } => {
            for v in &mut x[i - 1..j] {
                *v -= 1;
            }
        }
    }
    next
}

/// `(L^{qP} f)(x) = sum over moves of rate * (f(x') - f(x))`.
pub fn apply_generator_pushasep<F>(params: &Params, cfg: &ParticleConfig, f: F) -> f64
where
    F: Fn(&ParticleConfig) -> f64,
{
    let f0 = f(cfg);
    enumerate_moves(params, cfg)
        .into_iter()
        .map(|m| m.rate * (f(&apply_move(cfg, m.mv)) - f0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    fn rates(params: &Params, cfg: &ParticleConfig) -> HashMap<Move, f64> {
        enumerate_moves(params, cfg).into_iter().map(|m| (m.mv, m.rate)).collect()
    }

    #[test]
    fn step_two_particles() {
        let p = Params::uniform(0.5, 1.3, 0.7, 2).unwrap();
        let r = rates(&p, &ParticleConfig::step(2));
        assert_eq!(r.len(), 3);
        assert_relative_eq!(r[&Move::RightJump { i: 1 }], 1.3);
        assert_relative_eq!(r[&Move::LeftBlock { i: 1, j: 2 }], 0.7);
        assert_relative_eq!(r[&Move::LeftBlock { i: 2, j: 2 }], 0.7);
    }

    #[test]
    fn unit_gap_two_particles() {
        let (q, rr, l) = (0.5, 1.3, 0.7);
        let p = Params::uniform(q, rr, l, 2).unwrap();
        let r = rates(&p, &ParticleConfig::new(vec![0, -2]).unwrap());
        assert_relative_eq!(r[&Move::RightJump { i: 1 }], rr);
        assert_relative_eq!(r[&Move::RightJump { i: 2 }], rr * (1.0 - q));
        assert_relative_eq!(r[&Move::LeftBlock { i: 1, j: 1 }], l * (1.0 - q));
        assert_relative_eq!(r[&Move::LeftBlock { i: 1, j: 2 }], l * q);
        assert_relative_eq!(r[&Move::LeftBlock { i: 2, j: 2 }], l);
    }

    #[test]
    fn left_rates_sum_to_initiation_rate() {
        let p = Params::new(0.4, 1.0, 2.0, vec![0.7, 1.5, 1.1, 0.9]).unwrap();
        let cfg = ParticleConfig::new(vec![5, 4, 1, 0]).unwrap();
        let r = rates(&p, &cfg);
        for i in 1..=4 {
            let s: f64 = (i..=4).filter_map(|j| r.get(&Move::LeftBlock { i, j })).sum();
            assert_relative_eq!(s, 2.0 / p.speed(i), max_relative = 1e-14);
        }
    }

    #[test]
    fn apply_moves() {
        let c = ParticleConfig::new(vec![3, 1, 0]).unwrap();
        assert_eq!(apply_move(&c, Move::RightJump { i: 2 }).positions(), &[3, 2, 0]);
        assert_eq!(apply_move(&c, Move::LeftBlock { i: 2, j: 3 }).positions(), &[3, 0, -1]);
    }
}
