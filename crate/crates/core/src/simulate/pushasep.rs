use rand::Rng;
use rand_distr::Exp1;

use super::queue::ClockQueue;
use super::trajectory_rng;
use crate::model::{apply_move, Move, Params, ParticleConfig};
use crate::{Error, Result};

/// Time-ordered events of one run, replayable from `initial`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: ParticleConfig,
    pub horizon: f64,
    pub events: Vec<(f64, Move)>,
}

impl Trajectory {
    pub fn replay(&self) -> ParticleConfig {
        self.events.iter().fold(self.initial.clone(), |c, &(_, mv)| apply_move(&c, mv))
    }

    /// Configuration at time `s <= horizon`.
    pub fn at(&self, s: f64) -> ParticleConfig {
        self.events
            .iter()
            .take_while(|e| e.0 <= s)
            .fold(self.initial.clone(), |c, &(_, mv)| apply_move(&c, mv))
    }
}

fn right_rate(params: &Params, x: &[i64], i: usize) -> f64 {
    // particle i is 0-based here
    let free = if i == 0 { 1.0 } else { 1.0 - params.q.powf((x[i - 1] - x[i] - 1) as f64) };
    params.right * params.speeds[i] * free
}

/// Runs the dynamics on `x` in place up to time `t`, reporting each event.
///
/// Next-reaction scheme: one clock per particle for right jumps and one for
/// left initiations. After an event only the right clocks whose gap changed
/// are rescaled; left clocks have constant rates.
pub fn run_pushasep<R: Rng, F: FnMut(f64, Move)>(params: &Params, x: &mut [i64], t: f64, rng: &mut R, mut on_event: F) {
    let n = x.len();
    let draw = |rng: &mut R, rate: f64, now: f64| {
        if rate > 0.0 {
            now + rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        }
    };
    let mut rates: Vec<f64> = (0..n).map(|i| right_rate(params, x, i)).collect();
    let left: Vec<f64> = (0..n).map(|i| params.left / params.speeds[i]).collect();
    let mut times = Vec::with_capacity(2 * n);
    for &r in &rates {
        times.push(draw(rng, r, 0.0));
    }
    for &l in &left {
        times.push(draw(rng, l, 0.0));
    }
    let mut queue = ClockQueue::new(times);
    loop {
        let (clock, now) = queue.peek();
        if now > t {
            break;
        }
        let (mv, affected) = if clock < n {
            let i = clock;
            x[i] += 1;
            (Move::RightJump { i: i + 1 }, [i, i + 1])
        } else {
            let i = clock - n;
            let mut j = i;
            // pre-move gaps decide the cascade
            while j + 1 < n {
                let gap = x[j] - x[j + 1] - 1;
                if gap == 0 || rng.random::<f64>() < params.q.powf(gap as f64) {
                    j += 1;
                } else {
                    break;
                }
            }
            for v in &mut x[i..=j] {
                *v -= 1;
            }
            (Move::LeftBlock { i: i + 1, j: j + 1 }, [i, j + 1])
        };
        on_event(now, mv);
        queue.update(clock, draw(rng, if clock < n { right_rate(params, x, clock) } else { left[clock - n] }, now));
        if clock < n {
            rates[clock] = right_rate(params, x, clock);
        }
        for &a in &affected {
            if a >= n || a == clock {
                continue;
            }
            let new = right_rate(params, x, a);
            let old = rates[a];
            if new == old {
                continue;
            }
            let next = if old > 0.0 && new > 0.0 {
                let tf = queue.time(a);
                now + (tf - now) * old / new
            } else {
                draw(rng, new, now)
            };
            rates[a] = new;
            queue.update(a, next);
        }
    }
}

fn check(params: &Params, x0: &ParticleConfig, t: f64) -> Result<()> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if x0.len() != params.n_particles() {
        return Err(Error::InvalidConfig(format!("{} positions for {} speeds", x0.len(), params.n_particles())));
    }
    Ok(())
}

/// Configuration at time `t`, deterministic in `(params, x0, t, seed)`.
pub fn sample_pushasep(params: &Params, x0: &ParticleConfig, t: f64, seed: u64) -> Result<ParticleConfig> {
    check(params, x0, t)?;
    let mut rng = trajectory_rng(seed, 0);
    let mut x = x0.positions().to_vec();
    run_pushasep(params, &mut x, t, &mut rng, |_, _| {});
    ParticleConfig::new(x)
}

/// Same run as [`sample_pushasep`] with the full event list.
pub fn sample_pushasep_trajectory(params: &Params, x0: &ParticleConfig, t: f64, seed: u64) -> Result<Trajectory> {
    check(params, x0, t)?;
    let mut rng = trajectory_rng(seed, 0);
    let mut x = x0.positions().to_vec();
    let mut events = Vec::new();
    run_pushasep(params, &mut x, t, &mut rng, |s, mv| events.push((s, mv)));
    Ok(Trajectory { initial: x0.clone(), horizon: t, events })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_is_identity() {
        let p = Params::uniform(0.5, 1.0, 1.0, 3).unwrap();
        let x0 = ParticleConfig::step(3);
        assert_eq!(sample_pushasep(&p, &x0, 0.0, 1).unwrap(), x0);
        assert!(sample_pushasep(&p, &x0, -1.0, 1).is_err());
    }

    #[test]
    fn trajectory_is_consistent() {
        let p = Params::new(0.4, 1.5, 1.2, vec![1.0, 0.7, 1.3, 1.1, 0.9]).unwrap();
        let x0 = ParticleConfig::step(5);
        let tr = sample_pushasep_trajectory(&p, &x0, 5.0, 42).unwrap();
        assert!(!tr.events.is_empty());
        assert!(tr.events.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(tr.events.last().unwrap().0 <= 5.0);
        let mut c = x0.clone();
        for &(_, mv) in &tr.events {
            c = apply_move(&c, mv);
            assert!(c.positions().windows(2).all(|w| w[0] > w[1]));
        }
        assert_eq!(c, sample_pushasep(&p, &x0, 5.0, 42).unwrap());
        assert_eq!(tr.replay(), c);
    }
}
