use rand::Rng;
use rand_distr::Exp1;

use super::trajectory_rng;
use crate::model::{Params, ParticleConfig};
use crate::{Error, Result};

/// Triangular array `lambda^{(k)}_j`, `1 <= j <= k <= N`, stored as `levels[k-1][j-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterlacingArray {
    pub levels: Vec<Vec<i64>>,
}

impl InterlacingArray {
    /// Densely packed array, all zeros.
    pub fn packed(n: usize) -> Self {
        InterlacingArray { levels: (1..=n).map(|k| vec![0; k]).collect() }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `lambda^{(k)}_j`, 1-based.
    pub fn get(&self, k: usize, j: usize) -> i64 {
        self.levels[k - 1][j - 1]
    }

    /// `lambda^{(k)}_j <= lambda^{(k-1)}_{j-1} <= lambda^{(k)}_{j-1}` and
    /// `lambda^{(k)}_j >= lambda^{(k-1)}_j` wherever the entries exist.
    pub fn is_interlacing(&self) -> bool {
        for k in 2..=self.depth() {
            for j in 1..=k {
                let v = self.get(k, j);
                if j >= 2 && !(v <= self.get(k - 1, j - 1) && self.get(k - 1, j - 1) <= self.get(k, j - 1)) {
                    return false;
                }
                if j < k && v < self.get(k - 1, j) {
                    return false;
                }
            }
        }
        true
    }

    /// Leftmost particles in shifted coordinates, `x_n = lambda^{(n)}_n - n`.
    pub fn leftmost_marginal(&self) -> ParticleConfig {
        ParticleConfig::new((1..=self.depth()).map(|n| self.get(n, n) - n as i64).collect())
            .expect("interlacing keeps leftmost particles ordered")
    }
}

fn right_rate(params: &Params, a: &InterlacingArray, k: usize, j: usize) -> f64 {
    let q = params.q;
    let f = |e: i64| 1.0 - q.powf(e as f64);
    let v = a.get(k, j);
    let mut num = 1.0;
    if k >= 2 && j >= 2 {
        num *= f(a.get(k - 1, j - 1) - v);
    }
    if j < k {
        num *= f(v - a.get(k, j + 1) + 1);
    }
    let den = if j < k { f(v - a.get(k - 1, j) + 1) } else { 1.0 };
    params.right * params.speed(k) * num / den
}

fn push_right(a: &mut InterlacingArray, k: usize, j: usize) {
    let old = a.get(k, j);
    a.levels[k - 1][j - 1] += 1;
    // bottom-up chain of upper particles sitting on the same column
    if k < a.depth() && a.get(k + 1, j) == old {
        push_right(a, k + 1, j);
    }
}

fn push_left<R: Rng>(params: &Params, a: &mut InterlacingArray, k: usize, j: usize, rng: &mut R) {
    let q = params.q;
    let before = a.get(k, j);
    a.levels[k - 1][j - 1] -= 1;
    if k == a.depth() {
        return;
    }
    let up = k + 1;
    let lower_nb = a.get(up, j + 1);
    let ell = if lower_nb == before {
        1.0
    } else if j < k && lower_nb == a.get(k, j + 1) {
        0.0
    } else {
        let mut l = q.powf((before - lower_nb) as f64);
        if j < k {
            let below = a.get(k, j + 1);
            l *= (1.0 - q.powf((lower_nb - below) as f64)) / (1.0 - q.powf((before - below) as f64));
        }
        l
    };
    if rng.random::<f64>() < ell {
        push_left(params, a, up, j + 1, rng);
    } else {
        push_left(params, a, up, j, rng);
    }
}

/// Two-dimensional dynamics from the packed array up to time `t`.
pub fn sample_array2d(params: &Params, t: f64, seed: u64) -> Result<InterlacingArray> {
    let mut rng = trajectory_rng(seed, 0);
    sample_array2d_with(params, t, &mut rng)
}

/// Direct-method simulation; all rates are recomputed after each event,
/// which is cheap for the small arrays this is used on.
pub fn sample_array2d_with<R: Rng>(params: &Params, t: f64, rng: &mut R) -> Result<InterlacingArray> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let n = params.n_particles();
    let mut a = InterlacingArray::packed(n);
    let mut now = 0.0;
    let mut rates = Vec::with_capacity(n * (n + 1) / 2 + n);
    loop {
        rates.clear();
        for k in 1..=n {
            for j in 1..=k {
                rates.push((k, j, true, right_rate(params, &a, k, j)));
            }
            rates.push((k, k, false, params.left / params.speed(k)));
        }
        let total: f64 = rates.iter().map(|r| r.3).sum();
        if total <= 0.0 {
            break;
        }
        now += rng.sample::<f64, _>(Exp1) / total;
        if now > t {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = *rates.iter().rev().find(|r| r.3 > 0.0).unwrap();
        for r in &rates {
            if u < r.3 {
                pick = *r;
                break;
            }
            u -= r.3;
        }
        let (k, j, right, _) = pick;
        if right {
            push_right(&mut a, k, j);
        } else {
            push_left(params, &mut a, k, j, rng);
        }
        debug_assert!(a.is_interlacing(), "{a:?}");
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_start() {
        let p = Params::uniform(0.5, 1.0, 1.0, 3).unwrap();
        let a = sample_array2d(&p, 0.0, 3).unwrap();
        assert_eq!(a, InterlacingArray::packed(3));
        assert_eq!(a.leftmost_marginal(), ParticleConfig::step(3));
    }

    #[test]
    fn interlacing_preserved() {
        let p = Params::new(0.4, 1.3, 1.1, vec![1.0, 0.8, 1.2, 0.9]).unwrap();
        let mut rng = trajectory_rng(11, 0);
        for _ in 0..200 {
            let a = sample_array2d_with(&p, 2.0, &mut rng).unwrap();
            assert!(a.is_interlacing(), "{a:?}");
        }
    }
}
