//! State spaces, moves and generators of the q-PushASEP and its dual.

mod dual;
mod moves;
pub mod qpoch;

pub use dual::{
    apply_generator_dual, apply_generator_dual_markov, dual_markov_transitions, exit_rate,
    observable_h, verify_duality_identity, DualTransition, DualityReport,
};
pub use moves::{apply_generator_pushasep, apply_move, enumerate_moves, Move, RatedMove};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Model parameters: `0 < q < 1`, right rate `R`, left rate `L`, speeds `a_i > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub q: f64,
    #[serde(rename = "R")]
    pub right: f64,
    #[serde(rename = "L")]
    pub left: f64,
    #[serde(rename = "a")]
    pub speeds: Vec<f64>,
}

impl Params {
    pub fn new(q: f64, right: f64, left: f64, speeds: Vec<f64>) -> Result<Self> {
        let p = Params { q, right, left, speeds };
        p.validate()?;
        Ok(p)
    }

    /// All speeds equal to one.
    pub fn uniform(q: f64, right: f64, left: f64, n_particles: usize) -> Result<Self> {
        Self::new(q, right, left, vec![1.0; n_particles])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidParams(format!("q = {} must lie in (0, 1)", self.q)));
        }
        if !(self.right >= 0.0 && self.right.is_finite()) {
            return Err(Error::InvalidParams(format!("R = {} must be finite and >= 0", self.right)));
        }
        if !(self.left >= 0.0 && self.left.is_finite()) {
            return Err(Error::InvalidParams(format!("L = {} must be finite and >= 0", self.left)));
        }
        if self.speeds.is_empty() {
            return Err(Error::InvalidParams("at least one particle is required".into()));
        }
        if let Some(a) = self.speeds.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParams(format!("speed {a} must be finite and > 0")));
        }
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.speeds.len()
    }

    /// Speed of particle `i` (1-based). Labels beyond `N` get the dummy speed 1.
    pub fn speed(&self, i: usize) -> f64 {
        assert!(i >= 1, "particle labels are 1-based");
        self.speeds.get(i - 1).copied().unwrap_or(1.0)
    }

    /// Same rates with the speed vector replaced.
    pub fn with_speeds(&self, speeds: Vec<f64>) -> Result<Self> {
        Self::new(self.q, self.right, self.left, speeds)
    }
}

/// Gap `x_{i-1} - x_i - 1` in front of a particle; the first particle has an infinite gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gap {
    Infinite,
    Finite(u64),
}

impl Gap {
    /// `q^gap`, with `q^infinity = 0`.
    pub fn qpow(self, q: f64) -> f64 {
        match self {
            Gap::Infinite => 0.0,
            Gap::Finite(g) => q.powf(g as f64),
        }
    }
}

/// Strictly decreasing positions `x_1 > x_2 > ... > x_N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct ParticleConfig(Vec<i64>);

impl ParticleConfig {
    pub fn new(x: Vec<i64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidConfig("empty configuration".into()));
        }
        if let Some(w) = x.windows(2).find(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "positions must be strictly decreasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(ParticleConfig(x))
    }

    /// Step initial condition `x_i = -i`.
    pub fn step(n_particles: usize) -> Self {
        assert!(n_particles >= 1);
        ParticleConfig((1..=n_particles as i64).map(|i| -i).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positions(&self) -> &[i64] {
        &self.0
    }

    /// Position of particle `i` (1-based).
    pub fn x(&self, i: usize) -> i64 {
        self.0[i - 1]
    }

    /// Gap in front of particle `i` (1-based).
    pub fn gap(&self, i: usize) -> Gap {
        if i == 1 {
            Gap::Infinite
        } else {
            Gap::Finite((self.0[i - 2] - self.0[i - 1] - 1) as u64)
        }
    }

    pub fn gaps(&self) -> Vec<Gap> {
        (1..=self.len()).map(|i| self.gap(i)).collect()
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [i64] {
        &mut self.0
    }
}

impl TryFrom<Vec<i64>> for ParticleConfig {
    type Error = Error;
    fn try_from(x: Vec<i64>) -> Result<Self> {
        Self::new(x)
    }
}

impl From<ParticleConfig> for Vec<i64> {
    fn from(c: ParticleConfig) -> Self {
        c.0
    }
}

/// Occupation vector `(y_0, y_1, ..., y_N)` of the dual process.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupationState(Vec<u32>);

impl OccupationState {
    pub fn new(y: Vec<u32>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::InvalidConfig(
                "an occupation vector needs entries for site 0 and at least one particle".into(),
            ));
        }
        Ok(OccupationState(y))
    }

    pub fn zeros(n_particles: usize) -> Self {
        OccupationState(vec![0; n_particles + 1])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn n_particles(&self) -> usize {
        self.0.len() - 1
    }

    /// Total number of dual particles `k = y_0 + ... + y_N`.
    pub fn level(&self) -> usize {
        self.0.iter().map(|&v| v as usize).sum()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    /// `y^{j,i}`: one dual particle moved from site `j` to site `i`.
    /// `None` when site `j` is empty.
    pub fn transfer(&self, j: usize, i: usize) -> Option<Self> {
        if self.0[j] == 0 {
            return None;
        }
        let mut y = self.0.clone();
        y[j] -= 1;
        y[i] += 1;
        Some(OccupationState(y))
    }

    /// Sort key for the triangular basis order: lexicographic in `(y_N, ..., y_0)`.
    pub fn basis_key(&self) -> Vec<u32> {
        self.0.iter().rev().copied().collect()
    }
}

/// Weakly decreasing multi-index `n_1 >= ... >= n_k` of particle labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    /// Validates membership in the Weyl chamber `max_label >= n_1 >= ... >= n_k >= 0`.
    pub fn weyl(n: Vec<usize>, max_label: usize) -> Result<Self> {
        let ok = !n.is_empty()
            && n.windows(2).all(|w| w[0] >= w[1])
            && n[0] <= max_label;
        if !ok {
            return Err(Error::NotInWeylChamber { n, max: max_label });
        }
        Ok(MultiIndex(n))
    }

    /// Any nonempty vector of labels, ordered or not (contour formulas accept these).
    pub fn unordered(n: Vec<usize>) -> Self {
        assert!(!n.is_empty());
        MultiIndex(n)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn is_weyl(&self, max_label: usize) -> bool {
        self.0.windows(2).all(|w| w[0] >= w[1]) && self.0.iter().all(|&m| m <= max_label)
    }

    /// Occupation vector `y_i = #{j : n_j = i}` for `N` particles.
    pub fn to_occupation(&self, n_particles: usize) -> Result<OccupationState> {
        if !self.is_weyl(n_particles) {
            return Err(Error::NotInWeylChamber { n: self.0.clone(), max: n_particles });
        }
        let mut y = vec![0u32; n_particles + 1];
        for &m in &self.0 {
            y[m] += 1;
        }
        Ok(OccupationState(y))
    }

    pub fn from_occupation(y: &OccupationState) -> Self {
        let mut n = Vec::with_capacity(y.level());
        for (i, &c) in y.as_slice().iter().enumerate().rev() {
            n.extend(std::iter::repeat_n(i, c as usize));
        }
        MultiIndex(n)
    }

    /// Concatenation, re-sorted into the chamber.
    pub fn merged(&self, other: &MultiIndex) -> MultiIndex {
        let mut n = self.0.clone();
        n.extend_from_slice(&other.0);
        n.sort_unstable_by(|a, b| b.cmp(a));
        MultiIndex(n)
    }
}

/// `Y^N_k` in ascending lexicographic order of `(y_N, ..., y_0)`.
///
/// Every dual move sends a particle to a lower site, so in this order the
/// dual generator is lower triangular.
pub fn occupation_states(n_particles: usize, level: usize) -> Vec<OccupationState> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n_particles + 1];
    fill(&mut cur, 0, level as u32, &mut out);
    out.sort_by_key(|a| a.basis_key());
    out
}

fn fill(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<OccupationState>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(OccupationState(cur.clone()));
        return;
    }
    for v in 0..=left {
        cur[pos] = v;
        fill(cur, pos + 1, left - v, out);
    }
}

/// All of `W^{k,N}`, i.e. `N >= n_1 >= ... >= n_k >= 0`.
pub fn weyl_chamber(level: usize, n_particles: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(level);
    weyl_rec(level, n_particles, &mut cur, &mut out);
    out
}

fn weyl_rec(level: usize, hi: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if cur.len() == level {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for v in (0..=hi).rev() {
        cur.push(v);
        weyl_rec(level, v, cur, out);
        cur.pop();
    }
}

/// Number of states in `Y^N_k`, `binom(N + k, k)`.
pub fn level_dimension(n_particles: usize, level: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=level as u128 {
        c = c * (n_particles as u128 + i) / i;
    }
    c.min(usize::MAX as u128) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(Params::new(1.0, 1.0, 1.0, vec![1.0]).is_err());
        assert!(Params::new(0.5, -1.0, 1.0, vec![1.0]).is_err());
        assert!(Params::new(0.5, 1.0, 1.0, vec![]).is_err());
        assert!(Params::new(0.5, 1.0, 1.0, vec![0.0]).is_err());
        assert!(Params::new(0.5, 0.0, 1.0, vec![2.0]).is_ok());
    }

    #[test]
    fn config_must_decrease() {
        assert!(ParticleConfig::new(vec![0, 0]).is_err());
        assert!(ParticleConfig::new(vec![-2, 0]).is_err());
        let c = ParticleConfig::step(3);
        assert_eq!(c.positions(), &[-1, -2, -3]);
        assert_eq!(c.gaps(), vec![Gap::Infinite, Gap::Finite(0), Gap::Finite(0)]);
    }

    #[test]
    fn bijection_round_trip() {
        for n in weyl_chamber(3, 4) {
            let y = n.to_occupation(4).unwrap();
            assert_eq!(y.level(), 3);
            assert_eq!(MultiIndex::from_occupation(&y), n);
        }
        let y = MultiIndex::weyl(vec![2, 2, 1], 2).unwrap().to_occupation(2).unwrap();
        assert_eq!(y.as_slice(), &[0, 1, 2]);
        assert!(MultiIndex::weyl(vec![1, 2], 3).is_err());
        assert!(MultiIndex::weyl(vec![4, 1], 3).is_err());
    }

    #[test]
    fn enumeration_sizes_and_order() {
        for n in 1..=4 {
            for k in 0..=4 {
                let states = occupation_states(n, k);
                assert_eq!(states.len(), level_dimension(n, k));
                assert_eq!(weyl_chamber(k.max(1), n).len(), level_dimension(n, k.max(1)));
                for w in states.windows(2) {
                    assert!(w[0].basis_key() < w[1].basis_key());
                }
            }
        }
    }
}
