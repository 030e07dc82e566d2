//! Exact q-moments from the true evolution equation on the dual state space.
//!
//! For fixed level `k` the functions `h(t, y) = E_{x0}[H(x(t), y)]` solve the
//! finite linear system `dh/dt = A h` on `Y^N_k`, where `A` is the dual
//! generator with the rows of boundary states (`y_0 > 0`) set to zero.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::model::{
    apply_generator_dual, observable_h, occupation_states, level_dimension, MultiIndex,
    OccupationState, Params, ParticleConfig,
};
use crate::{Error, Result};

/// Default cap on `|Y^N_k|`.
pub const DEFAULT_DIM_CAP: usize = 20_000;

/// Largest dimension for which [`DualGenerator::propagator`] builds a dense matrix.
pub const DENSE_DIM_LIMIT: usize = 3_000;

/// Sparse lower-triangular dual generator on `Y^N_k`, rows indexed by `y`.
#[derive(Debug, Clone)]
pub struct DualGenerator {
    level: usize,
    basis: Vec<OccupationState>,
    index: HashMap<OccupationState, usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl DualGenerator {
    pub fn build(params: &Params, level: usize) -> Result<Self> {
        Self::build_with_cap(params, level, DEFAULT_DIM_CAP)
    }

    pub fn build_with_cap(params: &Params, level: usize, cap: usize) -> Result<Self> {
        params.validate()?;
        let n = params.n_particles();
        let dim = level_dimension(n, level);
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        let basis = occupation_states(n, level);
        let index: HashMap<_, _> = basis.iter().cloned().enumerate().map(|(i, y)| (y, i)).collect();
        let mut rows = Vec::with_capacity(dim);
        for (r, y) in basis.iter().enumerate() {
            if y.get(0) > 0 {
                rows.push(Vec::new());
                continue;
            }
            // Columns are read off by applying the generator to indicator functions.
            let mut cols: HashMap<usize, f64> = HashMap::new();
            let mut neighbours = vec![y.clone()];
            for i in 1..=n {
                if let Some(t) = y.transfer(i, i - 1) {
                    neighbours.push(t);
                }
                for j in i + 1..=n {
                    if let Some(t) = y.transfer(j, i) {
                        neighbours.push(t);
                    }
                }
            }
            for nb in neighbours {
                let c = index[&nb];
                if cols.contains_key(&c) {
                    continue;
                }
                let v = apply_generator_dual(params, y, |z| if *z == nb { 1.0 } else { 0.0 });
                if v != 0.0 {
                    debug_assert!(c <= r, "dual generator must be lower triangular");
                    cols.insert(c, v);
                }
            }
            let mut row: Vec<_> = cols.into_iter().collect();
            row.sort_unstable_by_key(|e| e.0);
            rows.push(row);
        }
        Ok(DualGenerator { level, basis, index, rows })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn basis(&self) -> &[OccupationState] {
        &self.basis
    }

    pub fn index_of(&self, y: &OccupationState) -> Option<usize> {
        self.index.get(y).copied()
    }

    /// Nonzero entries `(column, value)` of row `r`.
    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.rows.iter().enumerate().all(|(r, row)| row.iter().all(|&(c, _)| c <= r))
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(c, a)| a * v[c]).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.rows.iter().map(|row| row.iter().map(|e| e.1.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, a) in row {
                m[(r, c)] = a;
            }
        }
        m
    }

    /// `exp(tA) v` by a truncated Taylor series over substeps of norm at most one.
    pub fn expm_action(&self, t: f64, v: &[f64]) -> Vec<f64> {
        assert!(t >= 0.0);
        let norm = self.norm_inf() * t;
        let steps = norm.ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let mut cur = v.to_vec();
        for _ in 0..steps {
            let mut term = cur.clone();
            let mut sum = cur.clone();
            for j in 1..200 {
                term = self.matvec(&term);
                let f = h / j as f64;
                term.iter_mut().for_each(|x| *x *= f);
                sum.iter_mut().zip(&term).for_each(|(s, x)| *s += x);
                let tn = term.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let sn = sum.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if tn <= 1e-18 * sn || tn == 0.0 {
                    break;
                }
            }
            cur = sum;
        }
        cur
    }

    /// Dense `exp(tA)`.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<f64>> {
        if self.dim() > DENSE_DIM_LIMIT {
            return Err(Error::DimensionCap { dim: self.dim(), cap: DENSE_DIM_LIMIT });
        }
        Ok(expm(&(self.to_dense() * t)))
    }
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
///
/// The kernel is applied to `X / 2^s` with `||X / 2^s||_1 <= 1/2` and summed
/// until the next term is below `1e-18` relative, which puts the truncation
/// error far below the `1e-12` target before squaring.
pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm = (0..n).map(|c| x.column(c).abs().sum()).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let y = x / 2f64.powi(s);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for j in 1..60 {
        term = &term * &y / j as f64;
        sum += &term;
        if term.abs().max() <= 1e-18 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `h(t, .)` on `Y^N_k` for a deterministic initial configuration.
#[derive(Debug, Clone)]
pub struct TrueEvolution {
    pub t: f64,
    pub basis: Vec<OccupationState>,
    pub values: Vec<f64>,
    index: HashMap<OccupationState, usize>,
}

impl TrueEvolution {
    pub fn value(&self, y: &OccupationState) -> Option<f64> {
        self.index.get(y).map(|&i| self.values[i])
    }

    /// `m(t; n)`, i.e. `h(t, y(n))`.
    pub fn moment(&self, n: &MultiIndex) -> Result<f64> {
        let n_particles = self.basis[0].n_particles();
        let y = n.to_occupation(n_particles)?;
        self.value(&y).ok_or(Error::InvalidConfig(format!("level mismatch for {:?}", n.as_slice())))
    }
}

/// Solves the true evolution equation from `x0` at level `k` up to time `t`.
pub fn solve_true_evolution(
    params: &Params,
    x0: &ParticleConfig,
    level: usize,
    t: f64,
) -> Result<TrueEvolution> {
    if x0.len() != params.n_particles() {
        return Err(Error::InvalidConfig(format!(
            "{} positions for {} speeds",
            x0.len(),
            params.n_particles()
        )));
    }
    let q = params.q;
    solve_from(params, level, t, DEFAULT_DIM_CAP, |y| observable_h(q, x0, y))
}

/// Same, for an arbitrary initial function `h0 = E[H(x(0), .)]`.
pub fn solve_from<F>(params: &Params, level: usize, t: f64, cap: usize, h0: F) -> Result<TrueEvolution>
where
    F: Fn(&OccupationState) -> f64,
{
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let gen = DualGenerator::build_with_cap(params, level, cap)?;
    let v0: Vec<f64> = gen.basis().iter().map(|y| if y.get(0) > 0 { 0.0 } else { h0(y) }).collect();
    let values = gen.expm_action(t, &v0);
    Ok(TrueEvolution { t, index: gen.index.clone(), basis: gen.basis, values })
}

/// Exact `m(t; n)` for step initial data.
pub fn exact_moment(params: &Params, n: &MultiIndex, t: f64) -> Result<f64> {
    let np = params.n_particles();
    if !n.is_weyl(np) {
        return Err(Error::NotInWeylChamber { n: n.as_slice().to_vec(), max: np });
    }
    solve_true_evolution(params, &ParticleConfig::step(np), n.level(), t)?.moment(n)
}
