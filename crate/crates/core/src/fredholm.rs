//! Both sides of the conjectural Fredholm determinant identity
//! `E[1/(zeta q^{x_n(t)+n}; q)_inf] = det(I + K_zeta)` for unit speeds.
//!
//! The kernel's Mellin-Barnes integral runs over `Re s = 1/2`, truncated where
//! `pi / sin(-pi s)` has decayed below `1e-14`. The determinant is a Nystrom
//! discretization on a small circle `C_1` around 1 with weights `dw / (2 pi i)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::evolve::exact_moment;
use crate::model::qpoch::{qpoch, qpoch_inf_log, qpoch_inf_recip, DEFAULT_TOL};
use crate::model::{MultiIndex, Params};
use crate::{Error, Result};

/// Discretization of `K_zeta` for the particle `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub params: Params,
    pub zeta: Complex64,
    pub n: usize,
    pub t: f64,
    /// Half-length `T` of the truncated line `s = 1/2 + i y`, `|y| <= T`.
    pub mb_truncation: f64,
    pub mb_points: usize,
    pub nystrom_points: usize,
    pub c1_radius: f64,
}

impl KernelSpec {
    /// Default discretization: `T = 32.3 / (pi - |arg(-zeta)|)` (so the sine
    /// factor is below `1e-14` at the ends), 2001 line nodes, 64 circle nodes
    /// and `C_1` radius `0.5 (1 - sqrt q) / (1 + sqrt q)`.
    pub fn new(params: &Params, n: usize, t: f64, zeta: Complex64) -> Result<Self> {
        let arg = (-zeta).arg().abs();
        let margin = (PI - arg).max(1e-3);
        let sq = params.q.sqrt();
        let spec = KernelSpec {
            params: params.clone(),
            zeta,
            n,
            t,
            mb_truncation: 32.3 / margin,
            mb_points: 2001,
            nystrom_points: 64,
            c1_radius: 0.5 * (1.0 - sq) / (1.0 + sq),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.speeds.iter().any(|&a| a != 1.0) {
            return Err(Error::InvalidParams("the Fredholm kernel is stated for unit speeds".into()));
        }
        if self.n == 0 || self.n > self.params.n_particles() {
            return Err(Error::InvalidParams(format!("particle index {} outside 1..={}", self.n, self.params.n_particles())));
        }
        if !(self.t >= 0.0) {
            return Err(Error::NegativeTime(self.t));
        }
        if self.zeta.im == 0.0 && self.zeta.re > 0.0 {
            return Err(Error::ZetaOnPositiveAxis);
        }
        let r = self.c1_radius;
        if !(r > 0.0 && self.params.q.sqrt() * (1.0 + r) < 1.0 - r) {
            return Err(Error::InvalidParams(format!("C_1 radius {r} lets q^s w meet C_1")));
        }
        if self.mb_points < 3 || self.nystrom_points < 4 || !(self.mb_truncation > 0.0) {
            return Err(Error::InvalidParams("discretization too coarse".into()));
        }
        Ok(())
    }

    fn log_g(&self, w: Complex64) -> Complex64 {
        let p = &self.params;
        self.n as f64 * qpoch_inf_log(w, p.q, DEFAULT_TOL) + self.t * (p.right * w + p.left / w)
    }

    /// Line nodes `s_m` with weights `c_m = (2 pi i)^{-1} ds * pi/sin(-pi s) * (-zeta)^s`.
    fn line(&self) -> Vec<(Complex64, Complex64)> {
        if self.zeta == Complex64::new(0.0, 0.0) {
            return Vec::new();
        }
        let big_t = self.mb_truncation;
        let m = self.mb_points;
        let h = 2.0 * big_t / (m - 1) as f64;
        let log_mz = (-self.zeta).ln();
        (0..m)
            .map(|i| {
                let y = -big_t + h * i as f64;
                let s = Complex64::new(0.5, y);
                let end = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
                let c = PI / (-PI * s).sin() * (s * log_mz).exp() * (end * h / (2.0 * PI));
                (s, c)
            })
            .collect()
    }

    fn circle(&self) -> Vec<(Complex64, Complex64)> {
        let p = self.nystrom_points;
        (0..p)
            .map(|j| {
                let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / p as f64);
                // dw / (2 pi i) = r e^{i theta} d theta / (2 pi)
                (1.0 + self.c1_radius * e, self.c1_radius * e / p as f64)
            })
            .collect()
    }
}

/// `K_zeta(w, w')` by the trapezoid rule on the truncated line.
pub fn kernel_eval(spec: &KernelSpec, w: Complex64, w2: Complex64) -> Result<Complex64> {
    spec.validate()?;
    let lg = spec.log_g(w);
    let q = spec.params.q;
    Ok(spec
        .line()
        .into_iter()
        .map(|(s, c)| {
            let qs = (s * q.ln()).exp();
            c * (spec.log_g(qs * w) - lg).exp() / (qs * w - w2)
        })
        .sum())
}

/// Nystrom approximation of `det(I + K_zeta)`.
pub fn fredholm_det(spec: &KernelSpec) -> Result<Complex64> {
    spec.validate()?;
    let line = spec.line();
    let nodes = spec.circle();
    let p = nodes.len();
    let q = spec.params.q;
    let qs: Vec<Complex64> = line.iter().map(|(s, _)| (s * q.ln()).exp()).collect();
    let mut k = DMatrix::<Complex64>::identity(p, p);
    for (i, &(wi, _)) in nodes.iter().enumerate() {
        let lg = spec.log_g(wi);
        let coef: Vec<(Complex64, Complex64)> = line
            .iter()
            .zip(&qs)
            .map(|(&(_, c), &qsv)| (qsv * wi, c * (spec.log_g(qsv * wi) - lg).exp()))
            .collect();
        for (j, &(wj, dw)) in nodes.iter().enumerate() {
            let v: Complex64 = coef.iter().map(|&(x, c)| c / (x - wj)).sum();
            k[(i, j)] += v * dw;
        }
    }
    Ok(k.determinant())
}

/// Exact `E[1/(zeta q^{x_1(t)+1}; q)_inf]` using `x_1(t) + 1 = xi - eta` with
/// independent `xi ~ Poisson(R a_1 t)` and `eta ~ Poisson(L t / a_1)`.
/// Each Poisson law is cut where its remaining tail mass is below `tail_tol`.
pub fn qlaplace_exact_n1(params: &Params, t: f64, zeta: Complex64, tail_tol: f64) -> Result<Complex64> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if zeta.im == 0.0 && zeta.re > 0.0 {
        return Err(Error::ZetaOnPositiveAxis);
    }
    let a = params.speed(1);
    let xi = poisson_pmf(params.right * a * t, tail_tol);
    let eta = poisson_pmf(params.left / a * t, tail_tol);
    let q = params.q;
    let mut total = Complex64::new(0.0, 0.0);
    for (i, &pi) in xi.iter().enumerate() {
        for (j, &pj) in eta.iter().enumerate() {
            let w = pi * pj;
            if w == 0.0 {
                continue;
            }
            let m = i as i64 - j as i64;
            total += w * qpoch_inf_recip(zeta * q.powf(m as f64), q, DEFAULT_TOL);
        }
    }
    Ok(total)
}

fn poisson_pmf(lambda: f64, tail_tol: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![1.0];
    }
    let mut out = Vec::new();
    // start from the log-pmf so large means do not underflow e^{-lambda}
    let mut k = 0usize;
    let mut cum = 0.0;
    loop {
        let lp = -lambda + k as f64 * lambda.ln() - ln_factorial(k);
        let p = lp.exp();
        out.push(p);
        cum += p;
        if k as f64 > lambda && 1.0 - cum < tail_tol {
            break;
        }
        if k > 10_000 + (20.0 * lambda) as usize {
            break;
        }
        k += 1;
    }
    out
}

fn ln_factorial(k: usize) -> f64 {
    statrs::function::factorial::ln_factorial(k as u64)
}

/// One line of the divergent series table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRow {
    pub k: usize,
    /// `E q^{k (x_n(t) + n)}`.
    pub moment: f64,
    /// `|zeta|^k moment / (q; q)_k`.
    pub term: f64,
    /// `|zeta|^k e^{-R a_1 t - L t / a_1} e^{L t q^{-k} / a_1}`, the growth lemma floor with the constant from its proof.
    pub lemma_floor: f64,
}

/// Terms of `sum_k zeta^k E(q^{k(x_n(t)+n)}) / (q;q)_k` for `k = 0..=kmax`.
pub fn divergence_demo(params: &Params, n_index: usize, t: f64, zeta_abs: f64, kmax: usize) -> Result<Vec<DivergenceRow>> {
    params.validate()?;
    let np = params.n_particles();
    if n_index == 0 || n_index > np {
        return Err(Error::InvalidParams(format!("particle index {n_index} outside 1..={np}")));
    }
    let q = params.q;
    let a1 = params.speed(1);
    let c = (-params.right * a1 * t - params.left / a1 * t).exp();
    let mut rows = vec![DivergenceRow { k: 0, moment: 1.0, term: 1.0, lemma_floor: 1.0 }];
    for k in 1..=kmax {
        let moment = exact_moment(params, &MultiIndex::weyl(vec![n_index; k], np)?, t)?;
        let zk = zeta_abs.powi(k as i32);
        rows.push(DivergenceRow {
            k,
            moment,
            term: zk * moment / qpoch(q, q, k),
            lemma_floor: zk * c * (params.left / a1 * t * q.powi(-(k as i32))).exp(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_zeta() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        let s = KernelSpec::new(&p, 1, 1.0, c(0.0, 0.0)).unwrap();
        assert_eq!(kernel_eval(&s, c(1.1, 0.0), c(0.9, 0.1)).unwrap(), c(0.0, 0.0));
        assert!((fredholm_det(&s).unwrap() - 1.0).norm() < 1e-15);
        assert!((qlaplace_exact_n1(&p, 1.0, c(0.0, 0.0), 1e-16).unwrap() - 1.0).norm() < 1e-14);
    }

    #[test]
    fn zero_time() {
        let p = Params::uniform(0.5, 1.0, 1.0, 2).unwrap();
        let z = c(-0.6, 0.3);
        let target = qpoch_inf_recip(z, 0.5, DEFAULT_TOL);
        let s = KernelSpec::new(&p, 2, 0.0, z).unwrap();
        assert!((fredholm_det(&s).unwrap() - target).norm() < 1e-6);
        assert!((qlaplace_exact_n1(&p, 0.0, z, 1e-16).unwrap() - target).norm() < 1e-15);
    }

    #[test]
    fn matches_skellam_oracle() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        let z = c(-0.3, 0.0);
        let s = KernelSpec::new(&p, 1, 0.5, z).unwrap();
        let d = fredholm_det(&s).unwrap();
        let e = qlaplace_exact_n1(&p, 0.5, z, 1e-16).unwrap();
        assert!((d - e).norm() < 1e-4, "{d} vs {e}");
    }

    #[test]
    fn sine_factor_has_decayed_at_truncation() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        let s = KernelSpec::new(&p, 1, 0.5, c(-0.5, 0.5)).unwrap();
        let line = s.line();
        let peak = line.iter().map(|x| x.1.norm()).fold(0.0, f64::max);
        assert!(line[0].1.norm() * 2.0 < 1e-14 * peak);
    }

    #[test]
    fn kernel_refinement() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        let s = KernelSpec::new(&p, 1, 0.5, c(-0.7, 0.2)).unwrap();
        let mut s2 = s.clone();
        s2.mb_points = 2 * s.mb_points - 1;
        let (w, w2) = (c(1.0 + s.c1_radius, 0.0), c(1.0, s.c1_radius));
        let a = kernel_eval(&s, w, w2).unwrap();
        let b = kernel_eval(&s2, w, w2).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        assert_eq!(KernelSpec::new(&p, 1, 1.0, c(0.3, 0.0)), Err(Error::ZetaOnPositiveAxis));
        let p2 = Params::new(0.5, 1.0, 1.0, vec![2.0]).unwrap();
        assert!(KernelSpec::new(&p2, 1, 1.0, c(-0.3, 0.0)).is_err());
    }

    #[test]
    fn divergence_table() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        let rows = divergence_demo(&p, 1, 1.0, 0.5, 8).unwrap();
        assert_eq!(rows[0].term, 1.0);
        for r in &rows[1..] {
            assert!(r.moment >= r.lemma_floor / 0.5f64.powi(r.k as i32) * 0.999_999);
        }
        let p0 = Params::uniform(0.5, 1.0, 0.0, 1).unwrap();
        let rows = divergence_demo(&p0, 1, 1.0, 0.5, 8).unwrap();
        assert!(rows.windows(2).all(|w| w[1].term < w[0].term));
    }
}
