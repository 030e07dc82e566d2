use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{run_pushasep, sample_array2d_with, trajectory_rng};
use crate::model::qpoch::{qpoch_inf_recip, DEFAULT_TOL};
use crate::model::{MultiIndex, Params, ParticleConfig};
use crate::{Error, Result};

/// Streaming mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Welford) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        self.n = n;
    }

    /// Sample variance with the `n - 1` denominator.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> MomentEstimate {
        MomentEstimate { mean: self.mean, stderr: self.stderr(), nsamples: self.n as usize }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(nsamples)`.
    pub stderr: f64,
    pub nsamples: usize,
}

impl MomentEstimate {
    /// `|mean - target| <= width * stderr`, with exact ties accepted when the stderr is 0.
    pub fn within(&self, target: f64, width: f64) -> bool {
        (self.mean - target).abs() <= width * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub nsamples: usize,
}

impl ComplexEstimate {
    pub fn within(&self, target: Complex64, width: f64) -> bool {
        (self.mean.re - target.re).abs() <= width * self.stderr_re
            && (self.mean.im - target.im).abs() <= width * self.stderr_im
    }
}

const CHUNK: usize = 512;

/// Runs `nsamples` independent trajectories, each filling `nobs` observables,
/// and returns one accumulator per observable.
///
/// Trajectory `i` uses stream `i` of `seed`; chunk accumulators are merged in
/// index order, so the result does not depend on the thread pool.
pub fn mc_observables<F>(nsamples: usize, seed: u64, nobs: usize, f: F) -> Result<Vec<Welford>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    if nsamples == 0 {
        return Err(Error::ZeroSamples);
    }
    let chunks = nsamples.div_ceil(CHUNK);
    let parts: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Welford::default(); nobs];
            let mut buf = vec![0.0; nobs];
            for i in c * CHUNK..((c + 1) * CHUNK).min(nsamples) {
                let mut rng = trajectory_rng(seed, i as u64);
                f(&mut rng, &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, &v)| a.push(v));
            }
            acc
        })
        .collect();
    let mut total = vec![Welford::default(); nobs];
    for p in &parts {
        total.iter_mut().zip(p).for_each(|(t, w)| t.merge(w));
    }
    Ok(total)
}

/// `prod_j q^{x_{n_j} + n_j}`; a zero label contributes the factor `q^{+infinity} = 0`.
pub fn moment_observable(q: f64, x: &[i64], n: &[usize]) -> f64 {
    let mut e = 0i64;
    for &m in n {
        if m == 0 {
            return 0.0;
        }
        e += x[m - 1] + m as i64;
    }
    q.powf(e as f64)
}

fn check_common(params: &Params, t: f64) -> Result<()> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(())
}

/// Joint q-moments for several indices from the same trajectories started at `x0`.
pub fn mc_moments(
    params: &Params,
    x0: &ParticleConfig,
    ns: &[MultiIndex],
    t: f64,
    nsamples: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    check_common(params, t)?;
    let np = params.n_particles();
    if x0.len() != np {
        return Err(Error::InvalidConfig(format!("{} positions for {np} speeds", x0.len())));
    }
    if let Some(n) = ns.iter().find(|n| !n.is_weyl(np)) {
        return Err(Error::NotInWeylChamber { n: n.as_slice().to_vec(), max: np });
    }
    let acc = mc_observables(nsamples, seed, ns.len(), |rng, out| {
        let mut x = x0.positions().to_vec();
        run_pushasep(params, &mut x, t, rng, |_, _| {});
        for (o, n) in out.iter_mut().zip(ns) {
            *o = moment_observable(params.q, &x, n.as_slice());
        }
    })?;
    Ok(acc.iter().map(Welford::estimate).collect())
}

/// `E[prod_j q^{x_{n_j}(t) + n_j}]` from step initial data.
pub fn mc_moment(params: &Params, n: &MultiIndex, t: f64, nsamples: usize, seed: u64) -> Result<MomentEstimate> {
    let x0 = ParticleConfig::step(params.n_particles());
    Ok(mc_moments(params, &x0, std::slice::from_ref(n), t, nsamples, seed)?[0])
}

/// Joint q-moments of the leftmost particles `lambda^{(n)}_n - n` of the array dynamics.
pub fn mc_moments_array2d(
    params: &Params,
    ns: &[MultiIndex],
    t: f64,
    nsamples: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    check_common(params, t)?;
    let np = params.n_particles();
    if let Some(n) = ns.iter().find(|n| !n.is_weyl(np)) {
        return Err(Error::NotInWeylChamber { n: n.as_slice().to_vec(), max: np });
    }
    let acc = mc_observables(nsamples, seed, ns.len(), |rng, out| {
        let a = sample_array2d_with(params, t, rng).expect("validated inputs");
        let x = a.leftmost_marginal();
        for (o, n) in out.iter_mut().zip(ns) {
            *o = moment_observable(params.q, x.positions(), n.as_slice());
        }
    })?;
    Ok(acc.iter().map(Welford::estimate).collect())
}

/// `E[1 / (zeta q^{x_n(t) + n}; q)_infinity]` from step initial data.
pub fn mc_qlaplace(
    params: &Params,
    n_index: usize,
    t: f64,
    zeta: Complex64,
    nsamples: usize,
    seed: u64,
) -> Result<ComplexEstimate> {
    check_common(params, t)?;
    if zeta.im == 0.0 && zeta.re > 0.0 {
        return Err(Error::ZetaOnPositiveAxis);
    }
    let np = params.n_particles();
    if n_index == 0 || n_index > np {
        return Err(Error::InvalidParams(format!("particle index {n_index} outside 1..={np}")));
    }
    let x0 = ParticleConfig::step(np);
    let acc = mc_observables(nsamples, seed, 2, |rng, out| {
        let mut x = x0.positions().to_vec();
        run_pushasep(params, &mut x, t, rng, |_, _| {});
        let e = x[n_index - 1] + n_index as i64;
        let v = qpoch_inf_recip(zeta * params.q.powf(e as f64), params.q, DEFAULT_TOL);
        out[0] = v.re;
        out[1] = v.im;
    })?;
    Ok(ComplexEstimate {
        mean: Complex64::new(acc[0].mean, acc[1].mean),
        stderr_re: acc[0].stderr(),
        stderr_im: acc[1].stderr(),
        nsamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::exact_moment;
    use approx::assert_relative_eq;

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_relative_eq!(a.mean, all.mean, max_relative = 1e-13);
        assert_relative_eq!(a.m2, all.m2, max_relative = 1e-12);
    }

    #[test]
    fn zero_time_moments_are_one() {
        let p = Params::uniform(0.5, 1.0, 1.0, 3).unwrap();
        let n = MultiIndex::weyl(vec![3, 2, 2], 3).unwrap();
        let e = mc_moment(&p, &n, 0.0, 100, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        assert!(mc_moment(&p, &n, 1.0, 0, 1).is_err());
    }

    #[test]
    fn pure_left_single_particle_is_poisson() {
        let p = Params::new(0.5, 0.0, 1.3, vec![0.8]).unwrap();
        let x0 = ParticleConfig::new(vec![0]).unwrap();
        let acc = mc_observables(100_000, 5, 1, |rng, out| {
            let mut x = x0.positions().to_vec();
            run_pushasep(&p, &mut x, 1.5, rng, |_, _| {});
            out[0] = x[0] as f64;
        })
        .unwrap();
        let est = acc[0].estimate();
        assert!(est.within(-1.3 / 0.8 * 1.5, 4.0), "{est:?}");
    }

    #[test]
    fn single_particle_closed_form() {
        let p = Params::new(0.6, 1.2, 0.7, vec![1.1]).unwrap();
        let t = 0.9;
        let exact = (p.right * 1.1 * t * (0.6 - 1.0) + p.left / 1.1 * t * (1.0 / 0.6 - 1.0)).exp();
        let e = mc_moment(&p, &MultiIndex::weyl(vec![1], 1).unwrap(), t, 100_000, 9).unwrap();
        assert!(e.within(exact, 4.0), "{e:?} vs {exact}");
    }

    #[test]
    fn two_particle_moment_matches_exact() {
        let p = Params::new(0.5, 1.0, 0.5, vec![1.0, 1.3]).unwrap();
        let n = MultiIndex::weyl(vec![1, 1], 2).unwrap();
        let exact = exact_moment(&p, &n, 0.8).unwrap();
        let e = mc_moment(&p, &n, 0.8, 100_000, 3).unwrap();
        assert!(e.within(exact, 4.0), "{e:?} vs {exact}");
    }

    #[test]
    fn deterministic_regardless_of_threads() {
        let p = Params::uniform(0.5, 1.0, 1.0, 3).unwrap();
        let n = MultiIndex::weyl(vec![3, 1], 3).unwrap();
        let a = mc_moment(&p, &n, 1.0, 3000, 77).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_moment(&p, &n, 1.0, 3000, 77).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn qlaplace_trivial_cases() {
        let p = Params::uniform(0.5, 1.0, 1.0, 2).unwrap();
        let e = mc_qlaplace(&p, 2, 0.7, Complex64::new(0.0, 0.0), 200, 1).unwrap();
        assert_eq!(e.mean, Complex64::new(1.0, 0.0));
        let z = Complex64::new(-0.4, 0.2);
        let e = mc_qlaplace(&p, 2, 0.0, z, 50, 1).unwrap();
        assert!((e.mean - qpoch_inf_recip(z, 0.5, DEFAULT_TOL)).norm() < 1e-15);
        assert_eq!(mc_qlaplace(&p, 1, 1.0, Complex64::new(0.5, 0.0), 10, 1), Err(Error::ZetaOnPositiveAxis));
    }
}
