//! q-geometric gap laws and the one-dimensional gap chain.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::model::qpoch::{qpoch, qpoch_inf, DEFAULT_TOL};
use crate::model::Params;
use crate::simulate::trajectory_rng;
use crate::{Error, Result};

/// `qGeo(beta)` on `{0, 1, ...}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGeoLaw {
    pub beta: f64,
    pub q: f64,
}

impl QGeoLaw {
    pub fn new(beta: f64, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) || !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParams(format!("qGeo needs beta in [0,1) and q in (0,1), got beta={beta}, q={q}")));
        }
        Ok(QGeoLaw { beta, q })
    }

    /// The law of the gaps when the right jump rate is `R` and the chosen level is `alpha`.
    pub fn for_params(params: &Params, alpha: f64) -> Result<Self> {
        QGeoLaw::new(alpha / params.right, params.q)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        qpoch_inf(self.beta, self.q, DEFAULT_TOL) * self.beta.powi(k as i32) / qpoch(self.q, self.q, k)
    }

    /// `pmf(0..=k_max)` by the ratio recursion.
    pub fn pmf_vec(&self, k_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k_max + 1);
        let mut p = qpoch_inf(self.beta, self.q, DEFAULT_TOL);
        for k in 0..=k_max {
            out.push(p);
            p *= self.beta / (1.0 - self.q.powi(k as i32 + 1));
        }
        out
    }

    /// `E q^gap = 1 - beta`.
    pub fn mean_q_power(&self) -> f64 {
        1.0 - self.beta
    }
}

pub fn qgeo_pmf(law: &QGeoLaw, k: usize) -> f64 {
    law.pmf(k)
}

fn check_alpha(params: &Params, alpha: f64) -> Result<()> {
    params.validate()?;
    let amin = params.speeds.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    if !(alpha > 0.0 && alpha < params.right * amin) {
        return Err(Error::InvalidParams(format!("need 0 < alpha < R min a_i, got alpha={alpha}")));
    }
    Ok(())
}

/// Total rate at which a particle is moved left, counting its own jumps and
/// every push arriving from the right, when the gaps are independent with
/// `E q^{gap_m} = 1 - alpha/(R a_m)`.
///
/// The speeds are extended periodically to the right of the observed particle.
/// The series is summed until its terms fall below `1e-17` relative to the sum.
pub fn push_rate_sum(params: &Params, alpha: f64) -> Result<f64> {
    check_alpha(params, alpha)?;
    let a = &params.speeds;
    let n = a.len().max(1);
    let speed = |m: usize| if a.is_empty() { 1.0 } else { a[m % n] };
    let mut sum = 0.0;
    let mut carry = 1.0;
    for m in 0.. {
        let am = speed(m);
        let term = params.left / am * carry;
        sum += term;
        carry *= 1.0 - alpha / (params.right * am);
        if carry < 1e-17 || m > 10_000_000 {
            break;
        }
    }
    Ok(sum)
}

/// Up-rate `L`, down-rate `(LR/alpha)(1 - q^g)`.
fn chain_rates(params: &Params, alpha: f64, g: usize) -> (f64, f64) {
    let up = params.left;
    let down = params.left * params.right / alpha * (1.0 - params.q.powi(g as i32));
    (up, down)
}

/// Max `|(pi Q)_k|` over `k < K` for the birth-death generator `Q` truncated to `{0..=K}`.
pub fn gap_chain_stationarity_residual(params: &Params, alpha: f64, truncation: usize) -> Result<f64> {
    check_alpha(params, alpha)?;
    if truncation < 20 {
        return Err(Error::InvalidParams(format!("truncation {truncation} below 20")));
    }
    let pi = QGeoLaw::for_params(params, alpha)?.pmf_vec(truncation);
    let mut res: f64 = 0.0;
    for k in 0..truncation {
        let (up_k, down_k) = chain_rates(params, alpha, k);
        let mut flow = -(up_k + down_k) * pi[k];
        if k > 0 {
            flow += chain_rates(params, alpha, k - 1).0 * pi[k - 1];
        }
        flow += chain_rates(params, alpha, k + 1).1 * pi[k + 1];
        res = res.max(flow.abs());
    }
    Ok(res)
}

/// Max `|L pi(k) - (LR/alpha)(1 - q^{k+1}) pi(k+1)|` over `k < K`.
pub fn detailed_balance_residual(params: &Params, alpha: f64, truncation: usize) -> Result<f64> {
    check_alpha(params, alpha)?;
    let pi = QGeoLaw::for_params(params, alpha)?.pmf_vec(truncation);
    Ok((0..truncation)
        .map(|k| (chain_rates(params, alpha, k).0 * pi[k] - chain_rates(params, alpha, k + 1).1 * pi[k + 1]).abs())
        .fold(0.0, f64::max))
}

/// Samples of the gap chain started at 0, read off every `spacing` time units after `burn_in`.
pub fn sample_gap_chain(params: &Params, alpha: f64, burn_in: f64, spacing: f64, nsamples: usize, seed: u64) -> Result<Vec<usize>> {
    check_alpha(params, alpha)?;
    if params.left == 0.0 {
        return Ok(vec![0; nsamples]);
    }
    let mut rng = trajectory_rng(seed, 0);
    let mut g = 0usize;
    let mut clock = 0.0;
    let mut next_read = burn_in;
    let mut out = Vec::with_capacity(nsamples);
    while out.len() < nsamples {
        let (up, down) = chain_rates(params, alpha, g);
        let total = up + down;
        let dt = Exp::new(total).map_err(|e| Error::InvalidParams(e.to_string()))?.sample(&mut rng);
        while clock + dt > next_read && out.len() < nsamples {
            out.push(g);
            next_read += spacing;
        }
        clock += dt;
        if rng.random::<f64>() * total < up {
            g += 1;
        } else {
            g -= 1;
        }
    }
    Ok(out)
}

/// Pearson test of `samples` against `law`, pooling the tail so each bin expects at least 5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn chi_square_qgeo(samples: &[usize], law: &QGeoLaw) -> Result<ChiSquareReport> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::ZeroSamples);
    }
    let nf = n as f64;
    let mut bins = 0;
    let mut tail = 1.0;
    let pmf = law.pmf_vec(200);
    while bins < pmf.len() && nf * pmf[bins] >= 5.0 && nf * (tail - pmf[bins]) >= 5.0 {
        tail -= pmf[bins];
        bins += 1;
    }
    let mut counts = vec![0usize; bins + 1];
    for &s in samples {
        counts[s.min(bins)] += 1;
    }
    let mut stat = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let p = if k < bins { pmf[k] } else { 1.0 - pmf[..bins].iter().sum::<f64>() };
        let e = nf * p;
        stat += (c as f64 - e).powi(2) / e;
    }
    let dof = bins.max(1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(ChiSquareReport { statistic: stat, dof, p_value: 1.0 - dist.cdf(stat) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_basics() {
        let law = QGeoLaw::new(0.3, 0.5).unwrap();
        assert_eq!(law.pmf(0), qpoch_inf(0.3, 0.5, DEFAULT_TOL));
        let s: f64 = (0..=200).map(|k| law.pmf(k)).sum();
        assert!((s - 1.0).abs() < 1e-12);
        let v = law.pmf_vec(200);
        let eq: f64 = v.iter().enumerate().map(|(k, p)| 0.5f64.powi(k as i32) * p).sum();
        assert!((eq - law.mean_q_power()).abs() < 1e-12);
        for k in [0, 3, 17] {
            assert!((v[k] - law.pmf(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn push_sums() {
        let p = Params::uniform(0.5, 2.0, 1.5, 1).unwrap();
        assert!((push_rate_sum(&p, 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((push_rate_sum(&p, 2.0 - 1e-12).unwrap() - 1.5).abs() < 1e-9);
        let pv = Params::new(0.5, 2.0, 1.5, vec![0.5, 2.0, 1.3, 0.8, 1.7]).unwrap();
        assert!((push_rate_sum(&pv, 0.7).unwrap() - 2.0 * 1.5 / 0.7).abs() < 1e-12);
        assert!(push_rate_sum(&pv, 1.0).is_err());
    }

    #[test]
    fn chain_invariance() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        assert!(gap_chain_stationarity_residual(&p, 0.3, 80).unwrap() <= 1e-10);
        assert!(detailed_balance_residual(&p, 0.3, 80).unwrap() <= 1e-12);
        let p0 = Params::uniform(0.5, 1.0, 0.0, 1).unwrap();
        assert_eq!(gap_chain_stationarity_residual(&p0, 0.3, 80).unwrap(), 0.0);
        let r20 = gap_chain_stationarity_residual(&p, 0.3, 20).unwrap();
        let r40 = gap_chain_stationarity_residual(&p, 0.3, 40).unwrap();
        assert!(r40 <= r20);
    }

    #[test]
    fn simulated_chain_matches_law() {
        let p = Params::uniform(0.5, 1.0, 1.0, 1).unwrap();
        let s = sample_gap_chain(&p, 0.4, 20.0, 2.0, 20_000, 7).unwrap();
        let law = QGeoLaw::for_params(&p, 0.4).unwrap();
        let rep = chi_square_qgeo(&s, &law).unwrap();
        assert!(rep.p_value > 0.01, "{rep:?}");
    }
}
