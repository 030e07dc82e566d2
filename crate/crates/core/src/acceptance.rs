//! The acceptance suite: each criterion runs at its stated tolerance and
//! returns one [`Outcome`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contour::{
    build_contours, build_contours_concentric, build_contours_log, evaluate_fixed, moments_contour, partial_sum_identity_check,
    verify_free_conditions, QuadSpec,
};
use crate::evolve::exact_moment;
use crate::fredholm::{divergence_demo, fredholm_det, qlaplace_exact_n1, KernelSpec};
use crate::model::qpoch::{qpoch_inf_recip, DEFAULT_TOL};
use crate::model::{verify_duality_identity, weyl_chamber, MultiIndex, ParticleConfig, Params};
use crate::scaling::{
    compare_rescaled, richardson_check, sde_diffusion, sde_drift, LevelZero, ScalingParams, SdeOptions,
    RESCALED_TOLERANCE,
};
use crate::simulate::{mc_moments, mc_moments_array2d};
use crate::stationary::{gap_chain_stationarity_residual, push_rate_sum};
use crate::Result;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Non-fatal criteria are reported without failing the suite.
    pub fatal: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        let status = match (self.passed, self.fatal) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-fatal)",
        };
        format!("[{status}] {:>2} {} ({:.1}s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

fn timed(id: u8, name: &'static str, fatal: bool, f: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome { id, name, passed, fatal, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Monte Carlo sample sizes used by criteria 2 and 8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub paths: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { paths: 100_000, seed: 20_240_601 }
    }
}

pub fn run_all(opts: &SuiteOptions) -> Vec<Outcome> {
    vec![
        duality(opts.seed),
        triple_oracle(opts),
        structural(),
        partial_sums(opts.seed),
        first_particle(),
        growth_lemma(),
        stationarity(),
        array_marginal(opts),
        fredholm(),
        sde(opts.seed),
        divergence(),
    ]
}

pub fn duality(seed: u64) -> Outcome {
    timed(1, "duality identity", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut trials = 0;
        for n in 1..=5 {
            for _ in 0..4 {
                let q = rng.random_range(0.1..0.95);
                let speeds = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
                let p = Params::new(q, rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), speeds)?;
                let r = verify_duality_identity(&p, 100, rng.random());
                trials += r.trials;
                worst = worst
                    .max(r.max_residual)
                    .max(r.right_jump_identity)
                    .max(r.left_block_identity)
                    .max(r.right_dual_identity)
                    .max(r.left_dual_identity);
            }
        }
        Ok((worst <= 1e-12, format!("{trials} pairs, max relative residual {worst:.2e} (tol 1e-12)")))
    })
}

/// Grid points of criterion 2 as `(params, t)`, all with four particles.
pub fn triple_oracle_grid() -> Vec<(Params, f64)> {
    let mut out = Vec::new();
    for q in [0.3, 0.5, 0.8] {
        for (r, l) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 0.5)] {
            for speeds in [vec![1.0; 4], vec![0.9, 1.1, 1.0, 1.2]] {
                for t in [0.25, 1.0] {
                    out.push((Params::new(q, r, l, speeds.clone()).expect("valid grid"), t));
                }
            }
        }
    }
    out
}

/// One grid point of criterion 2.
#[derive(Debug, Clone)]
pub struct OracleCell {
    pub params: Params,
    pub t: f64,
    pub n: MultiIndex,
    pub exact: f64,
    pub contour: f64,
    pub mc: f64,
    pub stderr: f64,
    /// Exact relative standard deviation of one sample, `sqrt(m(n u n)/m(n)^2 - 1)`.
    pub relative_sd: f64,
}

impl OracleCell {
    pub fn contour_ok(&self) -> bool {
        (self.contour - self.exact).abs() <= 1e-8 * self.exact.abs().max(1.0)
    }
    pub fn mc_ok(&self) -> bool {
        (self.mc - self.exact).abs() <= 4.0 * self.stderr
    }
    /// Whether `paths` samples can resolve this moment at all: the sample must
    /// not be degenerate, and one sample's exact relative spread must stay below
    /// `sqrt(paths)/10` so the standard error itself is estimated from many paths.
    pub fn resolvable(&self, paths: usize) -> bool {
        let degenerate = self.stderr == 0.0 && self.mc != self.exact;
        !degenerate && self.relative_sd <= (paths as f64).sqrt() / 10.0
    }
}

/// Exact, contour and Monte Carlo values for every Weyl index with `k <= 3` at one grid point.
pub fn triple_oracle_cells(params: &Params, t: f64, paths: usize, seed: u64) -> Result<Vec<OracleCell>> {
    let np = params.n_particles();
    let ns: Vec<MultiIndex> = (1..=3).flat_map(|k| weyl_chamber(k, np)).collect();
    let mc = mc_moments(params, &ParticleConfig::step(np), &ns, t, paths, seed)?;
    let mut contour = Vec::with_capacity(ns.len());
    for k in 1..=3 {
        let level: Vec<MultiIndex> = ns.iter().filter(|n| n.level() == k).cloned().collect();
        let spec = build_contours(params, k, t)?;
        contour.extend(moments_contour(params, &level, t, &spec, &QuadSpec::default())?.0);
    }
    let mut cells = Vec::with_capacity(ns.len());
    for ((n, est), c) in ns.iter().zip(&mc).zip(&contour) {
        let exact = exact_moment(params, n, t)?;
        let second = exact_moment(params, &n.merged(n), t)?;
        let relative_sd = if exact > 0.0 { (second / (exact * exact) - 1.0).max(0.0).sqrt() } else { 0.0 };
        cells.push(OracleCell {
            params: params.clone(),
            t,
            n: n.clone(),
            exact,
            contour: c.re,
            mc: est.mean,
            stderr: est.stderr,
            relative_sd,
        });
    }
    Ok(cells)
}

pub fn triple_oracle(opts: &SuiteOptions) -> Outcome {
    triple_oracle_with_cells(opts).0
}

/// Criterion 2 together with every cell it compared.
pub fn triple_oracle_with_cells(opts: &SuiteOptions) -> (Outcome, Vec<OracleCell>) {
    let mut cells = Vec::new();
    let out = timed(2, "triple-oracle moments", true, || {
        for (i, (p, t)) in triple_oracle_grid().iter().enumerate() {
            cells.extend(triple_oracle_cells(p, *t, opts.paths, opts.seed.wrapping_add(i as u64))?);
        }
        let bad_contour = cells.iter().filter(|c| !c.contour_ok()).count();
        let bad_mc: Vec<&OracleCell> = cells.iter().filter(|c| !c.mc_ok()).collect();
        let worst_contour = cells
            .iter()
            .map(|c| (c.contour - c.exact).abs() / c.exact.abs().max(1.0))
            .fold(0.0, f64::max);
        let unresolvable = cells.iter().filter(|c| !c.resolvable(opts.paths)).count();
        let bad_resolvable: Vec<&&OracleCell> = bad_mc.iter().filter(|c| c.resolvable(opts.paths)).collect();
        let mut d = format!(
            "{} cells; contour max rel err {worst_contour:.1e}, {bad_contour} over 1e-8; MC {} outside 4 sigma, \
             {} of them among the {} resolvable cells ({unresolvable} cells are heavy-tailed or degenerate at {} paths)",
            cells.len(),
            bad_mc.len(),
            bad_resolvable.len(),
            cells.len() - unresolvable,
            opts.paths
        );
        let shown: Vec<&OracleCell> = bad_resolvable.iter().map(|c| **c).chain(bad_mc.iter().copied()).take(6).collect();
        for c in shown {
            let _ = write!(
                d,
                "\n      q={} R={} L={} a={:?} t={} n={:?}: mc {:.6e} +- {:.1e}, exact {:.6e}, rel sd {:.1e}",
                c.params.q,
                c.params.right,
                c.params.left,
                c.params.speeds,
                c.t,
                c.n.as_slice(),
                c.mc,
                c.stderr,
                c.exact,
                c.relative_sd
            );
        }
        Ok((bad_contour == 0 && bad_mc.is_empty(), d))
    });
    (out, cells)
}

pub fn structural() -> Outcome {
    timed(3, "moment formula structure", true, || {
        let quad = QuadSpec::default();
        let mut ok = true;
        let mut worst_t0: f64 = 0.0;
        let mut worst_zero: f64 = 0.0;
        let mut worst_indep: f64 = 0.0;
        let (mut worst_b, mut worst_c, mut worst_f): (f64, f64, f64) = (0.0, 0.0, 0.0);
        let mut families = 0;
        let points = [
            Params::new(0.4, 1.0, 1.0, vec![0.9, 1.1, 1.3])?,
            Params::new(0.7, 2.0, 0.5, vec![1.0, 1.0, 1.0])?,
            Params::new(0.5, 0.0, 1.0, vec![1.2, 0.8, 1.0])?,
        ];
        for p in &points {
            for k in 1..=3 {
                let spec = build_contours(p, k, 0.7)?;
                let ns = weyl_chamber(k, 3);
                let (v, _, _) = moments_contour(p, &ns, 0.0, &spec, &quad)?;
                for (n, val) in ns.iter().zip(&v) {
                    if *n.as_slice().last().unwrap() != 0 {
                        worst_t0 = worst_t0.max((val - 1.0).norm());
                    }
                }
                let (v, m, _) = moments_contour(p, &ns, 0.7, &spec, &quad)?;
                // the adaptive driver returns zero labels exactly, so check the quadrature itself
                let zeros: Vec<MultiIndex> = ns.iter().filter(|n| *n.as_slice().last().unwrap() == 0).cloned().collect();
                for s in [0.0, 0.7] {
                    for val in evaluate_fixed(p, &zeros, s, &spec, m) {
                        worst_zero = worst_zero.max(val.norm());
                    }
                }
                let mut alt = vec![build_contours_log(p, k, 0.06)?, build_contours_log(p, k, 0.1)?];
                // concentric circles are only a fair comparison while they keep clear of the
                // essential singularity of e^{L t / z} at the origin
                let conc = build_contours_concentric(p, k, 0.3)?;
                if conc.circles.iter().all(|c| c.center - c.radius >= 0.2 * c.center) {
                    alt.push(conc);
                    families += 1;
                }
                for s in &alt {
                    let (w, _, _) = moments_contour(p, &ns, 0.7, s, &quad)?;
                    for (a, b) in v.iter().zip(&w) {
                        worst_indep = worst_indep.max((a - b).norm() / a.norm().max(1.0));
                    }
                }
            }
            for k in 2..=3 {
                let r = verify_free_conditions(p, 0.5, k, &quad)?;
                worst_b = worst_b.max(r.boundary);
                worst_c = worst_c.max(r.cumulative);
                let excess = r.free_equation - r.free_equation_allowance;
                worst_f = worst_f.max(excess);
            }
        }
        let cond_tol = quad.tol.max(1e-8);
        ok &= worst_t0 <= 1e-10 && worst_zero <= 1e-10 && worst_indep <= 2.0 * quad.tol;
        ok &= worst_b <= cond_tol && worst_c <= cond_tol && worst_f <= quad.tol;
        Ok((
            ok,
            format!(
                "t=0 {worst_t0:.1e}, n_k=0 {worst_zero:.1e}, contour change {worst_indep:.1e} (tol {:.0e}, \
                 {families} concentric comparisons), \
                 boundary {worst_b:.1e}, cumulative {worst_c:.1e}, free equation beyond h^2 allowance {worst_f:.1e}",
                2.0 * quad.tol
            ),
        ))
    })
}

/// Checks the partial-sum lemma at points `z` on the default moment contours
/// for random speeds, which is where the identity is used.
pub fn partial_sums(seed: u64) -> Outcome {
    timed(4, "partial-sum lemma", true, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for _ in 0..100 {
            let a: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..2.0)).collect();
            let p = Params::new(rng.random_range(0.2..0.9), 1.0, 1.0, a.clone())?;
            let k = rng.random_range(1..=3);
            let spec = build_contours(&p, k, 1.0)?;
            let z: Vec<Complex64> = (0..10)
                .map(|_| spec.point(rng.random_range(0..k), rng.random_range(-PI..PI)))
                .collect();
            count += z.len();
            worst = worst.max(partial_sum_identity_check(&a, 10, &z));
        }
        Ok((worst <= 1e-12, format!("max |S_n - 1/z| = {worst:.2e} over {count} contour points z, n <= 10")))
    })
}

pub fn first_particle() -> Outcome {
    timed(5, "first-particle closed form", true, || {
        let mut worst: f64 = 0.0;
        for (q, r, l, a1, t) in [(0.5, 1.0, 1.0, 1.0, 1.0), (0.3, 2.0, 0.5, 0.8, 0.5), (0.8, 0.0, 1.0, 1.3, 2.0)] {
            let p = Params::new(q, r, l, vec![a1, 1.1])?;
            for k in 1..=5 {
                let m = exact_moment(&p, &MultiIndex::weyl(vec![1; k], 2)?, t)?;
                let qk = q.powi(k as i32);
                let closed = (r * a1 * t * (qk - 1.0) + l / a1 * t * (1.0 / qk - 1.0)).exp();
                worst = worst.max((m - closed).abs() / closed);
            }
        }
        Ok((worst <= 1e-10, format!("max relative error {worst:.2e}")))
    })
}

/// `m(t; (n,..,n))` against `c e^{L t q^{-k} / a_1}` with `c` chosen so the two agree at `k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub params: Params,
    pub t: f64,
    pub label: usize,
    pub k: usize,
    pub moment: f64,
    pub calibrated: f64,
    /// The floor with the constant `e^{-R a_1 t - L t / a_1}` from the lemma's proof.
    pub proof_floor: f64,
}

pub fn growth_rows() -> Result<Vec<GrowthRow>> {
    let mut out = Vec::new();
    for q in [0.3, 0.5, 0.8] {
        for (r, l) in [(0.0, 1.0), (1.0, 1.0), (2.0, 0.5)] {
            for t in [0.25, 1.0] {
                let p = Params::new(q, r, l, vec![0.9, 1.1, 1.0])?;
                let a1 = p.speed(1);
                let envelope = |k: usize| (l / a1 * t * q.powi(-(k as i32))).exp();
                let c_proof = (-r * a1 * t - l / a1 * t).exp();
                for label in 1..=3 {
                    let m1 = exact_moment(&p, &MultiIndex::weyl(vec![label], 3)?, t)?;
                    let c = m1 / envelope(1);
                    for k in 1..=5 {
                        let moment = exact_moment(&p, &MultiIndex::weyl(vec![label; k], 3)?, t)?;
                        out.push(GrowthRow {
                            params: p.clone(),
                            t,
                            label,
                            k,
                            moment,
                            calibrated: c * envelope(k),
                            proof_floor: c_proof * envelope(k),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn growth_lemma() -> Outcome {
    timed(6, "growth lemma", true, || {
        let rows = growth_rows()?;
        let slack = 1.0 - 1e-12;
        let bad: Vec<&GrowthRow> = rows.iter().filter(|r| r.moment < slack * r.calibrated).collect();
        let proof_bad = rows.iter().filter(|r| r.moment < slack * r.proof_floor).count();
        let mut d = format!(
            "{} rows; {} below the k=1-calibrated envelope, {} below the proof-constant envelope",
            rows.len(),
            bad.len(),
            proof_bad
        );
        let worst = bad.iter().map(|r| r.moment / r.calibrated).fold(f64::INFINITY, f64::min);
        if !bad.is_empty() {
            let all_right = bad.iter().all(|r| r.params.right > 0.0);
            let _ = write!(d, "; worst ratio {worst:.3e}, all failing rows have R > 0: {all_right}");
        }
        Ok((bad.is_empty() && proof_bad == 0, d))
    })
}

pub fn stationarity() -> Outcome {
    timed(7, "stationary gap laws", true, || {
        let p = Params::uniform(0.5, 1.0, 1.0, 1)?;
        let res = gap_chain_stationarity_residual(&p, 0.3, 80)?;
        let mut worst: f64 = 0.0;
        for (r, l, alpha) in [(1.0, 1.0, 0.5), (2.0, 0.7, 0.3), (1.5, 2.0, 1.2)] {
            let pu = Params::uniform(0.5, r, l, 1)?;
            worst = worst.max((push_rate_sum(&pu, alpha)? - l * r / alpha).abs());
            let pv = Params::new(0.5, r, l, vec![0.5, 2.0, 1.3, 0.8, 1.7, 1.0])?;
            let alpha_v = alpha * 0.5;
            worst = worst.max((push_rate_sum(&pv, alpha_v)? - l * r / alpha_v).abs());
        }
        Ok((res <= 1e-10 && worst <= 1e-12, format!("chain residual {res:.1e} at K=80, push sum error {worst:.1e}")))
    })
}

pub fn array_marginal(opts: &SuiteOptions) -> Outcome {
    timed(8, "interlacing-array marginal", true, || {
        let points = [
            (Params::new(0.5, 1.0, 0.5, vec![0.9, 1.1, 1.0])?, 0.5),
            (Params::new(0.8, 1.0, 1.0, vec![1.0, 1.0, 1.0])?, 1.0),
            (Params::new(0.5, 1.0, 0.0, vec![1.0, 1.2, 0.8])?, 1.0),
            (Params::new(0.6, 0.0, 1.0, vec![1.0, 1.0])?, 0.5),
        ];
        let mut total = 0;
        let mut bad = Vec::new();
        for (i, (p, t)) in points.iter().enumerate() {
            let np = p.n_particles();
            // indices ending in 0 vanish identically on both sides
            let ns: Vec<MultiIndex> = (1..=2)
                .flat_map(|k| weyl_chamber(k, np))
                .filter(|n| *n.as_slice().last().unwrap() != 0)
                .collect();
            let mc = mc_moments_array2d(p, &ns, *t, opts.paths, opts.seed.wrapping_add(1000 + i as u64))?;
            for k in 1..=2 {
                let level: Vec<MultiIndex> = ns.iter().filter(|n| n.level() == k).cloned().collect();
                let spec = build_contours(p, k, *t)?;
                let (v, _, _) = moments_contour(p, &level, *t, &spec, &QuadSpec::default())?;
                for (n, val) in level.iter().zip(v) {
                    let est = mc[ns.iter().position(|m| m == n).unwrap()];
                    total += 1;
                    if !est.within(val.re, 4.0) {
                        bad.push(format!("q={} n={:?}: {:.5} +- {:.1e} vs {:.5}", p.q, n.as_slice(), est.mean, est.stderr, val.re));
                    }
                }
            }
        }
        Ok((bad.is_empty(), format!("{total} moments, {} outside 4 sigma {}", bad.len(), bad.join("; "))))
    })
}

pub fn fredholm() -> Outcome {
    timed(9, "Fredholm determinant numerics", false, || {
        let zetas = [Complex64::new(-0.3, 0.0), Complex64::new(-0.8, 0.0), Complex64::new(0.0, 0.5), Complex64::new(-0.5, 0.5)];
        let mut worst_n1: f64 = 0.0;
        for q in [0.3, 0.5, 0.7] {
            for t in [0.5, 1.0] {
                let p = Params::uniform(q, 1.0, 1.0, 1)?;
                for &z in &zetas {
                    let d = fredholm_det(&KernelSpec::new(&p, 1, t, z)?)?;
                    let e = qlaplace_exact_n1(&p, t, z, 1e-16)?;
                    worst_n1 = worst_n1.max((d - e).norm());
                }
            }
        }
        let mut worst_t0: f64 = 0.0;
        let mut worst_refine: f64 = 0.0;
        for &z in &zetas {
            let p = Params::uniform(0.5, 1.0, 1.0, 2)?;
            let s = KernelSpec::new(&p, 2, 0.0, z)?;
            worst_t0 = worst_t0.max((fredholm_det(&s)? - qpoch_inf_recip(z, 0.5, DEFAULT_TOL)).norm());
            let s = KernelSpec::new(&p, 2, 0.5, z)?;
            let base = fredholm_det(&s)?;
            let mut a = s.clone();
            a.nystrom_points *= 2;
            let mut b = s.clone();
            b.mb_points = 2 * b.mb_points - 1;
            worst_refine = worst_refine.max((fredholm_det(&a)? - base).norm()).max((fredholm_det(&b)? - base).norm());
        }
        Ok((
            worst_n1 <= 1e-4 && worst_t0 <= 1e-6 && worst_refine <= 1e-8,
            format!("n=1 vs exact {worst_n1:.1e} (tol 1e-4), t=0 {worst_t0:.1e} (tol 1e-6), refinement {worst_refine:.1e} (tol 1e-8)"),
        ))
    })
}

pub fn sde(seed: u64) -> Outcome {
    timed(10, "SDE scaling limit", true, || {
        let s = ScalingParams::new(0.1, 1.0, vec![0.0, 0.4], 0.3, 0.3, 1e-3)?;
        let coeff_ok = sde_drift(1, 0.0, 0.0, &s) == -1.0
            && sde_diffusion() == 2f64.sqrt()
            && sde_drift(2, 0.5, 0.5, &s) == -0.8 - 1.0
            && sde_drift(1, 1e3, 0.0, &s) == f64::NEG_INFINITY;
        let rs = ScalingParams::new(0.1, 1.0, vec![0.0], 0.3, 0.3, 0.1)?;
        let rich = richardson_check(&rs, 1.0, 20_000, seed ^ 10, SdeOptions { level_zero: LevelZero::Zero, free: false })?;
        let diffs_resolved = rich.differences.iter().all(|d| d.mean.abs() > 4.0 * d.stderr);
        let rich_ok = diffs_resolved && (1.5..=2.5).contains(&rich.ratio);
        let cs = ScalingParams::new(0.2, 0.5, vec![0.0, 0.5], 0.5, 1.0, 1e-3)?;
        let cmp = compare_rescaled(&cs, 10_000, seed ^ 11, RESCALED_TOLERANCE)?;
        Ok((
            coeff_ok && rich_ok && cmp.passed,
            format!(
                "coefficients {}, Richardson means {:.4?} ratio {:.2}, rescaled G_1 particle {:.4} vs SDE {:.4} \
                 (|diff| {:.3}, tol {}); SDE with G_0 = 0 gives {:.4}; G_2 particle {:.4} vs SDE {:.4}",
                if coeff_ok { "exact" } else { "WRONG" },
                rich.means,
                rich.ratio,
                cmp.particle[0].mean,
                cmp.sde_absent[0].mean,
                cmp.discrepancy,
                cmp.tolerance,
                cmp.sde_zero[0].mean,
                cmp.particle[1].mean,
                cmp.sde_absent[1].mean,
            ),
        ))
    })
}

pub fn divergence() -> Outcome {
    timed(11, "divergent moment series", true, || {
        let p = Params::uniform(0.5, 1.0, 1.0, 1)?;
        let rows = divergence_demo(&p, 1, 1.0, 0.5, 8)?;
        let ratios: Vec<f64> = rows.windows(2).map(|w| w[1].term / w[0].term).collect();
        let super_geometric = ratios[1..].windows(2).all(|w| w[1] > w[0]) && ratios[7] > 100.0 * ratios[1];
        // with L = 0 the moments are at most 1, so term_k <= |zeta|^k / (q;q)_inf, and the
        // terms must fall monotonically once |zeta| / (1 - q^{k+1}) < 1
        let mut decays = true;
        for q in [0.3, 0.5, 0.8] {
            for z in [0.25, 0.5] {
                let p0 = Params::uniform(q, 1.0, 0.0, 2)?;
                let r0 = divergence_demo(&p0, 2, 1.0, z, 12)?;
                let envelope = 1.0 / crate::model::qpoch::qpoch_inf(q, q, DEFAULT_TOL);
                decays &= r0.iter().all(|r| r.term <= z.powi(r.k as i32) * envelope * (1.0 + 1e-12));
                let k0 = (0..12).find(|&k| z / (1.0 - q.powi(k as i32 + 1)) < 1.0).unwrap_or(12);
                decays &= r0[k0..].windows(2).all(|w| w[1].term < w[0].term);
            }
        }
        Ok((
            super_geometric && decays,
            format!(
                "L=1: term ratios {:.3e} .. {:.3e}, term_8 = {:.3e}; L=0 terms inside a geometric envelope and eventually decreasing: {decays}",
                ratios[0], ratios[7], rows[8].term
            ),
        ))
    })
}
