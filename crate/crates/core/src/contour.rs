//! Nested contour integral formula for the q-moments.
//!
//! `m(t; n) = (-1)^k q^{k(k-1)/2} (2 pi i)^{-k} \oint ... \oint
//!   prod_{A<B} (z_A - z_B)/(z_A - q z_B)
//!   prod_j [prod_{i<=n_j} a_i/(a_i - z_j)] e^{t(R(q-1) z_j + L(q^{-1}-1)/z_j)} dz_j/z_j`
//!
//! The contour for `z_A` encloses every `a_i` and `q` times the contour for
//! `z_B` (`B > A`), and not 0. The trapezoidal rule on each circle converges
//! geometrically because the integrand is analytic and periodic.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::model::{MultiIndex, Params};
use crate::{Error, Result};

/// Coordinates a circle is drawn in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CirclePlane {
    /// Ordinary circle `z = c + r e^{i phi}`.
    Z,
    /// Circle in `w = log z`; its image `z = exp(c + r e^{i phi})` hugs the
    /// pole at `q z_B` tightly near the origin side and keeps cancellation low.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: f64,
    pub radius: f64,
}

/// Which containment conditions hold.
#[derive(Debug, Clone, PartialEq)]
pub struct NestingCertificate {
    /// Circle `j` strictly contains every `a_i`.
    pub contains_speeds: Vec<bool>,
    /// `(A, B, ok)`: circle `A` strictly contains `q` times circle `B`.
    pub contains_scaled: Vec<(usize, usize, bool)>,
    /// The origin lies strictly outside circle `j`.
    pub excludes_origin: Vec<bool>,
}

impl NestingCertificate {
    pub fn is_valid(&self) -> bool {
        self.contains_speeds.iter().all(|&b| b)
            && self.contains_scaled.iter().all(|c| c.2)
            && self.excludes_origin.iter().all(|&b| b)
    }

    fn first_violation(&self) -> Option<String> {
        if let Some(j) = self.contains_speeds.iter().position(|&b| !b) {
            return Some(format!("circle {} does not contain all speeds", j + 1));
        }
        if let Some(c) = self.contains_scaled.iter().find(|c| !c.2) {
            return Some(format!("circle {} does not contain q times circle {}", c.0 + 1, c.1 + 1));
        }
        if let Some(j) = self.excludes_origin.iter().position(|&b| !b) {
            return Some(format!("circle {} reaches the origin", j + 1));
        }
        None
    }
}

/// `k` circles, circle `j` carrying `z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSpec {
    pub plane: CirclePlane,
    pub circles: Vec<Circle>,
    pub certificate: NestingCertificate,
}

impl ContourSpec {
    /// Wraps arbitrary circles and computes their certificate.
    pub fn from_circles(plane: CirclePlane, circles: Vec<Circle>, params: &Params) -> Self {
        let q = params.q;
        let k = circles.len();
        let inside = |c: &Circle, a: f64| match plane {
            CirclePlane::Z => (a - c.center).abs() < c.radius,
            CirclePlane::Log => (a.ln() - c.center).abs() < c.radius,
        };
        let contains_speeds =
            circles.iter().map(|c| params.speeds.iter().all(|&a| inside(c, a))).collect();
        let mut contains_scaled = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let (ca, cb) = (circles[a], circles[b]);
                let ok = match plane {
                    CirclePlane::Z => (q * cb.center - ca.center).abs() + q * cb.radius < ca.radius,
                    CirclePlane::Log => (cb.center + q.ln() - ca.center).abs() + cb.radius < ca.radius,
                };
                contains_scaled.push((a, b, ok));
            }
        }
        let excludes_origin = circles
            .iter()
            .map(|c| match plane {
                CirclePlane::Z => c.radius < c.center,
                // exp is injective on the strip |Im w| < pi, so the image is a
                // Jordan curve in the slit plane and cannot wind around 0
                CirclePlane::Log => c.radius < PI,
            })
            .collect();
        let certificate = NestingCertificate { contains_speeds, contains_scaled, excludes_origin };
        ContourSpec { plane, circles, certificate }
    }

    pub fn level(&self) -> usize {
        self.circles.len()
    }

    /// The point of circle `j` at angle `phi`, mapped back to the z-plane.
    pub fn point(&self, j: usize, phi: f64) -> Complex64 {
        let c = self.circles[j];
        let e = Complex64::from_polar(c.radius, phi);
        match self.plane {
            CirclePlane::Log => (c.center + e).exp(),
            CirclePlane::Z => c.center + e,
        }
    }

    fn check(&self) -> Result<()> {
        match self.certificate.first_violation() {
            None => Ok(()),
            Some(v) => Err(Error::InfeasibleContour(v)),
        }
    }

    /// Nodes and trapezoid weights `(2 pi i)^{-1} dz/z` on circle `j`.
    fn nodes(&self, j: usize, m: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let c = self.circles[j];
        let mut z = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m);
        for s in 0..m {
            let e = Complex64::from_polar(1.0, 2.0 * PI * s as f64 / m as f64);
            match self.plane {
                CirclePlane::Z => {
                    let zz = c.center + c.radius * e;
                    z.push(zz);
                    w.push(c.radius * e / (zz * m as f64));
                }
                CirclePlane::Log => {
                    z.push((c.center + c.radius * e).exp());
                    w.push(c.radius * e / m as f64);
                }
            }
        }
        (z, w)
    }
}

/// Candidate gaps, in log units, between a contour and the nearest singularity it must avoid.
pub const LOG_MARGINS: [f64; 10] = [0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.08, 0.06, 0.05, 0.04];

/// How far a margin may raise the exponent `t (R Re z + L Re 1/z)` above its
/// value on the tightest possible contours.
pub const EXPONENT_INFLATION: f64 = 5.0;

/// Log-plane circles for level `k`, falling back to [`build_contours_concentric`]
/// when none fits inside the strip `|Im log z| < pi`.
///
/// The trapezoid rule converges like `exp(-M margin / radius)`, while wider
/// circles reach further into the region where `e^{t(Rz + L/z)}` is large and
/// lose digits to cancellation. The widest entry of [`LOG_MARGINS`] whose
/// inflation of the exponent stays below [`EXPONENT_INFLATION`] is used.
pub fn build_contours(params: &Params, k: usize, t: f64) -> Result<ContourSpec> {
    params.validate()?;
    let lq = -params.q.ln();
    let (amin, amax) = (min_speed(params), max_speed(params));
    let tight_left = amin.ln() - (k - 1) as f64 * lq;
    let mut last = None;
    for m in LOG_MARGINS {
        let left = tight_left - k as f64 * m;
        let right = amax.ln() + k as f64 * m;
        let inflation = t * params.left * ((-left).exp() - (-tight_left).exp())
            + t * params.right * (right.exp() - amax);
        if inflation > EXPONENT_INFLATION && m > LOG_MARGINS[LOG_MARGINS.len() - 1] {
            continue;
        }
        match build_contours_log(params, k, m) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    let e = last.unwrap_or_else(|| Error::InfeasibleContour("no log-plane margin fits".into()));
    let spread = amax - amin;
    build_contours_concentric(params, k, 0.25 * amin.min(spread + 0.1)).map_err(|_| e)
}

/// Circles in `log z` with real-axis intercepts `log(a_min) - margin - (k - j)(|log q| + margin)`
/// and `log(a_max) + (k - j + 1) margin`.
pub fn build_contours_log(params: &Params, k: usize, margin: f64) -> Result<ContourSpec> {
    params.validate()?;
    assert!(k >= 1 && margin > 0.0);
    let lq = -params.q.ln();
    let lo = min_speed(params).ln();
    let hi = max_speed(params).ln();
    let circles = (1..=k)
        .map(|j| {
            let steps = (k - j) as f64;
            let left = lo - margin - steps * (lq + margin);
            let right = hi + (steps + 1.0) * margin;
            Circle { center: 0.5 * (left + right), radius: 0.5 * (right - left) }
        })
        .collect();
    let spec = ContourSpec::from_circles(CirclePlane::Log, circles, params);
    spec.check()?;
    Ok(spec)
}

/// Concentric circles around `C = (a_min + a_max)/2`: innermost radius
/// `spread/2 + margin`, then `rho_A` is the midpoint of `(1-q)C + q rho_{A+1}` and `C`.
pub fn build_contours_concentric(params: &Params, k: usize, margin: f64) -> Result<ContourSpec> {
    params.validate()?;
    assert!(k >= 1 && margin > 0.0);
    let q = params.q;
    let (amin, amax) = (min_speed(params), max_speed(params));
    let c = 0.5 * (amin + amax);
    let mut radii = vec![0.0; k];
    radii[k - 1] = 0.5 * (amax - amin) + margin;
    if radii[k - 1] >= c {
        return Err(Error::InfeasibleContour(format!(
            "innermost radius {} reaches the origin (center {c})",
            radii[k - 1]
        )));
    }
    for a in (0..k - 1).rev() {
        radii[a] = 0.5 * ((1.0 - q) * c + q * radii[a + 1] + c);
    }
    let circles = radii.into_iter().map(|radius| Circle { center: c, radius }).collect();
    let spec = ContourSpec::from_circles(CirclePlane::Z, circles, params);
    spec.check()?;
    Ok(spec)
}

fn min_speed(p: &Params) -> f64 {
    p.speeds.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_speed(p: &Params) -> f64 {
    p.speeds.iter().copied().fold(0.0, f64::max)
}

/// Quadrature control: start with `points` nodes per circle and double until the
/// relative change `|v_2M - v_M| / max(1, |v_2M|)` is below `tol` for every requested index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub points: usize,
    pub tol: f64,
    pub max_points: usize,
    /// Cap on total integrand evaluations `M^k` for one index.
    pub max_evaluations: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { points: 32, tol: 1e-10, max_points: 4096, max_evaluations: 1 << 30 }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 16 || !self.points.is_power_of_two() {
            return Err(Error::InvalidParams(format!("points = {} must be a power of two >= 16", self.points)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams("quadrature tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourValue {
    pub value: Complex64,
    /// Nodes per circle at convergence.
    pub points: usize,
    /// Last relative change observed by the doubling loop.
    pub change: f64,
}

/// `m(t; n)` for one multi-index (ordered or not).
pub fn moment_contour(
    params: &Params,
    n: &MultiIndex,
    t: f64,
    spec: &ContourSpec,
    quad: &QuadSpec,
) -> Result<ContourValue> {
    let (v, points, change) = moments_contour(params, std::slice::from_ref(n), t, spec, quad)?;
    Ok(ContourValue { value: v[0], points, change })
}

/// `m(t; n)` for many multi-indices of the same level, sharing the node evaluations.
/// Returns the values, the nodes per circle and the last relative change.
pub fn moments_contour(
    params: &Params,
    ns: &[MultiIndex],
    t: f64,
    spec: &ContourSpec,
    quad: &QuadSpec,
) -> Result<(Vec<Complex64>, usize, f64)> {
    moments_contour_with(params, ns, t, spec, quad, &vec![0; spec.level()])
}

/// Same integrals with the integrand multiplied by `prod_j z_j^{powers[j]}`.
///
/// With `powers = -e_j` and a sign flip this is the cumulative operator
/// continued to labels `<= 0` with unit speeds: by the partial-sum identity it
/// replaces `prod_{i<=n_j} a_i/(a_i - z_j)` by `-(1/z_j) prod_{i<=n_j} a_i/(a_i - z_j)`.
pub fn moments_contour_with(
    params: &Params,
    ns: &[MultiIndex],
    t: f64,
    spec: &ContourSpec,
    quad: &QuadSpec,
    powers: &[i32],
) -> Result<(Vec<Complex64>, usize, f64)> {
    params.validate()?;
    quad.validate()?;
    spec.check()?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let k = spec.level();
    if ns.iter().any(|n| n.level() != k) {
        return Err(Error::InvalidParams(format!("all multi-indices must have level {k}")));
    }
    // with a zero last label the z_k integrand is analytic inside its circle
    let live: Vec<usize> = (0..ns.len()).filter(|&i| *ns[i].as_slice().last().unwrap() != 0).collect();
    if live.is_empty() {
        return Ok((vec![Complex64::new(0.0, 0.0); ns.len()], quad.points, 0.0));
    }
    let scatter = |v: Vec<Complex64>| {
        let mut out = vec![Complex64::new(0.0, 0.0); ns.len()];
        for (&i, x) in live.iter().zip(v) {
            out[i] = x;
        }
        out
    };
    let ns: Vec<MultiIndex> = live.iter().map(|&i| ns[i].clone()).collect();
    let ns = ns.as_slice();
    let fits = |m: usize| m <= quad.max_points && (m as f64).powi(k as i32) <= quad.max_evaluations as f64;
    let mut m = quad.points;
    if !fits(2 * m) {
        return Err(Error::NonConvergence { points: m, last_change: f64::INFINITY });
    }
    let mut prev = evaluate_fixed_with(params, ns, t, spec, m, powers);
    let mut change = f64::INFINITY;
    while fits(2 * m) {
        m *= 2;
        let cur = evaluate_fixed_with(params, ns, t, spec, m, powers);
        change = prev
            .iter()
            .zip(&cur)
            .map(|(a, b)| (a - b).norm() / b.norm().max(1.0))
            .fold(0.0, f64::max);
        if change.is_nan() {
            break;
        }
        if change < quad.tol {
            return Ok((scatter(cur), m, change));
        }
        prev = cur;
    }
    Err(Error::NonConvergence { points: m, last_change: change })
}

/// Trapezoidal approximation with `m` nodes per circle.
pub fn evaluate_fixed(params: &Params, ns: &[MultiIndex], t: f64, spec: &ContourSpec, m: usize) -> Vec<Complex64> {
    evaluate_fixed_with(params, ns, t, spec, m, &vec![0; spec.level()])
}

fn evaluate_fixed_with(
    params: &Params,
    ns: &[MultiIndex],
    t: f64,
    spec: &ContourSpec,
    m: usize,
    powers: &[i32],
) -> Vec<Complex64> {
    let k = spec.level();
    assert_eq!(powers.len(), k);
    let q = params.q;
    let vmax = ns.iter().flat_map(|n| n.as_slice().iter().copied()).max().unwrap_or(0);
    let grids: Vec<_> = (0..k).map(|j| spec.nodes(j, m)).collect();
    // f[j][v][s]: weight times exponential times prod_{i<=v} a_i/(a_i - z)
    let f: Vec<Vec<Vec<Complex64>>> = grids
        .iter()
        .zip(powers)
        .map(|((z, w), &pw)| {
            let mut levels = Vec::with_capacity(vmax + 1);
            let mut cur: Vec<Complex64> = z
                .iter()
                .zip(w)
                .map(|(&zz, &ww)| {
                    ww * zz.powi(pw) * (t * (params.right * (q - 1.0) * zz + params.left * (1.0 / q - 1.0) / zz)).exp()
                })
                .collect();
            levels.push(cur.clone());
            for v in 1..=vmax {
                let a = params.speed(v);
                cur.iter_mut().zip(z).for_each(|(c, &zz)| *c *= a / (a - zz));
                levels.push(cur.clone());
            }
            levels
        })
        .collect();
    let pair = |a: usize, b: usize| -> Vec<Complex64> {
        let (za, zb) = (&grids[a].0, &grids[b].0);
        let mut p = Vec::with_capacity(m * m);
        for &x in za {
            for &y in zb {
                p.push((x - y) / (x - q * y));
            }
        }
        p
    };
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let pref = sign * q.powi((k * (k - 1) / 2) as i32);

    match k {
        1 => ns.iter().map(|n| pref * f[0][n.as_slice()[0]].iter().sum::<Complex64>()).collect(),
        2 => {
            let p12 = pair(0, 1);
            ns.iter()
                .map(|n| {
                    let (f1, f2) = (&f[0][n.as_slice()[0]], &f[1][n.as_slice()[1]]);
                    let mut s = Complex64::new(0.0, 0.0);
                    for a in 0..m {
                        let row = &p12[a * m..(a + 1) * m];
                        let inner: Complex64 = row.iter().zip(f2).map(|(p, g)| p * g).sum();
                        s += f1[a] * inner;
                    }
                    pref * s
                })
                .collect()
        }
        3 => {
            let (p12, p13, p23) = (pair(0, 1), pair(0, 2), pair(1, 2));
            // inner[v][b * m + c] = sum_a f1^{(v)}[a] p12[a, b] p13[a, c]
            let mut inner: Vec<Option<Vec<Complex64>>> = vec![None; vmax + 1];
            for n in ns {
                let v = n.as_slice()[0];
                if inner[v].is_none() {
                    let mut acc = vec![Complex64::new(0.0, 0.0); m * m];
                    for a in 0..m {
                        let fa = f[0][v][a];
                        let r13 = &p13[a * m..(a + 1) * m];
                        for b in 0..m {
                            let coef = fa * p12[a * m + b];
                            let dst = &mut acc[b * m..(b + 1) * m];
                            dst.iter_mut().zip(r13).for_each(|(d, p)| *d += coef * p);
                        }
                    }
                    inner[v] = Some(acc);
                }
            }
            ns.iter()
                .map(|n| {
                    let nn = n.as_slice();
                    let s1 = inner[nn[0]].as_ref().unwrap();
                    let (f2, f3) = (&f[1][nn[1]], &f[2][nn[2]]);
                    let mut s = Complex64::new(0.0, 0.0);
                    for b in 0..m {
                        let row: Complex64 = (0..m).map(|c| p23[b * m + c] * s1[b * m + c] * f3[c]).sum();
                        s += f2[b] * row;
                    }
                    pref * s
                })
                .collect()
        }
        _ => {
            let pairs: Vec<Vec<Vec<Complex64>>> =
                (0..k).map(|a| (0..k).map(|b| if a < b { pair(a, b) } else { Vec::new() }).collect()).collect();
            ns.iter()
                .map(|n| {
                    let fs: Vec<&Vec<Complex64>> = (0..k).map(|j| &f[j][n.as_slice()[j]]).collect();
                    let mut idx = vec![0usize; k];
                    pref * nested(0, k, m, &fs, &pairs, &mut idx, Complex64::new(1.0, 0.0))
                })
                .collect()
        }
    }
}

fn nested(
    depth: usize,
    k: usize,
    m: usize,
    fs: &[&Vec<Complex64>],
    pairs: &[Vec<Vec<Complex64>>],
    idx: &mut [usize],
    acc: Complex64,
) -> Complex64 {
    if depth == k {
        return acc;
    }
    let mut s = Complex64::new(0.0, 0.0);
    for c in 0..m {
        let mut a = acc * fs[depth][c];
        for (prev, &pi) in idx.iter().enumerate().take(depth) {
            a *= pairs[prev][depth][pi * m + c];
        }
        idx[depth] = c;
        s += nested(depth + 1, k, m, fs, pairs, idx, a);
    }
    s
}

/// Worst residuals of the boundary, cumulative and free evolution conditions
/// for the contour solution, each relative to the size of the terms involved.
///
/// `cumulative` and `free_equation` use the cumulative operator continued to
/// labels `<= 0` with unit speeds, which is the form the free-evolution
/// argument relies on. The `_literal` fields use the finite sum
/// `-sum_{m=1}^{n} a_m^{-1} f(m)`; at `n_i = n_{i+1} = 1` that version of the
/// cumulative condition reads `(q^{-1} - 1) a_1^{-1} m(t; n) = 0`, so it does
/// not vanish.
#[derive(Debug, Clone, Default)]
pub struct FreeConditionReport {
    pub samples: usize,
    pub boundary: f64,
    pub cumulative: f64,
    pub free_equation: f64,
    pub cumulative_literal: f64,
    pub free_equation_literal: f64,
    /// Allowance for the central difference, `2 h^2 |m'''| / 6` relative.
    pub free_equation_allowance: f64,
    pub time_step: f64,
}

/// Checks the conditions on all `n in {1, ..., N+1}^k` with at least one
/// coincidence `n_i = n_{i+1}`.
pub fn verify_free_conditions(params: &Params, t: f64, k: usize, quad: &QuadSpec) -> Result<FreeConditionReport> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidParams("free-condition check supports 1 <= k <= 3".into()));
    }
    let spec = build_contours(params, k, t)?;
    let nmax = params.n_particles() + 1;
    let mut samples = Vec::new();
    let mut cur = vec![1usize; k];
    loop {
        if k == 1 || cur.windows(2).any(|w| w[0] == w[1]) {
            samples.push(cur.clone());
        }
        let mut d = 0;
        while d < k && cur[d] == nmax {
            cur[d] = 1;
            d += 1;
        }
        if d == k {
            break;
        }
        cur[d] += 1;
    }
    // every index a residual touches
    let mut needed: Vec<Vec<usize>> = Vec::new();
    for n in &samples {
        needed.push(n.clone());
        for i in 0..k {
            let mut d = n.clone();
            d[i] -= 1;
            needed.push(d);
            for v in 1..=n[i] {
                let mut c = n.clone();
                c[i] = v;
                needed.push(c);
            }
        }
    }
    needed.sort();
    needed.dedup();
    let ns: Vec<MultiIndex> = needed.iter().cloned().map(MultiIndex::unordered).collect();
    let pos = |n: &[usize]| needed.binary_search_by(|x| x.as_slice().cmp(n)).unwrap();

    let h = if t > 0.0 { (0.25 * t).min(1e-2) } else { 0.0 };
    let at = |s: f64| moments_contour(params, &ns, s, &spec, quad).map(|r| r.0);
    let v0 = at(t)?;
    let derivs = if h > 0.0 { Some([at(t - 2.0 * h)?, at(t - h)?, at(t + h)?, at(t + 2.0 * h)?]) } else { None };
    // continued cumulative operator in coordinate j: minus the integral with an extra 1/z_j
    let mut ext = Vec::with_capacity(k);
    for j in 0..k {
        let mut pw = vec![0; k];
        pw[j] = -1;
        let (v, _, _) = moments_contour_with(params, &ns, t, &spec, quad, &pw)?;
        ext.push(v.into_iter().map(|x| -x).collect::<Vec<_>>());
    }

    let q = params.q;
    let nabla = |n: &[usize], i: usize| {
        let mut d = n.to_vec();
        d[i] -= 1;
        params.speed(n[i]) * (v0[pos(&d)] - v0[pos(n)])
    };
    let nabla_inv_literal = |n: &[usize], i: usize| {
        let mut s = Complex64::new(0.0, 0.0);
        for v in 1..=n[i] {
            let mut c = n.to_vec();
            c[i] = v;
            s -= v0[pos(&c)] / params.speed(v);
        }
        s
    };
    let nabla_inv = |n: &[usize], i: usize| ext[i][pos(n)];
    let mut rep = FreeConditionReport { samples: samples.len(), time_step: h, ..Default::default() };
    for n in &samples {
        let scale = v0[pos(n)].norm().max(1.0);
        for i in 0..k.saturating_sub(1) {
            if n[i] != n[i + 1] {
                continue;
            }
            let b = nabla(n, i) - q * nabla(n, i + 1);
            rep.boundary = rep.boundary.max(b.norm() / scale.max(nabla(n, i).norm()));
            let c = nabla_inv(n, i) - nabla_inv(n, i + 1) / q;
            rep.cumulative = rep.cumulative.max(c.norm() / scale.max(nabla_inv(n, i).norm()));
            let c = nabla_inv_literal(n, i) - nabla_inv_literal(n, i + 1) / q;
            rep.cumulative_literal = rep.cumulative_literal.max(c.norm() / scale.max(nabla_inv_literal(n, i).norm()));
        }
        if let Some([m2, m1, p1, p2]) = &derivs {
            let ix = pos(n);
            let d = (p1[ix] - m1[ix]) / (2.0 * h);
            let third = (p2[ix] - 2.0 * p1[ix] + 2.0 * m1[ix] - m2[ix]) / (2.0 * h.powi(3));
            let mut rhs = Complex64::new(0.0, 0.0);
            let mut rhs_lit = Complex64::new(0.0, 0.0);
            for i in 0..k {
                let r = params.right * (1.0 - q) * nabla(n, i);
                rhs += r + params.left * (1.0 - 1.0 / q) * nabla_inv(n, i);
                rhs_lit += r + params.left * (1.0 - 1.0 / q) * nabla_inv_literal(n, i);
            }
            let s = scale.max(d.norm());
            rep.free_equation = rep.free_equation.max((d - rhs).norm() / s);
            rep.free_equation_literal = rep.free_equation_literal.max((d - rhs_lit).norm() / s);
            rep.free_equation_allowance = rep.free_equation_allowance.max(2.0 * h * h * third.norm() / 6.0 / s);
        }
    }
    Ok(rep)
}

/// `S_n(z) = (1/z) prod_{r<=n} (a_r - z)/a_r + sum_{j<=n} a_j^{-1} prod_{j<r<=n} (a_r - z)/a_r`.
pub fn partial_sum(speeds: &[f64], n: usize, z: Complex64) -> Complex64 {
    let a = |r: usize| speeds.get(r - 1).copied().unwrap_or(1.0);
    let mut s = Complex64::new(0.0, 0.0);
    let mut tail = Complex64::new(1.0, 0.0);
    for j in (1..=n).rev() {
        s += tail / a(j);
        tail *= (a(j) - z) / a(j);
    }
    s + tail / z
}

/// `S_n(z) - 1/z` accumulated in double-double arithmetic and rounded once.
pub fn partial_sum_defect(speeds: &[f64], n: usize, z: Complex64) -> Complex64 {
    use twofloat::TwoFloat;
    type C = (TwoFloat, TwoFloat);
    let mul = |x: C, y: C| (x.0 * y.0 - x.1 * y.1, x.0 * y.1 + x.1 * y.0);
    let a = |r: usize| speeds.get(r - 1).copied().unwrap_or(1.0);
    let zero = TwoFloat::from(0.0);
    let (zr, zi) = (TwoFloat::from(z.re), TwoFloat::from(z.im));
    let norm = zr * zr + zi * zi;
    let inv_z: C = (zr / norm, -zi / norm);
    let mut s: C = (zero, zero);
    let mut tail: C = (TwoFloat::from(1.0), zero);
    for j in (1..=n).rev() {
        let aj = TwoFloat::from(a(j));
        s = (s.0 + tail.0 / aj, s.1 + tail.1 / aj);
        tail = mul(tail, ((aj - zr) / aj, -zi / aj));
    }
    let total = mul(tail, inv_z);
    let d = (s.0 + total.0 - inv_z.0, s.1 + total.1 - inv_z.1);
    Complex64::new(f64::from(d.0), f64::from(d.1))
}

/// `max |S_n(z) - 1/z|` over `n <= n_max` and the given points, with the sum
/// formed in double-double arithmetic so the check sees the identity rather
/// than double rounding.
pub fn partial_sum_identity_check(speeds: &[f64], n_max: usize, z_samples: &[Complex64]) -> f64 {
    let mut worst = 0.0f64;
    for &z in z_samples {
        for n in 0..=n_max {
            worst = worst.max(partial_sum_defect(speeds, n, z).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::exact_moment;
    use crate::model::weyl_chamber;
    use approx::assert_relative_eq;

    fn mi(v: &[usize]) -> MultiIndex {
        MultiIndex::unordered(v.to_vec())
    }

    #[test]
    fn concentric_example() {
        let p = Params::uniform(0.5, 1.0, 1.0, 3).unwrap();
        let spec = build_contours_concentric(&p, 3, 0.1).unwrap();
        assert!(spec.certificate.is_valid());
        let r: Vec<f64> = spec.circles.iter().map(|c| c.radius).collect();
        assert!(spec.circles.iter().all(|c| c.center == 1.0));
        assert!(r[0] > r[1] && r[1] > r[2] && r[0] < 1.0);
    }

    #[test]
    fn concentric_radii_stay_below_center_as_q_grows() {
        for q in [0.9, 0.99, 0.999] {
            let p = Params::new(q, 1.0, 1.0, vec![0.8, 1.2]).unwrap();
            let spec = build_contours_concentric(&p, 4, 0.05).unwrap();
            assert!(spec.circles.iter().all(|c| c.radius < c.center));
        }
    }

    #[test]
    fn infeasible_geometry_is_reported() {
        let p = Params::new(0.5, 1.0, 1.0, vec![0.1, 5.0]).unwrap();
        assert!(matches!(build_contours_concentric(&p, 2, 0.1), Err(Error::InfeasibleContour(_))));
        let p = Params::new(0.05, 1.0, 1.0, vec![1.0]).unwrap();
        assert!(matches!(build_contours_log(&p, 4, 0.05), Err(Error::InfeasibleContour(_))));
    }

    #[test]
    fn single_residue() {
        let p = Params::uniform(0.5, 1.2, 0.7, 1).unwrap();
        let spec = build_contours(&p, 1, 1.0).unwrap();
        let v = moment_contour(&p, &mi(&[1]), 0.8, &spec, &QuadSpec::default()).unwrap();
        let exact: f64 = (0.8f64 * (1.2 * (0.5 - 1.0) + 0.7 * (2.0 - 1.0))).exp();
        assert_relative_eq!(v.value.re, exact, max_relative = 1e-12);
        assert!(v.value.im.abs() < 1e-12);
    }

    #[test]
    fn zero_time_and_vanishing_index() {
        let p = Params::new(0.4, 1.0, 1.0, vec![0.9, 1.1, 1.3]).unwrap();
        for k in 1..=3 {
            let spec = build_contours(&p, k, 1.0).unwrap();
            let ns = weyl_chamber(k, 3);
            let (v, _, _) = moments_contour(&p, &ns, 0.0, &spec, &QuadSpec::default()).unwrap();
            for (n, val) in ns.iter().zip(v) {
                let expect = if *n.as_slice().last().unwrap() == 0 { 0.0 } else { 1.0 };
                assert!((val - expect).norm() < 1e-10, "{n:?}: {val}");
            }
            // n_k = 0 forces every index to zero
            let v = moment_contour(&p, &mi(&vec![0; k]), 1.0, &spec, &QuadSpec::default()).unwrap();
            assert!(v.value.norm() < 1e-10);
        }
    }

    #[test]
    fn matches_exact_on_small_grid() {
        for q in [0.3, 0.5, 0.8] {
            let p = Params::new(q, 1.0, 1.0, vec![0.9, 1.1, 1.0]).unwrap();
            let spec = build_contours(&p, 2, 1.0).unwrap();
            let ns = weyl_chamber(2, 3);
            let (v, _, _) = moments_contour(&p, &ns, 1.0, &spec, &QuadSpec::default()).unwrap();
            for (n, val) in ns.iter().zip(v) {
                let e = exact_moment(&p, n, 1.0).unwrap();
                assert!((val.re - e).abs() <= 1e-8 * e.abs().max(1.0), "q={q} {n:?}: {} vs {e}", val.re);
                assert!(val.im.abs() <= 1e-9 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn generic_recursion_agrees_with_level_three_kernel() {
        let p = Params::new(0.5, 1.0, 0.5, vec![1.0, 1.2]).unwrap();
        let spec = build_contours(&p, 3, 0.5).unwrap();
        let ns = vec![mi(&[1, 1, 2]), mi(&[2, 1, 2])];
        let fast = evaluate_fixed(&p, &ns, 0.5, &spec, 32);
        let pairs: Vec<Vec<Vec<Complex64>>> = (0..3)
            .map(|a| {
                (0..3)
                    .map(|b| {
                        if a >= b {
                            return Vec::new();
                        }
                        let (za, zb) = (spec.nodes(a, 32).0, spec.nodes(b, 32).0);
                        za.iter().flat_map(|&x| zb.iter().map(move |&y| (x - y) / (x - 0.5 * y))).collect()
                    })
                    .collect()
            })
            .collect();
        for (n, v) in ns.iter().zip(fast) {
            let fs: Vec<Vec<Complex64>> = (0..3)
                .map(|j| {
                    let (z, w) = spec.nodes(j, 32);
                    z.iter()
                        .zip(&w)
                        .map(|(&zz, &ww)| {
                            let e: Complex64 = 0.5 * (-0.5 * zz + 0.5 / zz);
                            let mut g = ww * e.exp();
                            for i in 1..=n.as_slice()[j] {
                                g *= p.speed(i) / (p.speed(i) - zz);
                            }
                            g
                        })
                        .collect()
                })
                .collect();
            let refs: Vec<&Vec<Complex64>> = fs.iter().collect();
            let mut idx = vec![0; 3];
            let slow = -0.125 * nested(0, 3, 32, &refs, &pairs, &mut idx, Complex64::new(1.0, 0.0));
            assert!((v - slow).norm() < 1e-12 * slow.norm().max(1.0));
        }
    }

    #[test]
    fn contour_families_agree() {
        let p = Params::new(0.5, 1.0, 1.0, vec![0.9, 1.1]).unwrap();
        let a = build_contours_log(&p, 2, 0.05).unwrap();
        let b = build_contours_log(&p, 2, 0.1).unwrap();
        let c = build_contours_concentric(&p, 2, 0.3).unwrap();
        let n = mi(&[2, 1]);
        let quad = QuadSpec::default();
        let va = moment_contour(&p, &n, 0.5, &a, &quad).unwrap().value;
        let vb = moment_contour(&p, &n, 0.5, &b, &quad).unwrap().value;
        let vc = moment_contour(&p, &n, 0.5, &c, &quad).unwrap().value;
        assert!((va - vb).norm() < 2e-10 && (va - vc).norm() < 2e-10);
    }

    #[test]
    fn free_conditions_hold() {
        let p = Params::new(0.5, 1.0, 1.0, vec![0.9, 1.1]).unwrap();
        let rep = verify_free_conditions(&p, 0.5, 2, &QuadSpec::default()).unwrap();
        assert!(rep.boundary < 1e-8 && rep.cumulative < 1e-8, "{rep:?}");
        assert!(rep.free_equation <= rep.free_equation_allowance + 1e-8, "{rep:?}");
        assert!(rep.cumulative_literal > 1e-3);
    }

    #[test]
    fn partial_sum_lemma() {
        let a = [0.7, 1.9, 1.1, 0.5, 1.4];
        let z = Complex64::new(0.3, -0.8);
        assert_eq!(partial_sum(&a, 0, z), 1.0 / z);
        for n in 1..=5 {
            let lhs = partial_sum(&a, n - 1, z) * (a[n - 1] - z) / a[n - 1];
            let rhs = partial_sum(&a, n, z) - 1.0 / a[n - 1];
            assert!((lhs - rhs).norm() < 1e-14);
        }
        assert!(partial_sum_identity_check(&a, 5, &[z, Complex64::new(2.0, 0.1)]) < 1e-12);
    }
}
