use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::moves::{apply_move, enumerate_moves};
use super::{OccupationState, Params, ParticleConfig};

/// Duality function `H(x, y) = prod_i q^{(x_i + i) y_i}`, zero whenever `y_0 > 0`.
pub fn observable_h(q: f64, cfg: &ParticleConfig, y: &OccupationState) -> f64 {
    assert_eq!(cfg.len(), y.n_particles(), "dimension mismatch");
    if y.get(0) > 0 {
        return 0.0;
    }
    let e: i64 = (1..=cfg.len()).map(|i| (cfg.x(i) + i as i64) * y.get(i) as i64).sum();
    q.powf(e as f64)
}

/// `H` extended to integer vectors `y` indexed `0..=N+1`, of any sign, with
/// `x_0 = +infinity` and `x_{N+1} = -infinity`. A positive entry at 0 or a
/// negative entry at `N+1` gives 0.
fn h_extended(q: f64, cfg: &ParticleConfig, y: &[i64]) -> f64 {
    let n = cfg.len();
    if y[0] > 0 || y[n + 1] < 0 {
        return 0.0;
    }
    assert!(y[0] == 0 && y[n + 1] == 0, "unbounded extended H");
    let e: i64 = (1..=n).map(|i| (cfg.x(i) + i as i64) * y[i]).sum();
    q.powf(e as f64)
}

fn coefficient(q: f64, y: &OccupationState, i: usize, j: usize) -> f64 {
    // (q^{-y_j} - 1) q^{-(y_i + ... + y_{j-1})}
    let s: u32 = (i..j).map(|m| y.get(m)).sum();
    (q.powi(-(y.get(j) as i32)) - 1.0) * q.powi(-(s as i32))
}

/// The dual generator acting on `g`:
///
/// `sum_i R a_i (1 - q^{y_i}) (g(y^{i,i-1}) - g(y))
///  + sum_i (L/a_i) sum_{j>=i} (q^{-y_j} - 1) q^{-(y_i+...+y_{j-1})} g(y^{j,i})`.
///
/// This is not a Markov generator; see [`dual_markov_transitions`] and [`exit_rate`].
pub fn apply_generator_dual<G>(params: &Params, y: &OccupationState, g: G) -> f64
where
    G: Fn(&OccupationState) -> f64,
{
    let n = y.n_particles();
    let q = params.q;
    let gy = g(y);
    let mut acc = 0.0;
    for i in 1..=n {
        if let Some(yt) = y.transfer(i, i - 1) {
            acc += params.right * params.speed(i) * (1.0 - q.powi(y.get(i) as i32)) * (g(&yt) - gy);
        }
    }
    if params.left > 0.0 {
        for i in 1..=n {
            let base = params.left / params.speed(i);
            for j in i..=n {
                if y.get(j) == 0 {
                    continue;
                }
                let c = coefficient(q, y, i, j);
                let gt = if i == j { gy } else { g(&y.transfer(j, i).unwrap()) };
                acc += base * c * gt;
            }
        }
    }
    acc
}

/// `C(y) = (L^dual 1)(y) = sum_i (L/a_i) (q^{-(y_i + ... + y_N)} - 1)`.
pub fn exit_rate(params: &Params, y: &OccupationState) -> f64 {
    let n = y.n_particles();
    let mut tail = 0i32;
    let mut acc = 0.0;
    for i in (1..=n).rev() {
        tail += y.get(i) as i32;
        acc += params.left / params.speed(i) * (params.q.powi(-tail) - 1.0);
    }
    acc
}

/// One dual particle moving from site `from` to site `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualTransition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Jumps of the Markov part `L^dual - C`: `i -> i-1` at rate `R a_i (1 - q^{y_i})`
/// (site 1 feeds the absorbing site 0) and `j -> i < j` at rate
/// `(L/a_i)(q^{-y_j} - 1) q^{-(y_i+...+y_{j-1})}`.
pub fn dual_markov_transitions(params: &Params, y: &OccupationState) -> Vec<DualTransition> {
    let n = y.n_particles();
    let q = params.q;
    let mut out = Vec::new();
    for i in 1..=n {
        if y.get(i) > 0 && params.right > 0.0 {
            let rate = params.right * params.speed(i) * (1.0 - q.powi(y.get(i) as i32));
            out.push(DualTransition { from: i, to: i - 1, rate });
        }
    }
    if params.left > 0.0 {
        for i in 1..=n {
            for j in i + 1..=n {
                if y.get(j) > 0 {
                    let rate = params.left / params.speed(i) * coefficient(q, y, i, j);
                    out.push(DualTransition { from: j, to: i, rate });
                }
            }
        }
    }
    out
}

/// The conservative part: `sum rate (g(y') - g(y))` over [`dual_markov_transitions`].
pub fn apply_generator_dual_markov<G>(params: &Params, y: &OccupationState, g: G) -> f64
where
    G: Fn(&OccupationState) -> f64,
{
    let gy = g(y);
    dual_markov_transitions(params, y)
        .into_iter()
        .map(|t| t.rate * (g(&y.transfer(t.from, t.to).unwrap()) - gy))
        .sum()
}

/// Worst relative residuals found by [`verify_duality_identity`].
#[derive(Debug, Clone, Default)]
pub struct DualityReport {
    pub trials: usize,
    /// `|L^{qP}_x H - L^dual_y H|` over the sum of absolute terms.
    pub max_residual: f64,
    /// The four one-move identities the duality proof is assembled from.
    pub right_jump_identity: f64,
    pub left_block_identity: f64,
    pub right_dual_identity: f64,
    pub left_dual_identity: f64,
}

/// Checks `L^{qP}_x H(x, y) = L^dual_y H(x, y)` on random pairs `(x, y)`.
pub fn verify_duality_identity(params: &Params, trials: usize, seed: u64) -> DualityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.n_particles();
    let q = params.q;
    let mut rep = DualityReport { trials, ..Default::default() };
    for _ in 0..trials {
        let cfg = random_config(&mut rng, n);
        let y = random_occupation(&mut rng, n);
        let hy = |c: &ParticleConfig| observable_h(q, c, &y);
        let hx = |yy: &OccupationState| observable_h(q, &cfg, yy);

        let h0 = hy(&cfg);
        let mut scale = h0.abs();
        let mut lhs = 0.0;
        for m in enumerate_moves(params, &cfg) {
            let d = m.rate * (hy(&apply_move(&cfg, m.mv)) - h0);
            scale += d.abs();
            lhs += d;
        }
        let rhs = apply_generator_dual(params, &y, hx);
        scale += dual_scale(params, &y, &hx);
        rep.max_residual = rep.max_residual.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));

        let mut yv: Vec<i64> = y.as_slice().iter().map(|&v| v as i64).collect();
        yv.push(0);
        let h = h_extended(q, &cfg, &yv);
        if h == 0.0 {
            continue;
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(h.abs());
        for i in 1..=n {
            let xp = apply_move(&cfg, super::Move::RightJump { i });
            let lhs = h_extended(q, &xp, &yv) - h;
            let rhs = (q.powi(yv[i] as i32) - 1.0) * h;
            rep.right_jump_identity = rep.right_jump_identity.max(rel(lhs, rhs));

            for j in i..=n {
                let xm = apply_move(&cfg, super::Move::LeftBlock { i, j });
                let s: i64 = yv[i..=j].iter().sum();
                let lhs = h_extended(q, &xm, &yv) - h;
                let rhs = (q.powi(-(s as i32)) - 1.0) * h;
                rep.left_block_identity = rep.left_block_identity.max(rel(lhs, rhs));
            }

            let gap = if i == 1 { 0.0 } else { q.powi((cfg.x(i - 1) - cfg.x(i) - 1) as i32) };
            let mut yt = yv.clone();
            yt[i] -= 1;
            yt[i - 1] += 1;
            let lhs = (1.0 - gap) * h;
            let rhs = h - h_extended(q, &cfg, &yt);
            rep.right_dual_identity = rep.right_dual_identity.max(rel(lhs, rhs));

            for j in i..=n {
                let stop = if j == n { 0.0 } else { q.powi((cfg.x(j) - cfg.x(j + 1) - 1) as i32) };
                let lhs = q.powi((cfg.x(i) - cfg.x(j) - (j - i) as i64) as i32) * (1.0 - stop) * h;
                let mut a = yv.clone();
                a[j] -= 1;
                a[i] += 1;
                let mut b = yv.clone();
                b[j + 1] -= 1;
                b[i] += 1;
                let rhs = h_extended(q, &cfg, &a) - h_extended(q, &cfg, &b);
                rep.left_dual_identity = rep.left_dual_identity.max(rel(lhs, rhs));
            }
        }
    }
    rep
}

fn dual_scale<G: Fn(&OccupationState) -> f64>(params: &Params, y: &OccupationState, g: &G) -> f64 {
    let n = y.n_particles();
    let q = params.q;
    let gy = g(y).abs();
    let mut s = 0.0;
    for i in 1..=n {
        if let Some(yt) = y.transfer(i, i - 1) {
            s += params.right * params.speed(i) * (1.0 - q.powi(y.get(i) as i32)) * (g(&yt).abs() + gy);
        }
        for j in i..=n {
            if y.get(j) > 0 {
                let gt = if i == j { gy } else { g(&y.transfer(j, i).unwrap()).abs() };
                s += params.left / params.speed(i) * coefficient(q, y, i, j) * gt;
            }
        }
    }
    s
}

pub(crate) fn random_config<R: Rng>(rng: &mut R, n: usize) -> ParticleConfig {
    let mut x = Vec::with_capacity(n);
    let mut cur: i64 = rng.random_range(-4..=4);
    for _ in 0..n {
        x.push(cur);
        cur -= 1 + rng.random_range(0..=3);
    }
    ParticleConfig::new(x).unwrap()
}

fn random_occupation<R: Rng>(rng: &mut R, n: usize) -> OccupationState {
    let k = rng.random_range(1..=6);
    let mut y = vec![0u32; n + 1];
    for _ in 0..k {
        // site 0 is drawn rarely so that H = 0 boundary cases still appear
        let site = if rng.random_bool(0.1) { 0 } else { rng.random_range(1..=n) };
        y[site] += 1;
    }
    OccupationState::new(y).unwrap()
}
