use num_complex::Complex64;
use proptest::prelude::*;

use qpush::contour::{build_contours, moments_contour, QuadSpec};
use qpush::evolve::{exact_moment, solve_true_evolution};
use qpush::fredholm::{fredholm_det, KernelSpec};
use qpush::model::qpoch::qpoch_inf_recip;
use qpush::model::{
    apply_generator_dual, apply_generator_pushasep, dual_markov_transitions, enumerate_moves, exit_rate,
    observable_h, occupation_states, weyl_chamber,
};
use qpush::simulate::{
    mc_observables, run_pushasep, sample_array2d, sample_dual_weighted_with, sample_pushasep_trajectory,
};
use qpush::stationary::{detailed_balance_residual, QGeoLaw};
use qpush::{MultiIndex, Params, ParticleConfig};

fn params() -> impl Strategy<Value = Params> {
    (0.1f64..0.9, 0.0f64..2.0, 0.0f64..2.0, proptest::collection::vec(0.5f64..2.0, 1..5))
        .prop_map(|(q, r, l, a)| Params::new(q, r, l, a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_keep_particles_ordered(p in params(), t in 0.0f64..3.0, seed in any::<u64>()) {
        let x0 = ParticleConfig::step(p.n_particles());
        let tr = sample_pushasep_trajectory(&p, &x0, t, seed).unwrap();
        prop_assert!(tr.events.windows(2).all(|w| w[0].0 <= w[1].0));
        prop_assert!(tr.events.last().is_none_or(|e| e.0 <= t));
        let end = tr.replay();
        prop_assert!(end.positions().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn generators_annihilate_constants(p in params(), shift in -5i64..5, seed in any::<u64>()) {
        let n = p.n_particles();
        let gaps: Vec<i64> = (0..n).map(|i| 1 + ((seed >> (4 * i)) & 3) as i64).collect();
        let mut x = Vec::new();
        let mut pos = shift;
        for g in gaps {
            pos -= g;
            x.push(pos);
        }
        let cfg = ParticleConfig::new(x).unwrap();
        prop_assert!(apply_generator_pushasep(&p, &cfg, |_| 1.0).abs() < 1e-12);
        for m in enumerate_moves(&p, &cfg) {
            prop_assert!(m.rate >= 0.0);
        }
        for y in occupation_states(n, 2) {
            // the exit rate is what the dual operator does to constants
            prop_assert!((apply_generator_dual(&p, &y, |_| 1.0) - exit_rate(&p, &y)).abs() < 1e-12);
            prop_assert!(dual_markov_transitions(&p, &y).iter().all(|d| d.rate >= 0.0 && d.to < d.from));
        }
    }

    #[test]
    fn interlacing_is_preserved(p in params(), t in 0.0f64..2.0, seed in any::<u64>()) {
        let a = sample_array2d(&p, t, seed).unwrap();
        prop_assert!(a.is_interlacing());
    }

    #[test]
    fn exact_moments_are_bounded_without_left_jumps(
        q in 0.1f64..0.9, r in 0.0f64..2.0, a in proptest::collection::vec(0.5f64..2.0, 1..4), t in 0.0f64..3.0
    ) {
        // with L = 0 nobody moves left of its start, so q^{x_n + n} <= 1
        let p = Params::new(q, r, 0.0, a).unwrap();
        let np = p.n_particles();
        let sol = solve_true_evolution(&p, &ParticleConfig::step(np), 2, t).unwrap();
        for n in weyl_chamber(2, np) {
            let m = sol.moment(&n).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&m), "n={:?} m={m}", n.as_slice());
        }
    }

    #[test]
    fn qgeometric_law_is_normalized(beta in 0.05f64..0.95, q in 0.1f64..0.9, r in 0.5f64..2.0, l in 0.1f64..2.0) {
        let law = QGeoLaw::new(beta, q).unwrap();
        let total: f64 = law.pmf_vec(400).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        let p = Params::uniform(q, r, l, 1).unwrap();
        prop_assert!(detailed_balance_residual(&p, beta * r, 200).unwrap() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn contour_matches_ode(
        q in 0.3f64..0.85, r in 0.0f64..1.5, l in 0.0f64..1.5,
        a in proptest::collection::vec(0.7f64..1.4, 2..4), t in 0.1f64..1.0, k in 1usize..3
    ) {
        let p = Params::new(q, r, l, a).unwrap();
        let ns: Vec<MultiIndex> = weyl_chamber(k, p.n_particles())
            .into_iter()
            .filter(|n| *n.as_slice().last().unwrap() != 0)
            .collect();
        let spec = build_contours(&p, k, t).unwrap();
        let (v, _, _) = moments_contour(&p, &ns, t, &spec, &QuadSpec::default()).unwrap();
        for (n, c) in ns.iter().zip(v) {
            let e = exact_moment(&p, n, t).unwrap();
            prop_assert!((c.re - e).abs() <= 1e-8 * e.abs().max(1.0), "n={:?} {} vs {e}", n.as_slice(), c.re);
        }
    }

    #[test]
    fn fredholm_matches_skellam_sum(q in 0.25f64..0.75, t in 0.1f64..1.2, re in -0.9f64..-0.05, im in -0.5f64..0.5) {
        let p = Params::uniform(q, 1.0, 1.0, 1).unwrap();
        let zeta = Complex64::new(re, im);
        let det = fredholm_det(&KernelSpec::new(&p, 1, t, zeta).unwrap()).unwrap();
        let exact = skellam_transform(q, t, zeta);
        prop_assert!((det - exact).norm() < 1e-10, "{det} vs {exact}");
    }
}

fn poisson(mean: f64, cut: usize) -> Vec<f64> {
    let mut out = vec![(-mean).exp()];
    for k in 1..cut {
        let prev = out[k - 1];
        out.push(prev * mean / k as f64);
    }
    out
}

/// `E[1/(zeta q^{X}; q)_inf]` for `X = xi - eta`, `xi ~ Poisson(t)`, `eta ~ Poisson(t)`,
/// summed over a fixed box with the q-Pochhammer product written out.
fn skellam_transform(q: f64, t: f64, zeta: Complex64) -> Complex64 {
    let (px, pe) = (poisson(t, 60), poisson(t, 60));
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, wx) in px.iter().enumerate() {
        for (j, we) in pe.iter().enumerate() {
            let base = zeta * q.powi(i as i32 - j as i32);
            // log of the product; large |base| makes the product itself overflow
            let mut log_prod = Complex64::new(0.0, 0.0);
            let mut qk = 1.0;
            while qk > 1e-18 || (base * qk).norm() > 1e-18 {
                log_prod += (1.0 - base * qk).ln();
                qk *= q;
            }
            acc += wx * we * (-log_prod).exp();
        }
    }
    acc
}

#[test]
fn skellam_oracle_agrees_with_library_pochhammer() {
    let z = Complex64::new(-0.4, 0.2);
    let lib = qpoch_inf_recip(z * 0.5f64.powi(-2), 0.5, 1e-16);
    let mut prod = Complex64::new(1.0, 0.0);
    for k in 0..200 {
        prod *= 1.0 - z * 0.5f64.powi(k - 2);
    }
    assert!((lib - 1.0 / prod).norm() < 1e-12 * lib.norm());
}

#[test]
fn feynman_kac_dual_matches_ode() {
    // E_x H(x(t), y) = E_y [H(x, y(t)) exp(int C)] from step data
    let p = Params::new(0.6, 0.8, 0.3, vec![1.0, 1.2, 0.9]).unwrap();
    let t = 0.6;
    let step = ParticleConfig::step(3);
    for n in [vec![2], vec![3, 1], vec![2, 2]] {
        let n = MultiIndex::weyl(n, 3).unwrap();
        let y0 = n.to_occupation(3).unwrap();
        let acc = mc_observables(40_000, 99, 1, |rng, out| {
            let (y, w) = sample_dual_weighted_with(&p, &y0, t, rng).unwrap();
            out[0] = w * observable_h(p.q, &step, &y);
        })
        .unwrap();
        let est = acc[0].estimate();
        let exact = exact_moment(&p, &n, t).unwrap();
        assert!(est.within(exact, 5.0), "n={:?}: {} +- {} vs {exact}", n.as_slice(), est.mean, est.stderr);
    }
}

#[test]
fn first_particles_ignore_the_ones_behind() {
    // x_1 (and the pair x_1, x_2) has the same law in systems of 2 and 4 particles
    let p4 = Params::new(0.5, 1.0, 0.7, vec![1.1, 0.9, 1.3, 0.8]).unwrap();
    let p2 = Params::new(0.5, 1.0, 0.7, vec![1.1, 0.9]).unwrap();
    for (k, t) in [(1, 0.8), (2, 0.8), (3, 0.4)] {
        for n in weyl_chamber(k, 2).into_iter().filter(|n| *n.as_slice().last().unwrap() != 0) {
            let m4 = exact_moment(&p4, &n, t).unwrap();
            let m2 = exact_moment(&p2, &n, t).unwrap();
            assert!((m4 - m2).abs() <= 1e-11 * m2.abs().max(1.0), "n={:?}", n.as_slice());
        }
    }
}

#[test]
fn first_particle_is_poisson_difference() {
    // distribution of x_1(t) + 1 against the exact Skellam pmf
    let p = Params::new(0.5, 1.3, 0.6, vec![1.25]).unwrap();
    let t = 1.5;
    let (mr, ml) = (1.3 * 1.25 * t, 0.6 / 1.25 * t);
    let (pr, pl) = (poisson(mr, 80), poisson(ml, 80));
    let pmf = |d: i64| -> f64 {
        (0..80).filter_map(|j| {
            let i = d + j as i64;
            (0..80).contains(&i).then(|| pr[i as usize] * pl[j])
        })
        .sum()
    };
    let n = 100_000;
    let acc = mc_observables(n, 3, 11, |rng, out| {
        let mut x = vec![-1];
        run_pushasep(&p, &mut x, t, rng, |_, _| {});
        for (o, d) in out.iter_mut().zip(-3..=7) {
            *o = ((x[0] + 1) == d) as u8 as f64;
        }
    })
    .unwrap();
    for (w, d) in acc.iter().zip(-3..=7) {
        let e = w.estimate();
        let target = pmf(d);
        assert!((e.mean - target).abs() <= 5.0 * (target * (1.0 - target) / n as f64).sqrt() + 1e-9, "d={d}");
    }
}

#[test]
fn zero_time_moments_of_shifted_data() {
    let p = Params::new(0.45, 1.0, 1.0, vec![1.0, 0.8]).unwrap();
    let x0 = ParticleConfig::new(vec![3, -1]).unwrap();
    let sol = solve_true_evolution(&p, &x0, 2, 0.0).unwrap();
    let n = MultiIndex::weyl(vec![2, 1], 2).unwrap();
    let want = p.q.powi(3 + 1) * p.q.powi(-1 + 2);
    assert!((sol.moment(&n).unwrap() - want).abs() < 1e-14);
}
