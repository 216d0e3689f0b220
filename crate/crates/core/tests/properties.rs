mod common;

use fpp_homog::cell::{mu, mu_truncated, sup_norm, TerminalCost};
use fpp_homog::corrector::{
    brute_force_minimax, h_sym, run, AtomicSpace, CandidateF, OutcomeKind, DEFAULT_MAX_ITER,
};
use fpp_homog::fpp::{l1_dist, passage_times, reachable_set, reach_radius, LatticeBox};
use fpp_homog::medium::Direction;
use fpp_homog::{Environment, MediumKind, MediumSpec};
use proptest::prelude::*;

fn uniform_env() -> impl Strategy<Value = Environment> {
    (1.0..1.5f64, 0.0..1.5f64, any::<u64>(), any::<bool>()).prop_map(|(lo, w, seed, undirected)| {
        Environment::new(MediumSpec::new(2, MediumKind::IidUniform { lo, hi: lo + w }, undirected).with_seed(seed))
            .unwrap()
    })
}

fn atomic_space() -> impl Strategy<Value = AtomicSpace> {
    (1usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(1.0..4.0f64, 2), n),
            prop::collection::vec(0.05..1.0f64, n),
        )
            .prop_map(|(atoms, raw)| {
                let s: f64 = raw.iter().sum();
                AtomicSpace::new(atoms, raw.iter().map(|v| v / s).collect(), false).unwrap()
            })
    })
}

fn site(r: i64) -> impl Strategy<Value = [i64; 2]> {
    (-r..=r, -r..=r).prop_map(|(a, b)| [a, b])
}

fn momentum() -> impl Strategy<Value = [f64; 2]> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| [a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_bounded_and_deterministic(env in uniform_env(), x in site(1000), axis in 0usize..2, up in any::<bool>()) {
        let alpha = Direction::new(axis, if up { 1 } else { -1 });
        let w = env.weight(&x, alpha);
        let b = env.bounds();
        prop_assert!(b.a <= w && w <= b.b);
        prop_assert_eq!(w, Environment::new(env.spec().clone()).unwrap().weight(&x, alpha));
        if env.spec().undirected {
            prop_assert_eq!(w, env.weight(&alpha.step(&x), alpha.reverse()));
        }
    }

    #[test]
    fn passage_time_is_bracketed_and_subadditive(env in uniform_env(), x in site(3), y in site(3), z in site(3)) {
        let bx = LatticeBox::around_origin(2, 12).unwrap();
        let from_x = passage_times(&env, &x, &bx).unwrap();
        let from_y = passage_times(&env, &y, &bx).unwrap();
        let b = env.bounds();
        let txy = from_x.get(&y).unwrap();
        let dist = l1_dist(&x, &y) as f64;
        prop_assert!(b.a * dist <= txy + 1e-12 && txy <= b.b * dist + 1e-12);
        prop_assert!(from_x.get(&z).unwrap() <= txy + from_y.get(&z).unwrap() + 1e-12);
    }

    #[test]
    fn reachable_sets_grow_with_time(env in uniform_env(), t in 0.0..5.0f64, dt in 0.0..3.0f64) {
        let r = reach_radius(t + dt, env.bounds());
        let bx = LatticeBox::around_origin(2, r + 1).unwrap();
        let small = reachable_set(&env, &[0, 0], t, &bx).unwrap();
        let large = reachable_set(&env, &[0, 0], t + dt, &bx).unwrap();
        prop_assert!(small.members.is_subset(&large.members));
    }

    #[test]
    fn control_value_is_monotone(env in uniform_env(), p in momentum(), x in site(2), t in 0.0..5.0f64, dt in 0.0..3.0f64, k in 0.0..6.0f64) {
        let phi = TerminalCost::new(0.5, |y: &[i64]| 0.5 * (y[0] as f64 * 0.7).sin() - 0.25 * y[1] as f64 % 1.0);
        let early = mu(&env, &p, &x, t, &phi).unwrap();
        let late = mu(&env, &p, &x, t + dt, &phi).unwrap();
        prop_assert!(late <= early);
        let trunc = mu_truncated(&env, &p, &x, t, &phi, k).unwrap();
        let wider = mu_truncated(&env, &p, &x, t, &phi, k + 1.0).unwrap();
        prop_assert!(early <= wider && wider <= trunc);
    }

    #[test]
    fn h_sym_matches_the_direction_loop(t in -3.0..3.0f64, p in momentum(), q in prop::collection::vec(1.0..3.0f64, 2)) {
        prop_assert_eq!(h_sym(t, &p, &q), common::naive_h_sym(t, &p, &q));
    }

    #[test]
    fn minimax_lies_between_the_weight_bounds(space in atomic_space(), p in momentum()) {
        let m = brute_force_minimax(&space, &p, 1e-12).unwrap();
        let b = space.bounds();
        prop_assert!(sup_norm(&p) / b.b - 1e-9 <= m.value && m.value <= sup_norm(&p) / b.a + 1e-9);
    }

    #[test]
    fn iteration_keeps_its_invariants(space in atomic_space(), p in momentum()) {
        let tol = 1e-9;
        let out = run(&space, &p, &CandidateF::zero(&space), tol, DEFAULT_MAX_ITER).unwrap();
        prop_assert!(space.expect(&out.f).abs() <= 1e-10);
        for w in out.trace.windows(2) {
            prop_assert!(w[1].esssup <= w[0].esssup + tol);
        }
        for e in &out.trace {
            prop_assert!(e.xi_bounded(), "xi {:?} room {:?}", e.xi, e.room);
        }
        let brute = brute_force_minimax(&space, &p, 1e-12).unwrap();
        prop_assert!(out.hbar >= brute.value - 1e-8);
        if out.kind == OutcomeKind::CorrectorFound {
            let hi = out.h.iter().copied().fold(f64::MIN, f64::max);
            let lo = out.h.iter().copied().fold(f64::MAX, f64::min);
            let pmin = space.probs.iter().copied().fold(f64::MAX, f64::min);
            prop_assert!(hi - lo <= tol / pmin + 1e-12, "spread {}", hi - lo);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn minimax_agrees_with_a_grid_scan(space in atomic_space(), p in momentum()) {
        let brute = brute_force_minimax(&space, &p, 1e-12).unwrap();
        let scan = common::scan_minimax(&space.atoms, &space.probs, &p, 2000);
        let span = sup_norm(&p) + 1.0;
        prop_assert!(brute.value <= scan + 1e-9);
        prop_assert!(scan - brute.value <= 2.0 * span / 2000.0 + 1e-9, "{} vs {}", brute.value, scan);
    }
}
