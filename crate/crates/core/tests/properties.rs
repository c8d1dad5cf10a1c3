use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pairloss::entanglement::unordered_epr_variance;
use pairloss::prelude::*;
use pairloss::spectra::{from_db, symmetric_grid, to_db};
use pairloss::steady::dark_residual;
use pairloss::validation::perturbative_coherences;

/// Random mixed state supported on `n_a, n_b ≤ support`.
fn random_state(seed: u64, trunc: Truncation, support: usize, rank: usize) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = trunc.dim();
    let g = Mat::from_fn(d, rank, |i, _| {
        let (na, nb) = trunc.occupation(i);
        if na <= support && nb <= support {
            c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let mut rho = &g * g.adjoint();
    let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
    rho = &rho * faer::Scale(c64::from(1.0 / tr));
    DensityMatrix::new(rho).unwrap()
}

fn random_hermitian(seed: u64, d: usize) -> Mat<c64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(d, d, |_, _| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    &g + g.adjoint()
}

fn params() -> impl Strategy<Value = SystemParams> {
    (1e-4..0.05f64, 1e-3..0.05f64, 0.0..0.05f64, -2.0..2.0f64, -0.05..0.05f64, -1e-3..1e-3f64).prop_map(
        |(omega, kappa, gamma, big_delta, delta, epsilon)| {
            let mut p = SystemParams { big_delta, delta, epsilon, ..SystemParams::symmetric(omega, kappa, 0.0) };
            p.omega_b = c64::new(0.5 * omega, omega);
            p.set_pair_loss(gamma).unwrap();
            p
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduced_generator_preserves_trace_and_hermiticity(p in params(), seed in any::<u64>(), detuned in any::<bool>()) {
        let trunc = Truncation::new(3, 2);
        let l = build_reduced_liouvillian(&p, trunc, detuned).unwrap();
        let x = random_hermitian(seed, trunc.dim());
        let y = l.apply_matrix(x.as_ref()).unwrap();
        let tr: c64 = (0..trunc.dim()).map(|i| y[(i, i)]).sum();
        let scale = y.norm_l2().max(1.0);
        prop_assert!(tr.norm() < 1e-12 * scale);
        prop_assert!((&y - y.adjoint()).norm_l2() < 1e-12 * scale);
    }

    #[test]
    fn full_generator_preserves_trace(p in params(), seed in any::<u64>()) {
        let trunc = Truncation::symmetric(1);
        let l = build_full_liouvillian(&p, trunc).unwrap();
        let x = random_hermitian(seed, l.hilbert_dim());
        let y = l.apply_matrix(x.as_ref()).unwrap();
        let tr: c64 = (0..l.hilbert_dim()).map(|i| y[(i, i)]).sum();
        prop_assert!(tr.norm() < 1e-11 * y.norm_l2().max(1.0));
    }

    #[test]
    fn steady_state_is_a_valid_fixed_point(p in params()) {
        let trunc = Truncation::symmetric(3);
        let l = build_reduced_liouvillian(&p, trunc, false).unwrap();
        let r = steady_state(&l, 1e-11).unwrap();
        let m = r.rho.matrix();
        let tr: f64 = (0..trunc.dim()).map(|i| m[(i, i)].re).sum();
        prop_assert!((tr - 1.0).abs() < 1e-10);
        prop_assert!(r.residual <= 1e-11);
        prop_assert!(r.rho.eigenvalues().unwrap().iter().all(|&e| e >= -1e-8));
    }

    #[test]
    fn negativity_is_swap_invariant_and_nonnegative(seed in any::<u64>(), rank in 1usize..4) {
        let trunc = Truncation::symmetric(3);
        let rho = random_state(seed, trunc, 3, rank);
        let n = negativity(&rho, trunc).unwrap();
        let swapped = negativity(&rho.swap_modes(trunc).unwrap(), trunc).unwrap();
        prop_assert!(n >= -1e-12);
        prop_assert!((n - swapped).abs() < 1e-10);
    }

    #[test]
    fn product_states_have_no_negativity(seed in any::<u64>()) {
        let ta = Truncation::new(2, 0);
        let tb = Truncation::new(0, 2);
        let ra = random_state(seed, ta, 2, 2);
        let rb = random_state(seed.wrapping_add(1), tb, 2, 2);
        let rho = DensityMatrix::new(ra.tensor(&rb).into_matrix()).unwrap();
        prop_assert!(negativity(&rho, Truncation::symmetric(2)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn unordered_variance_exceeds_normal_ordered_by_two(seed in any::<u64>(), phi in 0.0..std::f64::consts::PI) {
        // the canonical commutator holds below the top Fock level
        let trunc = Truncation::symmetric(4);
        let rho = random_state(seed, trunc, 2, 3);
        let normal = duan_variance(&rho, trunc, phi).unwrap().variance;
        let unordered = unordered_epr_variance(&rho, trunc, phi).unwrap();
        prop_assert!((unordered - normal - 2.0).abs() < 1e-10);
    }

    #[test]
    fn optimal_phase_is_a_minimum(seed in any::<u64>(), phi in 0.0..std::f64::consts::PI) {
        let trunc = Truncation::symmetric(3);
        let rho = random_state(seed, trunc, 3, 2);
        let best = optimize_phase(&rho, trunc).unwrap();
        prop_assert!(best.variance <= duan_variance(&rho, trunc, phi).unwrap().variance + 1e-12);
        prop_assert!((duan_variance(&rho, trunc, best.phi).unwrap().variance - best.variance).abs() < 1e-12);
    }

    #[test]
    fn perturbative_coherences_are_linear(seed in any::<u64>(), w in 0.0..1.0f64) {
        let trunc = Truncation::symmetric(3);
        let p = choose_parameters(3, 0.01, 0.1).unwrap().to_params(5e-3, 1e-2);
        let r1 = random_state(seed, trunc, 3, 2);
        let r2 = random_state(seed ^ 0x5a5a, trunc, 3, 2);
        let mix = DensityMatrix::mixture(&[(w, &r1), (1.0 - w, &r2)]).unwrap();
        let (a31, a42) = perturbative_coherences(&r1, &p, trunc).unwrap();
        let (b31, b42) = perturbative_coherences(&r2, &p, trunc).unwrap();
        let (m31, m42) = perturbative_coherences(&mix, &p, trunc).unwrap();
        let s = |x: f64| faer::Scale(c64::from(x));
        let e31 = &m31 - (&a31 * s(w) + &b31 * s(1.0 - w));
        let e42 = &m42 - (&a42 * s(w) + &b42 * s(1.0 - w));
        prop_assert!(e31.norm_l2() <= 1e-14 * m31.norm_l2().max(1e-300) + 1e-18);
        prop_assert!(e42.norm_l2() <= 1e-14 * m42.norm_l2().max(1e-300) + 1e-18);
    }

    #[test]
    fn dark_space_holds_for_any_amplitude(re in -1.5..1.5f64, im in -1.5..1.5f64, n in 1usize..6, gamma in 1e-4..1.0f64) {
        let trunc = Truncation::symmetric(10);
        let alpha = c64::new(re, im);
        for psi in [ces_state(alpha, 1, trunc).unwrap(), ces_state(alpha, -1, trunc).unwrap(), noon_state(n, trunc).unwrap()] {
            prop_assert!(dark_residual(&DensityMatrix::from_pure(&psi), gamma, trunc).unwrap() < 1e-12);
        }
    }

    #[test]
    fn db_round_trip(s in -0.999..10.0f64) {
        prop_assert!((from_db(to_db(s)) - s).abs() < 1e-12 * (1.0 + s.abs()));
    }

    #[test]
    fn chooser_round_trips_the_pair_loss(n in 1usize..20, gamma in 1e-4..0.04f64, x in 0.01..0.9f64) {
        prop_assume!(n as f64 * gamma < 1.0);
        let pt = choose_parameters(n, gamma, x).unwrap();
        prop_assert!((pt.round_trip_gamma - gamma).abs() < 1e-12 * gamma);
        prop_assert!((n as f64 * pt.g_t.powi(2) / pt.omega_l_t.powi(2) - x).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn spectra_are_even_in_frequency(omega in 1e-3..1e-2f64, gamma in 1e-3..5e-2f64, phi in 0.0..std::f64::consts::PI) {
        let p = SystemParams::symmetric(omega, 1e-2, gamma);
        let trunc = Truncation::symmetric(3);
        let l = build_reduced_liouvillian(&p, trunc, false).unwrap();
        let rho = steady_state(&l, 1e-12).unwrap().rho;
        let s = squeezing_spectra(&l, &rho, &p, phi, &symmetric_grid(0.1, 21)).unwrap();
        prop_assert!(s.parity_defect() <= 1e-8);
    }
}
