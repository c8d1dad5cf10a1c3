//! Closed-form results checked against the numerical paths.

use std::f64::consts::FRAC_PI_2;

use pairloss::fock::two_mode_fock;
use pairloss::model::pair_loss_liouvillian;
use pairloss::prelude::*;
use pairloss::spectra::symmetric_grid;
use pairloss::steady::evolve;

/// Two-mode squeezed vacuum `Σ (−tanh r)ⁿ |n,n⟩ / cosh r`, truncated.
fn squeezed_vacuum(r: f64, trunc: Truncation) -> DensityMatrix {
    let mut amps = vec![c64::new(0.0, 0.0); trunc.dim()];
    for n in 0..=trunc.n_a_max.min(trunc.n_b_max) {
        amps[trunc.index(n, n)] = c64::new((-r.tanh()).powi(n as i32), 0.0);
    }
    DensityMatrix::from_pure(&PureState::new(amps, StateLabel::Custom).unwrap())
}

#[test]
fn squeezed_vacuum_entanglement() {
    let trunc = Truncation::symmetric(40);
    for r in [0.1, 0.3, 0.6] {
        let rho = squeezed_vacuum(r, trunc);
        let neg = negativity(&rho, trunc).unwrap();
        assert!((neg - 0.5 * ((2.0 * r).exp() - 1.0)).abs() < 1e-10, "r = {r}: {neg}");
        let d = optimize_phase(&rho, trunc).unwrap();
        assert!((d.variance + 2.0 * (1.0 - (-2.0 * r).exp())).abs() < 1e-10, "r = {r}: {}", d.variance);
    }
}

#[test]
fn pair_decay_of_doubly_excited_states() {
    // ab|n,n⟩ = n|n−1,n−1⟩, so |2,2⟩ leaves at 4Γ and feeds |1,1⟩, which leaves at Γ
    let trunc = Truncation::symmetric(3);
    let gamma = 0.3;
    let l = pair_loss_liouvillian(gamma, trunc).unwrap();
    let rho0 = DensityMatrix::from_pure(&two_mode_fock(2, 2, trunc).unwrap());
    for t in [0.5, 2.0, 7.0] {
        let rho = evolve(&l, &rho0, t, 1e-13).unwrap();
        let m = rho.matrix();
        let p22 = (-4.0 * gamma * t).exp();
        let p11 = 4.0 / 3.0 * ((-gamma * t).exp() - (-4.0 * gamma * t).exp());
        assert!((m[(trunc.index(2, 2), trunc.index(2, 2))].re - p22).abs() < 1e-10);
        assert!((m[(trunc.index(1, 1), trunc.index(1, 1))].re - p11).abs() < 1e-10);
        assert!((m[(trunc.index(0, 0), trunc.index(0, 0))].re - (1.0 - p22 - p11)).abs() < 1e-10);
    }
}

#[test]
fn single_axis_photons_survive_pair_loss() {
    let trunc = Truncation::symmetric(4);
    let l = pair_loss_liouvillian(1.0, trunc).unwrap();
    let mut amps = vec![c64::new(0.0, 0.0); trunc.dim()];
    amps[trunc.index(3, 0)] = c64::new(1.0, 0.0);
    amps[trunc.index(0, 3)] = c64::new(0.0, 1.0);
    amps[trunc.index(1, 1)] = c64::new(1.0, 0.0);
    let rho0 = DensityMatrix::from_pure(&PureState::new(amps, StateLabel::Custom).unwrap());
    let rho = evolve(&l, &rho0, 50.0, 1e-13).unwrap();
    let m = rho.matrix();
    let noon = |i: usize, j: usize| m[(i, j)];
    // the NOON part keeps its weight and coherence; |1,1⟩ drains into the vacuum
    assert!((noon(trunc.index(3, 0), trunc.index(3, 0)).re - 1.0 / 3.0).abs() < 1e-12);
    assert!((noon(trunc.index(3, 0), trunc.index(0, 3)) - c64::new(0.0, -1.0 / 3.0)).norm() < 1e-12);
    assert!((noon(trunc.index(0, 0), trunc.index(0, 0)).re - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn coherent_steady_state_without_pair_loss() {
    let trunc = Truncation::symmetric(16);
    let p = SystemParams { omega_b: c64::new(1e-3, 2e-3), kappa_b: 2e-2, ..SystemParams::symmetric(4e-3, 1e-2, 0.0) };
    let l = build_reduced_liouvillian(&p, trunc, false).unwrap();
    let rho = steady_state(&l, 1e-12).unwrap().rho;
    let alpha_a = c64::new(0.0, -2.0) * p.omega_a / p.kappa_a;
    let alpha_b = c64::new(0.0, -2.0) * p.omega_b / p.kappa_b;
    let psi = coherent_state(alpha_a, 16).tensor(&coherent_state(alpha_b, 16));
    assert!(1.0 - rho.fidelity_pure(&psi) < 1e-10);
    assert!(negativity(&rho, trunc).unwrap() < 1e-10);
}

#[test]
fn coherent_states_have_flat_zero_spectra() {
    // linear dynamics around a coherent state leave no normally ordered noise
    let p = SystemParams::symmetric(3e-3, 1e-2, 0.0);
    let trunc = Truncation::symmetric(12);
    let l = build_reduced_liouvillian(&p, trunc, false).unwrap();
    let rho = steady_state(&l, 1e-13).unwrap().rho;
    let s = squeezing_spectra(&l, &rho, &p, FRAC_PI_2, &symmetric_grid(0.05, 11)).unwrap();
    let worst = s.s_u.iter().chain(&s.s_v).fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn time_evolution_method_matches_linear_solve() {
    let p = SystemParams::symmetric(5e-3, 1e-2, 2e-2);
    let trunc = Truncation::symmetric(4);
    let l = build_reduced_liouvillian(&p, trunc, false).unwrap();
    let direct = steady_state(&l, 1e-12).unwrap().rho;
    let opts = SteadyOptions { method: SteadyMethod::TimeEvolution, tol: 1e-10, ..Default::default() };
    let evolved = steady_state_with(&l, &opts).unwrap().rho;
    let dense = steady_state_with(&l, &SteadyOptions { method: SteadyMethod::NullSpace, ..Default::default() }).unwrap().rho;
    assert!(direct.trace_distance(&evolved).unwrap() < 1e-6);
    assert!(direct.trace_distance(&dense).unwrap() < 1e-9);
}
