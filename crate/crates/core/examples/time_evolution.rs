//! Relaxation from the vacuum toward the stationary state, and the
//! stationary regression correlator of the sum mode.

use pairloss::fock::mode_operators;
use pairloss::prelude::*;
use pairloss::spectra::{two_time_correlator, CorrelatorSide, CorrelatorSpec};
use pairloss::steady::evolve;

fn main() -> Result<()> {
    let trunc = Truncation::symmetric(8);
    let p = SystemParams::symmetric(0.7e-2, 1e-2, 1e-2);
    let l = build_reduced_liouvillian(&p, trunc, false)?;
    let ss = steady_state(&l, 1e-11)?.rho;

    let vacuum = DensityMatrix::ground(trunc.dim());
    for t in [0.0, 50.0, 200.0, 1000.0, 5000.0] {
        let rho = evolve(&l, &vacuum, t, 1e-10)?;
        println!("t = {t:>6}: <N> = {:.5}, distance to steady state {:.2e}", rho.mean_photon_number(trunc), rho.trace_distance(&ss)?);
    }

    let (a, b) = mode_operators(trunc);
    let f = a.add(&b);
    let fd = f.adjoint();
    let spec = CorrelatorSpec { left_op: &fd, right_op: &f, side: CorrelatorSide::RightActing, phase: c64::new(1.0, 0.0) };
    let taus = [0.0, 10.0, 50.0, 100.0, 300.0];
    let c = two_time_correlator(&l, &ss, &spec, &taus)?;
    for (t, v) in taus.iter().zip(c) {
        println!("<df+(t+{t}) df(t)> = {v:.5}");
    }
    Ok(())
}
