//! Without pair loss each driven, damped mode relaxes to a coherent state
//! with amplitude `−2iΩ/κ`. Compare the solver output with that state.

use pairloss::prelude::*;

fn main() -> Result<()> {
    let (omega, kappa) = (0.7e-2, 1e-2);
    let trunc = Truncation::symmetric(20);
    let p = SystemParams::symmetric(omega, kappa, 0.0);
    let l = build_reduced_liouvillian(&p, trunc, false)?;
    let ss = steady_state(&l, 1e-12)?;

    let alpha = c64::new(0.0, -2.0 * omega / kappa);
    let psi = coherent_state(alpha, 20).tensor(&coherent_state(alpha, 20));
    println!("alpha = {alpha}");
    println!("<N> = {:.6} (expected {:.6})", ss.rho.mean_photon_number(trunc), 2.0 * alpha.norm_sqr());
    println!("1 - fidelity = {:.2e}", 1.0 - ss.rho.fidelity_pure(&psi));
    println!("negativity = {:.2e}", negativity(&ss.rho, trunc)?);
    Ok(())
}
