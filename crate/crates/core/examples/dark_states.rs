//! States annihilated by the pair-loss dissipator: single-mode Fock states,
//! NOON states, coherent entangled states and their coherences.

use pairloss::fock::two_mode_fock;
use pairloss::prelude::*;
use pairloss::steady::{dark_residual, dark_residual_matrix};

fn main() -> Result<()> {
    let trunc = Truncation::symmetric(12);
    let gamma = 1e-2;
    let alpha = c64::new(0.3, -1.2);
    let states = [
        ("|5,0>", two_mode_fock(5, 0, trunc)?),
        ("|0,3>", two_mode_fock(0, 3, trunc)?),
        ("NOON(4)", noon_state(4, trunc)?),
        ("CES+", ces_state(alpha, 1, trunc)?),
        ("CES-", ces_state(alpha, -1, trunc)?),
        ("|1,1>", two_mode_fock(1, 1, trunc)?),
    ];
    for (name, psi) in &states {
        let r = dark_residual(&DensityMatrix::from_pure(psi), gamma, trunc)?;
        println!("{name:>8}: |L(rho)| = {r:.2e}");
    }
    let coh = faer::Mat::from_fn(trunc.dim(), trunc.dim(), |i, j| states[2].1.amplitudes[i] * states[3].1.amplitudes[j].conj());
    println!("coherence |NOON(4)><CES+|: {:.2e}", dark_residual_matrix(coh.as_ref(), gamma, trunc)?);
    Ok(())
}
