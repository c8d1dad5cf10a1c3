//! Stationary Fock-state populations under strong pair loss: the jointly
//! excited states `|n_a ≥ 1, n_b ≥ 1⟩` are almost empty.

use pairloss::entanglement::{axis_population, joint_population};
use pairloss::prelude::*;

fn main() -> Result<()> {
    let trunc = Truncation::symmetric(14);
    let p = SystemParams::symmetric(1.16e-3, 1e-3, 1e-2);
    let l = build_reduced_liouvillian(&p, trunc, false)?;
    let ss = steady_state(&l, 1e-11)?;
    let pop = fock_populations(&ss.rho, trunc)?;

    println!("<N> = {:.4}, residual {:.1e}, {} iterations", ss.rho.mean_photon_number(trunc), ss.residual, ss.iterations);
    println!("axis population {:.5}, joint population {:.5}", axis_population(&pop), joint_population(&pop));
    print!("n_a\\n_b");
    for nb in 0..8 {
        print!("{nb:>8}");
    }
    println!();
    for (na, row) in pop.iter().enumerate().take(8) {
        print!("{na:>7}");
        for v in row.iter().take(8) {
            print!("{v:>8.4}");
        }
        println!();
    }
    Ok(())
}
