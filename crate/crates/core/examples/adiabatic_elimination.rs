//! Compares the atom-field steady state, traced over the atom, with the
//! reduced cavity model as the validity margins grow.

use pairloss::prelude::*;
use pairloss::validation::{compare_full_vs_reduced_report, perturbative_coherences};

fn main() -> Result<()> {
    let trunc = Truncation::symmetric(3);
    for x in [0.3, 0.1, 0.03] {
        let pt = choose_parameters(3, 0.01, x)?;
        let p = pt.to_params(5e-3, 1e-2);
        let c = compare_full_vs_reduced_report(&p, trunc, 10.0)?;
        let (r31, r42) = perturbative_coherences(&c.field, &p, trunc)?;
        let b31 = c.full.atom_block(3, 1, trunc)?;
        let b42 = c.full.atom_block(4, 2, trunc)?;
        let rel = |a: &faer::Mat<c64>, b: &faer::Mat<c64>| (a - b).norm_l2() / b.norm_l2();
        println!(
            "x = {x:<5} g = {:.4} Omega_L = {:.3}  distance = {:.4}  min margin = {:.1}  coherence error 31: {:.3}, 42: {:.3}",
            pt.g_t,
            pt.omega_l_t,
            c.distance,
            c.conditions.min_margin(),
            rel(&r31, &b31),
            rel(&r42, &b42)
        );
    }
    Ok(())
}
