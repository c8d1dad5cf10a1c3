//! Decomposes a stationary state into two coherent entangled states of
//! opposite swap parity and reports how well the mixture reproduces it.

use pairloss::entanglement::{fit_ces_mixture_with, CesFitOptions, OverlapMeasure};
use pairloss::prelude::*;

fn main() -> Result<()> {
    let trunc = Truncation::symmetric(14);
    let p = SystemParams::symmetric(1.16e-3, 1e-3, 1e-2);
    let l = build_reduced_liouvillian(&p, trunc, false)?;
    let rho = steady_state(&l, 1e-11)?.rho;

    for measure in [OverlapMeasure::RootFidelity, OverlapMeasure::TraceDistanceComplement] {
        let fit = fit_ces_mixture_with(&rho, trunc, &CesFitOptions { measure, ..Default::default() })?;
        println!("{measure:?}");
        println!("  p1 = {:.4} (parity {:+}), alpha1 = {:.4}, |alpha1| = {:.4}", fit.p1, fit.sign1, fit.alpha1, fit.alpha1.norm());
        println!("  p2 = {:.4} (parity {:+}), alpha2 = {:.4}, |alpha2| = {:.4}", fit.p2, fit.sign2, fit.alpha2, fit.alpha2.norm());
        println!("  overlap = {:.4}", fit.overlap);
    }
    Ok(())
}
