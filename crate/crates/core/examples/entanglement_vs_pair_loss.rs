//! Negativity and EPR variance of the stationary cavity modes versus the
//! pair-loss rate, for one drive strength.
//!
//! Run with `cargo run --release --example entanglement_vs_pair_loss -- [omega] [cutoff] [points] [gamma_min] [gamma_max]`.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use pairloss::prelude::*;
use pairloss::steady::{cutoff_adequacy, CUTOFF_THRESHOLD};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let omega: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.2e-2);
    let cutoff: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let points: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(13);
    let g_min: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let g_max: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-1);
    let trunc = Truncation::symmetric(cutoff);

    println!("{:>10} {:>11} {:>11} {:>11} {:>10} {:>7}", "Gamma", "negativity", "EPR(pi/2)", "EPR(min)", "top pop", "time");
    for k in 0..points {
        let gamma = g_min * (g_max / g_min).powf(k as f64 / (points - 1).max(1) as f64);
        let t0 = Instant::now();
        let p = SystemParams::symmetric(omega, 1e-2, gamma);
        let l = build_reduced_liouvillian(&p, trunc, false)?;
        let rho = steady_state(&l, 1e-10)?.rho;
        let neg = negativity(&rho, trunc)?;
        let fixed = duan_variance(&rho, trunc, FRAC_PI_2)?.variance;
        let best = optimize_phase(&rho, trunc)?.variance;
        let c = cutoff_adequacy(&rho, trunc, CUTOFF_THRESHOLD)?;
        let top = c.top_population_a.max(c.top_population_b);
        println!("{gamma:>10.3e} {neg:>11.4e} {fixed:>11.4e} {best:>11.4e} {top:>10.2e} {:>6.1}s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}
