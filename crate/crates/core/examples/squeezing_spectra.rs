//! Two-mode squeezing spectra of the stationary cavity fields, printed in dB.
//!
//! Run with `cargo run --release --example squeezing_spectra -- [cutoff] [points]`.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use pairloss::prelude::*;
use pairloss::spectra::{integrated_cavity_check, narrowband_output_criterion, squeezing_spectra, symmetric_grid, to_db};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let cutoff: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let points: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(201);

    let p = SystemParams::symmetric(0.7e-2, 1e-2, 1e-2);
    let trunc = Truncation::symmetric(cutoff);
    let l = build_reduced_liouvillian(&p, trunc, false)?;
    let ss = steady_state(&l, 1e-11)?;

    let t0 = Instant::now();
    let grid = symmetric_grid(0.2, points);
    let s = squeezing_spectra(&l, &ss.rho, &p, FRAC_PI_2, &grid)?;
    println!("{} frequencies in {:.1} s (max GMRES iterations {})", points, t0.elapsed().as_secs_f64(), s.max_iterations);

    let (su, sv) = s.at(0.0).expect("grid contains zero");
    println!("S_u(0) = {su:.4} ({:.2} dB)", to_db(su));
    println!("S_v(0) = {sv:.4} ({:.2} dB)", to_db(sv));
    println!("narrowband S_u + S_v = {:.4}", narrowband_output_criterion(&s, 1e-3));
    let (lhs, rhs) = integrated_cavity_check(&s, &ss.rho, trunc)?;
    println!("integral over the grid {lhs:.4} vs cavity EPR variance {rhs:.4}");
    for k in (0..points).step_by((points / 10).max(1)) {
        println!("{:>8.4} {:>9.4} {:>9.4}", s.omega_grid[k], s.s_u[k], s.s_v[k]);
    }
    Ok(())
}
