//! Picks coupling and laser strengths for a target pair-loss rate and checks
//! the validity conditions at that point.

use pairloss::prelude::*;

fn main() -> Result<()> {
    for (n, gamma, x) in [(3, 0.01, 0.1), (5, 0.01, 0.1), (12, 0.01, 0.1)] {
        let pt = choose_parameters(n, gamma, x)?;
        println!("N = {n}, Gamma = {gamma}, x = {x}: g = {:.4}, Omega_L = {:.4}, ratio = {:.4}", pt.g_t, pt.omega_l_t, pt.omega_l_t / pt.g_t);
        println!("  recomputed pair-loss rate {:.3e}", pt.round_trip_gamma);
        let report = check_conditions(&pt.to_params(0.7e-2, 1e-2), Truncation::symmetric(n), 10.0)?;
        print!("{}", report.to_table());
    }
    Ok(())
}
