//! Engineered two-photon loss in a pair of driven cavity modes.
//!
//! The crate assembles Lindblad generators for two bosonic modes subject to
//! coherent drive, single-photon loss and correlated pair loss (and for the
//! underlying four-level atom coupled to both modes), finds their steady
//! states, and evaluates entanglement witnesses and two-mode squeezing
//! spectra of the stationary field.
//!
//! ```no_run
//! use pairloss::prelude::*;
//!
//! let p = SystemParams::symmetric(1.16e-3, 1e-3, 1e-2);
//! let trunc = Truncation::symmetric(14);
//! let l = build_reduced_liouvillian(&p, trunc, false).unwrap();
//! let report = steady_state(&l, 1e-10).unwrap();
//! let n = report.rho.mean_photon_number(trunc);
//! println!("<N> = {n:.3}");
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod entanglement;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod run;
pub mod spectra;
pub mod steady;
pub mod validation;

/// Complex scalar used throughout.
#[allow(non_camel_case_types)]
pub type c64 = num_complex::Complex64;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::c64;
    pub use crate::error::{Error, Result};
    pub use crate::fock::{
        annihilation_op, ces_state, coherent_state, kron, mode_operators, noon_state, OperatorMatrix, PureState,
        StateLabel, Truncation,
    };
    pub use crate::model::{
        apply, build_full_liouvillian, build_reduced_liouvillian, derived_couplings, DerivedCouplings,
        Superoperator, SystemParams,
    };
    pub use crate::steady::{steady_state, steady_state_with, DensityMatrix, SteadyMethod, SteadyOptions, SteadyReport};
    pub use crate::entanglement::{duan_variance, fit_ces_mixture, fock_populations, negativity, optimize_phase};
    pub use crate::spectra::{squeezing_spectra, SpectrumSeries};
    pub use crate::validation::{check_conditions, choose_parameters, compare_full_vs_reduced};
}

/// Serde adapter for complex numbers: accepts a bare number, `[re, im]` or
/// `{ re, im }`, and writes `[re, im]`.
pub mod serde_complex {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::c64;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Real(f64),
        Pair([f64; 2]),
        Fields { re: f64, #[serde(default)] im: f64 },
    }

    pub fn serialize<S: Serializer>(z: &c64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<c64, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Real(re) => c64::new(re, 0.0),
            Repr::Pair([re, im]) => c64::new(re, im),
            Repr::Fields { re, im } => c64::new(re, im),
        })
    }
}
