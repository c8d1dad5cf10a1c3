//! Checks of the reduced cavity model: validity conditions, the parameter
//! chooser, perturbative atomic coherences and the direct comparison with the
//! full atom-field model.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{mode_operators, Truncation};
use crate::linalg;
use crate::model::{build_full_liouvillian, build_reduced_liouvillian, derived_couplings, SystemParams};
use crate::steady::{steady_state, DensityMatrix};
use crate::c64;

/// Default factor by which a "much smaller" quantity must undercut its bound.
pub const DEFAULT_MARGIN_FACTOR: f64 = 10.0;

/// One inequality `lhs ≪ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`; infinite when `lhs = 0`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub margin_factor: f64,
    pub checks: Vec<Check>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Smallest margin over all checks.
    pub fn min_margin(&self) -> f64 {
        self.checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }

    /// Fixed-width table for terminal output.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<28} {:>12} {:>12} {:>12}  pass\n", "check", "lhs", "rhs", "margin");
        for c in &self.checks {
            s.push_str(&format!("{:<28} {:>12.4e} {:>12.4e} {:>12.4e}  {}\n", c.name, c.lhs, c.rhs, c.margin, if c.pass { "yes" } else { "NO" }));
        }
        s
    }
}

/// Evaluates the adiabatic-elimination, expansion-order and finite
/// two-photon-detuning conditions, with photon numbers taken from `trunc`.
pub fn check_conditions(p: &SystemParams, trunc: Truncation, margin_factor: f64) -> Result<ConditionReport> {
    let gmin = p.gamma31.min(p.gamma32).min(p.gamma42);
    let dc = derived_couplings(p)?;
    let l2 = p.omega_l.norm_sqr();
    let (na, nb) = (trunc.n_a_max as f64, trunc.n_b_max as f64);
    let mut checks = Vec::new();
    let mut add = |name: &str, lhs: f64, rhs: f64| {
        let margin = if lhs == 0.0 { f64::INFINITY } else { rhs / lhs };
        checks.push(Check { name: name.into(), lhs, rhs, margin, pass: margin >= margin_factor });
    };
    add("elimination/kappa_a", p.kappa_a, gmin);
    add("elimination/kappa_b", p.kappa_b, gmin);
    add("elimination/pair_loss", (na * nb).sqrt() * dc.gamma, gmin);
    add("elimination/omega_a", p.omega_a.norm(), gmin);
    add("elimination/omega_b", p.omega_b.norm(), gmin);
    add("elimination/delta", p.delta.abs(), gmin);
    add("expansion/x_a", na * p.g_a.norm_sqr() / l2, 1.0);
    add("expansion/x_b", nb * p.g_b.norm_sqr() / l2, 1.0);
    add("detuning/gamma1", dc.gamma1, p.kappa_a);
    add("detuning/epsilon", p.epsilon.abs(), gmin);
    add("detuning/epsilon_rate", p.epsilon.abs() * (p.gamma3() + p.gamma42) / l2, 1.0);
    add("detuning/delta_epsilon", (p.delta * p.epsilon).abs() / l2, 1.0);
    Ok(ConditionReport { margin_factor, checks })
}

/// Couplings meeting both small-parameter conditions, in units of the
/// common atomic decay rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub n: usize,
    pub gamma_t: f64,
    pub x: f64,
    pub g_t: f64,
    pub omega_l_t: f64,
    /// Pair-loss rate recomputed from `g_t` and `omega_l_t`.
    pub round_trip_gamma: f64,
}

impl FeasiblePoint {
    /// Symmetric parameters at this point with equal atomic decay rates.
    pub fn to_params(&self, omega: f64, kappa: f64) -> SystemParams {
        SystemParams {
            gamma31: 1.0,
            gamma32: 1.0,
            gamma42: 1.0,
            kappa_a: kappa,
            kappa_b: kappa,
            omega_a: c64::new(omega, 0.0),
            omega_b: c64::new(omega, 0.0),
            omega_l: c64::new(self.omega_l_t, 0.0),
            g_a: c64::new(self.g_t, 0.0),
            g_b: c64::new(self.g_t, 0.0),
            ..SystemParams::default()
        }
    }
}

pub fn choose_parameters(n: usize, gamma_t: f64, x: f64) -> Result<FeasiblePoint> {
    if n == 0 {
        return Err(Error::InvalidInput("cutoff must be at least 1".into()));
    }
    if !(gamma_t > 0.0 && gamma_t.is_finite()) {
        return Err(Error::InvalidInput(format!("pair-loss rate must be positive, got {gamma_t}")));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidInput(format!("x must lie in (0, 1), got {x}")));
    }
    let nf = n as f64;
    if nf * gamma_t >= 1.0 {
        return Err(Error::InvalidInput(format!("N·Γ = {} must be below 1", nf * gamma_t)));
    }
    let g_t = 0.5 * (nf * gamma_t / x).sqrt();
    let omega_l_t = nf * gamma_t.sqrt() / (2.0 * x);
    let mut pt = FeasiblePoint { n, gamma_t, x, g_t, omega_l_t, round_trip_gamma: f64::NAN };
    pt.round_trip_gamma = derived_couplings(&pt.to_params(0.0, 0.0))?.gamma;
    Ok(pt)
}

/// Leading atomic coherences `(⟨3|ρ|1⟩, ⟨4|ρ|2⟩)` implied by a field state.
pub fn perturbative_coherences(rho_f: &DensityMatrix, p: &SystemParams, trunc: Truncation) -> Result<(Mat<c64>, Mat<c64>)> {
    if p.epsilon != 0.0 {
        return Err(Error::InvalidInput("perturbative coherences need zero two-photon detuning".into()));
    }
    if rho_f.dim() != trunc.dim() {
        return Err(Error::DimensionMismatch { expected: trunc.dim(), found: rho_f.dim() });
    }
    let af = derived_couplings(p)?.a_factor;
    let (a, b) = mode_operators(trunc);
    let rho = rho_f.matrix();
    let bdba = b.adjoint().matmul(&b).matmul(&a);
    let rho31 = &bdba.left_mul(rho.as_ref()) * faer::Scale(c64::from(af * p.g_a * p.g_b.norm_sqr()));
    let ba_rho = b.matmul(&a).left_mul(rho.as_ref());
    let rho42 = &a.adjoint().right_mul(ba_rho.as_ref()) * faer::Scale(c64::from(af * p.g_b * p.g_a.norm_sqr()));
    Ok((rho31, rho42))
}

/// Steady states of both models and their distance.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub distance: f64,
    pub full: DensityMatrix,
    pub reduced: DensityMatrix,
    /// Atomic partial trace of `full`.
    pub field: DensityMatrix,
    pub full_residual: f64,
    pub reduced_residual: f64,
    pub conditions: ConditionReport,
}

/// `½‖Tr_A ρ_full − ρ_reduced‖₁` of the two steady states.
pub fn compare_full_vs_reduced(p: &SystemParams, trunc: Truncation) -> Result<f64> {
    Ok(compare_full_vs_reduced_report(p, trunc, DEFAULT_MARGIN_FACTOR)?.distance)
}

pub fn compare_full_vs_reduced_report(p: &SystemParams, trunc: Truncation, margin_factor: f64) -> Result<Comparison> {
    let conditions = check_conditions(p, trunc, margin_factor)?;
    for c in conditions.failures() {
        log::warn!("condition {} violated: margin {:.3}", c.name, c.margin);
    }
    let (full, reduced) = rayon::join(
        || -> Result<_> {
            let l = build_full_liouvillian(p, trunc)?;
            steady_state(&l, 1e-11)
        },
        || -> Result<_> {
            let l = build_reduced_liouvillian(p, trunc, p.epsilon != 0.0)?;
            steady_state(&l, 1e-11)
        },
    );
    let (full, reduced) = (full?, reduced?);
    let field = full.rho.partial_trace_atom(trunc)?;
    let diff = field.matrix() - reduced.rho.matrix();
    let distance = 0.5 * linalg::trace_norm_hermitian(diff.as_ref())?;
    Ok(Comparison {
        distance,
        full: full.rho,
        reduced: reduced.rho,
        field,
        full_residual: full.residual,
        reduced_residual: reduced.residual,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::two_mode_fock;

    #[test]
    fn closed_forms() {
        let pt = choose_parameters(3, 0.01, 0.1).unwrap();
        assert!((pt.g_t - 0.273_861_278_752_583).abs() < 1e-12);
        assert!((pt.omega_l_t - 1.5).abs() < 1e-12);
        assert!((pt.round_trip_gamma - 0.01).abs() < 1e-12);
        let pt = choose_parameters(5, 0.01, 0.1).unwrap();
        assert!((pt.omega_l_t / pt.g_t - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn chooser_rejects_bad_input() {
        assert!(choose_parameters(0, 0.01, 0.1).is_err());
        assert!(choose_parameters(3, 0.01, 1.0).is_err());
        assert!(choose_parameters(200, 0.01, 0.1).is_err());
        assert!(choose_parameters(3, -1.0, 0.1).is_err());
    }

    #[test]
    fn constructed_kappa_violation() {
        let p = SystemParams { kappa_a: 0.5, kappa_b: 0.5, ..SystemParams::default() };
        let r = check_conditions(&p, Truncation::symmetric(3), 10.0).unwrap();
        let c = r.get("elimination/kappa_a").unwrap();
        assert!(!c.pass);
        assert!((c.margin - 2.0).abs() < 1e-12);
        assert!(r.get("detuning/gamma1").unwrap().margin.is_infinite());
    }

    #[test]
    fn coherences_of_simple_states() {
        let t = Truncation::symmetric(2);
        let p = choose_parameters(3, 0.01, 0.1).unwrap().to_params(1e-3, 1e-2);
        let (r31, r42) = perturbative_coherences(&DensityMatrix::ground(t.dim()), &p, t).unwrap();
        assert_eq!(r31.norm_max(), 0.0);
        assert_eq!(r42.norm_max(), 0.0);
        let s = two_mode_fock(1, 1, t).unwrap();
        let (r31, _) = perturbative_coherences(&DensityMatrix::from_pure(&s), &p, t).unwrap();
        let af = derived_couplings(&p).unwrap().a_factor;
        let expect = af * p.g_a * p.g_b.norm_sqr();
        let (i, j) = (t.index(0, 1), t.index(1, 1));
        assert!((r31[(i, j)] - expect).norm() < 1e-15);
        let mut rest = r31.clone();
        rest[(i, j)] = c64::new(0.0, 0.0);
        assert_eq!(rest.norm_max(), 0.0);
    }

    #[test]
    fn detuned_coherences_rejected() {
        let t = Truncation::symmetric(1);
        let p = SystemParams { epsilon: 1e-3, ..SystemParams::default() };
        assert!(perturbative_coherences(&DensityMatrix::ground(t.dim()), &p, t).is_err());
    }
}
