//! Physical parameters and Lindblad generators of the two-mode and atom-field models.
//!
//! All rates and detunings are dimensionless, measured in units of `gamma42`.
//! A generator is stored in Lindblad form, `L(X) = A X + X A† + Σ_k C_k X C_k†`
//! with `A = −iH − ½ Σ_k C_k† C_k`; the explicit column-stacked matrix is
//! available through [`Superoperator::vectorized`].

use faer::reborrow::ReborrowMut;
use faer::{Mat, MatMut, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, atomic_transition, kron, mode_operators, OperatorMatrix, Truncation, ATOM_LEVELS};
use crate::c64;

/// Microscopic parameters of the atom-cavity system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub gamma31: f64,
    pub gamma32: f64,
    pub gamma42: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    #[serde(with = "crate::serde_complex")]
    pub omega_a: c64,
    #[serde(with = "crate::serde_complex")]
    pub omega_b: c64,
    #[serde(with = "crate::serde_complex")]
    pub omega_l: c64,
    #[serde(with = "crate::serde_complex")]
    pub g_a: c64,
    #[serde(with = "crate::serde_complex")]
    pub g_b: c64,
    /// Detuning of mode `a` from the `|3⟩↔|1⟩` transition.
    pub delta: f64,
    /// Detuning of mode `b` from the `|4⟩↔|2⟩` transition.
    pub big_delta: f64,
    /// Two-photon detuning.
    pub epsilon: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            gamma31: 1.0,
            gamma32: 1.0,
            gamma42: 1.0,
            kappa_a: 1e-2,
            kappa_b: 1e-2,
            omega_a: c64::new(0.0, 0.0),
            omega_b: c64::new(0.0, 0.0),
            omega_l: c64::new(1.0, 0.0),
            g_a: c64::new(0.0, 0.0),
            g_b: c64::new(0.0, 0.0),
            delta: 0.0,
            big_delta: 0.0,
            epsilon: 0.0,
        }
    }
}

impl SystemParams {
    /// Symmetric real drive `Ω_a = Ω_b = omega`, equal losses `κ`, and the
    /// couplings scaled to produce pair-loss rate `gamma` at `Ω_L = 1`, `Δ = 0`.
    pub fn symmetric(omega: f64, kappa: f64, gamma: f64) -> Self {
        let mut p = Self {
            kappa_a: kappa,
            kappa_b: kappa,
            omega_a: c64::new(omega, 0.0),
            omega_b: c64::new(omega, 0.0),
            ..Self::default()
        };
        p.set_pair_loss(gamma).expect("default laser is nonzero");
        p
    }

    /// Total decay rate of level `|3⟩`.
    pub fn gamma3(&self) -> f64 {
        self.gamma31 + self.gamma32
    }

    /// Rescales `|g_a| = |g_b|` (keeping their phases) so that the pair-loss
    /// rate equals `gamma` at the current `Ω_L`, `Δ`.
    pub fn set_pair_loss(&mut self, gamma: f64) -> Result<()> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("pair-loss rate must be finite and >= 0, got {gamma}")));
        }
        let l2 = self.omega_l.norm_sqr();
        if l2 == 0.0 {
            return Err(Error::InvalidInput("laser Rabi frequency must be nonzero".into()));
        }
        let denom = self.big_delta.powi(2) + self.gamma42.powi(2) / 4.0;
        let g = (gamma * denom * l2 / self.gamma42).powf(0.25);
        let phase = |z: c64| if z.norm() > 0.0 { z / z.norm() } else { c64::new(1.0, 0.0) };
        self.g_a = phase(self.g_a) * g;
        self.g_b = phase(self.g_b) * g;
        Ok(())
    }

    /// Checks sign constraints on the rates.
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("gamma31", self.gamma31),
            ("gamma32", self.gamma32),
            ("gamma42", self.gamma42),
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
        ];
        for (name, r) in rates {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {r}")));
            }
        }
        if !(self.gamma42 > 0.0) {
            return Err(Error::InvalidInput("gamma42 must be positive".into()));
        }
        let others = [self.delta, self.big_delta, self.epsilon];
        let cs = [self.omega_a, self.omega_b, self.omega_l, self.g_a, self.g_b];
        if others.iter().any(|x| !x.is_finite()) || cs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Effective two-mode couplings produced by eliminating the atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedCouplings {
    /// Two-photon loss rate.
    pub gamma: f64,
    /// Photon-photon interaction strength.
    pub u: f64,
    #[serde(with = "crate::serde_complex")]
    pub a_factor: c64,
    /// Extra mode-`a` decay at finite two-photon detuning.
    pub gamma1: f64,
    /// Mode-`a` frequency shift at finite two-photon detuning.
    pub h1_shift: f64,
}

pub fn derived_couplings(p: &SystemParams) -> Result<DerivedCouplings> {
    let l2 = p.omega_l.norm_sqr();
    if !(l2 > 0.0) {
        return Err(Error::InvalidInput("laser Rabi frequency must be nonzero".into()));
    }
    let ga2 = p.g_a.norm_sqr();
    let gb2 = p.g_b.norm_sqr();
    let pref = ga2 * gb2 / ((p.big_delta.powi(2) + p.gamma42.powi(2) / 4.0) * l2);
    let eps = p.epsilon;
    Ok(DerivedCouplings {
        gamma: pref * p.gamma42,
        u: pref * p.big_delta,
        a_factor: -1.0 / (c64::new(p.big_delta, p.gamma42 / 2.0) * l2),
        gamma1: p.gamma3() * ga2 * eps * eps / (l2 * l2),
        h1_shift: -ga2 * (p.delta * eps * eps + eps * l2) / (2.0 * l2 * l2),
    })
}

/// Which space a generator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// `a ⊗ b`.
    TwoMode(Truncation),
    /// `atom ⊗ a ⊗ b`.
    AtomField(Truncation),
    /// A single bosonic mode with the given cutoff.
    SingleMode(usize),
}

impl Layout {
    pub fn hilbert_dim(&self) -> usize {
        match *self {
            Layout::TwoMode(t) => t.dim(),
            Layout::AtomField(t) => ATOM_LEVELS * t.dim(),
            Layout::SingleMode(c) => c + 1,
        }
    }
}

/// Guard on the size of assembled generators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    /// Largest allowed vectorized dimension `d²`.
    pub max_vectorized_dim: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { max_vectorized_dim: 4_000_000 }
    }
}

/// Tolerance of the trace-preservation check run on assembly.
pub const TRACE_CHECK_TOL: f64 = 1e-12;

/// Lindblad generator `L(X) = −i[H, X] + Σ_k (C_k X C_k† − ½{C_k†C_k, X})`.
#[derive(Clone, Debug)]
pub struct Superoperator {
    layout: Layout,
    hamiltonian: OperatorMatrix,
    jumps: Vec<OperatorMatrix>,
    effective: OperatorMatrix,
    effective_adjoint: OperatorMatrix,
    factors: Option<Box<(Superoperator, Superoperator)>>,
}

impl Superoperator {
    /// Assembles a generator from a Hamiltonian and jump operators with rates folded in.
    pub fn new(layout: Layout, hamiltonian: OperatorMatrix, jumps: Vec<OperatorMatrix>) -> Result<Self> {
        let d = layout.hilbert_dim();
        if hamiltonian.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: hamiltonian.dim() });
        }
        for c in &jumps {
            if c.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: c.dim() });
            }
        }
        let mut decay = OperatorMatrix::zeros(d);
        for c in &jumps {
            decay = decay.add(&c.adjoint().matmul(c));
        }
        let effective = hamiltonian.scale(c64::new(0.0, -1.0)).sub(&decay.scale_real(0.5));
        let effective_adjoint = effective.adjoint();
        let op = Self { layout, hamiltonian, jumps, effective, effective_adjoint, factors: None };
        let defect = op.trace_defect();
        let scale = 1.0 + decay.norm_inf() + op.hamiltonian.norm_inf();
        if defect > TRACE_CHECK_TOL * scale {
            return Err(Error::InvalidInput(format!("generator is not trace preserving (defect {defect:.3e})")));
        }
        Ok(op)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Hilbert-space dimension `d`.
    pub fn hilbert_dim(&self) -> usize {
        self.layout.hilbert_dim()
    }

    /// Vectorized dimension `d²`.
    pub fn dim(&self) -> usize {
        self.hilbert_dim().pow(2)
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[OperatorMatrix] {
        &self.jumps
    }

    /// Non-Hermitian generator `A = −iH − ½ Σ C†C`.
    pub fn effective(&self) -> &OperatorMatrix {
        &self.effective
    }

    /// Single-mode factors when the generator is a sum of independent mode-`a`
    /// and mode-`b` generators.
    pub fn factors(&self) -> Option<(&Superoperator, &Superoperator)> {
        self.factors.as_deref().map(|(a, b)| (a, b))
    }

    /// Largest entry of `L†(I) = A + A† + Σ C†C`, which vanishes for trace preservation.
    pub fn trace_defect(&self) -> f64 {
        let mut m = self.effective.add(&self.effective_adjoint);
        for c in &self.jumps {
            m = m.add(&c.adjoint().matmul(c));
        }
        m.iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// `out = L(x)`.
    pub fn apply_into(&self, x: MatRef<'_, c64>, mut out: MatMut<'_, c64>) {
        let one = c64::new(1.0, 0.0);
        out.fill(c64::new(0.0, 0.0));
        self.effective.left_mul_acc(one, x, out.rb_mut());
        self.effective.right_mul_adjoint_acc(one, x, out.rb_mut());
        for c in &self.jumps {
            let cx = c.left_mul(x);
            c.right_mul_adjoint_acc(one, cx.as_ref(), out.rb_mut());
        }
    }

    /// `L(x)` for any square matrix of matching dimension.
    pub fn apply_matrix(&self, x: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let d = self.hilbert_dim();
        if x.nrows() != d || x.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.nrows() });
        }
        let mut out = Mat::zeros(d, d);
        self.apply_into(x, out.as_mut());
        Ok(out)
    }

    /// Adjoint generator `L†(x) = A† x + x A + Σ C† x C`, which evolves observables.
    pub fn apply_adjoint_into(&self, x: MatRef<'_, c64>, mut out: MatMut<'_, c64>) {
        let one = c64::new(1.0, 0.0);
        out.fill(c64::new(0.0, 0.0));
        self.effective_adjoint.left_mul_acc(one, x, out.rb_mut());
        self.effective_adjoint.right_mul_adjoint_acc(one, x, out.rb_mut());
        for c in &self.jumps {
            let cd = c.adjoint();
            let cx = cd.left_mul(x);
            cd.right_mul_adjoint_acc(one, cx.as_ref(), out.rb_mut());
        }
    }

    /// Column-stacked matrix `L̂` with `L̂ vec(X) = vec(L(X))`.
    pub fn vectorized(&self) -> OperatorMatrix {
        let d = self.hilbert_dim();
        let id = OperatorMatrix::identity(d);
        let mut l = kron(&id, &self.effective).add(&kron(&self.effective.conj(), &id));
        for c in &self.jumps {
            l = l.add(&kron(&c.conj(), c));
        }
        l
    }

    /// Dense copy of [`Superoperator::vectorized`].
    pub fn vectorized_dense(&self) -> Mat<c64> {
        self.vectorized().to_dense()
    }

    /// Cheap upper bound on the operator norm of `L`.
    pub fn norm_bound(&self) -> f64 {
        let a = self.effective.norm_one().max(self.effective.norm_inf());
        let c: f64 = self
            .jumps
            .iter()
            .map(|c| c.norm_one().max(c.norm_inf()).powi(2))
            .sum();
        2.0 * a + c
    }

    fn with_factors(mut self, fa: Superoperator, fb: Superoperator) -> Self {
        self.factors = Some(Box::new((fa, fb)));
        self
    }
}

/// Checks `d²` against the configured limit.
pub fn check_size(layout: Layout, opts: &AssemblyOptions) -> Result<()> {
    let d2 = layout.hilbert_dim().pow(2);
    if d2 > opts.max_vectorized_dim {
        return Err(Error::DimensionOverflow { dim: d2, limit: opts.max_vectorized_dim });
    }
    Ok(())
}

fn drive(op: &OperatorMatrix, omega: c64) -> OperatorMatrix {
    op.scale(omega.conj()).add(&op.adjoint().scale(omega))
}

fn single_mode_generator(
    cutoff: usize,
    omega: c64,
    kappa: f64,
    shift: f64,
    extra_decay: f64,
) -> Result<Superoperator> {
    let a = annihilation_op(cutoff);
    let h = drive(&a, omega).add(&a.adjoint().matmul(&a).scale_real(shift));
    let mut jumps = Vec::new();
    if kappa + extra_decay > 0.0 {
        jumps.push(a.scale_real((kappa + extra_decay).sqrt()));
    }
    Superoperator::new(Layout::SingleMode(cutoff), h, jumps)
}

/// Reduced generator of the cavity modes with drive, cavity loss,
/// photon-photon interaction and pair loss, plus the optional finite-`ε`
/// mode-`a` correction.
pub fn build_reduced_liouvillian(
    p: &SystemParams,
    trunc: Truncation,
    include_eps_correction: bool,
) -> Result<Superoperator> {
    build_reduced_liouvillian_with(p, trunc, include_eps_correction, &AssemblyOptions::default())
}

pub fn build_reduced_liouvillian_with(
    p: &SystemParams,
    trunc: Truncation,
    include_eps_correction: bool,
    opts: &AssemblyOptions,
) -> Result<Superoperator> {
    p.validate()?;
    let layout = Layout::TwoMode(trunc);
    check_size(layout, opts)?;
    let dc = derived_couplings(p)?;
    if !dc.gamma.is_finite() || !dc.u.is_finite() {
        return Err(Error::InvalidInput("derived couplings are not finite".into()));
    }
    let (a, b) = mode_operators(trunc);
    let ba = b.matmul(&a);
    let (shift, gamma1) = if include_eps_correction { (dc.h1_shift, dc.gamma1) } else { (0.0, 0.0) };

    let mut h = drive(&a, p.omega_a).add(&drive(&b, p.omega_b));
    if dc.u != 0.0 {
        h = h.add(&ba.adjoint().matmul(&ba).scale_real(dc.u));
    }
    if shift != 0.0 {
        h = h.add(&a.adjoint().matmul(&a).scale_real(shift));
    }
    let mut jumps = Vec::new();
    if p.kappa_a + gamma1 > 0.0 {
        jumps.push(a.scale_real((p.kappa_a + gamma1).sqrt()));
    }
    if p.kappa_b > 0.0 {
        jumps.push(b.scale_real(p.kappa_b.sqrt()));
    }
    if dc.gamma > 0.0 {
        jumps.push(ba.scale_real(dc.gamma.sqrt()));
    }
    let op = Superoperator::new(layout, h, jumps)?;
    if dc.gamma == 0.0 && dc.u == 0.0 {
        let fa = single_mode_generator(trunc.n_a_max, p.omega_a, p.kappa_a, shift, gamma1)?;
        let fb = single_mode_generator(trunc.n_b_max, p.omega_b, p.kappa_b, 0.0, 0.0)?;
        return Ok(op.with_factors(fa, fb));
    }
    Ok(op)
}

/// Generator containing only the pair-loss dissipator with rate `gamma`.
pub fn pair_loss_liouvillian(gamma: f64, trunc: Truncation) -> Result<Superoperator> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("pair-loss rate must be >= 0, got {gamma}")));
    }
    let (a, b) = mode_operators(trunc);
    let jumps = if gamma > 0.0 { vec![b.matmul(&a).scale_real(gamma.sqrt())] } else { Vec::new() };
    Superoperator::new(Layout::TwoMode(trunc), OperatorMatrix::zeros(trunc.dim()), jumps)
}

/// Full generator of atom and cavity modes in the frame co-rotating with the
/// laser and cavity fields.
pub fn build_full_liouvillian(p: &SystemParams, trunc: Truncation) -> Result<Superoperator> {
    build_full_liouvillian_with(p, trunc, &AssemblyOptions::default())
}

pub fn build_full_liouvillian_with(
    p: &SystemParams,
    trunc: Truncation,
    opts: &AssemblyOptions,
) -> Result<Superoperator> {
    p.validate()?;
    let layout = Layout::AtomField(trunc);
    check_size(layout, opts)?;
    let s = |i, j| atomic_transition(i, j);
    let id_f = OperatorMatrix::identity(trunc.dim());
    let id_a = OperatorMatrix::identity(ATOM_LEVELS);
    let (a, b) = mode_operators(trunc);

    let h0 = s(2, 2)
        .scale_real(p.epsilon)
        .add(&s(3, 3).scale_real(p.delta))
        .add(&s(4, 4).scale_real(p.big_delta + p.epsilon))
        .add(&s(3, 2).scale(p.omega_l))
        .add(&s(2, 3).scale(p.omega_l.conj()))
        .scale_real(-1.0);
    let hc_half = kron(&s(3, 1), &a)
        .scale(p.g_a)
        .add(&kron(&s(4, 2), &b).scale(p.g_b))
        .scale_real(-1.0);
    let hc = hc_half.add(&hc_half.adjoint());
    let hin = drive(&a, p.omega_a).add(&drive(&b, p.omega_b));
    let h = kron(&h0, &id_f).add(&hc).add(&kron(&id_a, &hin));

    let mut jumps = Vec::new();
    for (rate, op) in [(p.gamma31, s(1, 3)), (p.gamma32, s(2, 3)), (p.gamma42, s(2, 4))] {
        if rate > 0.0 {
            jumps.push(kron(&op, &id_f).scale_real(rate.sqrt()));
        }
    }
    for (rate, op) in [(p.kappa_a, &a), (p.kappa_b, &b)] {
        if rate > 0.0 {
            jumps.push(kron(&id_a, op).scale_real(rate.sqrt()));
        }
    }
    Superoperator::new(layout, h, jumps)
}

/// `L(rho)` as a dense matrix.
pub fn apply(l: &Superoperator, rho: &Mat<c64>) -> Result<Mat<c64>> {
    l.apply_matrix(rho.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::two_mode_fock;

    fn proj(n_a: usize, n_b: usize, t: Truncation) -> Mat<c64> {
        two_mode_fock(n_a, n_b, t).unwrap().projector()
    }

    #[test]
    fn couplings_examples() {
        let p = SystemParams {
            g_a: c64::new(0.274, 0.0),
            g_b: c64::new(0.274, 0.0),
            omega_l: c64::new(1.5, 0.0),
            ..SystemParams::default()
        };
        let dc = derived_couplings(&p).unwrap();
        assert!((dc.gamma - 0.274f64.powi(4) / 0.5625).abs() < 1e-15);
        assert!((dc.gamma - 0.01003).abs() < 1e-4);
        assert_eq!(dc.u, 0.0);
        assert_eq!(dc.gamma1, 0.0);
        assert_eq!(dc.h1_shift, 0.0);

        let q = SystemParams {
            g_a: c64::new(1.0, 0.0),
            g_b: c64::new(1.0, 0.0),
            omega_l: c64::new(1.0, 0.0),
            big_delta: 0.5,
            ..SystemParams::default()
        };
        let dc = derived_couplings(&q).unwrap();
        assert!((dc.gamma - 2.0).abs() < 1e-14 && (dc.u - 1.0).abs() < 1e-14);
        assert!(derived_couplings(&SystemParams { omega_l: c64::new(0.0, 0.0), ..q }).is_err());
    }

    #[test]
    fn pair_loss_setter_round_trips() {
        let mut p = SystemParams { omega_l: c64::new(0.3, 1.1), big_delta: 0.2, ..SystemParams::default() };
        p.set_pair_loss(0.037).unwrap();
        assert!((derived_couplings(&p).unwrap().gamma - 0.037).abs() < 1e-14);
    }

    #[test]
    fn single_mode_decay_pattern() {
        let t = Truncation::new(2, 2);
        let p = SystemParams { kappa_a: 1.0, kappa_b: 1.0, ..SystemParams::default() };
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        let out = l.apply_matrix(proj(1, 0, t).as_ref()).unwrap();
        let expect = &proj(0, 0, t) - &proj(1, 0, t);
        assert!((&out - &expect).norm_max() < 1e-14);
    }

    #[test]
    fn pair_loss_examples() {
        let t = Truncation::new(4, 4);
        let g = 0.3;
        let l = pair_loss_liouvillian(g, t).unwrap();
        let out = l.apply_matrix(proj(1, 1, t).as_ref()).unwrap();
        let expect = (&proj(0, 0, t) - &proj(1, 1, t)) * faer::Scale(c64::from(g));
        assert!((&out - &expect).norm_max() < 1e-14);
        for n in 0..=4 {
            assert!(l.apply_matrix(proj(n, 0, t).as_ref()).unwrap().norm_max() < 1e-15);
        }
    }

    #[test]
    fn vectorized_matches_matrix_form() {
        let t = Truncation::new(2, 3);
        let mut p = SystemParams::symmetric(0.3, 0.2, 0.1);
        p.omega_b = c64::new(0.1, -0.2);
        p.big_delta = 0.4;
        p.set_pair_loss(0.1).unwrap();
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        let d = t.dim();
        let x = Mat::<c64>::from_fn(d, d, |i, j| c64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.07));
        let lx = l.apply_matrix(x.as_ref()).unwrap();
        let v = l.vectorized();
        let xv: Vec<c64> = (0..d * d).map(|k| x[(k % d, k / d)]).collect();
        let y = v.apply(&xv);
        for k in 0..d * d {
            assert!((y[k] - lx[(k % d, k / d)]).norm() < 1e-13);
        }
        // vec(I)† L̂ = 0
        for col in 0..d * d {
            let s: c64 = (0..d).map(|i| v.get(i * d + i, col)).sum();
            assert!(s.norm() < 1e-12);
        }
    }

    #[test]
    fn separable_factors_only_without_pair_coupling() {
        let t = Truncation::symmetric(3);
        let l = build_reduced_liouvillian(&SystemParams::symmetric(0.1, 0.1, 0.0), t, false).unwrap();
        assert!(l.factors().is_some());
        let l = build_reduced_liouvillian(&SystemParams::symmetric(0.1, 0.1, 0.01), t, false).unwrap();
        assert!(l.factors().is_none());
    }

    #[test]
    fn size_guard() {
        let opts = AssemblyOptions { max_vectorized_dim: 100 };
        let r = build_reduced_liouvillian_with(&SystemParams::default(), Truncation::symmetric(4), false, &opts);
        assert!(matches!(r, Err(Error::DimensionOverflow { .. })));
    }
}
