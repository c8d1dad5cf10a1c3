//! Density matrices, stationary states and time evolution of Lindblad generators.
//!
//! The default stationary solver works on the matrix form of the generator.
//! It solves the bordered system `L(X) + W·Tr(X) = W` with `W = I/d`, whose
//! unique solution is the trace-one steady state, by GMRES preconditioned
//! with the Lyapunov part `A X + X A†` of the generator (solved exactly in the
//! Schur basis of `A`).

use faer::reborrow::ReborrowMut;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{kron, mode_operators, OperatorMatrix, PureState, Truncation, ATOM_LEVELS};
use crate::linalg::{self, GmresOptions, LyapunovSolver};
use crate::model::{pair_loss_liouvillian, Layout, Superoperator};
use crate::c64;

/// Hermiticity and trace tolerance of [`DensityMatrix::new`].
pub const STATE_TOL: f64 = 1e-10;
/// Eigenvalues in `[−PSD_CLIP, 0)` are clipped to zero; anything more negative is rejected.
pub const PSD_CLIP: f64 = 1e-8;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    m: Mat<c64>,
}

/// What [`DensityMatrix::repair`] changed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub hermiticity_defect: f64,
    pub trace_before: f64,
    /// Most negative eigenvalue before clipping (0 when none).
    pub min_eigenvalue: f64,
    pub clipped: bool,
}

impl DensityMatrix {
    /// Validates `m` as a density matrix without modifying it.
    pub fn new(m: Mat<c64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidState("matrix is not square".into()));
        }
        let h = linalg::hermiticity_defect(m.as_ref());
        if h > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {h:.2e})")));
        }
        let tr = linalg::trace(m.as_ref());
        if (tr - c64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let min = linalg::eigvalsh(m.as_ref())?.into_iter().fold(f64::INFINITY, f64::min);
        if min < -PSD_CLIP {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { m })
    }

    /// Hermitizes, normalizes the trace, and clips eigenvalues in `[−PSD_CLIP, 0)`.
    pub fn repair(m: MatRef<'_, c64>) -> Result<(Self, Repair)> {
        let defect = linalg::hermiticity_defect(m);
        let mut h = linalg::hermitian_part(m);
        let tr = linalg::trace(h.as_ref()).re;
        if !(tr.abs() > 0.0) || !tr.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize, trace is {tr}")));
        }
        h = &h * faer::Scale(c64::from(1.0 / tr));
        let (vals, u) = linalg::eigh(h.as_ref())?;
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut info = Repair { hermiticity_defect: defect, trace_before: tr, min_eigenvalue: min.min(0.0), clipped: false };
        if min < -PSD_CLIP {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e} beyond the clipping threshold")));
        }
        if min < 0.0 {
            if min < -1e-12 {
                log::warn!("clipping eigenvalue {min:.3e} to zero");
            }
            info.clipped = true;
            let n = vals.len();
            let mut us = u.clone();
            let mut total = 0.0;
            for j in 0..n {
                let v = vals[j].max(0.0);
                total += v;
                for i in 0..n {
                    us[(i, j)] *= v;
                }
            }
            h = linalg::gemm(us.as_ref(), u.as_ref().adjoint());
            h = linalg::hermitian_part(h.as_ref());
            h = &h * faer::Scale(c64::from(1.0 / total));
        }
        Ok((Self { m: h }, info))
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self { m: psi.projector() }
    }

    /// `|0⟩⟨0|` on the first basis state.
    pub fn ground(dim: usize) -> Self {
        let mut m = Mat::zeros(dim, dim);
        m[(0, 0)] = c64::new(1.0, 0.0);
        Self { m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { m: Mat::from_fn(dim, dim, |i, j| if i == j { c64::new(1.0 / dim as f64, 0.0) } else { c64::new(0.0, 0.0) }) }
    }

    /// Convex combination `Σ p_i ρ_i`; weights must be non-negative and sum to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let d = parts.first().map(|(_, r)| r.dim()).ok_or_else(|| Error::InvalidInput("empty mixture".into()))?;
        let mut m = Mat::<c64>::zeros(d, d);
        for (p, r) in parts {
            if r.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.dim() });
            }
            m = &m + &(&r.m * faer::Scale(c64::from(*p)));
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.m
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.m
    }

    /// `Tr(op ρ)`.
    pub fn expect(&self, op: &OperatorMatrix) -> c64 {
        let mut s = c64::new(0.0, 0.0);
        for (i, j, v) in op.iter() {
            s += v * self.m[(j, i)];
        }
        s
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(self.m.as_ref(), self.m.as_ref()).re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(self.m.as_ref())
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let diff = &self.m - &other.m;
        Ok(0.5 * linalg::trace_norm_hermitian(diff.as_ref())?)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_pure(&self, psi: &PureState) -> f64 {
        let v = &psi.amplitudes;
        let mut s = c64::new(0.0, 0.0);
        for j in 0..v.len() {
            for i in 0..v.len() {
                s += v[i].conj() * self.m[(i, j)] * v[j];
            }
        }
        s.re
    }

    /// Squared Uhlmann fidelity `(Tr√(√ρ σ √ρ))²`.
    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        let s = linalg::sqrtm_psd(self.m.as_ref())?;
        let inner = linalg::gemm(linalg::gemm(s.as_ref(), other.m.as_ref()).as_ref(), s.as_ref());
        let f: f64 = linalg::eigvalsh(inner.as_ref())?.iter().map(|x| x.max(0.0).sqrt()).sum();
        Ok(f * f)
    }

    /// `⟨a†a + b†b⟩` on the two-mode space.
    pub fn mean_photon_number(&self, trunc: Truncation) -> f64 {
        (0..self.dim())
            .map(|i| {
                let (na, nb) = trunc.occupation(i);
                (na + nb) as f64 * self.m[(i, i)].re
            })
            .sum()
    }

    /// `ρ_a ⊗ ρ_b`.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let (da, db) = (self.dim(), other.dim());
        Self {
            m: Mat::from_fn(da * db, da * db, |i, j| self.m[(i / db, j / db)] * other.m[(i % db, j % db)]),
        }
    }

    /// Atomic matrix element `⟨i|ρ|j⟩` (1-based levels) as a field operator.
    pub fn atom_block(&self, i: usize, j: usize, trunc: Truncation) -> Result<Mat<c64>> {
        let df = trunc.dim();
        if self.dim() != ATOM_LEVELS * df {
            return Err(Error::DimensionMismatch { expected: ATOM_LEVELS * df, found: self.dim() });
        }
        if !(1..=ATOM_LEVELS).contains(&i) || !(1..=ATOM_LEVELS).contains(&j) {
            return Err(Error::InvalidInput(format!("atomic levels are 1..=4, got ({i}, {j})")));
        }
        let (oi, oj) = ((i - 1) * df, (j - 1) * df);
        Ok(Mat::from_fn(df, df, |r, c| self.m[(oi + r, oj + c)]))
    }

    /// Trace over the atom of an `atom ⊗ a ⊗ b` state.
    pub fn partial_trace_atom(&self, trunc: Truncation) -> Result<DensityMatrix> {
        let mut f = Mat::<c64>::zeros(trunc.dim(), trunc.dim());
        for nu in 1..=ATOM_LEVELS {
            f = &f + &self.atom_block(nu, nu, trunc)?;
        }
        Ok(DensityMatrix::repair(f.as_ref())?.0)
    }

    /// Exchanges the roles of the two modes (requires equal cutoffs).
    pub fn swap_modes(&self, trunc: Truncation) -> Result<DensityMatrix> {
        Ok(Self { m: swap_modes(self.m.as_ref(), trunc)? })
    }
}

/// `P m P` with `P|n_a, n_b⟩ = |n_b, n_a⟩`.
pub fn swap_modes(m: MatRef<'_, c64>, trunc: Truncation) -> Result<Mat<c64>> {
    if !trunc.is_symmetric() {
        return Err(Error::InvalidInput("mode swap needs equal cutoffs".into()));
    }
    if m.nrows() != trunc.dim() {
        return Err(Error::DimensionMismatch { expected: trunc.dim(), found: m.nrows() });
    }
    let p = |i: usize| {
        let (a, b) = trunc.occupation(i);
        trunc.index(b, a)
    };
    Ok(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(p(i), p(j))]))
}

/// Stationary-state algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    /// Dense singular value decomposition of the vectorized generator.
    NullSpace,
    /// Bordered linear solve by preconditioned GMRES.
    LinearSolve,
    /// Long-time Krylov propagation until the residual is below tolerance.
    TimeEvolution,
}

#[derive(Clone, Debug)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Bound on `‖L(ρ)‖_F`.
    pub tol: f64,
    pub gmres: GmresOptions,
    /// Memory budget of the Krylov basis in bytes.
    pub krylov_memory: usize,
    /// Largest `d²` handled by [`SteadyMethod::NullSpace`].
    pub max_dense_dim: usize,
    /// Solve independent mode factors separately when the generator has them.
    pub use_factors: bool,
    /// Longest propagation time of [`SteadyMethod::TimeEvolution`].
    pub max_time: f64,
    /// Initial state of [`SteadyMethod::TimeEvolution`]; ground state when absent.
    pub initial: Option<DensityMatrix>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            method: SteadyMethod::LinearSolve,
            tol: 1e-10,
            gmres: GmresOptions::default(),
            krylov_memory: 1 << 30,
            max_dense_dim: 2500,
            use_factors: true,
            max_time: 1e8,
            initial: None,
        }
    }
}

/// Result of a stationary-state computation.
#[derive(Clone, Debug)]
pub struct SteadyReport {
    pub rho: DensityMatrix,
    /// `‖L(ρ)‖_F` of the returned state.
    pub residual: f64,
    pub method: SteadyMethod,
    /// GMRES iterations, Krylov steps or 1 for the dense path.
    pub iterations: usize,
    pub repair: Repair,
}

/// Steady state with default options and residual bound `tol`.
pub fn steady_state(l: &Superoperator, tol: f64) -> Result<SteadyReport> {
    steady_state_with(l, &SteadyOptions { tol, ..SteadyOptions::default() })
}

pub fn steady_state_with(l: &Superoperator, opts: &SteadyOptions) -> Result<SteadyReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let report = match opts.method {
        SteadyMethod::LinearSolve => match (opts.use_factors, l.factors()) {
            (true, Some((fa, fb))) => factorized(l, fa, fb, opts)?,
            _ => linear_solve(l, opts)?,
        },
        SteadyMethod::NullSpace => null_space(l, opts)?,
        SteadyMethod::TimeEvolution => time_evolution(l, opts)?,
    };
    if report.residual > opts.tol {
        return Err(Error::NonConvergence { iterations: report.iterations, residual: report.residual });
    }
    Ok(report)
}

fn residual_of(l: &Superoperator, rho: &DensityMatrix) -> Result<f64> {
    Ok(l.apply_matrix(rho.matrix().as_ref())?.norm_l2())
}

fn factorized(l: &Superoperator, fa: &Superoperator, fb: &Superoperator, opts: &SteadyOptions) -> Result<SteadyReport> {
    let sub = SteadyOptions { tol: opts.tol * 1e-2, ..opts.clone() };
    let ra = linear_solve(fa, &sub)?;
    let rb = linear_solve(fb, &sub)?;
    let rho = ra.rho.tensor(&rb.rho);
    let residual = residual_of(l, &rho)?;
    Ok(SteadyReport {
        rho,
        residual,
        method: SteadyMethod::LinearSolve,
        iterations: ra.iterations + rb.iterations,
        repair: ra.repair,
    })
}

/// Operator `X ↦ L(X) + shift·X + W·Tr(X)` and its Lyapunov preconditioner.
pub(crate) struct Bordered<'a> {
    l: &'a Superoperator,
    lyap: LyapunovSolver,
    d: usize,
}

impl<'a> Bordered<'a> {
    pub(crate) fn new(l: &'a Superoperator) -> Result<Self> {
        let a = l.effective().to_dense();
        let lyap = LyapunovSolver::new(a.as_ref())?;
        Ok(Self { l, lyap, d: l.hilbert_dim() })
    }

    pub(crate) fn lyapunov(&self) -> &LyapunovSolver {
        &self.lyap
    }

    /// Solves `(L + shift + W Tr) x = rhs` starting from `x`.
    pub(crate) fn solve(&self, shift: c64, rhs: &[c64], x: &mut [c64], opts: &GmresOptions) -> Result<linalg::GmresOutcome> {
        let d = self.d;
        let w = c64::new(1.0 / d as f64, 0.0);
        let apply = |v: &[c64], out: &mut [c64]| -> Result<()> {
            let mut o = linalg::view_mut(out, d);
            self.l.apply_into(linalg::view(v, d), o.rb_mut());
            let tr = linalg::trace_flat(v, d);
            for (oi, vi) in out.iter_mut().zip(v) {
                *oi += shift * vi;
            }
            for i in 0..d {
                out[i + i * d] += w * tr;
            }
            Ok(())
        };
        // an undamped state makes the Lyapunov part singular although the
        // jump terms keep the full operator regular; shift it off the axis
        let scale = self.lyap.eigenvalues().iter().map(|z| z.norm()).fold(1e-300, f64::max);
        let pshift = if self.lyap.min_separation(shift) <= 1e-10 * scale { shift + 1e-6 * scale } else { shift };
        let prec = |r: &[c64], z: &mut [c64]| -> Result<()> {
            let y = self.lyap.solve(linalg::view(r, d), pshift)?;
            for j in 0..d {
                for i in 0..d {
                    z[i + j * d] = y[(i, j)];
                }
            }
            Ok(())
        };
        linalg::gmres(apply, prec, rhs, x, opts)
    }
}

/// Number of eigenvalues of the effective generator on the imaginary axis.
/// Each belongs to a state that neither decays nor jumps, so two or more
/// always give a degenerate stationary space.
fn undamped_count(lyap: &LyapunovSolver) -> usize {
    let ev = lyap.eigenvalues();
    let scale = ev.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    ev.iter().filter(|z| z.re.abs() <= 1e-12 * scale).count()
}

/// Fails with [`Error::DegenerateNullSpace`] unless the steady state is unique.
fn check_unique(l: &Superoperator, lyap: &LyapunovSolver, opts: &SteadyOptions) -> Result<()> {
    let k = undamped_count(lyap);
    if k < 2 {
        return Ok(());
    }
    if l.dim() <= opts.max_dense_dim {
        let dim = null_space_dimension(l)?;
        if dim > 1 {
            return Err(Error::DegenerateNullSpace { dimension: dim });
        }
        return Ok(());
    }
    Err(Error::DegenerateNullSpace { dimension: k })
}

fn linear_solve(l: &Superoperator, opts: &SteadyOptions) -> Result<SteadyReport> {
    let d = l.hilbert_dim();
    let bordered = Bordered::new(l)?;
    check_unique(l, bordered.lyapunov(), opts)?;
    let mut rhs = vec![c64::new(0.0, 0.0); d * d];
    for i in 0..d {
        rhs[i + i * d] = c64::new(1.0 / d as f64, 0.0);
    }
    let mut x = vec![c64::new(0.0, 0.0); d * d];
    let gopts = GmresOptions { rtol: 0.0, atol: opts.tol * 1e-2, ..opts.gmres }
        .with_memory_budget(d * d, opts.krylov_memory);
    let out = bordered.solve(c64::new(0.0, 0.0), &rhs, &mut x, &gopts)?;
    if !out.converged {
        return Err(Error::NonConvergence { iterations: out.iterations, residual: out.residual });
    }
    let (rho, repair) = DensityMatrix::repair(linalg::view(&x, d))?;
    let residual = residual_of(l, &rho)?;
    Ok(SteadyReport { rho, residual, method: SteadyMethod::LinearSolve, iterations: out.iterations, repair })
}

/// Dimension of the null space of the vectorized generator (dense SVD).
pub fn null_space_dimension(l: &Superoperator) -> Result<usize> {
    Ok(dense_null_space(l)?.1)
}

fn dense_null_space(l: &Superoperator) -> Result<(Vec<c64>, usize)> {
    let dense = l.vectorized_dense();
    let svd = dense
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD of the generator failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let n = s.nrows();
    let smax = (0..n).map(|i| s[i].re).fold(0.0, f64::max);
    let thresh = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let null: Vec<usize> = (0..n).filter(|&i| s[i].re <= thresh).collect();
    let dim = null.len();
    let v = svd.V();
    let k = *null.last().unwrap_or(&(n - 1));
    Ok(((0..n).map(|i| v[(i, k)]).collect(), dim))
}

fn null_space(l: &Superoperator, opts: &SteadyOptions) -> Result<SteadyReport> {
    if l.dim() > opts.max_dense_dim {
        return Err(Error::DimensionOverflow { dim: l.dim(), limit: opts.max_dense_dim });
    }
    let (v, dim) = dense_null_space(l)?;
    if dim > 1 {
        return Err(Error::DegenerateNullSpace { dimension: dim });
    }
    if dim == 0 {
        return Err(Error::Numerical("generator has no numerical null vector".into()));
    }
    let d = l.hilbert_dim();
    let (rho, repair) = DensityMatrix::repair(linalg::view(&v, d))?;
    let residual = residual_of(l, &rho)?;
    Ok(SteadyReport { rho, residual, method: SteadyMethod::NullSpace, iterations: 1, repair })
}

fn time_evolution(l: &Superoperator, opts: &SteadyOptions) -> Result<SteadyReport> {
    let d = l.hilbert_dim();
    let mut rho = opts.initial.clone().unwrap_or_else(|| DensityMatrix::ground(d));
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
    }
    let mut chunk = 1.0;
    let mut t = 0.0;
    let mut steps = 0;
    loop {
        let (next, stats) = evolve_stats(l, &rho, chunk, 1e-13)?;
        steps += stats.steps;
        t += chunk;
        rho = next;
        let residual = residual_of(l, &rho)?;
        if residual <= opts.tol {
            return Ok(SteadyReport {
                rho,
                residual,
                method: SteadyMethod::TimeEvolution,
                iterations: steps,
                repair: Repair::default(),
            });
        }
        if t >= opts.max_time {
            return Err(Error::NonConvergence { iterations: steps, residual });
        }
        chunk = (2.0 * chunk).min(opts.max_time - t);
    }
}

/// `ρ(t) = exp(L t) ρ0`, Hermitized and renormalized.
pub fn evolve(l: &Superoperator, rho0: &DensityMatrix, t: f64, tol: f64) -> Result<DensityMatrix> {
    Ok(evolve_stats(l, rho0, t, tol)?.0)
}

/// Propagates an arbitrary matrix: `exp(L t) x`.
pub fn propagate(l: &Superoperator, x: MatRef<'_, c64>, t: f64, tol: f64) -> Result<Mat<c64>> {
    let d = l.hilbert_dim();
    let v = linalg::flatten(x);
    let opts = linalg::ExpvOptions { tol, ..Default::default() };
    let (w, _) = linalg::expv(t, |u, out| apply_flat(l, u, out), l.norm_bound(), &v, &opts)?;
    Ok(linalg::unflatten(&w, d))
}

pub(crate) fn apply_flat(l: &Superoperator, u: &[c64], out: &mut [c64]) -> Result<()> {
    let d = l.hilbert_dim();
    let mut o = linalg::view_mut(out, d);
    l.apply_into(linalg::view(u, d), o.rb_mut());
    Ok(())
}

fn evolve_stats(l: &Superoperator, rho0: &DensityMatrix, t: f64, tol: f64) -> Result<(DensityMatrix, linalg::ExpvStats)> {
    let d = l.hilbert_dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    if t == 0.0 {
        return Ok((rho0.clone(), linalg::ExpvStats { steps: 0, rejections: 0, error_estimate: 0.0 }));
    }
    let v = linalg::flatten(rho0.matrix().as_ref());
    let opts = linalg::ExpvOptions { tol, ..Default::default() };
    let (w, stats) = linalg::expv(t, |u, out| apply_flat(l, u, out), l.norm_bound(), &v, &opts)?;
    let tr = linalg::trace_flat(&w, d);
    if (tr - c64::new(1.0, 0.0)).norm() > 1e-9 {
        log::warn!("trace drifted to {tr} during propagation");
    }
    let (rho, _) = DensityMatrix::repair(linalg::view(&w, d))?;
    Ok((rho, stats))
}

/// `‖L_Γ(ρ)‖_F` for the pair-loss dissipator alone.
pub fn dark_residual(rho: &DensityMatrix, gamma: f64, trunc: Truncation) -> Result<f64> {
    dark_residual_matrix(rho.matrix().as_ref(), gamma, trunc)
}

/// As [`dark_residual`] for any operator, e.g. a coherence `|ψ⟩⟨φ|`.
pub fn dark_residual_matrix(x: MatRef<'_, c64>, gamma: f64, trunc: Truncation) -> Result<f64> {
    let l = pair_loss_liouvillian(gamma, trunc)?;
    Ok(l.apply_matrix(x)?.norm_l2())
}

/// Populations of the highest Fock level of each mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub top_population_a: f64,
    pub top_population_b: f64,
    pub threshold: f64,
    pub adequate: bool,
    /// Suggested cutoffs when inadequate.
    pub recommended: Truncation,
}

/// Default bound on the top Fock-level population.
pub const CUTOFF_THRESHOLD: f64 = 1e-6;

pub fn cutoff_adequacy(rho: &DensityMatrix, trunc: Truncation, threshold: f64) -> Result<CutoffReport> {
    if rho.dim() != trunc.dim() {
        return Err(Error::DimensionMismatch { expected: trunc.dim(), found: rho.dim() });
    }
    let mut pa = 0.0;
    let mut pb = 0.0;
    for i in 0..rho.dim() {
        let (na, nb) = trunc.occupation(i);
        let p = rho.matrix()[(i, i)].re;
        if na == trunc.n_a_max {
            pa += p;
        }
        if nb == trunc.n_b_max {
            pb += p;
        }
    }
    let adequate = pa < threshold && pb < threshold;
    let recommended = Truncation::new(
        trunc.n_a_max + if pa < threshold { 0 } else { 4 },
        trunc.n_b_max + if pb < threshold { 0 } else { 4 },
    );
    Ok(CutoffReport { top_population_a: pa, top_population_b: pb, threshold, adequate, recommended })
}

/// Number operators `a†a`, `b†b` on the two-mode space.
pub fn number_operators(trunc: Truncation) -> (OperatorMatrix, OperatorMatrix) {
    let (a, b) = mode_operators(trunc);
    (a.adjoint().matmul(&a), b.adjoint().matmul(&b))
}

/// Embeds a two-mode operator as `I_atom ⊗ op`.
pub fn embed_field(op: &OperatorMatrix) -> OperatorMatrix {
    kron(&OperatorMatrix::identity(ATOM_LEVELS), op)
}

/// Two-mode truncation of a generator acting on the field.
pub fn two_mode_truncation(l: &Superoperator) -> Result<Truncation> {
    match l.layout() {
        Layout::TwoMode(t) => Ok(t),
        other => Err(Error::InvalidInput(format!("expected a two-mode generator, got {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, noon_state, two_mode_fock};
    use crate::model::{build_reduced_liouvillian, SystemParams};

    #[test]
    fn loss_only_relaxes_to_vacuum() {
        let t = Truncation::symmetric(3);
        let p = SystemParams { kappa_a: 0.5, kappa_b: 0.3, ..SystemParams::default() };
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        let r = steady_state(&l, 1e-12).unwrap();
        assert!((r.rho.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_product_without_pair_loss() {
        let t = Truncation::symmetric(20);
        let p = SystemParams::symmetric(0.7e-2, 1e-2, 0.0);
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        let r = steady_state(&l, 1e-12).unwrap();
        let alpha = c64::new(0.0, -2.0 * 0.7e-2 / 1e-2);
        let psi = coherent_state(alpha, 20).tensor(&coherent_state(alpha, 20));
        assert!(1.0 - r.rho.fidelity_pure(&psi) < 1e-8);
    }

    #[test]
    fn methods_agree_on_small_instance() {
        let t = Truncation::symmetric(3);
        let p = SystemParams::symmetric(0.3, 0.4, 0.5);
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        let a = steady_state_with(&l, &SteadyOptions { tol: 1e-11, ..Default::default() }).unwrap();
        let b = steady_state_with(&l, &SteadyOptions { method: SteadyMethod::NullSpace, tol: 1e-11, ..Default::default() }).unwrap();
        let c = steady_state_with(&l, &SteadyOptions { method: SteadyMethod::TimeEvolution, tol: 1e-11, ..Default::default() }).unwrap();
        assert!(a.rho.trace_distance(&b.rho).unwrap() < 1e-9);
        assert!(a.rho.trace_distance(&c.rho).unwrap() < 1e-9);
    }

    #[test]
    fn degenerate_without_loss_or_drive() {
        let t = Truncation::symmetric(2);
        let mut p = SystemParams::symmetric(0.0, 0.0, 0.1);
        p.kappa_a = 0.0;
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        match steady_state(&l, 1e-10) {
            Err(Error::DegenerateNullSpace { dimension }) => assert!(dimension > 1),
            other => panic!("expected degenerate null space, got {other:?}"),
        }
    }

    #[test]
    fn dark_residual_examples() {
        let t = Truncation::symmetric(5);
        let g = 0.2;
        let noon = DensityMatrix::from_pure(&noon_state(4, t).unwrap());
        assert!(dark_residual(&noon, g, t).unwrap() < 1e-12);
        let r11 = DensityMatrix::from_pure(&two_mode_fock(1, 1, t).unwrap());
        assert!((dark_residual(&r11, g, t).unwrap() - g * 2f64.sqrt()).abs() < 1e-14);
        let p20 = DensityMatrix::from_pure(&two_mode_fock(2, 0, t).unwrap());
        let p03 = DensityMatrix::from_pure(&two_mode_fock(0, 3, t).unwrap());
        let mix = DensityMatrix::mixture(&[(0.3, &p20), (0.7, &p03)]).unwrap();
        assert!(dark_residual(&mix, g, t).unwrap() < 1e-12);
    }

    #[test]
    fn evolve_examples() {
        let p = SystemParams { kappa_a: 0.7, kappa_b: 0.0, ..SystemParams::default() };
        let t = Truncation::new(1, 0);
        let l = build_reduced_liouvillian(&p, t, false).unwrap();
        let rho0 = DensityMatrix::from_pure(&two_mode_fock(1, 0, t).unwrap());
        assert_eq!(evolve(&l, &rho0, 0.0, 1e-12).unwrap().matrix(), rho0.matrix());
        let r = evolve(&l, &rho0, 2.0, 1e-12).unwrap();
        assert!((r.matrix()[(1, 1)].re - (-1.4f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn repair_rejects_large_negativity() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { c64::new(if i == 0 { 1.1 } else { -0.1 }, 0.0) } else { c64::new(0.0, 0.0) });
        assert!(DensityMatrix::repair(m.as_ref()).is_err());
        assert!(DensityMatrix::new(m).is_err());
    }
}
