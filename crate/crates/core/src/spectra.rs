//! Stationary two-time correlators by quantum regression, and the two-mode
//! squeezing spectra of the cavity fields.
//!
//! The spectra are evaluated with the resolvent of the generator:
//! `∫₀^∞ e^{iωτ} Tr[X e^{Lτ} M] dτ = −Tr[X (L + iω)⁻¹ M]`. A time-domain
//! quadrature of the same correlators is kept as an independent check.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{mode_operators, OperatorMatrix, Truncation};
use crate::linalg::{self, GmresOptions};
use crate::model::{Superoperator, SystemParams};
use crate::steady::{apply_flat, two_mode_truncation, Bordered, DensityMatrix};
use crate::entanglement;
use crate::c64;

/// Largest imaginary part tolerated before a spectrum is declared real.
pub const IMAG_TOL: f64 = 1e-8;

/// Bound on `‖L(ρ)‖_F / max(1, ‖L‖)` for a state to count as stationary.
pub const STATIONARITY_TOL: f64 = 1e-8;

/// Which operator the propagated matrix carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelatorSide {
    /// `⟨A(t+τ) B(t)⟩`.
    RightActing,
    /// `⟨B(t) A(t+τ)⟩`.
    LeftActing,
}

/// A stationary two-time average of mean-subtracted operators.
#[derive(Clone, Copy, Debug)]
pub struct CorrelatorSpec<'a> {
    pub left_op: &'a OperatorMatrix,
    pub right_op: &'a OperatorMatrix,
    pub side: CorrelatorSide,
    pub phase: c64,
}

fn check_stationary(l: &Superoperator, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != l.hilbert_dim() {
        return Err(Error::DimensionMismatch { expected: l.hilbert_dim(), found: rho.dim() });
    }
    let r = l.apply_matrix(rho.matrix().as_ref())?.norm_l2();
    if r > STATIONARITY_TOL * l.norm_bound().max(1.0) {
        return Err(Error::InvalidState(format!("state is not stationary: ‖L(ρ)‖ = {r:.3e}")));
    }
    Ok(())
}

/// `X − Tr(Xρ)·I` as a dense matrix.
fn fluctuation(op: &OperatorMatrix, rho: &DensityMatrix) -> Mat<c64> {
    let mean = rho.expect(op);
    let mut m = op.to_dense();
    for i in 0..m.nrows() {
        m[(i, i)] -= mean;
    }
    m
}

/// `phase·Tr[δA e^{Lτ}(δB ρ)]` (right-acting) or `phase·Tr[δA e^{Lτ}(ρ δB)]`
/// (left-acting) on a non-negative τ grid.
pub fn two_time_correlator(l: &Superoperator, rho_ss: &DensityMatrix, spec: &CorrelatorSpec<'_>, tau_grid: &[f64]) -> Result<Vec<c64>> {
    check_stationary(l, rho_ss)?;
    if tau_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("τ grid must be finite and non-negative".into()));
    }
    let da = fluctuation(spec.left_op, rho_ss);
    let db = fluctuation(spec.right_op, rho_ss);
    let m = match spec.side {
        CorrelatorSide::RightActing => linalg::gemm(db.as_ref(), rho_ss.matrix().as_ref()),
        CorrelatorSide::LeftActing => linalg::gemm(rho_ss.matrix().as_ref(), db.as_ref()),
    };
    let mut order: Vec<usize> = (0..tau_grid.len()).collect();
    order.sort_by(|&i, &j| tau_grid[i].total_cmp(&tau_grid[j]));
    let mut out = vec![c64::new(0.0, 0.0); tau_grid.len()];
    let mut x = m;
    let mut t = 0.0;
    for i in order {
        if tau_grid[i] > t {
            x = crate::steady::propagate(l, x.as_ref(), tau_grid[i] - t, 1e-12)?;
            t = tau_grid[i];
        }
        out[i] = spec.phase * linalg::trace_product(da.as_ref(), x.as_ref());
    }
    Ok(out)
}

/// Two-mode squeezing spectra on a frequency grid (units of γ42).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub omega_grid: Vec<f64>,
    #[serde(rename = "S_u")]
    pub s_u: Vec<f64>,
    #[serde(rename = "S_v")]
    pub s_v: Vec<f64>,
    pub phi: f64,
    pub kappa: f64,
    pub imag_residual_max: f64,
    /// Largest GMRES iteration count over all resolvent solves.
    pub max_iterations: usize,
    /// Largest final relative residual over all resolvent solves.
    pub max_solve_residual: f64,
}

impl SpectrumSeries {
    pub fn s_u_db(&self) -> Vec<f64> {
        self.s_u.iter().map(|&s| to_db(s)).collect()
    }

    pub fn s_v_db(&self) -> Vec<f64> {
        self.s_v.iter().map(|&s| to_db(s)).collect()
    }

    /// Linear interpolation of `(S_u, S_v)` at `omega`.
    pub fn at(&self, omega: f64) -> Option<(f64, f64)> {
        let w = &self.omega_grid;
        let k = w.windows(2).position(|p| p[0] <= omega && omega <= p[1])?;
        let t = if w[k + 1] > w[k] { (omega - w[k]) / (w[k + 1] - w[k]) } else { 0.0 };
        let lerp = |s: &[f64]| s[k] + t * (s[k + 1] - s[k]);
        Some((lerp(&self.s_u), lerp(&self.s_v)))
    }

    /// Largest `|S(ω) − S(−ω)|` over grid points whose mirror is on the grid.
    pub fn parity_defect(&self) -> f64 {
        let n = self.omega_grid.len();
        let mut m: f64 = 0.0;
        for i in 0..n {
            let j = n - 1 - i;
            if self.omega_grid[i] == -self.omega_grid[j] {
                m = m.max((self.s_u[i] - self.s_u[j]).abs()).max((self.s_v[i] - self.s_v[j]).abs());
            }
        }
        m
    }

    /// CSV with columns `omega,S_u,S_v`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,S_u,S_v\n");
        for i in 0..self.omega_grid.len() {
            let _ = writeln!(s, "{:.12e},{:.12e},{:.12e}", self.omega_grid[i], self.s_u[i], self.s_v[i]);
        }
        s
    }
}

/// Homodyne power relative to shot noise, `10·log₁₀(1 + S)`.
pub fn to_db(s: f64) -> f64 {
    10.0 * (1.0 + s).log10()
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0) - 1.0
}

/// `n` points on `[−w, w]` whose mirror images are exact.
pub fn symmetric_grid(w: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let m = (n - 1) as f64;
    (0..n).map(|k| w * (2.0 * k as f64 - m) / m).collect()
}

/// Symmetric grid dense near zero: `0`, then `n` log-spaced magnitudes in
/// `[w_min, w_max]` on each side.
pub fn symmetric_log_grid(w_min: f64, w_max: f64, n: usize) -> Vec<f64> {
    let mags: Vec<f64> = (0..n)
        .map(|k| {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            w_min * (w_max / w_min).powf(t)
        })
        .collect();
    let mut g: Vec<f64> = mags.iter().rev().map(|w| -w).collect();
    g.push(0.0);
    g.extend(mags);
    g
}

/// Settings of the resolvent evaluation.
#[derive(Clone, Copy, Debug)]
pub struct SpectraOptions {
    pub gmres: GmresOptions,
}

impl Default for SpectraOptions {
    fn default() -> Self {
        Self { gmres: GmresOptions { rtol: 1e-11, ..Default::default() } }
    }
}

fn symmetric_kappa(p: &SystemParams) -> Result<f64> {
    if (p.kappa_a - p.kappa_b).abs() > 1e-12 * p.kappa_a.abs().max(p.kappa_b.abs()) {
        return Err(Error::InvalidInput(format!("spectra need κ_a = κ_b, got {} and {}", p.kappa_a, p.kappa_b)));
    }
    Ok(p.kappa_a)
}

/// `f = a + b` and `g = a − b`.
fn epr_fields(trunc: Truncation) -> (OperatorMatrix, OperatorMatrix) {
    let (a, b) = mode_operators(trunc);
    (a.add(&b), a.sub(&b))
}

/// The four regression integrals of one field at a frequency.
#[derive(Clone, Copy, Debug, Default)]
struct Transforms {
    /// `X = δf, M = δf ρ`.
    ff: c64,
    /// `X = δf, M = ρ δf†`.
    fdf: c64,
    /// `X = δf†, M = δf ρ`.
    dff: c64,
    /// `X = δf†, M = ρ δf†`.
    dfdf: c64,
}

/// Combines the transforms into the normally ordered quadrature spectrum
/// (before the cosine symmetrization and the `2κ` prefactor).
fn combine(t: &Transforms, phi: f64, sign: f64) -> c64 {
    let e = c64::from_polar(1.0, -2.0 * phi);
    0.5 * (sign * e * t.ff + t.fdf + t.dff + sign * e.conj() * t.dfdf)
}

/// Transforms at `+w` and `−w` from the solutions `Y(±w) = (L ± iw)⁻¹(δf ρ)`,
/// using `(L + iω)⁻¹(ρ δf†) = [(L − iω)⁻¹(δf ρ)]†`.
fn transforms_from(df: MatRef<'_, c64>, y_plus: MatRef<'_, c64>, y_minus: MatRef<'_, c64>) -> (Transforms, Transforms) {
    let dfa_owned = linalg::adjoint(df);
    let dfa = dfa_owned.as_ref();
    let tr = |x: MatRef<'_, c64>, y: MatRef<'_, c64>| -linalg::trace_product(x, y);
    let tr_adj = |x: MatRef<'_, c64>, y: MatRef<'_, c64>| -linalg::trace_product_adjoint(x, y);
    let at = |yp: MatRef<'_, c64>, ym: MatRef<'_, c64>| Transforms {
        ff: tr(df, yp),
        fdf: tr_adj(df, ym),
        dff: tr(dfa, yp),
        dfdf: tr_adj(dfa, ym),
    };
    (at(y_plus, y_minus), at(y_minus, y_plus))
}

/// `S_u(ω)`, `S_v(ω)` of the cavity fields at quadrature phase `phi`.
pub fn squeezing_spectra(l: &Superoperator, rho_ss: &DensityMatrix, p: &SystemParams, phi: f64, omega_grid: &[f64]) -> Result<SpectrumSeries> {
    squeezing_spectra_with(l, rho_ss, p, phi, omega_grid, &SpectraOptions::default())
}

pub fn squeezing_spectra_with(
    l: &Superoperator,
    rho_ss: &DensityMatrix,
    p: &SystemParams,
    phi: f64,
    omega_grid: &[f64],
    opts: &SpectraOptions,
) -> Result<SpectrumSeries> {
    let kappa = symmetric_kappa(p)?;
    let trunc = two_mode_truncation(l)?;
    check_stationary(l, rho_ss)?;
    if omega_grid.is_empty() || omega_grid.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput("frequency grid must be non-empty and finite".into()));
    }
    let d = l.hilbert_dim();
    let (f, g) = epr_fields(trunc);
    let fields = [fluctuation(&f, rho_ss), fluctuation(&g, rho_ss)];
    let rhs: Vec<Vec<c64>> = fields.iter().map(|df| linalg::flatten(linalg::gemm(df.as_ref(), rho_ss.matrix().as_ref()).as_ref())).collect();

    let mut mags: Vec<f64> = omega_grid.iter().map(|w| w.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup();

    let bordered = Bordered::new(l)?;
    let gm = opts.gmres;
    let threads = rayon::current_num_threads().max(1);
    let chunk = mags.len().div_ceil(threads).max(1);

    type Row = (u64, [(Transforms, Transforms); 2], usize, f64);
    let rows: Vec<Result<Vec<Row>>> = mags
        .par_chunks(chunk)
        .map(|ws| {
            let mut warm = [[vec![c64::new(0.0, 0.0); d * d], vec![c64::new(0.0, 0.0); d * d]], [vec![c64::new(0.0, 0.0); d * d], vec![c64::new(0.0, 0.0); d * d]]];
            let mut out = Vec::with_capacity(ws.len());
            for &w in ws {
                let mut iters = 0;
                let mut res: f64 = 0.0;
                let mut pair = [(Transforms::default(), Transforms::default()); 2];
                for k in 0..2 {
                    let bnorm = linalg::norm(&rhs[k]);
                    for (s, x) in warm[k].iter_mut().enumerate() {
                        let shift = c64::new(0.0, if s == 0 { w } else { -w });
                        if bnorm == 0.0 {
                            x.iter_mut().for_each(|v| *v = c64::new(0.0, 0.0));
                            continue;
                        }
                        let o = bordered.solve(shift, &rhs[k], x, &gm)?;
                        if !o.converged {
                            return Err(Error::NonConvergence { iterations: o.iterations, residual: o.residual });
                        }
                        iters = iters.max(o.iterations);
                        res = res.max(o.residual / bnorm);
                    }
                    pair[k] = transforms_from(fields[k].as_ref(), linalg::view(&warm[k][0], d), linalg::view(&warm[k][1], d));
                }
                out.push((w.to_bits(), pair, iters, res));
            }
            Ok(out)
        })
        .collect();

    let mut table: BTreeMap<u64, [(Transforms, Transforms); 2]> = BTreeMap::new();
    let mut max_iterations = 0;
    let mut max_solve_residual: f64 = 0.0;
    for chunk in rows {
        for (key, pair, it, res) in chunk? {
            table.insert(key, pair);
            max_iterations = max_iterations.max(it);
            max_solve_residual = max_solve_residual.max(res);
        }
    }

    let mut s_u = Vec::with_capacity(omega_grid.len());
    let mut s_v = Vec::with_capacity(omega_grid.len());
    let mut imag: f64 = 0.0;
    for w in omega_grid {
        let [(fp, fm), (gp, gm)] = table[&w.abs().to_bits()];
        let su = kappa * (combine(&fp, phi, 1.0) + combine(&fm, phi, 1.0));
        let sv = kappa * (combine(&gp, phi, -1.0) + combine(&gm, phi, -1.0));
        imag = imag.max(su.im.abs()).max(sv.im.abs());
        s_u.push(su.re);
        s_v.push(sv.re);
    }
    if imag > IMAG_TOL {
        return Err(Error::Numerical(format!("spectrum has imaginary residual {imag:.3e}")));
    }
    Ok(SpectrumSeries {
        omega_grid: omega_grid.to_vec(),
        s_u,
        s_v,
        phi,
        kappa,
        imag_residual_max: imag,
        max_iterations,
        max_solve_residual,
    })
}

/// Settings of the time-domain quadrature.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    /// Length of one Gauss–Legendre panel.
    pub panel: f64,
    /// Nodes per panel.
    pub order: usize,
    /// Stop once the propagated matrices fall below this fraction of their start.
    pub decay_tol: f64,
    pub max_tau: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { panel: 2.0, order: 16, decay_tol: 1e-13, max_tau: 1e7 }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Same spectra as [`squeezing_spectra`], by propagating the regression
/// matrices in time and integrating `2κ cos(ωτ) C(τ)` panel by panel.
pub fn time_domain_spectra(
    l: &Superoperator,
    rho_ss: &DensityMatrix,
    p: &SystemParams,
    phi: f64,
    omegas: &[f64],
    opts: &QuadratureOptions,
) -> Result<SpectrumSeries> {
    let kappa = symmetric_kappa(p)?;
    let trunc = two_mode_truncation(l)?;
    check_stationary(l, rho_ss)?;
    let d = l.hilbert_dim();
    let (f, g) = epr_fields(trunc);
    let fields = [fluctuation(&f, rho_ss), fluctuation(&g, rho_ss)];
    let adjoints = [linalg::adjoint(fields[0].as_ref()), linalg::adjoint(fields[1].as_ref())];
    let (nodes, weights) = gauss_legendre(opts.order);
    let mut acc = vec![[c64::new(0.0, 0.0); 2]; omegas.len()];
    let eo = linalg::ExpvOptions { tol: 1e-13, ..Default::default() };
    let anorm = l.norm_bound();
    for (k, df) in fields.iter().enumerate() {
        let sign = if k == 0 { 1.0 } else { -1.0 };
        let dfa = &adjoints[k];
        let mut y = linalg::flatten(linalg::gemm(df.as_ref(), rho_ss.matrix().as_ref()).as_ref());
        let y0 = linalg::norm(&y).max(1e-300);
        let mut t0 = 0.0;
        let mut t_now = 0.0;
        while t0 < opts.max_tau {
            for (node, wgt) in nodes.iter().zip(&weights) {
                let tau = t0 + 0.5 * opts.panel * (node + 1.0);
                let z = linalg::expv(tau - t_now, |u, o| apply_flat(l, u, o), anorm, &y, &eo)?.0;
                y = z;
                t_now = tau;
                let ym = linalg::view(&y, d);
                let c = 0.5
                    * (sign * c64::from_polar(1.0, -2.0 * phi) * linalg::trace_product(df.as_ref(), ym)
                        + linalg::trace_product_adjoint(df.as_ref(), ym)
                        + linalg::trace_product(dfa.as_ref(), ym)
                        + sign * c64::from_polar(1.0, 2.0 * phi) * linalg::trace_product_adjoint(dfa.as_ref(), ym));
                for (a, w) in acc.iter_mut().zip(omegas) {
                    a[k] += 0.5 * opts.panel * wgt * (w * tau).cos() * c;
                }
            }
            t0 += opts.panel;
            y = linalg::expv(t0 - t_now, |u, o| apply_flat(l, u, o), anorm, &y, &eo)?.0;
            t_now = t0;
            if linalg::norm(&y) < opts.decay_tol * y0 {
                break;
            }
        }
    }
    let mut imag: f64 = 0.0;
    let mut s_u = Vec::new();
    let mut s_v = Vec::new();
    for a in &acc {
        let su = 2.0 * kappa * a[0];
        let sv = 2.0 * kappa * a[1];
        imag = imag.max(su.im.abs()).max(sv.im.abs());
        s_u.push(su.re);
        s_v.push(sv.re);
    }
    Ok(SpectrumSeries {
        omega_grid: omegas.to_vec(),
        s_u,
        s_v,
        phi,
        kappa,
        imag_residual_max: imag,
        max_iterations: 0,
        max_solve_residual: 0.0,
    })
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

/// Both sides of the integral identity relating the spectra to the
/// normally ordered EPR variance of the cavity fields:
/// `lhs = (1/(2πκ)) ∫(S_u + S_v) dω`, `rhs` the variance at the series phase.
pub fn integrated_cavity_check(series: &SpectrumSeries, rho_ss: &DensityMatrix, trunc: Truncation) -> Result<(f64, f64)> {
    let w = &series.omega_grid;
    if w.len() < 2 || w.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
    }
    let sum: Vec<f64> = series.s_u.iter().zip(&series.s_v).map(|(a, b)| a + b).collect();
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let edge = sum[0].abs().max(sum[sum.len() - 1].abs());
    if edge > 1e-4 * peak {
        log::warn!("grid too narrow: edge value {edge:.3e} vs peak {peak:.3e}");
    }
    let lhs = trapezoid(w, &sum) / (2.0 * PI * series.kappa);
    let rhs = entanglement::duan_variance(rho_ss, trunc, series.phi)?.variance;
    Ok((lhs, rhs))
}

/// Mean of `S_u + S_v` over `|ω| ≤ Δω/2`.
pub fn narrowband_output_criterion(series: &SpectrumSeries, delta_omega: f64) -> f64 {
    let half = 0.5 * delta_omega.abs();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let total = |w: f64| series.at(w).map(|(a, b)| a + b);
    if let Some(v) = total(-half) {
        xs.push(-half);
        ys.push(v);
    }
    for (i, &w) in series.omega_grid.iter().enumerate() {
        if w > -half && w < half {
            xs.push(w);
            ys.push(series.s_u[i] + series.s_v[i]);
        }
    }
    if let Some(v) = total(half) {
        xs.push(half);
        ys.push(v);
    }
    if xs.len() < 2 || half == 0.0 {
        return total(0.0).unwrap_or(f64::NAN);
    }
    trapezoid(&xs, &ys) / (xs[xs.len() - 1] - xs[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn db_round_trip() {
        assert!((to_db(from_db(-1.3)) + 1.3).abs() < 1e-12);
        assert!((from_db(-1.3) + 0.2587).abs() < 1e-4);
    }

    #[test]
    fn grids_are_mirror_exact() {
        let g = symmetric_grid(0.2, 801);
        for i in 0..g.len() {
            assert_eq!(g[i], -g[g.len() - 1 - i]);
        }
        assert_eq!(g[400], 0.0);
        let g = symmetric_log_grid(1e-4, 1.0, 10);
        assert_eq!(g.len(), 21);
        assert!(g.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn narrowband_limit_is_center_value() {
        let s = SpectrumSeries {
            omega_grid: vec![-1.0, 0.0, 1.0],
            s_u: vec![0.0, -1.0, 0.0],
            s_v: vec![0.0, -0.5, 0.0],
            phi: 0.0,
            kappa: 1.0,
            imag_residual_max: 0.0,
            max_iterations: 0,
            max_solve_residual: 0.0,
        };
        assert!((narrowband_output_criterion(&s, 1e-9) + 1.5).abs() < 1e-8);
        assert!((narrowband_output_criterion(&s, 0.0) + 1.5).abs() < 1e-15);
    }
}
