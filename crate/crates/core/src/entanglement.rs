//! Entanglement diagnostics of two-mode states: negativity, the normally
//! ordered EPR variance, Fock populations and the fit to a mixture of two
//! coherent entangled states.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ces_state, mode_operators, OperatorMatrix, PureState, Truncation};
use crate::linalg;
use crate::steady::{swap_modes, DensityMatrix};
use crate::c64;

fn check_dim(rho: &DensityMatrix, trunc: Truncation) -> Result<()> {
    if rho.dim() != trunc.dim() {
        return Err(Error::DimensionMismatch { expected: trunc.dim(), found: rho.dim() });
    }
    Ok(())
}

/// Partial transpose on mode `a`.
pub fn partial_transpose_a(rho: &DensityMatrix, trunc: Truncation) -> Result<Mat<c64>> {
    check_dim(rho, trunc)?;
    let m = rho.matrix();
    Ok(Mat::from_fn(trunc.dim(), trunc.dim(), |i, j| {
        let (ma, nb) = trunc.occupation(i);
        let (ma2, nb2) = trunc.occupation(j);
        m[(trunc.index(ma2, nb), trunc.index(ma, nb2))]
    }))
}

/// `(‖ρ^{T_a}‖₁ − 1)/2`, positive for entangled states.
pub fn negativity(rho: &DensityMatrix, trunc: Truncation) -> Result<f64> {
    let pt = partial_transpose_a(rho, trunc)?;
    Ok((linalg::trace_norm_hermitian(pt.as_ref())? - 1.0) / 2.0)
}

/// Normally ordered total EPR variance at quadrature phase `phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuanResult {
    pub phi: f64,
    pub variance: f64,
    pub entangled_flag: bool,
}

/// First and second moments entering the EPR variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub a: c64,
    pub b: c64,
    /// `⟨δa†δa⟩`.
    pub na: f64,
    /// `⟨δb†δb⟩`.
    pub nb: f64,
    /// `⟨δa δb⟩`.
    pub ab: c64,
    /// `⟨δa† δb†⟩`.
    pub ab_dag: c64,
}

pub fn moments(rho: &DensityMatrix, trunc: Truncation) -> Result<Moments> {
    check_dim(rho, trunc)?;
    let (a, b) = mode_operators(trunc);
    let ea = rho.expect(&a);
    let eb = rho.expect(&b);
    let na = rho.expect(&a.adjoint().matmul(&a)).re - ea.norm_sqr();
    let nb = rho.expect(&b.adjoint().matmul(&b)).re - eb.norm_sqr();
    let ab = rho.expect(&a.matmul(&b)) - ea * eb;
    let ab_dag = rho.expect(&a.adjoint().matmul(&b.adjoint())) - ea.conj() * eb.conj();
    Ok(Moments { a: ea, b: eb, na, nb, ab, ab_dag })
}

/// Imaginary parts above this bound indicate a non-Hermitian input.
pub const IMAG_TOL: f64 = 1e-10;

/// `2[⟨δa†δa⟩ + ⟨δb†δb⟩ + ⟨δaδb⟩e^{−2iφ} + ⟨δa†δb†⟩e^{2iφ}]`.
pub fn duan_variance(rho: &DensityMatrix, trunc: Truncation, phi: f64) -> Result<DuanResult> {
    let m = moments(rho, trunc)?;
    duan_from_moments(&m, phi)
}

pub fn duan_from_moments(m: &Moments, phi: f64) -> Result<DuanResult> {
    let e = c64::from_polar(1.0, -2.0 * phi);
    let v = 2.0 * (c64::new(m.na + m.nb, 0.0) + m.ab * e + m.ab_dag * e.conj());
    if v.im.abs() > IMAG_TOL * (1.0 + v.re.abs()) {
        return Err(Error::Numerical(format!("EPR variance has imaginary part {:.3e}", v.im)));
    }
    Ok(DuanResult { phi, variance: v.re, entangled_flag: v.re < 0.0 })
}

/// Phase minimizing the EPR variance, in closed form.
pub fn optimize_phase(rho: &DensityMatrix, trunc: Truncation) -> Result<DuanResult> {
    let m = moments(rho, trunc)?;
    let phi = ((PI + m.ab.arg()) / 2.0).rem_euclid(PI);
    let r = duan_from_moments(&m, phi)?;
    let closed = 2.0 * (m.na + m.nb - 2.0 * m.ab.norm());
    debug_assert!((r.variance - closed).abs() < 1e-9 * (1.0 + closed.abs()));
    Ok(DuanResult { phi, variance: closed, entangled_flag: closed < 0.0 })
}

/// Quadratures `x_k`, `p_k` of both modes at phase `phi`.
pub fn quadratures(trunc: Truncation, phi: f64) -> [OperatorMatrix; 4] {
    let (a, b) = mode_operators(trunc);
    let e = c64::from_polar(1.0 / 2f64.sqrt(), -phi);
    let x = |op: &OperatorMatrix| op.scale(e).add(&op.adjoint().scale(e.conj()));
    let p = |op: &OperatorMatrix| {
        op.scale(e).sub(&op.adjoint().scale(e.conj())).scale(c64::new(0.0, -1.0))
    };
    [x(&a), p(&a), x(&b), p(&b)]
}

/// Un-ordered total variance `⟨(δu)²⟩ + ⟨(δv)²⟩` with `u = x_a + x_b`, `v = p_a − p_b`.
pub fn unordered_epr_variance(rho: &DensityMatrix, trunc: Truncation, phi: f64) -> Result<f64> {
    check_dim(rho, trunc)?;
    let [xa, pa, xb, pb] = quadratures(trunc, phi);
    let u = xa.add(&xb);
    let v = pa.sub(&pb);
    let var = |op: &OperatorMatrix| rho.expect(&op.matmul(op)).re - rho.expect(op).re.powi(2);
    Ok(var(&u) + var(&v))
}

/// `P[n_a][n_b] = ⟨n_a, n_b|ρ|n_a, n_b⟩`.
pub fn fock_populations(rho: &DensityMatrix, trunc: Truncation) -> Result<Vec<Vec<f64>>> {
    check_dim(rho, trunc)?;
    let mut p = vec![vec![0.0; trunc.dim_b()]; trunc.dim_a()];
    for (na, row) in p.iter_mut().enumerate() {
        for (nb, x) in row.iter_mut().enumerate() {
            *x = rho.matrix()[(trunc.index(na, nb), trunc.index(na, nb))].re;
        }
    }
    Ok(p)
}

/// Population of states with both modes excited.
pub fn joint_population(pop: &[Vec<f64>]) -> f64 {
    pop.iter().skip(1).flat_map(|row| row.iter().skip(1)).sum()
}

/// Population of states with at least one mode empty.
pub fn axis_population(pop: &[Vec<f64>]) -> f64 {
    let total: f64 = pop.iter().flatten().sum();
    total - joint_population(pop)
}

/// How the fitted mixture is compared with the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapMeasure {
    /// `‖√ρ √ρ_fit‖₁`.
    #[default]
    RootFidelity,
    /// `1 − ½‖ρ − ρ_fit‖₁`.
    TraceDistanceComplement,
}

/// Two-component coherent entangled state mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesFit {
    pub p1: f64,
    pub p2: f64,
    #[serde(with = "crate::serde_complex")]
    pub alpha1: c64,
    #[serde(with = "crate::serde_complex")]
    pub alpha2: c64,
    /// Swap parity (`+1` or `−1`) of the first and second component.
    pub sign1: i32,
    pub sign2: i32,
    /// `|⟨CES|v_i⟩|²` of each eigenvector with its fitted state.
    pub eigvec_overlap1: f64,
    pub eigvec_overlap2: f64,
    pub overlap: f64,
    pub measure: OverlapMeasure,
    /// Leading eigenvalues closer than [`CesFitOptions::degeneracy_tol`].
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CesFitOptions {
    pub measure: OverlapMeasure,
    /// Starting amplitude; derived from the eigenvector when absent.
    pub seed: Option<c64>,
    pub tol: f64,
    pub max_iter: usize,
    pub degeneracy_tol: f64,
}

impl Default for CesFitOptions {
    fn default() -> Self {
        Self { measure: OverlapMeasure::default(), seed: None, tol: 1e-14, max_iter: 4000, degeneracy_tol: 1e-9 }
    }
}

pub fn fit_ces_mixture(rho: &DensityMatrix, trunc: Truncation) -> Result<CesFit> {
    fit_ces_mixture_with(rho, trunc, &CesFitOptions::default())
}

pub fn fit_ces_mixture_with(rho: &DensityMatrix, trunc: Truncation, opts: &CesFitOptions) -> Result<CesFit> {
    check_dim(rho, trunc)?;
    if !trunc.is_symmetric() {
        return Err(Error::InvalidInput("CES fit needs equal cutoffs".into()));
    }
    let (vals, vecs) = linalg::eigh(rho.matrix().as_ref())?;
    let n = vals.len();
    if n < 2 {
        return Err(Error::InvalidInput("state space too small for a two-component fit".into()));
    }
    let degenerate = (vals[n - 1] - vals[n - 2]).abs() < opts.degeneracy_tol;
    let mut comps = Vec::with_capacity(2);
    for k in [n - 1, n - 2] {
        let v: Vec<c64> = (0..n).map(|i| vecs[(i, k)]).collect();
        let sign = swap_parity(&v, trunc)?;
        let seed = opts.seed.unwrap_or_else(|| amplitude_seed(&v, trunc));
        let (alpha, fid) = fit_branch(&v, sign, trunc, seed, opts)?;
        comps.push((vals[k].max(0.0), alpha, sign, fid));
    }
    let (p1, alpha1, sign1, f1) = comps[0];
    let (p2, alpha2, sign2, f2) = comps[1];
    let c1 = ces_state(alpha1, sign1, trunc)?;
    let c2 = ces_state(alpha2, sign2, trunc)?;
    let fit = &(&c1.projector() * faer::Scale(c64::new(p1, 0.0))) + &(&c2.projector() * faer::Scale(c64::new(p2, 0.0)));
    let overlap = overlap_with(rho, &fit, opts.measure)?;
    Ok(CesFit {
        p1,
        p2,
        alpha1,
        alpha2,
        sign1,
        sign2,
        eigvec_overlap1: f1,
        eigvec_overlap2: f2,
        overlap,
        measure: opts.measure,
        degenerate,
    })
}

/// Similarity of `rho` with a (possibly subnormalized) positive operator.
pub fn overlap_with(rho: &DensityMatrix, sigma: &Mat<c64>, measure: OverlapMeasure) -> Result<f64> {
    match measure {
        OverlapMeasure::TraceDistanceComplement => {
            let diff = rho.matrix() - sigma;
            Ok(1.0 - 0.5 * linalg::trace_norm_hermitian(diff.as_ref())?)
        }
        OverlapMeasure::RootFidelity => {
            let sr = linalg::sqrtm_psd(rho.matrix().as_ref())?;
            let ss = linalg::sqrtm_psd(sigma.as_ref())?;
            linalg::trace_norm(linalg::gemm(sr.as_ref(), ss.as_ref()).as_ref())
        }
    }
}

/// Sign of `⟨v|P|v⟩` for the mode swap `P`.
fn swap_parity(v: &[c64], trunc: Truncation) -> Result<i32> {
    let s: c64 = (0..v.len())
        .map(|i| {
            let (a, b) = trunc.occupation(i);
            v[i].conj() * v[trunc.index(b, a)]
        })
        .sum();
    Ok(if s.re >= 0.0 { 1 } else { -1 })
}

/// Amplitude estimate from the ratio of the `|2,0⟩` and `|1,0⟩` components,
/// falling back to the mean excitation of the `a` branch.
fn amplitude_seed(v: &[c64], trunc: Truncation) -> c64 {
    if trunc.n_a_max >= 2 {
        let c1 = v[trunc.index(1, 0)];
        let c2 = v[trunc.index(2, 0)];
        if c1.norm() > 1e-8 {
            return c2 / c1 * 2f64.sqrt();
        }
    }
    let w: f64 = (1..=trunc.n_a_max).map(|n| v[trunc.index(n, 0)].norm_sqr()).sum();
    let nbar: f64 = (1..=trunc.n_a_max).map(|n| n as f64 * v[trunc.index(n, 0)].norm_sqr()).sum::<f64>() / w.max(1e-300);
    c64::new(nbar.sqrt(), 0.0)
}

fn fit_branch(v: &[c64], sign: i32, trunc: Truncation, seed: c64, opts: &CesFitOptions) -> Result<(c64, f64)> {
    let vs = PureState { amplitudes: v.to_vec(), label: crate::fock::StateLabel::Custom, norm_deficit: 0.0 };
    let cost = |x: [f64; 2]| -> f64 {
        match ces_state(c64::new(x[0], x[1]), sign, trunc) {
            Ok(c) => 1.0 - c.inner(&vs).norm_sqr(),
            Err(_) => 2.0,
        }
    };
    let start = if seed.norm() < 1e-3 { c64::new(0.5, 0.0) } else { seed };
    let step = 0.1 * (1.0 + start.norm());
    let (x, f, converged) = nelder_mead(cost, [start.re, start.im], step, opts.tol, opts.max_iter);
    if !converged {
        return Err(Error::NonConvergence { iterations: opts.max_iter, residual: f });
    }
    Ok((c64::new(x[0], x[1]), 1.0 - f))
}

/// Minimizes a function of two variables with the downhill simplex method.
pub fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, x0: [f64; 2], step: f64, ftol: f64, max_iter: usize) -> ([f64; 2], f64, bool) {
    let mut s = [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]];
    let mut fs = [f(s[0]), f(s[1]), f(s[2])];
    let comb = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| fs[i].partial_cmp(&fs[j]).unwrap_or(std::cmp::Ordering::Equal));
        s = [s[idx[0]], s[idx[1]], s[idx[2]]];
        fs = [fs[idx[0]], fs[idx[1]], fs[idx[2]]];
        let size = ((s[2][0] - s[0][0]).abs() + (s[2][1] - s[0][1]).abs()).max((s[1][0] - s[0][0]).abs() + (s[1][1] - s[0][1]).abs());
        if (fs[2] - fs[0]).abs() <= ftol && size <= 1e-9 {
            return (s[0], fs[0], true);
        }
        let c = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let xr = comb(c, s[2], -1.0);
        let fr = f(xr);
        if fr < fs[0] {
            let xe = comb(c, s[2], -2.0);
            let fe = f(xe);
            if fe < fr {
                s[2] = xe;
                fs[2] = fe;
            } else {
                s[2] = xr;
                fs[2] = fr;
            }
        } else if fr < fs[1] {
            s[2] = xr;
            fs[2] = fr;
        } else {
            let (xc, fc) = if fr < fs[2] {
                let x = comb(c, xr, 0.5);
                (x, f(x))
            } else {
                let x = comb(c, s[2], 0.5);
                (x, f(x))
            };
            if fc < fs[2].min(fr) {
                s[2] = xc;
                fs[2] = fc;
            } else {
                for k in 1..3 {
                    s[k] = comb(s[0], s[k], 0.5);
                    fs[k] = f(s[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| fs[i].partial_cmp(&fs[j]).unwrap()).unwrap();
    (s[best], fs[best], false)
}

/// Largest deviation of `ρ` from its mode-swapped image.
pub fn swap_asymmetry(rho: &DensityMatrix, trunc: Truncation) -> Result<f64> {
    let s = swap_modes(rho.matrix().as_ref(), trunc)?;
    Ok((&s - rho.matrix()).norm_max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, noon_state};

    #[test]
    fn noon_one_partial_transpose_spectrum() {
        let t = Truncation::symmetric(1);
        let rho = DensityMatrix::from_pure(&noon_state(1, t).unwrap());
        let pt = partial_transpose_a(&rho, t).unwrap();
        let mut ev = linalg::eigvalsh(pt.as_ref()).unwrap();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [-0.5, 0.5, 0.5, 0.5];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((negativity(&rho, t).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn coherent_product_is_separable_and_unsqueezed() {
        let t = Truncation::symmetric(25);
        let psi = coherent_state(c64::new(0.4, -1.1), 25).tensor(&coherent_state(c64::new(-0.8, 0.3), 25));
        let rho = DensityMatrix::from_pure(&psi);
        assert!(negativity(&rho, t).unwrap().abs() < 1e-9);
        for phi in [0.0, 0.7, PI / 2.0] {
            assert!(duan_variance(&rho, t, phi).unwrap().variance.abs() < 1e-10);
        }
    }

    #[test]
    fn vacuum_moments() {
        let t = Truncation::symmetric(3);
        let rho = DensityMatrix::ground(t.dim());
        assert_eq!(duan_variance(&rho, t, 0.3).unwrap().variance, 0.0);
        assert!((unordered_epr_variance(&rho, t, 0.3).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(fock_populations(&rho, t).unwrap()[0][0], 1.0);
    }

    #[test]
    fn ces_fit_recovers_pure_state() {
        let t = Truncation::symmetric(16);
        let alpha = c64::new(0.0, -2.0);
        let rho = DensityMatrix::from_pure(&ces_state(alpha, 1, t).unwrap());
        let fit = fit_ces_mixture(&rho, t).unwrap();
        assert!((fit.p1 - 1.0).abs() < 1e-10);
        assert!((fit.alpha1 - alpha).norm() < 1e-6, "{}", fit.alpha1);
        assert!((fit.overlap - 1.0).abs() < 1e-8);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let (x, f, ok) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), [0.0, 0.0], 0.5, 1e-16, 2000);
        assert!(ok && f < 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] + 2.0).abs() < 1e-7);
    }
}
