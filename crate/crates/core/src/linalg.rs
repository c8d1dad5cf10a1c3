//! Dense kernels shared by the solvers: complex Schur form, triangular
//! Sylvester equations, restarted GMRES, Krylov exponential action and
//! Hermitian spectral helpers.
//!
//! Matrices of size `d × d` that play the role of vectors (density matrices,
//! Krylov directions) are stored flat in column-major order, which coincides
//! with column stacking.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::reborrow::{Reborrow, ReborrowMut};
use faer::traits::Conjugate;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

use crate::error::{Error, Result};
use crate::c64;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

pub fn view(x: &[c64], d: usize) -> MatRef<'_, c64> {
    MatRef::from_column_major_slice(x, d, d)
}

pub fn view_mut(x: &mut [c64], d: usize) -> MatMut<'_, c64> {
    MatMut::from_column_major_slice_mut(x, d, d)
}

/// Column-major flat copy of `m`.
pub fn flatten(m: MatRef<'_, c64>) -> Vec<c64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn unflatten(x: &[c64], d: usize) -> Mat<c64> {
    view(x, d).to_owned()
}

pub fn dot(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += alpha x`.
pub fn axpy(alpha: c64, x: &[c64], y: &mut [c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: c64, x: &mut [c64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn trace(m: MatRef<'_, c64>) -> c64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Trace of a flat `d × d` matrix.
pub fn trace_flat(x: &[c64], d: usize) -> c64 {
    (0..d).map(|i| x[i + i * d]).sum()
}

/// `Tr(a b†)` without forming the product.
pub fn trace_product_adjoint(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)].conj();
        }
    }
    s
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Owned conjugate transpose.
pub fn adjoint(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

pub fn hermitian_part(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Largest modulus of `m − m†`.
pub fn hermiticity_defect(m: MatRef<'_, c64>) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            e = e.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    e
}

pub fn gemm<L: Conjugate<Canonical = c64>, R: Conjugate<Canonical = c64>>(a: MatRef<'_, L>, b: MatRef<'_, R>) -> Mat<c64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, ONE, Par::Seq);
    out
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(m: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let h = hermitian_part(m);
    let e = h
        .as_ref()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    let vals = (0..h.nrows()).map(|i| e.S()[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigvalsh(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    let h = hermitian_part(m);
    let v = h
        .as_ref()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    Ok(v)
}

/// Sum of singular values.
pub fn trace_norm(m: MatRef<'_, c64>) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(s.iter().sum())
}

/// Trace norm of a Hermitian matrix via its spectrum.
pub fn trace_norm_hermitian(m: MatRef<'_, c64>) -> Result<f64> {
    Ok(eigvalsh(m)?.iter().map(|x| x.abs()).sum())
}

/// Square root of a positive semidefinite matrix; negative eigenvalues are clipped.
pub fn sqrtm_psd(m: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let (vals, u) = eigh(m)?;
    let n = vals.len();
    let mut us = u.clone();
    for j in 0..n {
        let s = vals[j].max(0.0).sqrt();
        for i in 0..n {
            us[(i, j)] *= s;
        }
    }
    Ok(gemm(us.as_ref(), u.as_ref().adjoint()))
}

/// Complex Schur decomposition `a = q t q†` with `t` upper triangular.
pub fn schur(a: MatRef<'_, c64>) -> Result<(Mat<c64>, Mat<c64>)> {
    let n = a.nrows();
    let m = nalgebra::DMatrix::<c64>::from_fn(n, n, |i, j| a[(i, j)]);
    // highly degenerate spectra can stall the QR sweep at the tightest deflation
    // threshold; a slightly looser one still leaves round-off level subdiagonals
    let s = [1.0, 8.0, 64.0]
        .iter()
        .find_map(|k| nalgebra::Schur::try_new(m.clone(), k * f64::EPSILON, 100 * n.max(10)))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = s.unpack();
    let q = Mat::from_fn(n, n, |i, j| q[(i, j)]);
    // discard the round-off below the diagonal
    let t = Mat::from_fn(n, n, |i, j| if i > j { ZERO } else { t[(i, j)] });
    Ok((q, t))
}

const SYLVESTER_BLOCK: usize = 24;

/// Solves `t1 y + y t2† + shift y = c` in place (`c` becomes `y`) for upper
/// triangular `t1`, `t2`, recursing on the larger dimension.
pub fn triangular_sylvester(
    t1: MatRef<'_, c64>,
    t2: MatRef<'_, c64>,
    shift: c64,
    c: MatMut<'_, c64>,
) -> Result<()> {
    let floor = 1e3 * f64::EPSILON * (t1.norm_max() + t2.norm_max() + shift.norm()).max(f64::MIN_POSITIVE);
    sylvester_rec(t1, t2, shift, c, floor)
}

fn sylvester_rec(t1: MatRef<'_, c64>, t2: MatRef<'_, c64>, s: c64, mut c: MatMut<'_, c64>, floor: f64) -> Result<()> {
    let (m, n) = (t1.nrows(), t2.nrows());
    if m == 0 || n == 0 {
        return Ok(());
    }
    if m <= SYLVESTER_BLOCK && n <= SYLVESTER_BLOCK {
        return sylvester_base(t1, t2, s, c, floor);
    }
    if m >= n {
        let h = m / 2;
        let (a11, a12, _, a22) = t1.split_at(h, h);
        let (mut c1, mut c2) = c.rb_mut().split_at_row_mut(h);
        sylvester_rec(a22, t2, s, c2.rb_mut(), floor)?;
        matmul(c1.rb_mut(), Accum::Add, a12, c2.rb(), -ONE, Par::Seq);
        sylvester_rec(a11, t2, s, c1, floor)
    } else {
        let h = n / 2;
        let (b11, b12, _, b22) = t2.split_at(h, h);
        let (mut c1, mut c2) = c.rb_mut().split_at_col_mut(h);
        sylvester_rec(t1, b22, s, c2.rb_mut(), floor)?;
        matmul(c1.rb_mut(), Accum::Add, c2.rb(), b12.adjoint(), -ONE, Par::Seq);
        sylvester_rec(t1, b11, s, c1, floor)
    }
}

fn sylvester_base(t1: MatRef<'_, c64>, t2: MatRef<'_, c64>, s: c64, mut c: MatMut<'_, c64>, floor: f64) -> Result<()> {
    let (m, n) = (t1.nrows(), t2.nrows());
    for j in (0..n).rev() {
        for k in j + 1..n {
            let w = t2[(j, k)].conj();
            if w != ZERO {
                for i in 0..m {
                    let y = c[(i, k)];
                    c[(i, j)] -= y * w;
                }
            }
        }
        let diag = t2[(j, j)].conj() + s;
        for i in (0..m).rev() {
            let mut r = c[(i, j)];
            for l in i + 1..m {
                r -= t1[(i, l)] * c[(l, j)];
            }
            let den = t1[(i, i)] + diag;
            if den.norm() <= floor {
                return Err(Error::Degenerate(format!(
                    "Sylvester operator is singular (eigenvalue pair {i}, {j})"
                )));
            }
            c[(i, j)] = r / den;
        }
    }
    Ok(())
}

/// Solver for `a x + x a† + shift x = c` by Schur reduction of `a`.
#[derive(Clone, Debug)]
pub struct LyapunovSolver {
    q: Mat<c64>,
    t: Mat<c64>,
}

impl LyapunovSolver {
    pub fn new(a: MatRef<'_, c64>) -> Result<Self> {
        let (q, t) = schur(a)?;
        Ok(Self { q, t })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Eigenvalues of `a`.
    pub fn eigenvalues(&self) -> Vec<c64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Smallest `|λ_i + conj(λ_j) + shift|`, which vanishes when the operator is singular.
    pub fn min_separation(&self, shift: c64) -> f64 {
        let ev = self.eigenvalues();
        let mut m = f64::INFINITY;
        for a in &ev {
            for b in &ev {
                m = m.min((a + b.conj() + shift).norm());
            }
        }
        m
    }

    pub fn solve(&self, c: MatRef<'_, c64>, shift: c64) -> Result<Mat<c64>> {
        let d = self.dim();
        let tmp = gemm(self.q.as_ref().adjoint(), c);
        let mut y = gemm(tmp.as_ref(), self.q.as_ref());
        triangular_sylvester(self.t.as_ref(), self.t.as_ref(), shift, y.as_mut())?;
        let tmp = gemm(self.q.as_ref(), y.as_ref());
        let mut out = Mat::zeros(d, d);
        matmul(out.as_mut(), Accum::Replace, tmp.as_ref(), self.q.as_ref().adjoint(), ONE, Par::Seq);
        Ok(out)
    }
}

/// Settings of restarted GMRES.
#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Stop once `‖b − A x‖ ≤ max(rtol ‖b‖, atol)`.
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 80, max_iter: 2000, rtol: 1e-12, atol: 0.0 }
    }
}

impl GmresOptions {
    /// Caps the restart length so the Krylov basis stays within `bytes`.
    pub fn with_memory_budget(mut self, n: usize, bytes: usize) -> Self {
        let per = n * std::mem::size_of::<c64>();
        let fit = (bytes / per.max(1)).saturating_sub(2).max(10);
        self.restart = self.restart.min(fit);
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// True residual norm at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from the
/// contents of `x`.
pub fn gmres<A, M>(apply: A, precondition: M, b: &[c64], x: &mut [c64], opts: &GmresOptions) -> Result<GmresOutcome>
where
    A: Fn(&[c64], &mut [c64]) -> Result<()>,
    M: Fn(&[c64], &mut [c64]) -> Result<()>,
{
    let n = b.len();
    let m = opts.restart.max(1);
    let target = (opts.rtol * norm(b)).max(opts.atol);
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut basis: Vec<Vec<c64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![ZERO; m]; m + 1];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![ZERO; m];
    let mut g = vec![ZERO; m + 1];
    let mut iterations = 0;

    let residual = |x: &[c64], r: &mut [c64]| -> Result<f64> {
        apply(x, r)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        Ok(norm(r))
    };

    let mut beta = residual(x, &mut r)?;
    loop {
        if beta <= target || !beta.is_finite() {
            return Ok(GmresOutcome { iterations, residual: beta, converged: beta <= target });
        }
        if iterations >= opts.max_iter {
            return Ok(GmresOutcome { iterations, residual: beta, converged: false });
        }
        basis.clear();
        let mut v0 = r.clone();
        scale(c64::new(1.0 / beta, 0.0), &mut v0);
        basis.push(v0);
        g.iter_mut().for_each(|x| *x = ZERO);
        g[0] = c64::new(beta, 0.0);
        let mut k = 0;
        while k < m && iterations < opts.max_iter {
            precondition(&basis[k], &mut z)?;
            apply(&z, &mut w)?;
            iterations += 1;
            // two passes of classical Gram-Schmidt
            for col in h.iter_mut() {
                col[k] = ZERO;
            }
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[i][k] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = c64::new(hn, 0.0);
            for i in 0..k {
                let t = c64::new(cs[i], 0.0) * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i].conj() * h[i][k] + c64::new(cs[i], 0.0) * h[i + 1][k];
                h[i][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c64::new(c, 0.0) * h[k][k] + s * h[k + 1][k];
            h[k + 1][k] = ZERO;
            g[k + 1] = -s.conj() * g[k];
            g[k] *= c;
            k += 1;
            let est = g[k].norm();
            if est <= target || hn == 0.0 {
                break;
            }
            let mut v = w.clone();
            scale(c64::new(1.0 / hn, 0.0), &mut v);
            basis.push(v);
        }
        // back substitution and update x += M⁻¹ V y
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            if h[i][i] == ZERO {
                return Err(Error::Numerical("GMRES Hessenberg matrix is singular".into()));
            }
            y[i] = s / h[i][i];
        }
        w.iter_mut().for_each(|x| *x = ZERO);
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut w);
        }
        precondition(&w, &mut z)?;
        axpy(ONE, &z, x);
        beta = residual(x, &mut r)?;
    }
}

fn givens(a: c64, b: c64) -> (f64, c64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, ZERO);
    }
    if an == 0.0 {
        return (0.0, b.conj() / bn);
    }
    let r = an.hypot(bn);
    let c = an / r;
    let s = (a / an) * b.conj() / r;
    (c, s)
}

/// Dense matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    if !norm1.is_finite() {
        return Err(Error::Numerical("matrix exponential of a non-finite matrix".into()));
    }
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let scale_f = 0.5f64.powi(s);
    let a1 = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale_f);
    let id = Mat::<c64>::identity(n, n);
    let a2 = gemm(a1.as_ref(), a1.as_ref());
    let a4 = gemm(a2.as_ref(), a2.as_ref());
    let a6 = gemm(a4.as_ref(), a2.as_ref());
    let lin = |c: [f64; 4]| -> Mat<c64> {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c[0] + a4[(i, j)] * c[1] + a2[(i, j)] * c[2] + id[(i, j)] * c[3]
        })
    };
    let u_inner = Mat::from_fn(n, n, |i, j| a6[(i, j)] * B[13] + a4[(i, j)] * B[11] + a2[(i, j)] * B[9]);
    let u_tail = lin([B[7], B[5], B[3], B[1]]);
    let u6 = gemm(a6.as_ref(), u_inner.as_ref());
    let u_sum = &u6 + &u_tail;
    let u = gemm(a1.as_ref(), u_sum.as_ref());
    let v_inner = Mat::from_fn(n, n, |i, j| a6[(i, j)] * B[12] + a4[(i, j)] * B[10] + a2[(i, j)] * B[8]);
    let v6 = gemm(a6.as_ref(), v_inner.as_ref());
    let v = &v6 + &lin([B[6], B[4], B[2], B[0]]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = gemm(r.as_ref(), r.as_ref());
    }
    Ok(r)
}

/// Settings of the Krylov exponential propagator.
#[derive(Clone, Copy, Debug)]
pub struct ExpvOptions {
    /// Krylov subspace dimension.
    pub krylov_dim: usize,
    /// Local error tolerance per unit time, relative to the vector norm.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for ExpvOptions {
    fn default() -> Self {
        Self { krylov_dim: 30, tol: 1e-12, max_steps: 200_000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExpvStats {
    pub steps: usize,
    pub rejections: usize,
    pub error_estimate: f64,
}

/// Computes `exp(t A) v` with adaptive Krylov steps; `anorm` bounds `‖A‖`.
pub fn expv<A>(t: f64, apply: A, anorm: f64, v: &[c64], opts: &ExpvOptions) -> Result<(Vec<c64>, ExpvStats)>
where
    A: Fn(&[c64], &mut [c64]) -> Result<()>,
{
    let n = v.len();
    let mut w = v.to_vec();
    let mut stats = ExpvStats { steps: 0, rejections: 0, error_estimate: 0.0 };
    if t == 0.0 || n == 0 {
        return Ok((w, stats));
    }
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("propagation time must be >= 0, got {t}")));
    }
    let m = opts.krylov_dim.min(n).max(1);
    let anorm = anorm.max(f64::MIN_POSITIVE);
    let tol = opts.tol;
    let btol = 1e-7 * tol.max(f64::EPSILON);
    let (gamma, delta) = (0.9, 1.2);
    let mut beta = norm(&w);
    if beta == 0.0 {
        return Ok((w, stats));
    }
    let mp1 = (m + 1) as f64;
    let fact = (mp1 / std::f64::consts::E).powf(mp1) * (2.0 * std::f64::consts::PI * mp1).sqrt();
    let mut t_new = (1.0 / anorm) * ((fact * tol) / (4.0 * beta * anorm)).powf(1.0 / m as f64);
    t_new = round2(t_new);
    let mut t_now = 0.0;
    let mut av = vec![ZERO; n];
    while t_now < t {
        if stats.steps >= opts.max_steps {
            return Err(Error::StepUnderflow { t: t_now });
        }
        let mut t_step = (t - t_now).min(t_new);
        let mut basis: Vec<Vec<c64>> = Vec::with_capacity(m + 1);
        let mut hm = Mat::<c64>::zeros(m + 2, m + 2);
        let mut v0 = w.clone();
        scale(c64::new(1.0 / beta, 0.0), &mut v0);
        basis.push(v0);
        let mut breakdown = false;
        let mut mb = m;
        for j in 0..m {
            apply(&basis[j], &mut av)?;
            let mut p = av.clone();
            for (i, vi) in basis.iter().enumerate() {
                let c = dot(vi, &p);
                hm[(i, j)] = c;
                axpy(-c, vi, &mut p);
            }
            let s = norm(&p);
            if s < btol {
                breakdown = true;
                mb = j + 1;
                t_step = t - t_now;
                break;
            }
            hm[(j + 1, j)] = c64::new(s, 0.0);
            scale(c64::new(1.0 / s, 0.0), &mut p);
            basis.push(p);
        }
        let mut avnorm = 0.0;
        if !breakdown {
            hm[(m + 1, m)] = ONE;
            apply(&basis[m], &mut av)?;
            avnorm = norm(&av);
        }
        let k1 = if breakdown { 0 } else { 2 };
        let mut ireject = 0;
        let (f, err_loc, xm) = loop {
            let mx = mb + k1;
            let sub = Mat::from_fn(mx, mx, |i, j| hm[(i, j)] * t_step);
            let f = expm(sub.as_ref())?;
            if k1 == 0 {
                break (f, btol, 1.0 / m as f64);
            }
            let phi1 = (beta * f[(m, 0)]).norm();
            let phi2 = (beta * f[(m + 1, 0)] * avnorm).norm();
            let (err, xm) = if phi1 > 10.0 * phi2 {
                (phi2, 1.0 / m as f64)
            } else if phi1 > phi2 {
                (phi1 * phi2 / (phi1 - phi2), 1.0 / m as f64)
            } else {
                (phi1, 1.0 / (m as f64 - 1.0).max(1.0))
            };
            if err <= delta * t_step * tol * beta.max(1.0) {
                break (f, err, xm);
            }
            t_step = round2(gamma * t_step * (t_step * tol / err).powf(xm));
            ireject += 1;
            stats.rejections += 1;
            if ireject > 20 || t_step <= f64::EPSILON * t.max(1.0) {
                return Err(Error::StepUnderflow { t: t_now });
            }
        };
        let mx = mb + if k1 > 0 { k1 - 1 } else { 0 };
        w.iter_mut().for_each(|x| *x = ZERO);
        for i in 0..mx.min(basis.len()) {
            axpy(f[(i, 0)] * beta, &basis[i], &mut w);
        }
        beta = norm(&w);
        t_now += t_step;
        stats.steps += 1;
        stats.error_estimate += err_loc;
        let e = err_loc.max(f64::MIN_POSITIVE);
        t_new = round2(gamma * t_step * (t_step * tol / e).powf(xm));
        if beta == 0.0 {
            break;
        }
    }
    Ok((w, stats))
}

fn round2(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return x;
    }
    let s = 10f64.powf(x.log10().floor() - 1.0);
    (x / s).ceil() * s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize, seed: u64) -> Mat<c64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        Mat::from_fn(n, n, |_, _| c64::new(next(), next()))
    }

    #[test]
    fn schur_of_degenerate_kronecker_sum() {
        // a damped, driven oscillator pair: many exactly repeated eigenvalues
        let trunc = crate::fock::Truncation::symmetric(12);
        let p = crate::model::SystemParams::symmetric(3e-3, 1e-2, 0.0);
        let l = crate::model::build_reduced_liouvillian(&p, trunc, false).unwrap();
        let a = l.effective().to_dense();
        let (q, t) = schur(a.as_ref()).unwrap();
        let back = &q * &t * q.adjoint();
        assert!((&back - &a).norm_l2() < 1e-12 * a.norm_l2());
    }

    #[test]
    fn schur_reconstructs() {
        let a = test_matrix(30, 1);
        let (q, t) = schur(a.as_ref()).unwrap();
        let r = gemm(gemm(q.as_ref(), t.as_ref()).as_ref(), q.as_ref().adjoint());
        assert!((&r - &a).norm_max() < 1e-12);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        for n in [5, 40, 70] {
            let mut a = test_matrix(n, n as u64);
            for i in 0..n {
                a[(i, i)] -= c64::new(2.0, 0.0);
            }
            let c = test_matrix(n, 7);
            let shift = c64::new(0.0, 0.3);
            let lyap = LyapunovSolver::new(a.as_ref()).unwrap();
            let x = lyap.solve(c.as_ref(), shift).unwrap();
            let lhs = &(&gemm(a.as_ref(), x.as_ref()) + &gemm(x.as_ref(), a.as_ref().adjoint())) + &(&x * faer::Scale(c64::from(shift)));
            assert!((&lhs - &c).norm_max() < 1e-11, "n={n}");
        }
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let mut a = Mat::<c64>::zeros(3, 3);
        a[(0, 0)] = c64::new(1.0, 0.0);
        a[(1, 1)] = c64::new(0.0, 2.0);
        a[(0, 2)] = c64::new(3.0, 0.0);
        let e = expm(a.as_ref()).unwrap();
        assert!((e[(0, 0)] - c64::new(1f64.exp(), 0.0)).norm() < 1e-13);
        assert!((e[(1, 1)] - c64::new(0.0, 2.0).exp()).norm() < 1e-13);
        // (0,2) block: d/dt of [[1,3],[0,0]] exponential gives 3(e−1)
        assert!((e[(0, 2)].re - 3.0 * (1f64.exp() - 1.0)).abs() < 1e-12);
        let big = Mat::from_fn(2, 2, |i, j| if i == j { c64::new(-30.0, 0.0) } else { ZERO });
        let e = expm(big.as_ref()).unwrap();
        assert!((e[(0, 0)].re - (-30f64).exp()).abs() < 1e-25);
    }

    #[test]
    fn gmres_solves_dense_system() {
        let n = 60;
        let mut a = test_matrix(n, 3);
        for i in 0..n {
            a[(i, i)] += c64::new(4.0, 0.0);
        }
        let xtrue: Vec<c64> = (0..n).map(|i| c64::new(i as f64, 1.0)).collect();
        let apply = |x: &[c64], y: &mut [c64]| {
            for i in 0..n {
                y[i] = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            }
            Ok(())
        };
        let mut b = vec![ZERO; n];
        apply(&xtrue, &mut b).unwrap();
        let mut x = vec![ZERO; n];
        let opts = GmresOptions { restart: 15, ..GmresOptions::default() };
        let out = gmres(apply, |r: &[c64], z: &mut [c64]| { z.copy_from_slice(r); Ok(()) }, &b, &mut x, &opts).unwrap();
        assert!(out.converged);
        let err: f64 = x.iter().zip(&xtrue).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn expv_matches_expm() {
        let n = 50;
        let mut a = test_matrix(n, 9);
        for i in 0..n {
            a[(i, i)] -= c64::new(1.0, 0.0);
        }
        let v: Vec<c64> = (0..n).map(|i| c64::new(1.0 / (1.0 + i as f64), 0.0)).collect();
        let t = 3.0;
        let at = Mat::from_fn(n, n, |i, j| a[(i, j)] * t);
        let e = expm(at.as_ref()).unwrap();
        let exact: Vec<c64> = (0..n).map(|i| (0..n).map(|j| e[(i, j)] * v[j]).sum()).collect();
        let apply = |x: &[c64], y: &mut [c64]| {
            for i in 0..n {
                y[i] = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            }
            Ok(())
        };
        let (w, _) = expv(t, apply, 30.0, &v, &ExpvOptions { krylov_dim: 20, ..Default::default() }).unwrap();
        let err: f64 = w.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}
