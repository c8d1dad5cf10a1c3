//! Truncated Fock-space operators, tensor embeddings and reference states.
//!
//! Composite indices are row-major: for a product space `A ⊗ B` the basis
//! vector `|i_A⟩|i_B⟩` sits at `i_A * dim_B + i_B`. The two-mode space is
//! `a ⊗ b`; the full model uses `atom ⊗ a ⊗ b`.

use faer::reborrow::ReborrowMut;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::c64;

/// Fock cutoffs of the two cavity modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_a_max: usize,
    pub n_b_max: usize,
}

impl Truncation {
    pub fn new(n_a_max: usize, n_b_max: usize) -> Self {
        Self { n_a_max, n_b_max }
    }

    pub fn symmetric(n_max: usize) -> Self {
        Self::new(n_max, n_max)
    }

    pub fn dim_a(&self) -> usize {
        self.n_a_max + 1
    }

    pub fn dim_b(&self) -> usize {
        self.n_b_max + 1
    }

    /// Dimension of the two-mode space.
    pub fn dim(&self) -> usize {
        self.dim_a() * self.dim_b()
    }

    /// Composite index of `|n_a, n_b⟩`.
    pub fn index(&self, n_a: usize, n_b: usize) -> usize {
        debug_assert!(n_a <= self.n_a_max && n_b <= self.n_b_max);
        n_a * self.dim_b() + n_b
    }

    /// Inverse of [`Truncation::index`].
    pub fn occupation(&self, index: usize) -> (usize, usize) {
        (index / self.dim_b(), index % self.dim_b())
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_a_max == self.n_b_max
    }
}

/// Sparse complex square matrix in CSR layout.
///
/// Entries that are exactly zero are never stored, so two operators built
/// along different routes compare equal whenever their entries agree.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<c64>,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, indptr: vec![0; dim + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, c64::new(1.0, 0.0))))
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_triplets(
            values.len(),
            values.iter().enumerate().map(|(i, &v)| (i, i, c64::new(v, 0.0))),
        )
    }

    /// Builds the matrix from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// # Panics
    /// If an index lies outside `[0, dim)`.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, c64)>,
    {
        let mut rows: Vec<Vec<(usize, c64)>> = vec![Vec::new(); dim];
        for (i, j, v) in triplets {
            assert!(i < dim && j < dim, "entry ({i}, {j}) outside dimension {dim}");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut acc = c64::new(0.0, 0.0);
                while k < row.len() && row[k].0 == j {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != c64::new(0.0, 0.0) {
                    indices.push(j);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Self { dim, indptr, indices, values }
    }

    /// Sparse copy of a dense matrix, dropping entries with modulus `<= drop_tol`.
    pub fn from_dense(m: &Mat<c64>, drop_tol: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator must be square");
        let n = m.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v.norm() > drop_tol {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        let row = self.indptr[i]..self.indptr[i + 1];
        match self.indices[row.clone()].binary_search(&j) {
            Ok(k) => self.values[row.start + k],
            Err(_) => c64::new(0.0, 0.0),
        }
    }

    /// Iterates over stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |k| (i, self.indices[k], self.values[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (j, i, v)))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn conj(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (i, j, v.conj())))
    }

    pub fn scale(&self, s: c64) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (i, j, v * s)))
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in operator sum");
        Self::from_triplets(self.dim, self.iter().chain(other.iter()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_real(-1.0))
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in operator product");
        let mut t = Vec::new();
        for i in 0..self.dim {
            for (k, v) in self.row(i) {
                for (j, w) in other.row(k) {
                    t.push((i, j, v * w));
                }
            }
        }
        Self::from_triplets(self.dim, t)
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn kron(&self, other: &Self) -> Self {
        kron(self, other)
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `⟨x|self|y⟩` with `x` conjugated.
    pub fn sandwich(&self, x: &[c64], y: &[c64]) -> c64 {
        let ay = self.apply(y);
        x.iter().zip(&ay).map(|(a, b)| a.conj() * b).sum()
    }

    /// `out += alpha · self · x` for a dense matrix `x`.
    pub fn left_mul_acc(&self, alpha: c64, x: faer::MatRef<'_, c64>, mut out: faer::MatMut<'_, c64>) {
        for i in 0..self.dim {
            for (k, v) in self.row(i) {
                let s = alpha * v;
                for c in 0..x.ncols() {
                    out[(i, c)] += s * x[(k, c)];
                }
            }
        }
    }

    /// `out += alpha · x · self†` for a dense matrix `x`.
    pub fn right_mul_adjoint_acc(
        &self,
        alpha: c64,
        x: faer::MatRef<'_, c64>,
        mut out: faer::MatMut<'_, c64>,
    ) {
        // (x self†)[r, i] = Σ_k x[r, k] conj(self[i, k])
        for i in 0..self.dim {
            for (k, v) in self.row(i) {
                let s = alpha * v.conj();
                let xc = x.col(k);
                let mut oc = out.rb_mut().col_mut(i);
                for r in 0..x.nrows() {
                    oc[r] += s * xc[r];
                }
            }
        }
    }

    /// Dense `self · x`.
    pub fn left_mul(&self, x: faer::MatRef<'_, c64>) -> Mat<c64> {
        let mut out = Mat::<c64>::zeros(self.dim, x.ncols());
        self.left_mul_acc(c64::new(1.0, 0.0), x, out.as_mut());
        out
    }

    /// Dense `x · self`.
    pub fn right_mul(&self, x: faer::MatRef<'_, c64>) -> Mat<c64> {
        let mut out = Mat::<c64>::zeros(x.nrows(), self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                for r in 0..x.nrows() {
                    out[(r, j)] += x[(r, i)] * v;
                }
            }
        }
        out
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0; self.dim];
        for (_, j, v) in self.iter() {
            cols[j] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.iter().all(|(i, j, v)| (v - self.get(j, i).conj()).norm() <= tol)
            && self.adjoint().iter().all(|(i, j, v)| (v - self.get(i, j)).norm() <= tol)
    }
}

/// Kronecker product `op_a ⊗ op_b` with index `i_a * dim_b + i_b`.
pub fn kron(op_a: &OperatorMatrix, op_b: &OperatorMatrix) -> OperatorMatrix {
    let db = op_b.dim();
    let mut t = Vec::with_capacity(op_a.nnz() * op_b.nnz());
    for (i, j, v) in op_a.iter() {
        for (k, l, w) in op_b.iter() {
            t.push((i * db + k, j * db + l, v * w));
        }
    }
    OperatorMatrix::from_triplets(op_a.dim() * db, t)
}

/// Truncated annihilation operator with `⟨n−1|a|n⟩ = √n`.
pub fn annihilation_op(cutoff: usize) -> OperatorMatrix {
    OperatorMatrix::from_triplets(
        cutoff + 1,
        (1..=cutoff).map(|n| (n - 1, n, c64::new((n as f64).sqrt(), 0.0))),
    )
}

pub fn number_op(cutoff: usize) -> OperatorMatrix {
    OperatorMatrix::diagonal(&(0..=cutoff).map(|n| n as f64).collect::<Vec<_>>())
}

/// Mode operators `a ⊗ I` and `I ⊗ b` on the two-mode space.
pub fn mode_operators(trunc: Truncation) -> (OperatorMatrix, OperatorMatrix) {
    let a = kron(&annihilation_op(trunc.n_a_max), &OperatorMatrix::identity(trunc.dim_b()));
    let b = kron(&OperatorMatrix::identity(trunc.dim_a()), &annihilation_op(trunc.n_b_max));
    (a, b)
}

/// Atomic basis `|1⟩..|4⟩` mapped to indices `0..4`.
pub const ATOM_LEVELS: usize = 4;

/// Atomic transition operator `|i⟩⟨j|` with 1-based level labels.
///
/// # Panics
/// If a label is outside `1..=4`.
pub fn atomic_transition(i: usize, j: usize) -> OperatorMatrix {
    assert!((1..=ATOM_LEVELS).contains(&i) && (1..=ATOM_LEVELS).contains(&j));
    OperatorMatrix::from_triplets(ATOM_LEVELS, [(i - 1, j - 1, c64::new(1.0, 0.0))])
}

/// Provenance of a [`PureState`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StateLabel {
    Fock,
    Coherent,
    Noon,
    CesPlus,
    CesMinus,
    Custom,
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    pub amplitudes: Vec<c64>,
    pub label: StateLabel,
    /// `1 − ‖ψ‖²` before renormalization; nonzero only for truncated coherent amplitudes.
    pub norm_deficit: f64,
}

/// Truncated norm deficits above this value flag a coherent state as under-resolved.
pub const NORM_DEFICIT_WARNING: f64 = 1e-6;

impl PureState {
    /// Normalizes `amplitudes` and wraps them.
    pub fn new(amplitudes: Vec<c64>, label: StateLabel) -> Result<Self> {
        let n = norm(&amplitudes);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate("state vector has zero or non-finite norm".into()));
        }
        Ok(Self { amplitudes: amplitudes.iter().map(|a| a / n).collect(), label, norm_deficit: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn truncation_warning(&self) -> bool {
        self.norm_deficit > NORM_DEFICIT_WARNING
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> c64 {
        assert_eq!(self.dim(), other.dim());
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> c64 {
        op.sandwich(&self.amplitudes, &self.amplitudes)
    }

    /// Dense projector `|ψ⟩⟨ψ|`.
    pub fn projector(&self) -> Mat<c64> {
        let v = &self.amplitudes;
        Mat::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &PureState) -> PureState {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amps.push(a * b);
            }
        }
        let deficit = 1.0 - (1.0 - self.norm_deficit) * (1.0 - other.norm_deficit);
        PureState { amplitudes: amps, label: StateLabel::Custom, norm_deficit: deficit }
    }
}

fn norm(v: &[c64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Fock state `|n⟩` of a single mode.
pub fn fock_state(n: usize, cutoff: usize) -> Result<PureState> {
    if n > cutoff {
        return Err(Error::CutoffTooSmall { required: n, cutoff });
    }
    let mut v = vec![c64::new(0.0, 0.0); cutoff + 1];
    v[n] = c64::new(1.0, 0.0);
    PureState::new(v, StateLabel::Fock)
}

/// Two-mode Fock state `|n_a, n_b⟩`.
pub fn two_mode_fock(n_a: usize, n_b: usize, trunc: Truncation) -> Result<PureState> {
    if n_a > trunc.n_a_max || n_b > trunc.n_b_max {
        return Err(Error::CutoffTooSmall {
            required: n_a.max(n_b),
            cutoff: trunc.n_a_max.min(trunc.n_b_max),
        });
    }
    let mut v = vec![c64::new(0.0, 0.0); trunc.dim()];
    v[trunc.index(n_a, n_b)] = c64::new(1.0, 0.0);
    PureState::new(v, StateLabel::Fock)
}

/// Truncated coherent state, renormalized, with the lost norm recorded.
pub fn coherent_state(alpha: c64, cutoff: usize) -> PureState {
    if alpha.norm_sqr() > cutoff as f64 / 2.0 {
        log::warn!("coherent amplitude |alpha|^2 = {:.3} exceeds cutoff/2 = {}", alpha.norm_sqr(), cutoff as f64 / 2.0);
    }
    let mut amps = Vec::with_capacity(cutoff + 1);
    let mut c = c64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(c);
    for n in 1..=cutoff {
        c = c * alpha / (n as f64).sqrt();
        amps.push(c);
    }
    let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let deficit = (1.0 - n2).max(0.0);
    if deficit > NORM_DEFICIT_WARNING {
        log::warn!("coherent state truncated at n = {cutoff} loses norm {deficit:.2e}");
    }
    let n = n2.sqrt();
    PureState {
        amplitudes: amps.into_iter().map(|a| a / n).collect(),
        label: StateLabel::Coherent,
        norm_deficit: deficit,
    }
}

/// `(|N,0⟩ + |0,N⟩)/√2`, or `|0,0⟩` when `N = 0`.
pub fn noon_state(n: usize, trunc: Truncation) -> Result<PureState> {
    if n > trunc.n_a_max || n > trunc.n_b_max {
        return Err(Error::CutoffTooSmall { required: n, cutoff: trunc.n_a_max.min(trunc.n_b_max) });
    }
    let mut v = vec![c64::new(0.0, 0.0); trunc.dim()];
    v[trunc.index(n, 0)] += c64::new(1.0, 0.0);
    v[trunc.index(0, n)] += c64::new(1.0, 0.0);
    let mut s = PureState::new(v, StateLabel::Noon)?;
    s.label = StateLabel::Noon;
    Ok(s)
}

/// Coherent entangled state `(|α,0⟩ ± |0,α⟩)` normalized; `sign` is `+1` or `-1`.
pub fn ces_state(alpha: c64, sign: i32, trunc: Truncation) -> Result<PureState> {
    let s = match sign {
        1 => 1.0,
        -1 => -1.0,
        _ => return Err(Error::InvalidInput(format!("CES sign must be +1 or -1, got {sign}"))),
    };
    // normalization 2(1 ± e^{-|α|²}) vanishes for the odd branch at α = 0
    let analytic = 2.0 * (1.0 + s * (-alpha.norm_sqr()).exp());
    if analytic < 1e-14 {
        return Err(Error::Degenerate(format!("CES with sign {sign} has zero norm at alpha = {alpha}")));
    }
    let ca = coherent_state(alpha, trunc.n_a_max);
    let cb = coherent_state(alpha, trunc.n_b_max);
    let mut v = vec![c64::new(0.0, 0.0); trunc.dim()];
    for (n, &c) in ca.amplitudes.iter().enumerate() {
        v[trunc.index(n, 0)] += c;
    }
    for (n, &c) in cb.amplitudes.iter().enumerate() {
        v[trunc.index(0, n)] += s * c;
    }
    let label = if sign > 0 { StateLabel::CesPlus } else { StateLabel::CesMinus };
    let mut st = PureState::new(v, label)?;
    st.norm_deficit = ca.norm_deficit.max(cb.norm_deficit);
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> c64 {
        c64::new(1.0, 0.0)
    }

    #[test]
    fn annihilation_entries() {
        assert_eq!(annihilation_op(0).nnz(), 0);
        let a = annihilation_op(2);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), one());
        assert!((a.get(1, 2).re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn truncated_commutator_edge() {
        let a = annihilation_op(5);
        let c = a.matmul(&a.adjoint()).sub(&a.adjoint().matmul(&a));
        for i in 0..6 {
            let expect = if i == 5 { -5.0 } else { 1.0 };
            assert!((c.get(i, i).re - expect).abs() < 1e-12);
        }
        assert_eq!(c.nnz(), 6);
    }

    #[test]
    fn kron_basics() {
        assert_eq!(kron(&OperatorMatrix::identity(2), &OperatorMatrix::identity(3)), OperatorMatrix::identity(6));
        let op = kron(&annihilation_op(1), &OperatorMatrix::identity(2));
        let t = Truncation::new(1, 1);
        let psi = two_mode_fock(1, 0, t).unwrap();
        let out = op.apply(&psi.amplitudes);
        assert_eq!(out[t.index(0, 0)], one());
        let (a, b) = mode_operators(Truncation::new(3, 4));
        assert_eq!(a.matmul(&b), b.matmul(&a));
    }

    #[test]
    fn coherent_examples() {
        let z = coherent_state(c64::new(0.0, 0.0), 5);
        assert_eq!(z.amplitudes[0], one());
        let s = coherent_state(c64::new(0.0, -2.32), 20);
        let n = s.expectation(&number_op(20)).re;
        assert!((n - 5.3824).abs() < 1e-3, "{n}");
        let c = coherent_state(one(), 10);
        assert!((c.amplitudes[1] / c.amplitudes[0] - one()).norm() < 1e-14);
        let cut = coherent_state(c64::new(3.0, 0.0), 4);
        assert!(cut.truncation_warning());
        assert!((cut.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noon_examples() {
        let t = Truncation::new(4, 4);
        let z = noon_state(0, t).unwrap();
        assert_eq!(z.amplitudes[0], one());
        let b = noon_state(1, t).unwrap();
        assert!((b.amplitudes[t.index(1, 0)].re - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(noon_state(3, Truncation::new(2, 5)).is_err());
    }

    #[test]
    fn ces_examples() {
        let t = Truncation::symmetric(24);
        let z = ces_state(c64::new(0.0, 0.0), 1, t).unwrap();
        assert!((z.amplitudes[0].re - 1.0).abs() < 1e-14);
        assert!(ces_state(c64::new(0.0, 0.0), -1, t).is_err());
        let alpha = c64::new(0.0, -2.23);
        let s = ces_state(alpha, 1, t).unwrap();
        assert!((s.inner(&s).norm() - 1.0).abs() < 1e-12);
        let (a, b) = mode_operators(t);
        let n = s.expectation(&a.adjoint().matmul(&a).add(&b.adjoint().matmul(&b))).re;
        let x = alpha.norm_sqr();
        assert!((n - x / (1.0 + (-x).exp())).abs() < 1e-8, "{n}");
    }

    #[test]
    fn ces_parity_sectors_are_orthogonal() {
        let t = Truncation::symmetric(12);
        let p = ces_state(c64::new(0.3, 1.2), 1, t).unwrap();
        let m = ces_state(c64::new(-0.7, 0.4), -1, t).unwrap();
        assert!(p.inner(&m).norm() < 1e-14);
    }
}
