//! Dense operator algebra on qubit registers.
//!
//! Basis convention: `|g> = (1, 0)`, `|e> = (0, 1)`. Site 0 is the most
//! significant bit of a basis index, so in a register of `n` sites the basis
//! state with only site `s` excited has index `1 << (n - 1 - s)`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix acting on a Hilbert space of dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        Ok(Self { m })
    }

    /// Row-major construction; panics if `entries.len() != dim * dim`.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), dim * dim, "entry count must be dim^2");
        Self { m: DMatrix::from_row_slice(dim, dim, entries) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn sigma_minus() -> Self {
        Self::from_rows(2, &[ZERO, ONE, ZERO, ZERO])
    }

    pub fn sigma_plus() -> Self {
        Self::sigma_minus().adjoint()
    }

    pub fn sigma_z() -> Self {
        Self::from_rows(2, &[ONE, ZERO, ZERO, -ONE])
    }

    pub fn sigma_x() -> Self {
        Self::from_rows(2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn sigma_y() -> Self {
        Self::from_rows(2, &[ZERO, -I, I, ZERO])
    }

    /// Projector onto the excited level, `σ+σ-`.
    pub fn excited_projector() -> Self {
        Self::from_rows(2, &[ZERO, ZERO, ZERO, ONE])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { m: &self.m * c }
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.m.iter().zip(other.m.iter()).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).norm()))
    }

    /// Max-norm of `A - A†`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Eigenvalues of the Hermitian part `(A + A†)/2`, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let h = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Number of qubit sites if `dim` is a power of two.
    pub fn num_sites(&self) -> Option<usize> {
        let d = self.dim();
        (d.is_power_of_two()).then(|| d.trailing_zeros() as usize)
    }

    fn check_same_dim(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m * &rhs.m }
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m + &rhs.m }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m - &rhs.m }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator { m: self.m + rhs.m }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator { m: self.m - rhs.m }
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.m += &rhs.m;
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { m: -&self.m }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    v: DVector<C64>,
}

impl Ket {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("ket norm {norm} differs from 1")));
        }
        Ok(Self { v })
    }

    /// Rescales to unit norm; fails on the zero vector.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Ok(Self { v: v / C64::new(norm, 0.0) })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = ONE;
        Self { v }
    }

    /// Product state with the listed sites excited.
    pub fn excited_sites(n_sites: usize, excited: &[usize]) -> Self {
        let idx = excited.iter().fold(0usize, |acc, &s| acc | site_bit(s, n_sites));
        Self::basis(1 << n_sites, idx)
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.v
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.v[index]
    }

    pub fn inner(&self, other: &Ket) -> C64 {
        self.v.dotc(&other.v)
    }

    pub fn projector(&self) -> Operator {
        Operator { m: &self.v * self.v.adjoint() }
    }

    pub fn apply(&self, op: &Operator) -> Result<DVector<C64>> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), found: self.dim() });
        }
        Ok(op.matrix() * &self.v)
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket { v: self.v.kronecker(&other.v) }
    }
}

/// Trace-one Hermitian positive-semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

/// Measured deviations of a state from the density-matrix invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDiagnostics {
    pub trace_error: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl StateDiagnostics {
    pub fn within(&self, trace_tol: f64, herm_tol: f64, eig_floor: f64) -> bool {
        self.trace_error <= trace_tol
            && self.hermiticity_defect <= herm_tol
            && self.min_eigenvalue >= eig_floor
    }
}

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-8;
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const EIGEN_FLOOR: f64 = -1e-7;

    pub fn new(op: Operator) -> Result<Self> {
        let rho = Self { op };
        let d = rho.diagnostics();
        if !d.within(Self::TRACE_TOL, Self::HERMITIAN_TOL, Self::EIGEN_FLOOR) {
            return Err(Error::InvalidState(format!("not a density matrix: {d:?}")));
        }
        Ok(rho)
    }

    /// Wraps without validation; used for integrator output whose drift is
    /// measured separately.
    pub fn new_unchecked(op: Operator) -> Self {
        Self { op }
    }

    pub fn from_ket(psi: &Ket) -> Self {
        Self { op: psi.projector() }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { op: Operator::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)) }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        let ev = self.op.hermitian_eigenvalues();
        StateDiagnostics {
            trace_error: (self.op.trace() - ONE).norm(),
            hermiticity_defect: self.op.hermiticity_defect(),
            min_eigenvalue: ev.first().copied().unwrap_or(0.0),
        }
    }

    /// Computational-basis populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.op.get(i, i).re).collect()
    }

    pub fn num_sites(&self) -> Option<usize> {
        self.op.num_sites()
    }
}

pub(crate) fn site_bit(site: usize, n_sites: usize) -> usize {
    1 << (n_sites - 1 - site)
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator { m: a.m.kronecker(&b.m) }
}

/// Places a single-site operator on `index` of an `n`-site register.
pub fn embed(site_op: &Operator, index: usize, n: usize) -> Result<Operator> {
    if site_op.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: site_op.dim() });
    }
    if index >= n {
        return Err(Error::SiteOutOfRange { index, n });
    }
    let left = Operator::identity(1 << index);
    let right = Operator::identity(1 << (n - 1 - index));
    Ok(kron(&kron(&left, site_op), &right))
}

/// Reduced state on the sites in `keep` (sorted, distinct, in range).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho
        .num_sites()
        .ok_or_else(|| Error::InvalidKeep("state dimension is not a power of two".into()))?;
    if keep.is_empty() {
        return Err(Error::InvalidKeep("keep set is empty".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidKeep(format!("keep set {keep:?} is not strictly increasing")));
    }
    if let Some(&bad) = keep.iter().find(|&&s| s >= n) {
        return Err(Error::SiteOutOfRange { index: bad, n });
    }
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    let k = keep.len();
    let out_dim = 1 << k;
    let spread = |sub: usize, sites: &[usize]| -> usize {
        let m = sites.len();
        sites
            .iter()
            .enumerate()
            .filter(|(pos, _)| sub & (1 << (m - 1 - pos)) != 0)
            .fold(0, |acc, (_, &s)| acc | site_bit(s, n))
    };
    let keep_idx: Vec<usize> = (0..out_dim).map(|i| spread(i, keep)).collect();
    let trace_idx: Vec<usize> = (0..1 << traced.len()).map(|t| spread(t, &traced)).collect();
    let m = rho.as_operator().matrix();
    let out = DMatrix::from_fn(out_dim, out_dim, |i, j| {
        trace_idx.iter().map(|&t| m[(keep_idx[i] | t, keep_idx[j] | t)]).sum::<C64>()
    });
    Ok(DensityMatrix::new_unchecked(Operator { m: out }))
}

/// `tr(op ρ)`.
pub fn expect(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    op.check_same_dim(rho.as_operator())?;
    let a = op.matrix();
    let r = rho.as_operator().matrix();
    let n = op.dim();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * r[(j, i)];
        }
    }
    Ok(acc)
}

/// Generalized dissipator `a ρ b† - ½(b† a ρ + ρ b† a)`.
pub fn dissipator(a: &Operator, b: &Operator, rho: &DensityMatrix) -> Result<Operator> {
    a.check_same_dim(b)?;
    a.check_same_dim(rho.as_operator())?;
    let r = rho.as_operator();
    let bd = b.adjoint();
    let bda = &bd * a;
    let jump = &(&(a * r) * &bd);
    let anti = &(&bda * r) + &(r * &bda);
    Ok(jump - &anti.scale(C64::new(0.5, 0.0)))
}

/// Trace distance `½‖a - b‖₁` for Hermitian operators.
pub fn trace_distance(a: &Operator, b: &Operator) -> f64 {
    let diff = a - b;
    0.5 * diff.hermitian_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}

/// A coordinate subspace of a register's Hilbert space, given by the basis
/// indices it spans. Restricting a generator to a subspace that every term
/// leaves invariant gives exact dynamics at a fraction of the cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subspace {
    full_dim: usize,
    indices: Vec<usize>,
}

impl Subspace {
    pub fn new(full_dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.last().is_some_and(|&i| i >= full_dim) {
            return Err(Error::InvalidParameter("subspace indices out of range".into()));
        }
        Ok(Self { full_dim, indices })
    }

    /// Basis states with at most `k` excited sites.
    pub fn excitations_at_most(n_sites: usize, k: usize) -> Self {
        let full_dim = 1 << n_sites;
        let indices = (0..full_dim).filter(|i: &usize| i.count_ones() as usize <= k).collect();
        Self { full_dim, indices }
    }

    pub fn full(dim: usize) -> Self {
        Self { full_dim: dim, indices: (0..dim).collect() }
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// True when `op` maps the span of the subspace into itself.
    pub fn is_invariant(&self, op: &Operator) -> bool {
        let inside: Vec<bool> = {
            let mut v = vec![false; self.full_dim];
            for &i in &self.indices {
                v[i] = true;
            }
            v
        };
        let m = op.matrix();
        self.indices.iter().all(|&j| (0..self.full_dim).all(|i| inside[i] || m[(i, j)] == ZERO))
    }

    pub fn restrict(&self, op: &Operator) -> Operator {
        let idx = &self.indices;
        Operator { m: DMatrix::from_fn(idx.len(), idx.len(), |i, j| op.get(idx[i], idx[j])) }
    }

    pub fn restrict_ket(&self, psi: &Ket) -> Result<Ket> {
        Ket::new(self.indices.iter().map(|&i| psi.amplitude(i)).collect())
    }

    pub fn restrict_state(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::new_unchecked(self.restrict(rho.as_operator()))
    }

    pub fn lift(&self, op: &Operator) -> Operator {
        let mut m = DMatrix::zeros(self.full_dim, self.full_dim);
        for (a, &i) in self.indices.iter().enumerate() {
            for (b, &j) in self.indices.iter().enumerate() {
                m[(i, j)] = op.get(a, b);
            }
        }
        Operator { m }
    }

    pub fn lift_state(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::new_unchecked(self.lift(rho.as_operator()))
    }

    /// Total weight of `rho` outside the subspace.
    pub fn leakage(&self, rho: &DensityMatrix) -> f64 {
        let total: f64 = rho.populations().iter().sum();
        let inside: f64 = self.indices.iter().map(|&i| rho.as_operator().get(i, i).re).sum();
        (total - inside).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ket(amps: &[(f64, f64)]) -> Ket {
        Ket::normalized(amps.iter().map(|&(r, i)| C64::new(r, i)).collect()).unwrap()
    }

    #[test]
    fn kron_identities_and_eigenbasis() {
        let i4 = kron(&Operator::identity(2), &Operator::identity(2));
        assert_eq!(i4, Operator::identity(4));

        // |10> has index 2: site 0 excited.
        let z1 = kron(&Operator::sigma_z(), &Operator::identity(2));
        let psi = Ket::excited_sites(2, &[0]);
        let out = psi.apply(&z1).unwrap();
        assert_abs_diff_eq!(out[2].re, -1.0);

        let mm = kron(&Operator::sigma_minus(), &Operator::sigma_minus());
        let ee = Ket::excited_sites(2, &[0, 1]);
        let out = ee.apply(&mm).unwrap();
        assert_abs_diff_eq!(out[0].re, 1.0);
    }

    #[test]
    fn embed_basic_cases() {
        assert_eq!(embed(&Operator::sigma_minus(), 0, 1).unwrap(), Operator::sigma_minus());
        for k in 0..4 {
            assert_eq!(embed(&Operator::identity(2), k, 4).unwrap(), Operator::identity(16));
        }
        let up = embed(&Operator::sigma_plus(), 3, 8).unwrap();
        let out = Ket::basis(256, 0).apply(&up).unwrap();
        let target = Ket::excited_sites(8, &[3]);
        assert_abs_diff_eq!((out - target.amplitudes()).norm(), 0.0);
        assert!(matches!(embed(&Operator::sigma_z(), 8, 8), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn partial_trace_product_and_bell() {
        let a = DensityMatrix::from_ket(&ket(&[(0.6, 0.0), (0.0, 0.8)]));
        let b = DensityMatrix::from_ket(&ket(&[(1.0, 0.0), (1.0, 0.0)]));
        let ab = DensityMatrix::new(kron(a.as_operator(), b.as_operator())).unwrap();
        let ra = partial_trace(&ab, &[0]).unwrap();
        assert!(ra.as_operator().max_abs_diff(a.as_operator()) < 1e-14);
        let rb = partial_trace(&ab, &[1]).unwrap();
        assert!(rb.as_operator().max_abs_diff(b.as_operator()) < 1e-14);

        let bell = DensityMatrix::from_ket(&ket(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]));
        let r = partial_trace(&bell, &[1]).unwrap();
        let half = DensityMatrix::maximally_mixed(2);
        assert!(r.as_operator().max_abs_diff(half.as_operator()) < 1e-14);
        assert_abs_diff_eq!(r.as_operator().trace().re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_rejects_bad_keep() {
        let rho = DensityMatrix::maximally_mixed(8);
        assert!(partial_trace(&rho, &[]).is_err());
        assert!(partial_trace(&rho, &[1, 0]).is_err());
        assert!(partial_trace(&rho, &[0, 3]).is_err());
    }

    #[test]
    fn expectations() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert_abs_diff_eq!(expect(&Operator::identity(4), &rho).unwrap().re, 1.0, epsilon = 1e-15);
        let e = DensityMatrix::from_ket(&Ket::basis(2, 1));
        assert_abs_diff_eq!(expect(&Operator::excited_projector(), &e).unwrap().re, 1.0);
        let plus = DensityMatrix::from_ket(&ket(&[(1.0, 0.0), (1.0, 0.0)]));
        let c = expect(&Operator::sigma_minus(), &plus).unwrap();
        assert_abs_diff_eq!(c.re, 0.5, epsilon = 1e-15);
        assert!(expect(&Operator::identity(2), &rho).is_err());
    }

    #[test]
    fn single_qubit_decay_generator() {
        let e = DensityMatrix::from_ket(&Ket::basis(2, 1));
        let d = dissipator(&Operator::sigma_minus(), &Operator::sigma_minus(), &e).unwrap();
        let expected = Operator::from_rows(2, &[ONE, ZERO, ZERO, -ONE]);
        assert!(d.max_abs_diff(&expected) < 1e-15);
        let z = Operator::zeros(2);
        assert!(dissipator(&z, &z, &e).unwrap().is_zero());
    }

    #[test]
    fn correlated_dissipator_is_trace_free() {
        // Oracle: expand a ρ b† - ½(b†aρ + ρb†a) entry by entry with explicit
        // index sums and compare; the trace of the result must vanish.
        let s1 = embed(&Operator::sigma_minus(), 0, 2).unwrap();
        let s2 = embed(&Operator::sigma_minus(), 1, 2).unwrap();
        let psi = ket(&[(0.1, 0.2), (0.5, -0.1), (0.3, 0.4), (0.6, 0.0)]);
        let rho = DensityMatrix::from_ket(&psi);
        let d = dissipator(&s1, &s2, &rho).unwrap();

        let (a, b, r) = (s1.matrix(), s2.matrix(), rho.as_operator().matrix());
        let mut oracle = DMatrix::<C64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let mut v = ZERO;
                for k in 0..4 {
                    for l in 0..4 {
                        v += a[(i, k)] * r[(k, l)] * b[(j, l)].conj();
                    }
                }
                for k in 0..4 {
                    for l in 0..4 {
                        let bda_ik = b[(l, i)].conj() * a[(l, k)];
                        v -= 0.5 * bda_ik * r[(k, j)];
                        let bda_kj = b[(l, k)].conj() * a[(l, j)];
                        v -= 0.5 * r[(i, k)] * bda_kj;
                    }
                }
                oracle[(i, j)] = v;
            }
        }
        assert!(d.max_abs_diff(&Operator::from_matrix(oracle).unwrap()) < 1e-14);
        assert!(d.trace().norm() < 1e-14);
    }

    #[test]
    fn subspace_restriction_round_trip() {
        let sub = Subspace::excitations_at_most(3, 1);
        assert_eq!(sub.dim(), 4);
        let s0 = embed(&Operator::sigma_minus(), 0, 3).unwrap();
        assert!(sub.is_invariant(&s0));
        assert!(!sub.is_invariant(&s0.adjoint()));
        let psi = Ket::excited_sites(3, &[2]);
        let rho = DensityMatrix::from_ket(&psi);
        let back = sub.lift_state(&sub.restrict_state(&rho));
        assert_eq!(back, rho);
        assert_abs_diff_eq!(sub.leakage(&rho), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_state(n: usize, seed: &[f64]) -> DensityMatrix {
            let dim = 1 << n;
            // Mixed state from two random kets.
            let k1: Vec<C64> = (0..dim).map(|i| C64::new(seed[i % seed.len()], seed[(i + 3) % seed.len()])).collect();
            let k2: Vec<C64> = (0..dim).map(|i| C64::new(seed[(i + 1) % seed.len()], -seed[(i + 5) % seed.len()])).collect();
            let p1 = Ket::normalized(k1).unwrap().projector();
            let p2 = Ket::normalized(k2).unwrap().projector();
            DensityMatrix::new_unchecked(&p1.scale(C64::new(0.7, 0.0)) + &p2.scale(C64::new(0.3, 0.0)))
        }

        proptest! {
            #[test]
            fn dissipator_trace_free(seed in proptest::collection::vec(0.05f64..1.0, 7), i in 0usize..3, j in 0usize..3) {
                let rho = random_state(3, &seed);
                let a = embed(&Operator::sigma_minus(), i, 3).unwrap();
                let b = embed(&Operator::sigma_minus(), j, 3).unwrap();
                let d = dissipator(&a, &b, &rho).unwrap();
                prop_assert!(d.trace().norm() < 1e-12);
            }

            #[test]
            fn partial_trace_composes(seed in proptest::collection::vec(0.05f64..1.0, 7)) {
                let rho = random_state(3, &seed);
                let joint = partial_trace(&rho, &[1]).unwrap();
                let step = partial_trace(&partial_trace(&rho, &[0, 1]).unwrap(), &[1]).unwrap();
                prop_assert!(joint.as_operator().max_abs_diff(step.as_operator()) < 1e-12);
                let step2 = partial_trace(&partial_trace(&rho, &[1, 2]).unwrap(), &[0]).unwrap();
                prop_assert!(joint.as_operator().max_abs_diff(step2.as_operator()) < 1e-12);
            }

            #[test]
            fn embedded_ops_on_distinct_sites_commute(i in 0usize..4, j in 0usize..4, pick in 0usize..4) {
                prop_assume!(i != j);
                let ops = [Operator::sigma_minus(), Operator::sigma_plus(), Operator::sigma_x(), Operator::sigma_y()];
                let a = embed(&ops[pick], i, 4).unwrap();
                let b = embed(&ops[(pick + 1) % 4], j, 4).unwrap();
                prop_assert!(a.commutator(&b).max_norm() < 1e-12);
            }
        }
    }
}
