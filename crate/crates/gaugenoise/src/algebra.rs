//! Tensor-product Hilbert spaces, dense operators, states and the handful of
//! linear-algebra kernels the rest of the crate is built on.
//!
//! Local two-level basis: index 0 is |↑⟩ (σᶻ = +1), index 1 is |↓⟩.
//! Subsystems are ordered matter₁, link₁,₂, matter₂, link₂,₃, … with the
//! first subsystem as the most significant digit of the global index.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const STATE_NORM_TOL: f64 = 1e-12;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_EIGEN_TOL: f64 = 1e-8;
/// Eigenvalues of a reduced density matrix below this are dropped from the entropy sum.
pub const ENTROPY_CLIP: f64 = 1e-12;

const MAX_SUBSYSTEMS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("a chain needs at least two matter sites, got {0}")]
    TooFewSites(usize),
    #[error("{0} subsystems exceed the dense-matrix limit")]
    TooManySubsystems(usize),
    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },
    #[error("local operator on subsystem {index} is {rows}x{cols}, expected {expected}x{expected}")]
    LocalDimension {
        index: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("state norm deviates from 1 by {0:e}")]
    NotNormalized(f64),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("density matrix trace deviates from 1 by {0:e}")]
    TraceDeviation(f64),
    #[error("density matrix has eigenvalue {0:e} below -{tol:e}", tol = DENSITY_EIGEN_TOL)]
    NegativeEigenvalue(f64),
    #[error("Hermitian eigensolver did not converge for dimension {0}")]
    NoConvergence(usize),
    #[error("operators {0} and {1} do not commute (deviation {2:e})")]
    NonCommuting(usize, usize, f64),
    #[error("invalid block decomposition: {0}")]
    InvalidBlocks(String),
}

pub type Result<T> = std::result::Result<T, AlgebraError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    /// Matter site j (1-based).
    Matter(usize),
    /// Link between sites j and j+1 (1-based, wrapping for periodic chains).
    Link(usize),
}

/// A one-dimensional chain of matter sites with a gauge link between neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeSpec {
    sites: usize,
    boundary: Boundary,
    local_dims: Vec<usize>,
}

impl LatticeSpec {
    pub fn new(sites: usize, boundary: Boundary) -> Result<Self> {
        if sites < 2 {
            return Err(AlgebraError::TooFewSites(sites));
        }
        let links = match boundary {
            Boundary::Periodic => sites,
            Boundary::Open => sites - 1,
        };
        let n = sites + links;
        if n > MAX_SUBSYSTEMS {
            return Err(AlgebraError::TooManySubsystems(n));
        }
        Ok(Self {
            sites,
            boundary,
            local_dims: vec![2; n],
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_links(&self) -> usize {
        self.local_dims.len() - self.sites
    }

    pub fn n_subsystems(&self) -> usize {
        self.local_dims.len()
    }

    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    pub fn dim(&self) -> usize {
        self.local_dims.iter().product()
    }

    pub fn subsystems(&self) -> Vec<Subsystem> {
        (0..self.n_subsystems())
            .map(|k| {
                if k % 2 == 0 {
                    Subsystem::Matter(k / 2 + 1)
                } else {
                    Subsystem::Link(k / 2 + 1)
                }
            })
            .collect()
    }

    /// Subsystem ordinal of matter site `j`; periodic chains wrap any integer.
    pub fn matter_index(&self, j: isize) -> Option<usize> {
        self.wrap_site(j).map(|s| 2 * (s - 1))
    }

    /// Subsystem ordinal of the link between sites `j` and `j+1`.
    pub fn link_index(&self, j: isize) -> Option<usize> {
        let s = self.wrap_site(j)?;
        if self.boundary == Boundary::Open && s == self.sites {
            return None;
        }
        Some(2 * (s - 1) + 1)
    }

    fn wrap_site(&self, j: isize) -> Option<usize> {
        let l = self.sites as isize;
        match self.boundary {
            Boundary::Periodic => Some(((j - 1).rem_euclid(l) + 1) as usize),
            Boundary::Open if (1..=l).contains(&j) => Some(j as usize),
            Boundary::Open => None,
        }
    }
}

pub mod pauli {
    use super::{CMatrix, CVector, C64};

    fn m(a: [[C64; 2]; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| a[i][j])
    }

    const O: C64 = C64::new(0.0, 0.0);
    const I1: C64 = C64::new(1.0, 0.0);

    pub fn identity() -> CMatrix {
        CMatrix::identity(2, 2)
    }

    pub fn sigma_x() -> CMatrix {
        m([[O, I1], [I1, O]])
    }

    pub fn sigma_y() -> CMatrix {
        m([[O, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), O]])
    }

    pub fn sigma_z() -> CMatrix {
        m([[I1, O], [O, -I1]])
    }

    /// Raising operator |↑⟩⟨↓|.
    pub fn sigma_plus() -> CMatrix {
        m([[O, I1], [O, O]])
    }

    pub fn sigma_minus() -> CMatrix {
        m([[O, O], [I1, O]])
    }

    /// Occupation (σᶻ + 1)/2.
    pub fn number() -> CMatrix {
        m([[I1, O], [O, O]])
    }

    pub fn up() -> CVector {
        CVector::from_vec(vec![I1, O])
    }

    pub fn down() -> CVector {
        CVector::from_vec(vec![O, I1])
    }

    pub fn x_plus() -> CVector {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        CVector::from_vec(vec![a, a])
    }

    pub fn x_minus() -> CVector {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        CVector::from_vec(vec![a, -a])
    }
}

/// Largest entry modulus of `m − m†`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut err = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Tr(a·b) without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Whether [`matmul`] uses an operand as is or its conjugate transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Plain,
    Adjoint,
}

/// op(a) · op(b) through BLAS `zgemm`.
pub fn matmul(a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op) -> CMatrix {
    let (m, k) = match op_a {
        Op::Plain => a.shape(),
        Op::Adjoint => (a.ncols(), a.nrows()),
    };
    let (kb, n) = match op_b {
        Op::Plain => b.shape(),
        Op::Adjoint => (b.ncols(), b.nrows()),
    };
    assert_eq!(k, kb, "inner dimensions differ");
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    let trans = |op| match op {
        Op::Plain => cblas_sys::CblasNoTrans,
        Op::Adjoint => cblas_sys::CblasConjTrans,
    };
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    // SAFETY: column-major buffers with the leading dimensions of their own
    // storage; shapes were checked above.
    unsafe {
        cblas_sys::cblas_zgemm(
            cblas_sys::CblasColMajor,
            trans(op_a),
            trans(op_b),
            m as i32,
            n as i32,
            k as i32,
            &one as *const C64 as *const _,
            a.as_ptr() as *const _,
            a.nrows().max(1) as i32,
            b.as_ptr() as *const _,
            b.nrows().max(1) as i32,
            &zero as *const C64 as *const _,
            c.as_mut_ptr() as *mut _,
            m as i32,
        );
    }
    c
}

/// a† m a.
pub fn sandwich(a: &CMatrix, m: &CMatrix) -> CMatrix {
    matmul(&matmul(a, Op::Adjoint, m, Op::Plain), Op::Plain, a, Op::Plain)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    entries: CMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wraps a square matrix, recording whether it is Hermitian to working precision.
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(AlgebraError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let scale = max_abs(&entries).max(1.0);
        let hermitian = hermiticity_error(&entries) <= HERMITIAN_TOL * scale;
        Ok(Self { entries, hermitian })
    }

    pub fn hermitian(entries: CMatrix) -> Result<Self> {
        let op = Self::new(entries)?;
        if !op.hermitian {
            return Err(AlgebraError::NotHermitian(hermiticity_error(&op.entries)));
        }
        Ok(op)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn commutator(&self, other: &Self) -> CMatrix {
        matmul(&self.entries, Op::Plain, &other.entries, Op::Plain)
            - matmul(&other.entries, Op::Plain, &self.entries, Op::Plain)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.entries)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            entries: &self.entries * C64::new(s, 0.0),
            hermitian: self.hermitian,
        }
    }

    fn rewrap(entries: CMatrix) -> Self {
        Self::new(entries).expect("square by construction")
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix::rewrap(&self.entries + &rhs.entries)
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix::rewrap(&self.entries - &rhs.entries)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix::rewrap(matmul(&self.entries, Op::Plain, &rhs.entries, Op::Plain))
    }
}

impl Mul<C64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: C64) -> OperatorMatrix {
        OperatorMatrix::rewrap(&self.entries * rhs)
    }
}

/// Embeds a product of local operators, identities elsewhere. Repeated
/// indices multiply in the given order.
pub fn embed_product(lattice: &LatticeSpec, factors: &[(usize, &CMatrix)]) -> Result<OperatorMatrix> {
    let dims = lattice.local_dims();
    let mut locals: Vec<CMatrix> = dims.iter().map(|&k| CMatrix::identity(k, k)).collect();
    let mut touched = vec![false; dims.len()];
    for &(index, op) in factors {
        let expected = *dims.get(index).ok_or(AlgebraError::SubsystemOutOfRange {
            index,
            count: dims.len(),
        })?;
        if op.nrows() != expected || op.ncols() != expected {
            return Err(AlgebraError::LocalDimension {
                index,
                rows: op.nrows(),
                cols: op.ncols(),
                expected,
            });
        }
        locals[index] = if touched[index] { &locals[index] * op } else { op.clone() };
        touched[index] = true;
    }
    let full = locals
        .iter()
        .skip(1)
        .fold(locals[0].clone(), |acc, m| acc.kronecker(m));
    OperatorMatrix::new(full)
}

pub fn embed_local(lattice: &LatticeSpec, index: usize, op: &CMatrix) -> Result<OperatorMatrix> {
    embed_product(lattice, &[(index, op)])
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let dev = (amplitudes.norm() - 1.0).abs();
        if dev > STATE_NORM_TOL {
            return Err(AlgebraError::NotNormalized(dev));
        }
        Ok(Self { amplitudes })
    }

    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let n = amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(AlgebraError::ZeroVector);
        }
        Ok(Self {
            amplitudes: amplitudes / C64::new(n, 0.0),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(AlgebraError::DimensionMismatch {
                expected: dim,
                got: index,
            });
        }
        let mut v = CVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    /// Tensor product of normalized local states in subsystem order.
    pub fn product(lattice: &LatticeSpec, locals: &[CVector]) -> Result<Self> {
        if locals.len() != lattice.n_subsystems() {
            return Err(AlgebraError::DimensionMismatch {
                expected: lattice.n_subsystems(),
                got: locals.len(),
            });
        }
        for (index, (v, &k)) in locals.iter().zip(lattice.local_dims()).enumerate() {
            if v.len() != k {
                return Err(AlgebraError::LocalDimension {
                    index,
                    rows: v.len(),
                    cols: 1,
                    expected: k,
                });
            }
        }
        let full = locals
            .iter()
            .skip(1)
            .fold(locals[0].clone(), |acc, v| acc.kronecker(v));
        Self::new(full)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        self.amplitudes.dotc(&(op.matrix() * &self.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(AlgebraError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let rho = Self { matrix };
        let herm = rho.hermiticity_error();
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(AlgebraError::NotHermitian(herm));
        }
        let tr = rho.trace_error();
        if tr > DENSITY_TRACE_TOL {
            return Err(AlgebraError::TraceDeviation(tr));
        }
        let min = rho.min_eigenvalue()?;
        if min < -DENSITY_EIGEN_TOL {
            return Err(AlgebraError::NegativeEigenvalue(min));
        }
        Ok(rho)
    }

    /// Skips validation; for integrator output whose invariants are tracked separately.
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - C64::new(1.0, 0.0)).norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let vals = hermitian_eigenvalues(&self.matrix)?;
        Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        trace_product(&self.matrix, op.matrix())
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).re
    }

    /// ⟨ψ|ρ|ψ⟩.
    pub fn overlap(&self, psi: &StateVector) -> f64 {
        let v = psi.amplitudes();
        v.dotc(&(&self.matrix * v)).re
    }

    /// ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let diff = &self.matrix - &other.matrix;
        let herm = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
        Ok(0.5 * hermitian_eigenvalues(&herm)?.iter().map(|x| x.abs()).sum::<f64>())
    }
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column k is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: CMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (k, &e) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(e);
        }
        matmul(&scaled, Op::Plain, u, Op::Adjoint)
    }

    /// U† m U.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        sandwich(&self.eigenvectors, m)
    }

    /// U m U†.
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        let u = &self.eigenvectors;
        matmul(&matmul(u, Op::Plain, m, Op::Plain), Op::Plain, u, Op::Adjoint)
    }

    fn sorted(values: Vec<f64>, vectors: CMatrix) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let eigenvalues = order.iter().map(|&k| values[k]).collect();
        let eigenvectors = CMatrix::from_fn(vectors.nrows(), order.len(), |i, k| vectors[(i, order[k])]);
        Self {
            eigenvalues,
            eigenvectors,
        }
    }
}

/// LAPACK `zheevd` on the lower triangle; eigenvalues come back ascending.
fn lapack_eigh(m: &CMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<CMatrix>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), want_vectors.then(|| CMatrix::zeros(0, 0))));
    }
    let ni = i32::try_from(n).map_err(|_| AlgebraError::NoConvergence(n))?;
    let mut a = m.clone();
    let mut w = vec![0.0f64; n];
    let jobz: u8 = if want_vectors { b'V' } else { b'N' };
    let uplo = b'L';
    let mut info = 0i32;
    let mut call = |a: &mut CMatrix, work: &mut [C64], lwork: i32, rwork: &mut [f64], lrwork: i32, iwork: &mut [i32], liwork: i32| {
        // SAFETY: buffers are sized per the workspace query and C64 matches the
        // LAPACK double-complex layout.
        unsafe {
            lapack_sys::zheevd_(
                &jobz as *const u8 as *const _,
                &uplo as *const u8 as *const _,
                &ni,
                a.as_mut_ptr() as *mut _,
                &ni,
                w.as_mut_ptr(),
                work.as_mut_ptr() as *mut _,
                &lwork,
                rwork.as_mut_ptr(),
                &lrwork,
                iwork.as_mut_ptr(),
                &liwork,
                &mut info,
            );
        }
        info
    };
    let (mut qw, mut qr, mut qi) = ([C64::new(0.0, 0.0)], [0.0f64], [0i32]);
    if call(&mut a, &mut qw, -1, &mut qr, -1, &mut qi, -1) != 0 {
        return Err(AlgebraError::NoConvergence(n));
    }
    let (lwork, lrwork, liwork) = (qw[0].re as i32, qr[0] as i32, qi[0]);
    let mut work = vec![C64::new(0.0, 0.0); lwork.max(1) as usize];
    let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    if call(&mut a, &mut work, lwork, &mut rwork, lrwork, &mut iwork, liwork) != 0 || w.iter().any(|x| !x.is_finite()) {
        return Err(AlgebraError::NoConvergence(n));
    }
    Ok((w, want_vectors.then_some(a)))
}

fn raw_eigen(m: &CMatrix) -> Result<EigenDecomposition> {
    let (values, vectors) = lapack_eigh(m, true)?;
    Ok(EigenDecomposition {
        eigenvalues: values,
        eigenvectors: vectors.expect("vectors requested"),
    })
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(AlgebraError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let err = hermiticity_error(m);
    if err > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(AlgebraError::NotHermitian(err));
    }
    Ok(())
}

/// Full eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(m: &CMatrix) -> Result<EigenDecomposition> {
    check_hermitian(m)?;
    raw_eigen(m)
}

/// Eigenvalues (ascending) read from the lower triangle of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    Ok(lapack_eigh(m, false)?.0)
}

/// Diagonalizes `m` inside each invariant block. Each block is an isometry
/// (orthonormal columns) and together they must span the whole space.
pub fn hermitian_eig_blocked(m: &CMatrix, blocks: &[CMatrix]) -> Result<EigenDecomposition> {
    check_hermitian(m)?;
    let d = m.nrows();
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    if total != d || blocks.iter().any(|b| b.nrows() != d) {
        return Err(AlgebraError::InvalidBlocks(format!(
            "blocks cover {total} columns of a {d}-dimensional space"
        )));
    }
    let mut values = Vec::with_capacity(d);
    let mut vectors = CMatrix::zeros(d, d);
    let mut col = 0;
    for b in blocks {
        let mut local = sandwich(b, m);
        local = (&local + local.adjoint()) * C64::new(0.5, 0.0);
        let e = raw_eigen(&local)?;
        let v = matmul(b, Op::Plain, &e.eigenvectors, Op::Plain);
        vectors.columns_mut(col, b.ncols()).copy_from(&v);
        values.extend_from_slice(&e.eigenvalues);
        col += b.ncols();
    }
    Ok(EigenDecomposition::sorted(values, vectors))
}

/// A joint eigenspace of a commuting family: one eigenvalue per operator and
/// an isometry spanning the subspace.
#[derive(Clone, Debug)]
pub struct JointEigenspace {
    pub eigenvalues: Vec<f64>,
    pub basis: CMatrix,
}

/// Splits the space into joint eigenspaces of mutually commuting Hermitian
/// operators. Eigenvalues closer than `tol` are treated as degenerate.
pub fn joint_eigenspaces(ops: &[&CMatrix], tol: f64) -> Result<Vec<JointEigenspace>> {
    let d = ops.first().map(|m| m.nrows()).unwrap_or(0);
    for (i, a) in ops.iter().enumerate() {
        check_hermitian(a)?;
        if a.nrows() != d {
            return Err(AlgebraError::DimensionMismatch {
                expected: d,
                got: a.nrows(),
            });
        }
        for (j, b) in ops.iter().enumerate().skip(i + 1) {
            let c = max_abs(&(*a * *b - *b * *a));
            if c > tol {
                return Err(AlgebraError::NonCommuting(i, j, c));
            }
        }
    }
    let mut spaces = vec![JointEigenspace {
        eigenvalues: Vec::new(),
        basis: CMatrix::identity(d, d),
    }];
    for op in ops {
        let mut next = Vec::new();
        for space in spaces {
            let b = &space.basis;
            let mut local = sandwich(b, op);
            local = (&local + local.adjoint()) * C64::new(0.5, 0.0);
            let e = raw_eigen(&local)?;
            let sorted = e;
            let mut start = 0;
            while start < sorted.dim() {
                let mut end = start + 1;
                while end < sorted.dim() && sorted.eigenvalues[end] - sorted.eigenvalues[end - 1] <= tol {
                    end += 1;
                }
                let cluster = &sorted.eigenvalues[start..end];
                let mean = cluster.iter().sum::<f64>() / cluster.len() as f64;
                let mut eigenvalues = space.eigenvalues.clone();
                eigenvalues.push(mean);
                next.push(JointEigenspace {
                    eigenvalues,
                    basis: matmul(b, Op::Plain, &sorted.eigenvectors.columns(start, end - start).into_owned(), Op::Plain),
                });
                start = end;
            }
        }
        spaces = next;
    }
    Ok(spaces)
}

/// Reduced matrix on the `keep` subsystems (in ascending subsystem order).
pub fn partial_trace(rho: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let d: usize = dims.iter().product();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(AlgebraError::DimensionMismatch {
            expected: d,
            got: rho.nrows(),
        });
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() {
            return Err(AlgebraError::SubsystemOutOfRange {
                index: k,
                count: dims.len(),
            });
        }
        kept[k] = true;
    }
    let dk: usize = dims.iter().zip(&kept).filter(|(_, &k)| k).map(|(&n, _)| n).product();
    let dt = d / dk;
    let mut table = vec![0usize; d];
    for full in 0..d {
        let (mut rem, mut ki, mut ti, mut kstride, mut tstride) = (full, 0, 0, 1, 1);
        for s in (0..dims.len()).rev() {
            let digit = rem % dims[s];
            rem /= dims[s];
            if kept[s] {
                ki += digit * kstride;
                kstride *= dims[s];
            } else {
                ti += digit * tstride;
                tstride *= dims[s];
            }
        }
        table[ki * dt + ti] = full;
    }
    let mut out = CMatrix::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                acc += rho[(table[a * dt + t], table[b * dt + t])];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// −Tr ρ ln ρ in nats.
pub fn von_neumann_entropy(rho: &CMatrix) -> Result<f64> {
    let herm = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let vals = hermitian_eigenvalues(&herm)?;
    if let Some(&min) = vals.first() {
        if min < -DENSITY_EIGEN_TOL {
            return Err(AlgebraError::NegativeEigenvalue(min));
        }
    }
    Ok(vals
        .iter()
        .filter(|&&l| l > ENTROPY_CLIP)
        .map(|&l| -l * l.ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn canonical_subsystem_order() {
        let lat = LatticeSpec::new(4, Boundary::Periodic).unwrap();
        assert_eq!(lat.n_subsystems(), 8);
        assert_eq!(lat.dim(), 256);
        assert_eq!(lat.matter_index(1), Some(0));
        assert_eq!(lat.link_index(1), Some(1));
        assert_eq!(lat.matter_index(4), Some(6));
        assert_eq!(lat.link_index(4), Some(7));
        assert_eq!(lat.link_index(0), Some(7));
        assert_eq!(lat.matter_index(5), Some(0));
        let open = LatticeSpec::new(3, Boundary::Open).unwrap();
        assert_eq!(open.n_subsystems(), 5);
        assert_eq!(open.link_index(3), None);
        assert_eq!(open.matter_index(0), None);
        assert!(LatticeSpec::new(1, Boundary::Periodic).is_err());
    }

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (pauli::sigma_x(), pauli::sigma_y(), pauli::sigma_z());
        let i = C64::new(0.0, 1.0);
        assert_abs_diff_eq!(max_abs(&(&x * &y - &z * i)), 0.0);
        assert_abs_diff_eq!(max_abs(&(&pauli::sigma_plus() + &pauli::sigma_minus() - &x)), 0.0);
        assert_abs_diff_eq!(max_abs(&((&z + pauli::identity()) * c(0.5) - pauli::number())), 0.0);
        assert_eq!(&z * &pauli::up(), pauli::up());
    }

    #[test]
    fn embedding_matches_explicit_kron() {
        let lat = LatticeSpec::new(2, Boundary::Open).unwrap();
        let x = pauli::sigma_x();
        let z = pauli::sigma_z();
        let i2 = pauli::identity();
        let got = embed_product(&lat, &[(0, &z), (2, &x)]).unwrap();
        let want = z.kronecker(&i2).kronecker(&x);
        assert_eq!(got.matrix(), &want);
        let sq = embed_product(&lat, &[(1, &x), (1, &x)]).unwrap();
        assert_eq!(sq.matrix(), &CMatrix::identity(8, 8));
        assert!(embed_local(&lat, 3, &x).is_err());
    }

    #[test]
    fn operator_hint_tracks_hermiticity() {
        let x = OperatorMatrix::new(pauli::sigma_x()).unwrap();
        let p = OperatorMatrix::new(pauli::sigma_plus()).unwrap();
        assert!(x.is_hermitian());
        assert!(!p.is_hermitian());
        assert!(OperatorMatrix::hermitian(pauli::sigma_plus()).is_err());
        assert!((&p + &p.adjoint()).is_hermitian());
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.5), c(-0.5)]));
        assert!(matches!(DensityMatrix::new(bad), Err(AlgebraError::NegativeEigenvalue(_))));
        let rho = DensityMatrix::new(CMatrix::identity(2, 2) * c(0.5)).unwrap();
        assert_abs_diff_eq!(rho.purity(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn blocked_eig_matches_full() {
        let h = CMatrix::from_fn(4, 4, |i, j| if i == j { c(i as f64) } else { C64::new(0.0, 0.0) })
            + CMatrix::from_fn(4, 4, |i, j| if (i, j) == (0, 1) || (i, j) == (1, 0) { c(0.3) } else { c(0.0) });
        let full = hermitian_eig(&h).unwrap();
        let b1 = CMatrix::identity(4, 4).columns(0, 2).into_owned();
        let b2 = CMatrix::identity(4, 4).columns(2, 2).into_owned();
        let blocked = hermitian_eig_blocked(&h, &[b2, b1]).unwrap();
        for (a, b) in full.eigenvalues.iter().zip(&blocked.eigenvalues) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(max_abs(&(blocked.reconstruct() - &h)), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let lat = LatticeSpec::new(2, Boundary::Open).unwrap();
        let psi = StateVector::product(&lat, &[pauli::up(), pauli::x_plus(), pauli::down()]).unwrap();
        let rho = psi.to_density();
        let r = partial_trace(rho.matrix(), lat.local_dims(), &[1]).unwrap();
        assert_abs_diff_eq!(max_abs(&(r - CMatrix::from_element(2, 2, c(0.5)))), 0.0, epsilon = 1e-15);
        let r02 = partial_trace(rho.matrix(), lat.local_dims(), &[0, 2]).unwrap();
        assert_abs_diff_eq!(r02[(1, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_of_bell_pair() {
        let lat = LatticeSpec::new(2, Boundary::Open).unwrap();
        let mut v = CVector::zeros(8);
        v[0] = c(1.0);
        v[7] = c(1.0);
        let psi = StateVector::normalized(v).unwrap();
        let r = partial_trace(psi.to_density().matrix(), lat.local_dims(), &[0]).unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&r).unwrap(), 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(von_neumann_entropy(psi.to_density().matrix()).unwrap(), 0.0, epsilon = 1e-12);
    }
}
