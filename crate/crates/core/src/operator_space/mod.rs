//! Operators on a finite-dimensional Hilbert space and linear maps between them.
//!
//! Operators are stored as `d_H × d_H` complex matrices. Superoperators act on
//! column-stacked vectors: component `l·d_H + k` holds `x[k, l]`, which is
//! exactly nalgebra's column-major storage order.

mod lifted;

pub use lifted::{expm_action, LiftedOp, LiftedTerm, SlotKind, DENSE_LIMIT};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{DecoqError, Result};

pub type C64 = Complex64;
pub type OperatorMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Absolute tolerance for hermiticity and unitarity checks.
pub const STRUCTURE_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Spectral,
    Frobenius,
}

/// A linear map on `B(H)` in the column-stacking matrix-unit basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOp {
    dim_h: usize,
    matrix: DMatrix<C64>,
}

pub fn pauli(i: usize) -> OperatorMatrix {
    let (a, b, c, d) = match i {
        0 => (ONE, ZERO, ZERO, ONE),
        1 => (ZERO, ONE, ONE, ZERO),
        2 => (ZERO, -I, I, ZERO),
        3 => (ONE, ZERO, ZERO, -ONE),
        _ => panic!("pauli index {i} out of range"),
    };
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

pub fn identity(d: usize) -> OperatorMatrix {
    DMatrix::identity(d, d)
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// The matrix unit `|k⟩⟨l|`.
pub fn matrix_unit(d: usize, k: usize, l: usize) -> OperatorMatrix {
    let mut e = DMatrix::zeros(d, d);
    e[(k, l)] = ONE;
    e
}

pub fn is_finite(x: &DMatrix<C64>) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_hermitian(x: &OperatorMatrix, tol: f64) -> bool {
    x.is_square() && (x - x.adjoint()).iter().all(|z| z.norm() <= tol)
}

pub fn is_unitary(x: &OperatorMatrix, tol: f64) -> bool {
    if !x.is_square() {
        return false;
    }
    let p = x * x.adjoint();
    let id = identity(x.nrows());
    (p - id).iter().all(|z| z.norm() <= tol)
}

pub fn is_density(x: &OperatorMatrix, tol: f64) -> bool {
    if !is_hermitian(x, tol) || (x.trace() - ONE).norm() > tol {
        return false;
    }
    let h = hermitian_part(x);
    h.symmetric_eigenvalues().iter().all(|&l| l >= -tol)
}

pub fn hermitian_part(x: &OperatorMatrix) -> OperatorMatrix {
    (x + x.adjoint()).scale(0.5)
}

/// Hilbert–Schmidt inner product `tr(x* y)`.
pub fn hs_inner(x: &OperatorMatrix, y: &OperatorMatrix) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

pub fn vec(x: &OperatorMatrix) -> CVector {
    assert!(x.is_square(), "vec expects a square operator");
    DVector::from_column_slice(x.as_slice())
}

pub fn unvec(v: &CVector) -> OperatorMatrix {
    let d = (v.len() as f64).sqrt().round() as usize;
    assert_eq!(d * d, v.len(), "unvec expects a square length");
    DMatrix::from_column_slice(d, d, v.as_slice())
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a * b - b * a
}

/// `e^{itH}` for hermitian `H`, via the eigendecomposition.
pub fn exp_i_hermitian(h: &OperatorMatrix, t: f64) -> OperatorMatrix {
    let eig = hermitian_part(h).symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, t * l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Spectral-norm-based matrix exponential via nalgebra's Padé scaling and squaring.
pub fn expm_dense(m: &DMatrix<C64>) -> DMatrix<C64> {
    if m.iter().all(|z| *z == ZERO) {
        return DMatrix::identity(m.nrows(), m.ncols());
    }
    m.exp()
}

/// Partial trace over one factor of `H ⊗ H₁`. `keep_system = true` traces out `H₁`.
pub fn partial_trace(x: &OperatorMatrix, d_h: usize, d_h1: usize, keep_system: bool) -> Result<OperatorMatrix> {
    if !x.is_square() || x.nrows() != d_h * d_h1 {
        return Err(DecoqError::Dimension(format!(
            "partial trace: {}x{} does not factor as {d_h}*{d_h1}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(if keep_system {
        DMatrix::from_fn(d_h, d_h, |a, b| (0..d_h1).map(|i| x[(a * d_h1 + i, b * d_h1 + i)]).sum())
    } else {
        DMatrix::from_fn(d_h1, d_h1, |a, b| (0..d_h).map(|i| x[(i * d_h1 + a, i * d_h1 + b)]).sum())
    })
}

impl SuperOp {
    pub fn from_matrix(dim_h: usize, matrix: DMatrix<C64>) -> Result<Self> {
        let d = dim_h * dim_h;
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(DecoqError::Dimension(format!(
                "superoperator on d_H = {dim_h} needs {d}x{d}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !is_finite(&matrix) {
            return Err(DecoqError::NonFinite("superoperator".into()));
        }
        Ok(SuperOp { dim_h, matrix })
    }

    pub(crate) fn new_unchecked(dim_h: usize, matrix: DMatrix<C64>) -> Self {
        debug_assert_eq!(matrix.nrows(), dim_h * dim_h);
        SuperOp { dim_h, matrix }
    }

    /// Builds the matrix of an arbitrary linear map by evaluating it on matrix units.
    pub fn from_fn(dim_h: usize, f: impl Fn(&OperatorMatrix) -> OperatorMatrix) -> Self {
        let d = dim_h * dim_h;
        let mut m = DMatrix::zeros(d, d);
        for l in 0..dim_h {
            for k in 0..dim_h {
                let img = f(&matrix_unit(dim_h, k, l));
                m.column_mut(l * dim_h + k).copy_from_slice(img.as_slice());
            }
        }
        SuperOp { dim_h, matrix: m }
    }

    pub fn identity(dim_h: usize) -> Self {
        let d = dim_h * dim_h;
        SuperOp { dim_h, matrix: DMatrix::identity(d, d) }
    }

    pub fn zero(dim_h: usize) -> Self {
        let d = dim_h * dim_h;
        SuperOp { dim_h, matrix: DMatrix::zeros(d, d) }
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    /// Dimension `d = d_H²` of the operator space.
    pub fn dim(&self) -> usize {
        self.dim_h * self.dim_h
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn apply(&self, x: &OperatorMatrix) -> OperatorMatrix {
        unvec(&(&self.matrix * vec(x)))
    }

    pub fn apply_vec(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }

    pub fn dagger(&self) -> Self {
        SuperOp { dim_h: self.dim_h, matrix: self.matrix.adjoint() }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SuperOp) -> Self {
        assert_eq!(self.dim_h, other.dim_h);
        SuperOp { dim_h: self.dim_h, matrix: &self.matrix * &other.matrix }
    }

    pub fn add(&self, other: &SuperOp) -> Self {
        assert_eq!(self.dim_h, other.dim_h);
        SuperOp { dim_h: self.dim_h, matrix: &self.matrix + &other.matrix }
    }

    pub fn sub(&self, other: &SuperOp) -> Self {
        assert_eq!(self.dim_h, other.dim_h);
        SuperOp { dim_h: self.dim_h, matrix: &self.matrix - &other.matrix }
    }

    pub fn scale(&self, s: f64) -> Self {
        SuperOp { dim_h: self.dim_h, matrix: self.matrix.scale(s) }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        SuperOp { dim_h: self.dim_h, matrix: &self.matrix * s }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn max_abs_diff(&self, other: &SuperOp) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.matrix.iter().all(|z| z.norm() <= tol)
    }
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `x ↦ Hx − xH`, matrix `1⊗H − Hᵀ⊗1`.
pub fn ad_of(h: &OperatorMatrix) -> Result<SuperOp> {
    if !is_hermitian(h, STRUCTURE_TOL) {
        return Err(DecoqError::NotHermitian("ad_of".into()));
    }
    Ok(ad_unchecked(h))
}

pub(crate) fn ad_unchecked(h: &OperatorMatrix) -> SuperOp {
    let d = h.nrows();
    let id = identity(d);
    SuperOp::new_unchecked(d, kron(&id, h) - kron(&h.transpose(), &id))
}

/// `x ↦ v x v*`, matrix `v̄⊗v`.
#[allow(non_snake_case)]
pub fn Ad_of(v: &OperatorMatrix) -> Result<SuperOp> {
    if !is_unitary(v, STRUCTURE_TOL) {
        return Err(DecoqError::NotUnitary("Ad_of".into()));
    }
    Ok(conj_unchecked(v))
}

/// `x ↦ a x b` as a superoperator, matrix `bᵀ⊗a`.
pub fn sandwich(a: &OperatorMatrix, b: &OperatorMatrix) -> SuperOp {
    SuperOp::new_unchecked(a.nrows(), kron(&b.transpose(), a))
}

pub(crate) fn conj_unchecked(v: &OperatorMatrix) -> SuperOp {
    SuperOp::new_unchecked(v.nrows(), kron(&v.conjugate(), v))
}

pub fn dagger(m: &SuperOp) -> SuperOp {
    m.dagger()
}

pub fn expm(m: &SuperOp, t: f64) -> SuperOp {
    SuperOp::new_unchecked(m.dim_h, expm_dense(&m.matrix.scale(t)))
}

pub fn matrix_norm(m: &DMatrix<C64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::Frobenius => m.norm(),
        NormKind::Spectral => {
            if m.iter().all(|z| *z == ZERO) {
                0.0
            } else {
                m.clone().svd(false, false).singular_values.max()
            }
        }
    }
}

pub fn sup_norm(m: &SuperOp, kind: NormKind) -> f64 {
    matrix_norm(&m.matrix, kind)
}

/// The swap on `A ⊗ A` for `dim(A) = d`: `a⊗b ↦ b⊗a`.
pub fn flip(d: usize) -> DMatrix<C64> {
    let mut p = DMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            p[(b * d + a, a * d + b)] = ONE;
        }
    }
    p
}
