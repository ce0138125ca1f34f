//! Dense complex Hermitian linear algebra.
//!
//! Everything downstream is built on two wrappers around
//! `nalgebra::DMatrix<Complex64>`:
//!
//! * [`HermitianMatrix`]: exactly Hermitian storage. Construction from raw
//!   data rejects asymmetry above [`SYMMETRY_TOL`] and symmetrizes the rest.
//! * [`HpdMatrix`]: a Hermitian matrix certified positive definite. The
//!   eigendecomposition computed for the certificate is kept, so square roots,
//!   inverses and logarithms of a point cost one `U f(Λ) Uᴴ` product.
//!
//! All matrix functions go through [`eig_hermitian`] followed by a spectral
//! map; there are no Schur or Padé variants.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;

/// Relative Frobenius asymmetry above which input is rejected as non-Hermitian.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Default relative eigenvalue floor for the positive definiteness certificate.
pub const DEFAULT_HPD_TOL: f64 = 1e-12;

const EIG_MAX_SWEEPS: usize = 10_000;

fn symmetrize(m: &CMatrix) -> CMatrix {
    let p = m.nrows();
    let mut out = CMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..p {
            out[(i, j)] = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
        }
        out[(j, j)].im = 0.0;
    }
    out
}

/// A p×p Hermitian matrix. Tangent vectors live here.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix{}", self.0)
    }
}

impl HermitianMatrix {
    /// Validates and symmetrizes a square complex matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = m.norm();
        if norm > 0.0 {
            let asymmetry = (&m - m.adjoint()).norm() / norm;
            if asymmetry > SYMMETRY_TOL {
                return Err(Error::NotHermitian { asymmetry });
            }
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Embeds a real symmetric matrix, given row-major.
    pub fn from_real_rows(p: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                found: rows.len(),
            });
        }
        Self::new(CMatrix::from_fn(p, p, |i, j| Complex64::new(rows[i * p + j], 0.0)))
    }

    /// Symmetrizes without the tolerance check. For results of algebra that
    /// is Hermitian in exact arithmetic.
    pub(crate) fn from_symmetrized(m: CMatrix) -> Self {
        Self(symmetrize(&m))
    }

    pub fn zeros(p: usize) -> Self {
        Self(CMatrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        Self(CMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let p = diag.len();
        Self(CMatrix::from_fn(p, p, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    /// `x xᴴ`.
    pub fn outer(x: &CVector) -> Self {
        Self::from_symmetrized(x * x.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Real trace.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * Complex64::new(s, 0.0))
    }

    /// `Re tr(self · other)`, the Euclidean inner product on Hermitian matrices.
    pub fn trace_inner(&self, other: &HermitianMatrix) -> f64 {
        // tr(AB) = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij) for Hermitian B
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a * b.conj()).re).sum()
    }

    /// `A · self · Aᴴ`.
    pub fn congruence(&self, a: &CMatrix) -> Self {
        Self::from_symmetrized(a * &self.0 * a.adjoint())
    }

    /// `H · self · H` for Hermitian `H`.
    pub fn sandwich(&self, h: &HermitianMatrix) -> Self {
        Self::from_symmetrized(&h.0 * &self.0 * &h.0)
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        if self.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        HermitianMatrix(-&self.0)
    }
}

/// Eigendecomposition `U Λ Uᴴ` of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl EigDecomposition {
    /// `U diag(f(λ)) Uᴴ`, re-symmetrized.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        HermitianMatrix::from_symmetrized(scaled * u.adjoint())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<EigDecomposition> {
    let p = m.dim();
    if p == 0 {
        return Err(Error::EmptyInput);
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or(Error::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = CMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Scalar functions that can be lifted to Hermitian matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralFn {
    Exp,
    Log,
    Sqrt,
    InvSqrt,
    Pow(f64),
    Inv,
}

impl SpectralFn {
    fn needs_positive(self) -> bool {
        !matches!(self, SpectralFn::Exp)
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            SpectralFn::Exp => x.exp(),
            SpectralFn::Log => x.ln(),
            SpectralFn::Sqrt => x.sqrt(),
            SpectralFn::InvSqrt => 1.0 / x.sqrt(),
            SpectralFn::Pow(t) => (t * x.ln()).exp(),
            SpectralFn::Inv => 1.0 / x,
        }
    }
}

/// Applies `f` to the spectrum of `m`.
///
/// Every function but `Exp` requires `m` to pass [`validate_hpd`] with the
/// default tolerance, otherwise [`Error::DomainError`] is returned.
pub fn spectral_map(m: &HermitianMatrix, f: SpectralFn) -> Result<HermitianMatrix> {
    let eig = eig_hermitian(m)?;
    if f.needs_positive() && !certifies_hpd(&eig, DEFAULT_HPD_TOL) {
        return Err(Error::DomainError {
            eigenvalue: eig.min_eigenvalue(),
        });
    }
    Ok(eig.recompose_with(|x| f.apply(x)))
}

fn certifies_hpd(eig: &EigDecomposition, rel_tol: f64) -> bool {
    let max = eig.max_eigenvalue();
    let min = eig.min_eigenvalue();
    max > 0.0 && min > rel_tol * max
}

/// A Hermitian positive definite matrix, with its eigendecomposition cached.
#[derive(Clone, Debug)]
pub struct HpdMatrix {
    herm: HermitianMatrix,
    eig: EigDecomposition,
}

impl PartialEq for HpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.herm == other.herm
    }
}

/// Certifies `λ_min > rel_tol · λ_max` and wraps `m`.
pub fn validate_hpd(m: &HermitianMatrix, rel_tol: f64) -> Result<HpdMatrix> {
    let eig = eig_hermitian(m)?;
    if !certifies_hpd(&eig, rel_tol) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: eig.min_eigenvalue(),
            max_eigenvalue: eig.max_eigenvalue(),
        });
    }
    Ok(HpdMatrix { herm: m.clone(), eig })
}

impl HpdMatrix {
    /// Validates with [`DEFAULT_HPD_TOL`].
    pub fn new(m: HermitianMatrix) -> Result<Self> {
        validate_hpd(&m, DEFAULT_HPD_TOL)
    }

    /// Validates a raw complex matrix (Hermitian check, then HPD check).
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(HermitianMatrix::new(m)?)
    }

    pub fn identity(p: usize) -> Self {
        Self::new(HermitianMatrix::identity(p)).expect("identity is HPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(HermitianMatrix::from_diagonal(diag))
    }

    pub fn dim(&self) -> usize {
        self.herm.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.herm
    }

    pub fn matrix(&self) -> &CMatrix {
        self.herm.as_matrix()
    }

    pub fn eigen(&self) -> &EigDecomposition {
        &self.eig
    }

    pub fn map(&self, f: SpectralFn) -> HermitianMatrix {
        self.eig.recompose_with(|x| f.apply(x))
    }

    pub fn sqrt(&self) -> HermitianMatrix {
        self.map(SpectralFn::Sqrt)
    }

    pub fn inv_sqrt(&self) -> HermitianMatrix {
        self.map(SpectralFn::InvSqrt)
    }

    pub fn inverse(&self) -> HermitianMatrix {
        self.map(SpectralFn::Inv)
    }

    pub fn log(&self) -> HermitianMatrix {
        self.map(SpectralFn::Log)
    }

    pub fn pow(&self, t: f64) -> HermitianMatrix {
        self.map(SpectralFn::Pow(t))
    }

    pub fn log_det(&self) -> f64 {
        self.eig.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    /// `A · self · Aᴴ`, revalidated.
    pub fn congruence(&self, a: &CMatrix) -> Result<HpdMatrix> {
        HpdMatrix::new(self.herm.congruence(a))
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        self.herm.check_dim(p)
    }
}

impl From<HpdMatrix> for HermitianMatrix {
    fn from(m: HpdMatrix) -> Self {
        m.herm
    }
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
