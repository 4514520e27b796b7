//! Dense complex Hermitian operator kernel.
//!
//! Operators are stored as `nalgebra::DMatrix<Complex<f64>>`. Every constructor
//! symmetrizes its input as `(H + H†)/2` after checking that the discarded
//! anti-Hermitian part is below the input tolerance, so downstream code can rely
//! on exact Hermiticity.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default tolerance on inputs (anti-Hermitian part, POM sums).
pub const INPUT_TOL: f64 = 1e-8;
/// Default tolerance on type invariants (trace, eigenvalue bounds).
pub const INVARIANT_TOL: f64 = 1e-10;

/// Validation tolerances used by the checked constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub input: f64,
    pub invariant: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            input: INPUT_TOL,
            invariant: INVARIANT_TOL,
        }
    }
}

/// A D×D complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        Self::with_tolerance(mat, INPUT_TOL)
    }

    /// Symmetrizes `mat`, rejecting it if `max |(H - H†)/2|` exceeds `tol`.
    pub fn with_tolerance(mat: CMatrix, tol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare(mat.nrows(), mat.ncols()));
        }
        if mat.nrows() == 0 {
            return Err(Error::UnsupportedDimension(0, "dimension must be positive"));
        }
        let adj = mat.adjoint();
        let anti = (&mat - &adj)
            .iter()
            .map(|z| z.norm() * 0.5)
            .fold(0.0, f64::max);
        if !(anti <= tol) {
            return Err(Error::NotHermitian(anti));
        }
        Ok(Self::symmetrized(mat))
    }

    /// Symmetrizes without checking. For internal results that are Hermitian
    /// up to rounding.
    pub(crate) fn symmetrized(mat: CMatrix) -> Self {
        let adj = mat.adjoint();
        Self {
            mat: (mat + adj).scale(0.5),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: CMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let v = CVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self {
            mat: CMatrix::from_diagonal(&v),
        }
    }

    /// `|ψ⟩⟨ψ|` (not normalized).
    pub fn outer(psi: &CVector) -> Self {
        Self::symmetrized(psi * psi.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    /// `tr(self · other)`, real for Hermitian arguments.
    pub fn trace_product(&self, other: &HermitianOperator) -> f64 {
        trace_product(&self.mat, &other.mat)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: self.mat.scale(s),
        }
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &HermitianOperator) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            mat: &self.mat - &other.mat,
        })
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &HermitianOperator) -> f64 {
        (&self.mat - &other.mat)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Applies a real function to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let spec = eigh(self);
        spec.rebuild(|x| f(x))
    }
}

/// Sum of Hermitian operators of a common dimension.
pub fn sum_operators<'a, I>(ops: I, dim: usize) -> Result<HermitianOperator>
where
    I: IntoIterator<Item = &'a HermitianOperator>,
{
    let mut acc = CMatrix::zeros(dim, dim);
    for op in ops {
        check_dims(dim, op.dim())?;
        acc += op.matrix();
    }
    Ok(HermitianOperator::symmetrized(acc))
}

pub(crate) fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(a, b));
    }
    Ok(())
}

/// `Re tr(a·b)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Spectral decomposition of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `Σ f(λ_i) v_i v_i†`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let n = self.vectors.nrows();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        HermitianOperator::symmetrized(&scaled * self.vectors.adjoint())
    }
}

/// Eigendecomposition with eigenvalues sorted ascending.
pub fn eigh(h: &HermitianOperator) -> Spectrum {
    let eig = SymmetricEigen::new(h.matrix().clone());
    let n = h.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Spectrum { values, vectors }
}

/// Checked eigendecomposition of a raw matrix.
pub fn eigh_matrix(mat: CMatrix) -> Result<Spectrum> {
    Ok(eigh(&HermitianOperator::new(mat)?))
}

/// Clamps negative eigenvalues to zero.
pub fn psd_project(h: &HermitianOperator) -> HermitianOperator {
    h.map_spectrum(|x| x.max(0.0))
}

/// Unit-trace positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        Self::with_tolerance(op, INVARIANT_TOL)
    }

    pub fn with_tolerance(op: HermitianOperator, tol: f64) -> Result<Self> {
        let tr = op.trace();
        if !((tr - 1.0).abs() <= tol) {
            return Err(Error::InvalidTrace(tr));
        }
        let min = eigh(&op).min();
        if min < -tol {
            return Err(Error::NotPsd(min));
        }
        Ok(Self { op })
    }

    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(mat)?)
    }

    /// Projects onto PSD and renormalizes; for iterates that may carry rounding.
    pub fn from_unnormalized(op: &HermitianOperator) -> Result<Self> {
        let p = psd_project(op);
        let tr = p.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidTrace(tr));
        }
        Ok(Self {
            op: p.scale(1.0 / tr),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            op: HermitianOperator::identity(dim).scale(1.0 / dim as f64),
        }
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm2 = psi.norm_squared();
        if !(norm2 > 0.0) {
            return Err(Error::OutOfRange("zero state vector".into()));
        }
        Ok(Self {
            op: HermitianOperator::outer(psi).scale(1.0 / norm2),
        })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }
}

/// Positive operator bounded by the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmElement {
    op: HermitianOperator,
}

impl PovmElement {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        Self::with_tolerance(op, INVARIANT_TOL)
    }

    pub fn with_tolerance(op: HermitianOperator, tol: f64) -> Result<Self> {
        let spec = eigh(&op);
        if spec.min() < -tol {
            return Err(Error::NotPsd(spec.min()));
        }
        if spec.max() > 1.0 + tol {
            return Err(Error::NotPovmElement(spec.max()));
        }
        Ok(Self { op })
    }

    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(mat)?)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    /// `s · Π`, revalidated.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.op.scale(s))
    }
}

/// `½ Σ |λ_i(a − b)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let diff = a.op().sub(b.op())?;
    let d: f64 = eigh(&diff).values.iter().map(|x| x.abs()).sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// `tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.op().trace_product(rho.op())
}

/// `σ_y ⊗ σ_y` in the computational basis.
pub(crate) fn sigma_yy() -> CMatrix {
    // σ_y ⊗ σ_y = antidiag(-1, 1, 1, -1)
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 3)] = C64::new(-1.0, 0.0);
    m[(1, 2)] = C64::new(1.0, 0.0);
    m[(2, 1)] = C64::new(1.0, 0.0);
    m[(3, 0)] = C64::new(-1.0, 0.0);
    m
}

/// Wootters concurrence of a two-qubit state.
///
/// The singular values `s_i` are the square roots of the eigenvalues of
/// `ρ ρ̃` with `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`. They are obtained from the
/// Hermitian matrix `√ρ ρ̃ √ρ`, which is similar to `ρ ρ̃`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::UnsupportedDimension(
            rho.dim(),
            "concurrence requires two qubits (D = 4)",
        ));
    }
    let yy = sigma_yy();
    let flipped = &yy * rho.matrix().conjugate() * &yy;
    let sqrt_rho = rho.op().map_spectrum(|x| x.max(0.0).sqrt());
    let inner = HermitianOperator::symmetrized(sqrt_rho.matrix() * flipped * sqrt_rho.matrix());
    let mut s: Vec<f64> = eigh(&inner).values.iter().map(|x| x.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok((s[0] - s[1] - s[2] - s[3]).clamp(0.0, 1.0))
}

/// `(1 − γ) ρ + γ I / D`.
pub fn admix(rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange(format!("admixture gamma {gamma} not in [0, 1]")));
    }
    let d = rho.dim();
    let mixed = HermitianOperator::identity(d).scale(gamma / d as f64);
    let op = rho.op().scale(1.0 - gamma).add(&mixed)?;
    DensityMatrix::new(op)
}
