//! Dense complex-matrix calculus: density operators, tensor products, partial
//! traces, spectral functions and entropies.

use alloc::format;
use alloc::vec::Vec;
use core::borrow::Borrow;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::math::{ln, sqrt};
use crate::error::{invalid, Result};

/// Dense complex matrix, the ambient representation of every operator.
pub type CMatrix = DMatrix<Complex64>;

/// Default validation tolerance for density operators and isometries.
pub const DEFAULT_ATOL: f64 = 1e-9;

/// Eigenvalues above `SUPPORT_CUTOFF * λ_max` belong to the support.
pub const SUPPORT_CUTOFF: f64 = 1e-10;

/// Dimensions of a system-environment split. Joint index is `s * dim_e + e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BipartitionDims {
    pub dim_s: usize,
    pub dim_e: usize,
}

impl BipartitionDims {
    pub fn new(dim_s: usize, dim_e: usize) -> Result<Self> {
        if dim_s == 0 || dim_e == 0 {
            return Err(invalid(format!(
                "bipartition dimensions must be positive, got {dim_s}x{dim_e}"
            )));
        }
        Ok(Self { dim_s, dim_e })
    }

    pub fn joint(&self) -> usize {
        self.dim_s * self.dim_e
    }
}

/// Which tensor factor a partial trace removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    System,
    Environment,
}

/// A validated density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    atol: f64,
}

impl DensityOperator {
    /// Validates with the default tolerance.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_atol(matrix, DEFAULT_ATOL)
    }

    pub fn with_atol(matrix: CMatrix, atol: f64) -> Result<Self> {
        if atol.is_nan() || atol < 0.0 {
            return Err(invalid("tolerance must be nonnegative"));
        }
        if matrix.nrows() == 0 || !matrix.is_square() {
            return Err(invalid(format!(
                "density operator must be a nonempty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !all_finite(&matrix) {
            return Err(invalid("density operator has non-finite entries"));
        }
        let asym = hermiticity_defect(&matrix);
        if asym > atol {
            return Err(invalid(format!("matrix is not Hermitian (defect {asym:.3e})")));
        }
        let matrix = hermitian_part(&matrix);
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > atol {
            return Err(invalid(format!("trace is {tr}, expected 1")));
        }
        let min = eigh(&matrix).values[0];
        if min < -atol {
            return Err(invalid(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix, atol })
    }

    /// The normalized projector `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm2 = psi.norm_squared();
        if !norm2.is_finite() || norm2 <= 0.0 {
            return Err(invalid("pure state vector must be nonzero and finite"));
        }
        Self::new(psi * psi.adjoint() / Complex64::from(norm2))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Self::new(CMatrix::identity(dim, dim) / Complex64::from(dim as f64))
    }

    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(
            probabilities.len(),
            probabilities.iter().map(|&p| Complex64::from(p)),
        );
        Self::new(CMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn atol(&self) -> f64 {
        self.atol
    }
}

impl AsRef<CMatrix> for DensityOperator {
    fn as_ref(&self) -> &CMatrix {
        &self.matrix
    }
}

impl Borrow<CMatrix> for DensityOperator {
    fn borrow(&self) -> &CMatrix {
        &self.matrix
    }
}

/// A matrix `V` with orthonormal columns, `V†V = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    matrix: CMatrix,
}

impl Isometry {
    pub fn new(matrix: CMatrix, atol: f64) -> Result<Self> {
        if matrix.ncols() > matrix.nrows() {
            return Err(invalid(format!(
                "isometry cannot map {} dimensions into {}",
                matrix.ncols(),
                matrix.nrows()
            )));
        }
        let gram = matrix.adjoint() * &matrix;
        let defect = (gram - CMatrix::identity(matrix.ncols(), matrix.ncols())).max_abs();
        if defect > atol {
            return Err(invalid(format!("columns are not orthonormal (defect {defect:.3e})")));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Range projector `V V†`.
    pub fn projector(&self) -> CMatrix {
        &self.matrix * self.matrix.adjoint()
    }

    /// `V† M V`.
    pub fn compress(&self, m: &CMatrix) -> CMatrix {
        self.matrix.adjoint() * m * &self.matrix
    }

    /// `V M V†`.
    pub fn expand(&self, m: &CMatrix) -> CMatrix {
        &self.matrix * m * self.matrix.adjoint()
    }
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unitary whose columns are the eigenvectors, in the order of `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `U f(Λ) U†`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for x in scaled.column_mut(j).iter_mut() {
                *x *= fv;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Threshold above which an eigenvalue counts as part of the support.
    pub fn support_threshold(&self) -> f64 {
        let top = self.values.last().copied().unwrap_or(0.0).max(0.0);
        SUPPORT_CUTOFF * top
    }

    /// Orthonormal basis of the support (eigenvalues above the rank cutoff).
    pub fn support_basis(&self) -> CMatrix {
        let cut = self.support_threshold();
        let cols: Vec<usize> = (0..self.values.len())
            .filter(|&j| self.values[j] > cut && self.values[j] > 0.0)
            .collect();
        self.vectors.select_columns(cols.iter())
    }
}

/// Spectral functions available through [`matrix_function`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixFunction {
    Sqrt,
    /// `λ^{-1/2}` on the support, zero on the kernel.
    InvSqrtOnSupport,
    /// `λ^{it}` on the support, zero on the kernel.
    ImaginaryPower(f64),
    /// `ln λ` on the support, zero on the kernel.
    LogOnSupport,
}

/// Largest entry modulus.
pub trait MaxAbs {
    fn max_abs(&self) -> f64;
}

impl MaxAbs for CMatrix {
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }
}

pub(crate) fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entry of `|M − M†|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.adjoint()).max_abs()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::from(0.5)
}

/// Eigen-decomposition of the Hermitian part of `m`, no validation.
pub(crate) fn eigh(m: &CMatrix) -> HermitianEigen {
    let h = hermitian_part(m);
    let n = h.nrows();
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: h,
        };
    }
    let (vals, vectors) = jacobi_eigen(&h, CMatrix::identity(n, n));
    sorted_eigen(vals, vectors)
}

/// Nearest PSD matrix to the Hermitian part of `m` in Frobenius norm, with
/// the smallest eigenvalue. Works on the real form `[[A, -B], [B, A]]` of
/// `A + iB`, which commutes with functional calculus.
pub(crate) fn psd_projection(m: &CMatrix) -> (CMatrix, f64) {
    let n = m.nrows();
    if n == 0 {
        return (m.clone(), 0.0);
    }
    let h = hermitian_part(m);
    let real = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let eig = real.symmetric_eigen();
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut v = eig.eigenvectors;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let s = if l > 0.0 { sqrt(l) } else { 0.0 };
        v.column_mut(k).scale_mut(s);
    }
    let p = &v * v.transpose();
    let out = CMatrix::from_fn(n, n, |i, j| {
        Complex64::new(0.5 * (p[(i, j)] + p[(i + n, j + n)]), 0.5 * (p[(i + n, j)] - p[(i, j + n)]))
    });
    (out, lmin)
}

fn sorted_eigen(vals: Vec<f64>, vectors: CMatrix) -> HermitianEigen {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(Ordering::Equal));
    let values = order.iter().map(|&j| vals[j]).collect();
    let vectors = vectors.select_columns(order.iter());
    HermitianEigen { values, vectors }
}

/// Cyclic Jacobi for a Hermitian matrix. Each step removes the phase of the
/// pivot with a diagonal unitary, then applies a real plane rotation.
/// Accumulates the rotations into `v`, so the eigenvectors of `V h V†` come
/// back when `v = V`.
fn jacobi_eigen(h: &CMatrix, mut v: CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    // row-major working copy
    let mut a: Vec<Complex64> = (0..n * n).map(|k| h[(k / n, k % n)]).collect();
    let frob: f64 = sqrt(a.iter().map(|z| z.norm_sqr()).sum::<f64>());
    if frob == 0.0 {
        return (alloc::vec![0.0; n], v);
    }
    for p in 0..n {
        a[p * n + p] = Complex64::new(a[p * n + p].re, 0.0);
    }
    let target = 1e-16 * frob;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if sqrt(off) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let r = apq.norm();
                if r <= 1e-300 || r <= 1e-18 * frob {
                    a[p * n + q] = Complex64::new(0.0, 0.0);
                    a[q * n + p] = Complex64::new(0.0, 0.0);
                    continue;
                }
                // D = diag(1, conj(phase)) at q makes the pivot real
                let phase = apq / r;
                let cph = phase.conj();
                for k in 0..n {
                    a[k * n + q] *= cph;
                }
                for k in 0..n {
                    a[q * n + k] *= phase;
                }
                for k in 0..n {
                    v[(k, q)] *= cph;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * c - akq * s;
                    a[k * n + q] = akp * s + akq * c;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * c - aqk * s;
                    a[q * n + k] = apk * s + aqk * c;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * s;
                    v[(k, q)] = vkp * s + vkq * c;
                }
                a[p * n + p] = Complex64::new(app - t * r, 0.0);
                a[q * n + q] = Complex64::new(aqq + t * r, 0.0);
                a[p * n + q] = Complex64::new(0.0, 0.0);
                a[q * n + p] = Complex64::new(0.0, 0.0);
            }
        }
    }
    ((0..n).map(|p| a[p * n + p].re).collect(), v)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(invalid(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let defect = hermiticity_defect(m);
    if defect > DEFAULT_ATOL * m.max_abs().max(1.0) {
        return Err(invalid(format!("matrix is not Hermitian (defect {defect:.3e})")));
    }
    Ok(eigh(m))
}

/// Applies a spectral function to a positive semidefinite matrix.
pub fn matrix_function(m: &CMatrix, f: MatrixFunction) -> Result<CMatrix> {
    let eig = hermitian_eig(m)?;
    if let Some(&min) = eig.values.first() {
        if min < -DEFAULT_ATOL {
            return Err(invalid(format!(
                "matrix function needs a PSD argument, found eigenvalue {min:.3e}"
            )));
        }
    }
    Ok(apply_function(&eig, f))
}

pub(crate) fn apply_function(eig: &HermitianEigen, f: MatrixFunction) -> CMatrix {
    let cut = eig.support_threshold();
    let on_support = |v: f64| v > cut && v > 0.0;
    match f {
        MatrixFunction::Sqrt => eig.map(|v| Complex64::from(sqrt(v.max(0.0)))),
        MatrixFunction::InvSqrtOnSupport => eig.map(|v| {
            if on_support(v) {
                Complex64::from(1.0 / sqrt(v))
            } else {
                Complex64::from(0.0)
            }
        }),
        MatrixFunction::ImaginaryPower(t) => eig.map(|v| {
            if on_support(v) {
                Complex64::from_polar(1.0, t * ln(v))
            } else {
                Complex64::from(0.0)
            }
        }),
        MatrixFunction::LogOnSupport => eig.map(|v| {
            if on_support(v) {
                Complex64::from(ln(v))
            } else {
                Complex64::from(0.0)
            }
        }),
    }
}

/// Kronecker product `A ⊗ B` (system-major).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Block-diagonal matrix with the given blocks in order.
pub fn direct_sum(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Traces out `traced` from an operator on `H_s ⊗ H_e`.
pub fn partial_trace(m: &CMatrix, dims: BipartitionDims, traced: Subsystem) -> Result<CMatrix> {
    let n = dims.joint();
    if m.nrows() != n || m.ncols() != n {
        return Err(invalid(format!(
            "partial trace over {}x{} split needs a {n}x{n} matrix, got {}x{}",
            dims.dim_s,
            dims.dim_e,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(partial_trace_unchecked(m, dims.dim_s, dims.dim_e, traced))
}

pub(crate) fn partial_trace_unchecked(
    m: &CMatrix,
    ds: usize,
    de: usize,
    traced: Subsystem,
) -> CMatrix {
    match traced {
        Subsystem::Environment => CMatrix::from_fn(ds, ds, |a, b| {
            (0..de).map(|e| m[(a * de + e, b * de + e)]).sum()
        }),
        Subsystem::System => CMatrix::from_fn(de, de, |a, b| {
            (0..ds).map(|s| m[(s * de + a, s * de + b)]).sum()
        }),
    }
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.is_square() && hermiticity_defect(m) <= 1e-14 * m.max_abs().max(1.0) {
        return eigh(m).values.iter().map(|v| v.abs()).sum();
    }
    singular_values(m).iter().sum()
}

/// Singular values from the eigenvalues of `M†M`, ascending.
pub(crate) fn singular_values(m: &CMatrix) -> Vec<f64> {
    let gram = if m.nrows() >= m.ncols() { m.adjoint() * m } else { m * m.adjoint() };
    eigh(&gram).values.iter().map(|&x| sqrt(x.max(0.0))).collect()
}

/// `½ ‖A − B‖₁`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * trace_norm(&(a - b))
}

/// Operator norm (largest singular value).
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Von Neumann entropy `−tr ρ ln ρ` in nats.
pub fn von_neumann_entropy(rho: &DensityOperator) -> f64 {
    entropy(rho.matrix())
}

/// Entropy of a PSD matrix without validation; nonpositive eigenvalues contribute nothing.
pub(crate) fn entropy(m: &CMatrix) -> f64 {
    let s: f64 = eigh(m)
        .values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * ln(v))
        .sum();
    s.max(0.0)
}

/// Orthonormal basis (as columns) of the support of a PSD matrix.
pub fn support_basis(m: &CMatrix) -> CMatrix {
    eigh(m).support_basis()
}

/// Projector onto the union of supports, i.e. the support of the uniform average.
pub fn support_projector<M: Borrow<CMatrix>>(family: &[M]) -> Result<CMatrix> {
    let avg = average(family)?;
    let basis = support_basis(&avg);
    Ok(&basis * basis.adjoint())
}

/// Uniform average of a nonempty family of equally sized square matrices.
pub fn average<M: Borrow<CMatrix>>(family: &[M]) -> Result<CMatrix> {
    let first = family
        .first()
        .ok_or_else(|| invalid("family must be nonempty"))?
        .borrow();
    let n = first.nrows();
    let mut acc = CMatrix::zeros(n, first.ncols());
    for m in family {
        let m = m.borrow();
        if m.shape() != first.shape() {
            return Err(invalid("family members have different dimensions"));
        }
        acc += m;
    }
    Ok(acc / Complex64::from(family.len() as f64))
}

/// Real coordinates of a Hermitian matrix in an orthonormal basis of the
/// Hermitian matrices under the trace inner product: diagonal entries, then
/// `√2 Re M_ab` and `√2 Im M_ab` for `a < b`.
pub(crate) fn hermitian_to_real(m: &CMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * n);
    let s2 = core::f64::consts::SQRT_2;
    let mut k = n;
    for a in 0..n {
        v[a] = m[(a, a)].re;
        for b in (a + 1)..n {
            let z = (m[(a, b)] + m[(b, a)].conj()) * 0.5;
            v[k] = s2 * z.re;
            v[k + 1] = s2 * z.im;
            k += 2;
        }
    }
    v
}

pub(crate) fn real_to_hermitian(v: &[f64], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    let r2 = core::f64::consts::FRAC_1_SQRT_2;
    let mut k = n;
    for a in 0..n {
        m[(a, a)] = Complex64::from(v[a]);
        for b in (a + 1)..n {
            let z = Complex64::new(v[k] * r2, v[k + 1] * r2);
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
            k += 2;
        }
    }
    m
}

/// `tr(A† B)`.
pub(crate) fn hs_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}
