//! Finite-dimensional *-algebras: closure of a generating set, commutants,
//! centers, and the block decomposition `A = ⊕_j B(H_{l_j}) ⊗ 1_{r_j}`.
//!
//! Algebras are stored through an orthonormal basis of Hermitian matrices
//! (trace inner product). A *-algebra is spanned by its Hermitian elements, so
//! all linear algebra happens over the reals in the coordinates of
//! [`hermitian_to_real`].

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{round, sqrt};
use crate::error::{invalid, Error, Result};
use crate::operator::{
    MaxAbs, eigh, hermitian_part, hermitian_to_real, partial_trace_unchecked, real_to_hermitian, CMatrix,
    Isometry, Subsystem,
};
use crate::random;

/// Relative threshold for new directions during closure.
pub const CLOSURE_TOL: f64 = 1e-8;
/// Relative singular-value threshold for null spaces (commutant, center).
pub const NULL_TOL: f64 = 1e-8;
/// Relative gap separating eigenvalue clusters of random elements.
pub const CLUSTER_GAP: f64 = 1e-6;
/// Residual accepted when checking a block decomposition against the algebra.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-8;

const MAX_ATTEMPTS: usize = 8;

/// A *-algebra of `dim × dim` matrices, given by an orthonormal Hermitian basis.
#[derive(Debug, Clone)]
pub struct StarAlgebra {
    dim: usize,
    basis: Vec<CMatrix>,
}

/// One summand `H_l ⊗ H_r` of a block decomposition.
#[derive(Debug, Clone)]
pub struct Block {
    /// Embeds `H_l ⊗ H_r` (l-major) into the ambient space.
    pub isometry: Isometry,
    pub dim_l: usize,
    pub dim_r: usize,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.dim_l * self.dim_r
    }

    pub fn projector(&self) -> CMatrix {
        self.isometry.projector()
    }

    /// `tr_r(V† M V) / dim_r`, the `l` factor of an element `b ⊗ 1_r`.
    pub fn left_factor(&self, m: &CMatrix) -> CMatrix {
        let inner = self.isometry.compress(m);
        partial_trace_unchecked(&inner, self.dim_l, self.dim_r, Subsystem::Environment)
            / Complex64::from(self.dim_r as f64)
    }
}

/// Decomposition of (a subspace of) the ambient space into orthogonal blocks.
#[derive(Debug, Clone)]
pub struct BlockStructure {
    pub ambient_dim: usize,
    pub blocks: Vec<Block>,
}

impl BlockStructure {
    /// Multiset of `(dim_l, dim_r)` in canonical order.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.dim_l, b.dim_r)).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    /// `Σ_j V_j (b_j ⊗ 1_r) V_j†` with `b_j` the left factors of `m`.
    pub fn project_to_algebra(&self, m: &CMatrix) -> CMatrix {
        let n = self.ambient_dim;
        let mut out = CMatrix::zeros(n, n);
        for b in &self.blocks {
            let left = b.left_factor(m);
            let lifted = left.kronecker(&CMatrix::identity(b.dim_r, b.dim_r));
            out += b.isometry.expand(&lifted);
        }
        out
    }

    /// Largest `‖V_j† V_k‖` over distinct blocks.
    pub fn overlap_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.blocks.iter().enumerate() {
            for b in &self.blocks[j + 1..] {
                let cross = a.isometry.matrix().adjoint() * b.isometry.matrix();
                worst = worst.max(cross.max_abs());
            }
        }
        worst
    }
}

/// Orthonormal set of real vectors grown by Gram-Schmidt.
#[derive(Debug, Clone)]
struct RealBasis {
    vecs: Vec<DVector<f64>>,
}

impl RealBasis {
    fn new() -> Self {
        Self { vecs: Vec::new() }
    }

    fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        // two passes keep the set orthonormal to machine precision
        for _ in 0..2 {
            for b in &self.vecs {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        r
    }

    /// Adds the normalized residual if it exceeds `tol * scale`.
    fn try_add_scaled(&mut self, v: DVector<f64>, tol: f64, scale: f64) -> bool {
        if scale == 0.0 {
            return false;
        }
        let r = self.residual(&v);
        let rn = r.norm();
        if rn > tol * scale {
            self.vecs.push(r / rn);
            true
        } else {
            false
        }
    }

    /// Adds the normalized residual if it exceeds `tol` relative to `‖v‖`.
    fn try_add(&mut self, v: DVector<f64>, tol: f64) -> bool {
        let scale = v.norm();
        self.try_add_scaled(v, tol, scale)
    }
}

fn hermitian_components(m: &CMatrix) -> [CMatrix; 2] {
    let herm = hermitian_part(m);
    let anti = (m - m.adjoint()) * Complex64::new(0.0, -0.5);
    [herm, anti]
}

impl StarAlgebra {
    /// Full matrix algebra `B(C^dim)`.
    pub fn full(dim: usize) -> Self {
        let basis = (0..dim * dim)
            .map(|k| {
                let mut v = alloc::vec![0.0; dim * dim];
                v[k] = 1.0;
                real_to_hermitian(&v, dim)
            })
            .collect();
        Self { dim, basis }
    }

    /// Multiples of the identity.
    pub fn scalars(dim: usize) -> Self {
        let id = CMatrix::identity(dim, dim) / Complex64::from(sqrt(dim as f64));
        Self {
            dim,
            basis: alloc::vec![id],
        }
    }

    fn from_real_basis(dim: usize, basis: &RealBasis) -> Self {
        Self {
            dim,
            basis: basis
                .vecs
                .iter()
                .map(|v| real_to_hermitian(v.as_slice(), dim))
                .collect(),
        }
    }

    /// Ambient matrix dimension.
    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// Linear dimension of the algebra.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthonormal Hermitian basis.
    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Orthogonal projection of `m` onto the algebra.
    pub fn project(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for b in &self.basis {
            let c = crate::operator::hs_inner(b, m);
            out += b * c;
        }
        out
    }

    /// `‖m − P_A(m)‖_2 / ‖m‖_2`.
    pub fn relative_residual(&self, m: &CMatrix) -> f64 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (m - self.project(m)).norm() / norm
    }

    pub fn contains(&self, m: &CMatrix, tol: f64) -> bool {
        self.relative_residual(m) <= tol
    }

    /// Random Hermitian element with i.i.d. Gaussian basis coefficients.
    pub fn random_hermitian_element<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for b in &self.basis {
            let g: f64 = StandardNormal.sample(rng);
            out += b * Complex64::from(g);
        }
        out
    }

    fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for b in &self.basis {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            out += b * Complex64::new(re, im);
        }
        out
    }

    /// Largest relative residual of `B_a B_b` outside the span.
    pub fn closure_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                worst = worst.max(self.relative_residual(&(a * b)));
            }
        }
        worst
    }

    /// Center `A ∩ A′`.
    pub fn center(&self) -> StarAlgebra {
        let k = self.basis.len();
        let n2 = self.dim * self.dim;
        // column a holds i[B_a, B_b] for all b, stacked
        let mut system = DMatrix::<f64>::zeros(n2 * k, k);
        for (a, ba) in self.basis.iter().enumerate() {
            for (b, bb) in self.basis.iter().enumerate() {
                let comm = (ba * bb - bb * ba) * Complex64::new(0.0, 1.0);
                let v = hermitian_to_real(&comm);
                system.view_mut((b * n2, a), (n2, 1)).copy_from(&v);
            }
        }
        // basis elements have unit norm
        let null = null_space(&system, NULL_TOL, 1.0);
        let mut basis = RealBasis::new();
        for c in null {
            let mut m = CMatrix::zeros(self.dim, self.dim);
            for (a, ba) in self.basis.iter().enumerate() {
                m += ba * Complex64::from(c[a]);
            }
            basis.try_add(hermitian_to_real(&m), CLOSURE_TOL);
        }
        Self::from_real_basis(self.dim, &basis)
    }
}

/// Smallest *-algebra containing `generators` and the identity on `C^dim`.
pub fn close_star_algebra(dim: usize, generators: &[CMatrix], tol: f64) -> Result<StarAlgebra> {
    if dim == 0 {
        return Err(invalid("algebra dimension must be positive"));
    }
    if let Some(g) = generators.iter().find(|g| g.nrows() != dim || g.ncols() != dim) {
        return Err(invalid(format!(
            "generator of shape {}x{} does not act on C^{dim}",
            g.nrows(),
            g.ncols()
        )));
    }
    let mut basis = RealBasis::new();
    basis.try_add(hermitian_to_real(&CMatrix::identity(dim, dim)), tol);
    for g in generators {
        let scale = g.norm();
        for h in hermitian_components(g) {
            basis.try_add_scaled(hermitian_to_real(&h), tol, scale);
        }
    }
    let mut mats: Vec<CMatrix> = basis
        .vecs
        .iter()
        .map(|v| real_to_hermitian(v.as_slice(), dim))
        .collect();
    let mut fresh_from = 0;
    while fresh_from < mats.len() {
        let end = mats.len();
        for i in fresh_from..end {
            for j in 0..end {
                if j >= fresh_from && j < i {
                    continue;
                }
                let prod = &mats[i] * &mats[j];
                let scale = prod.norm();
                for h in hermitian_components(&prod) {
                    if basis.try_add_scaled(hermitian_to_real(&h), tol, scale) {
                        let v = basis.vecs.last().expect("just pushed");
                        mats.push(real_to_hermitian(v.as_slice(), dim));
                    }
                }
            }
        }
        fresh_from = end;
    }
    Ok(StarAlgebra { dim, basis: mats })
}

/// Hermitian matrices commuting with every element of `set`; a *-algebra
/// whenever `set` is closed under adjoints.
pub fn commutant_of_set(dim: usize, set: &[CMatrix]) -> Result<StarAlgebra> {
    if let Some(g) = set.iter().find(|g| g.nrows() != dim || g.ncols() != dim) {
        return Err(invalid(format!(
            "matrix of shape {}x{} does not act on C^{dim}",
            g.nrows(),
            g.ncols()
        )));
    }
    let mut gens: Vec<CMatrix> = Vec::new();
    for m in set {
        for h in hermitian_components(m) {
            if h.max_abs() > 0.0 {
                gens.push(h);
            }
        }
    }
    let n2 = dim * dim;
    if gens.is_empty() {
        return Ok(StarAlgebra::full(dim));
    }
    let mut system = DMatrix::<f64>::zeros(n2 * gens.len(), n2);
    let mut unit = alloc::vec![0.0; n2];
    for col in 0..n2 {
        unit.iter_mut().for_each(|x| *x = 0.0);
        unit[col] = 1.0;
        let x = real_to_hermitian(&unit, dim);
        for (b, g) in gens.iter().enumerate() {
            let comm = (&x * g - g * &x) * Complex64::new(0.0, 1.0);
            let v = hermitian_to_real(&comm);
            system.view_mut((b * n2, col), (n2, 1)).copy_from(&v);
        }
    }
    let scale = gens.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let null = null_space(&system, NULL_TOL, scale);
    let mut basis = RealBasis::new();
    for v in null {
        basis.try_add(v, CLOSURE_TOL);
    }
    Ok(StarAlgebra::from_real_basis(dim, &basis))
}

/// Commutant `A′`.
pub fn commutant(a: &StarAlgebra) -> StarAlgebra {
    commutant_of_set(a.dim, &a.basis).expect("basis matches the ambient dimension")
}

/// Right-singular vectors of `m` whose singular value is at most
/// `rel_tol * max(σ_max, scale)`. `scale` is the size a column would have if
/// it were not null; it keeps a numerically zero `m` from being read as
/// full rank.
pub(crate) fn null_space(m: &DMatrix<f64>, rel_tol: f64, scale: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    let padded;
    let m = if m.nrows() < cols {
        let mut p = DMatrix::<f64>::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    // QR first: the SVD then works on a square factor
    let r = m.clone().qr().r();
    let svd = r.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let cut = rel_tol * smax.max(scale);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(i, _)| vt.row(i).transpose())
        .collect()
}

/// Groups sorted values into clusters separated by more than `gap`.
pub(crate) fn cluster_sorted(values: &[f64], gap: f64) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > gap {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Block decomposition `A = ⊕_j V_j (B(H_{l_j}) ⊗ 1_{r_j}) V_j†`.
///
/// The minimal central projections come from the spectrum of a random central
/// element, the tensor factorization of each block from a random element of
/// the compressed factor. Degenerate draws are retried with fresh randomness.
pub fn decompose_algebra(a: &StarAlgebra, seed: u64) -> Result<BlockStructure> {
    if !a.contains(&CMatrix::identity(a.dim, a.dim), 1e-8) {
        return Err(invalid("algebra must contain the identity"));
    }
    let center = a.center();
    let mut rng = random::rng(seed);
    let mut last_err = Error::DecompositionFailed {
        reason: "no attempt made".into(),
        residual: f64::INFINITY,
    };
    for _ in 0..MAX_ATTEMPTS {
        match decompose_once(a, &center, &mut rng) {
            Ok(mut s) => {
                canonical_sort(&mut s);
                return Ok(s);
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

fn failed(reason: impl Into<alloc::string::String>, residual: f64) -> Error {
    Error::DecompositionFailed {
        reason: reason.into(),
        residual,
    }
}

fn decompose_once<R: Rng + ?Sized>(
    a: &StarAlgebra,
    center: &StarAlgebra,
    rng: &mut R,
) -> Result<BlockStructure> {
    let n = a.dim;
    let z = center.random_hermitian_element(rng);
    let eig = eigh(&z);
    let scale = eig.spectral_radius().max(f64::MIN_POSITIVE);
    let clusters = cluster_sorted(&eig.values, CLUSTER_GAP * scale);
    if clusters.len() != center.dim() {
        return Err(failed(
            format!(
                "random central element has {} eigenvalue clusters, center has dimension {}",
                clusters.len(),
                center.dim()
            ),
            f64::INFINITY,
        ));
    }

    let mut blocks = Vec::with_capacity(clusters.len());
    for range in clusters {
        let e = eig.vectors.columns(range.start, range.len()).into_owned();
        blocks.push(factor_block(a, &e, rng)?);
    }
    let structure = BlockStructure {
        ambient_dim: n,
        blocks,
    };

    let overlap = structure.overlap_defect();
    if overlap > 1e-9 {
        return Err(failed("block ranges are not orthogonal", overlap));
    }
    let mut worst: f64 = 0.0;
    for b in &a.basis {
        let r = (b - structure.project_to_algebra(b)).norm() / b.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(r);
    }
    if worst > BLOCK_RESIDUAL_TOL {
        return Err(failed("algebra elements are not block tensor products", worst));
    }
    Ok(structure)
}

/// Splits the range of a minimal central projection (columns of `e`) as `H_l ⊗ H_r`.
fn factor_block<R: Rng + ?Sized>(a: &StarAlgebra, e: &CMatrix, rng: &mut R) -> Result<Block> {
    let m = e.ncols();
    let mut restricted = RealBasis::new();
    for b in &a.basis {
        let c = e.adjoint() * b * e;
        restricted.try_add_scaled(hermitian_to_real(&hermitian_part(&c)), CLOSURE_TOL, b.norm());
    }
    let factor = StarAlgebra::from_real_basis(m, &restricted);
    let k = factor.dim();
    let dim_l = round(sqrt(k as f64)) as usize;
    if dim_l * dim_l != k || dim_l == 0 || !m.is_multiple_of(dim_l) {
        return Err(failed(
            format!("block factor of dimension {k} on C^{m} is not a full matrix algebra"),
            f64::INFINITY,
        ));
    }
    let dim_r = m / dim_l;
    if dim_l == 1 {
        return Ok(Block {
            isometry: Isometry::new_unchecked(e.clone()),
            dim_l,
            dim_r,
        });
    }

    let h = factor.random_hermitian_element(rng);
    let heig = eigh(&h);
    let scale = heig.spectral_radius().max(f64::MIN_POSITIVE);
    let clusters = cluster_sorted(&heig.values, CLUSTER_GAP * scale);
    if clusters.len() != dim_l || clusters.iter().any(|c| c.len() != dim_r) {
        return Err(failed(
            "random factor element has degenerate spectrum",
            f64::INFINITY,
        ));
    }
    let spaces: Vec<CMatrix> = clusters
        .iter()
        .map(|c| heig.vectors.columns(c.start, c.len()).into_owned())
        .collect();
    // partial isometries of the factor transport the first spectral subspace
    let transport = factor.random_element(rng);
    let mut local = CMatrix::zeros(m, m);
    local.columns_mut(0, dim_r).copy_from(&spaces[0]);
    for (idx, f) in spaces.iter().enumerate().skip(1) {
        let link = f.adjoint() * &transport * &spaces[0];
        let norm = link.norm();
        if norm < 1e-6 * transport.norm() {
            return Err(failed("transport element vanishes between subspaces", norm));
        }
        let u = link * Complex64::from(sqrt(dim_r as f64) / norm);
        let defect = (u.adjoint() * &u - CMatrix::identity(dim_r, dim_r)).max_abs();
        if defect > 1e-7 {
            return Err(failed("transport between subspaces is not unitary", defect));
        }
        local
            .columns_mut(idx * dim_r, dim_r)
            .copy_from(&(f * u));
    }
    Ok(Block {
        isometry: Isometry::new_unchecked(e * local),
        dim_l,
        dim_r,
    })
}

fn fingerprint(b: &Block) -> Vec<i64> {
    let p = b.projector();
    let mut out = Vec::with_capacity(2 * p.len());
    for z in p.iter() {
        out.push(round(z.re * 1e6) as i64);
        out.push(round(z.im * 1e6) as i64);
    }
    out
}

/// Sorts blocks by `(dim_l, dim_r)`, ties broken by rounded projector entries.
pub(crate) fn canonical_sort(s: &mut BlockStructure) {
    let mut keyed: Vec<(usize, usize, Vec<i64>, Block)> = s
        .blocks
        .drain(..)
        .map(|b| (b.dim_l, b.dim_r, fingerprint(&b), b))
        .collect();
    keyed.sort_by(|x, y| {
        (x.0, x.1)
            .cmp(&(y.0, y.1))
            .then_with(|| x.2.cmp(&y.2))
            .then(Ordering::Equal)
    });
    s.blocks = keyed.into_iter().map(|k| k.3).collect();
}
