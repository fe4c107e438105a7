//! Seeded generators for the families the structural test is meant to
//! accept or reject.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::cp::JointStateFamily;
use crate::error::{invalid, Error, Result};
use crate::ki::clip_to_density;
use crate::math::sqrt;
use crate::operator::{
    eigh, hermiticity_defect, kron, partial_trace_unchecked, BipartitionDims, CMatrix,
    DensityOperator, MaxAbs, Subsystem, DEFAULT_ATOL,
};
use crate::random::{
    gaussian_matrix, random_density, random_probabilities, random_pure,
    random_unitary, rng, SeededRng,
};

/// Lower bound on generated block weights before renormalization.
const PROB_FLOOR: f64 = 0.1;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

/// `ρ_i ⊗ ω_e` with one shared environment state.
pub fn gen_product_family(dim_s: usize, dim_e: usize, count: usize, seed: u64) -> Result<JointStateFamily> {
    let dims = BipartitionDims::new(dim_s, dim_e)?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut r = rng(seed);
    let omega = random_density(dim_e, &mut r);
    let members = (0..count)
        .map(|_| {
            let rho = random_density(dim_s, &mut r);
            DensityOperator::new(kron(rho.matrix(), omega.matrix()))
        })
        .collect::<Result<Vec<_>>>()?;
    JointStateFamily::new(dims, members)
}

/// How one system block of a Liu-Tong family is populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    /// A fixed joint state with full rank.
    Fixed,
    /// A fixed pure, generically entangled, joint state.
    Entangled,
    /// Member-dependent system state times a fixed environment state.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiuTongBlock {
    pub dim: usize,
    pub mode: BlockMode,
}

/// Members `⊕_j p_j ω_{se,j}` on fixed blocks and `⊕_j p_j ρ_{s,j} ⊗ ω_{e,j}`
/// on free blocks; the system space is the direct sum of the block spaces.
pub fn gen_liu_tong(blocks: &[LiuTongBlock], dim_e: usize, count: usize, seed: u64) -> Result<JointStateFamily> {
    if blocks.is_empty() {
        return Err(invalid("at least one block is required"));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    if blocks.iter().any(|b| b.dim == 0) {
        return Err(invalid("block dimensions must be positive"));
    }
    let dim_s: usize = blocks.iter().map(|b| b.dim).sum();
    let dims = BipartitionDims::new(dim_s, dim_e)?;
    let mut r = rng(seed);
    let fixed: Vec<CMatrix> = blocks
        .iter()
        .map(|b| match b.mode {
            BlockMode::Fixed => random_density(b.dim * dim_e, &mut r).into_matrix(),
            BlockMode::Entangled => random_pure(b.dim * dim_e, &mut r).into_matrix(),
            BlockMode::Free => random_density(dim_e, &mut r).into_matrix(),
        })
        .collect();
    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        let p = random_probabilities(blocks.len(), PROB_FLOOR, &mut r);
        let mut joint = CMatrix::zeros(dims.joint(), dims.joint());
        let mut offset = 0;
        for ((b, f), &pj) in blocks.iter().zip(&fixed).zip(&p) {
            let local = match b.mode {
                BlockMode::Free => kron(random_density(b.dim, &mut r).matrix(), f),
                _ => f.clone(),
            };
            let embed = coordinate_isometry(dim_s, offset, b.dim);
            let w = kron(&embed, &CMatrix::identity(dim_e, dim_e));
            joint += &w * local * w.adjoint() * c(pj);
            offset += b.dim;
        }
        members.push(DensityOperator::new(joint)?);
    }
    JointStateFamily::new(dims, members)
}

/// Columns `offset..offset + width` of the identity on `C^dim`.
fn coordinate_isometry(dim: usize, offset: usize, width: usize) -> CMatrix {
    CMatrix::from_fn(dim, width, |i, j| if i == offset + j { c(1.0) } else { c(0.0) })
}

/// A planted KI family on `C^d`, `d = Σ l_j r_j`, rotated by a random unitary.
#[derive(Debug, Clone)]
pub struct PlantedFamily {
    pub members: Vec<DensityOperator>,
    /// Planted `(dim_l, dim_r)` per block, in generation order.
    pub block_dims: Vec<(usize, usize)>,
    pub rotation: CMatrix,
}

/// Members `U(⊕_j p_j ρ_{l_j} ⊗ ω_{r_j})U†` with shared `ω_{r_j}`.
pub fn gen_planted_ki(block_dims: &[(usize, usize)], count: usize, seed: u64) -> Result<PlantedFamily> {
    if block_dims.is_empty() || block_dims.iter().any(|&(l, r)| l == 0 || r == 0) {
        return Err(invalid("blocks must have positive dimensions"));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let d: usize = block_dims.iter().map(|&(l, r)| l * r).sum();
    let mut r = rng(seed);
    let rotation = random_unitary(d, &mut r);
    let omegas: Vec<DensityOperator> = block_dims
        .iter()
        .map(|&(_, dr)| random_density(dr, &mut r))
        .collect();
    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        let p = random_probabilities(block_dims.len(), PROB_FLOOR, &mut r);
        let parts: Vec<CMatrix> = block_dims
            .iter()
            .zip(&omegas)
            .zip(&p)
            .map(|((&(l, _), w), &pj)| kron(random_density(l, &mut r).matrix(), w.matrix()) * c(pj))
            .collect();
        let m = &rotation * crate::operator::direct_sum(&parts) * rotation.adjoint();
        members.push(DensityOperator::new(m)?);
    }
    Ok(PlantedFamily {
        members,
        block_dims: block_dims.to_vec(),
        rotation,
    })
}

/// Operator `0 ≤ E ≤ 1` on an ancilla.
#[derive(Debug, Clone)]
pub struct PovmElement {
    matrix: CMatrix,
}

impl PovmElement {
    pub fn new(matrix: CMatrix, atol: f64) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(invalid("POVM element must be a nonempty square matrix"));
        }
        if hermiticity_defect(&matrix) > atol {
            return Err(invalid("POVM element is not Hermitian"));
        }
        let eig = eigh(&matrix);
        let (lo, hi) = (eig.values[0], *eig.values.last().expect("nonempty"));
        if lo < -atol || hi > 1.0 + atol {
            return Err(invalid(format!(
                "POVM element spectrum [{lo:.3e}, {hi:.3e}] leaves [0, 1]"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    /// `M / λ_max(M)` for a random Wishart `M`.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let g = gaussian_matrix(dim, dim, rng);
        let m = &g * g.adjoint();
        let top = *eigh(&m).values.last().expect("nonempty");
        Self { matrix: m / c(top) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

/// State on `a ⊗ s ⊗ e` (ancilla-major).
#[derive(Debug, Clone)]
pub struct TripartiteState {
    pub dim_a: usize,
    pub dim_s: usize,
    pub dim_e: usize,
    pub state: DensityOperator,
}

impl TripartiteState {
    pub fn new(dim_a: usize, dim_s: usize, dim_e: usize, state: DensityOperator) -> Result<Self> {
        if dim_a * dim_s * dim_e != state.dim() || dim_a == 0 || dim_s == 0 || dim_e == 0 {
            return Err(invalid(format!(
                "state of dimension {} does not factor as {dim_a}x{dim_s}x{dim_e}",
                state.dim()
            )));
        }
        Ok(Self {
            dim_a,
            dim_s,
            dim_e,
            state,
        })
    }

    pub fn joint_dims(&self) -> BipartitionDims {
        BipartitionDims {
            dim_s: self.dim_s,
            dim_e: self.dim_e,
        }
    }

    /// `tr_a`.
    pub fn marginal_se(&self) -> CMatrix {
        partial_trace_unchecked(
            self.state.matrix(),
            self.dim_a,
            self.dim_s * self.dim_e,
            Subsystem::System,
        )
    }
}

/// Block layout of a Markov chain: the system is `⊕_j l_j ⊗ r_j` with
/// blocks placed consecutively in the computational basis.
fn block_embeddings(blocks: &[(usize, usize)]) -> (usize, Vec<CMatrix>) {
    let dim_s: usize = blocks.iter().map(|&(l, r)| l * r).sum();
    let mut offset = 0;
    let embeds = blocks
        .iter()
        .map(|&(l, r)| {
            let v = coordinate_isometry(dim_s, offset, l * r);
            offset += l * r;
            v
        })
        .collect();
    (dim_s, embeds)
}

/// `1_a ⊗ V ⊗ 1_e`.
fn middle_lift(dim_a: usize, v: &CMatrix, dim_e: usize) -> CMatrix {
    kron(&kron(&CMatrix::identity(dim_a, dim_a), v), &CMatrix::identity(dim_e, dim_e))
}

fn assemble_chain(
    dim_a: usize,
    dim_e: usize,
    blocks: &[(usize, usize)],
    probabilities: &[f64],
    left: &[CMatrix],
    right: &[CMatrix],
) -> Result<TripartiteState> {
    let (dim_s, embeds) = block_embeddings(blocks);
    let n = dim_a * dim_s * dim_e;
    let mut m = CMatrix::zeros(n, n);
    for (((v, p), al), re) in embeds.iter().zip(probabilities).zip(left).zip(right) {
        let w = middle_lift(dim_a, v, dim_e);
        m += &w * kron(al, re) * w.adjoint() * c(*p);
    }
    TripartiteState::new(dim_a, dim_s, dim_e, DensityOperator::new(m)?)
}

/// Random short Markov chain `⊕_j p_j ρ_{a l_j} ⊗ ρ_{r_j e}`.
pub fn gen_markov_chain(blocks: &[(usize, usize)], dim_a: usize, dim_e: usize, seed: u64) -> Result<TripartiteState> {
    if blocks.is_empty() || blocks.iter().any(|&(l, r)| l == 0 || r == 0) {
        return Err(invalid("blocks must have positive dimensions"));
    }
    if dim_a == 0 || dim_e == 0 {
        return Err(invalid("dimensions must be positive"));
    }
    let mut r = rng(seed);
    let p = random_probabilities(blocks.len(), PROB_FLOOR, &mut r);
    let left: Vec<CMatrix> = blocks
        .iter()
        .map(|&(l, _)| random_density(dim_a * l, &mut r).into_matrix())
        .collect();
    let right: Vec<CMatrix> = blocks
        .iter()
        .map(|&(_, rr)| random_density(rr * dim_e, &mut r).into_matrix())
        .collect();
    assemble_chain(dim_a, dim_e, blocks, &p, &left, &right)
}

/// Largest deviation of a tripartite state from the chain form over the
/// given system blocks: cross-block terms plus the failure of each block
/// to factor as `ρ_{a l} ⊗ ρ_{r e}`.
pub fn markov_form_residual(tri: &TripartiteState, blocks: &[(usize, usize)]) -> Result<f64> {
    let (dim_s, embeds) = block_embeddings(blocks);
    if dim_s != tri.dim_s {
        return Err(invalid("block layout does not match the system dimension"));
    }
    let (da, de) = (tri.dim_a, tri.dim_e);
    let lifts: Vec<CMatrix> = embeds.iter().map(|v| middle_lift(da, v, de)).collect();
    let rho = tri.state.matrix();
    let mut worst: f64 = 0.0;
    for j in 0..lifts.len() {
        for k in j + 1..lifts.len() {
            worst = worst.max((lifts[j].adjoint() * rho * &lifts[k]).max_abs());
        }
    }
    for (&(l, r), w) in blocks.iter().zip(&lifts) {
        let local = w.adjoint() * rho * w;
        let p = local.trace().re;
        if p <= 0.0 {
            continue;
        }
        let al = partial_trace_unchecked(&local, da * l, r * de, Subsystem::Environment);
        let re = partial_trace_unchecked(&local, da * l, r * de, Subsystem::System);
        let model = kron(&al, &re) / c(p);
        worst = worst.max((local - model).max_abs());
    }
    Ok(worst)
}

/// Chain `(1/N) Σ_j |j⟩⟨j|_{a1} ⊗ φ_{a2, l_j} ⊗ ω_{r_j e}` with `φ` the
/// normalized maximally entangled state between the first `l_j` levels of
/// `a2` and `l_j`.
pub fn canonical_markov_from_structure(
    blocks: &[(usize, usize)],
    joint_blocks: &[DensityOperator],
    dim_e: usize,
    dim_a2: usize,
) -> Result<TripartiteState> {
    if blocks.is_empty() || blocks.len() != joint_blocks.len() {
        return Err(invalid("need one joint redundant part per block"));
    }
    for (&(l, r), w) in blocks.iter().zip(joint_blocks) {
        if l == 0 || r == 0 || w.dim() != r * dim_e {
            return Err(invalid(format!(
                "block ({l}, {r}) needs a state on dimension {}, got {}",
                r * dim_e,
                w.dim()
            )));
        }
    }
    let max_l = blocks.iter().map(|&(l, _)| l).max().expect("nonempty");
    if dim_a2 < max_l {
        return Err(invalid(format!(
            "ancilla factor of dimension {dim_a2} is smaller than the largest block {max_l}"
        )));
    }
    let n_blocks = blocks.len();
    let dim_a = n_blocks * dim_a2;
    // ancilla a = a1 ⊗ a2 with a1 labelling blocks
    let left: Vec<CMatrix> = blocks
        .iter()
        .enumerate()
        .map(|(j, &(l, _))| {
            let mut sel = CMatrix::zeros(n_blocks, n_blocks);
            sel[(j, j)] = c(1.0);
            let phi = maximally_entangled(dim_a2, l);
            // order a1 ⊗ (a2 ⊗ l)
            kron(&sel, &phi)
        })
        .collect();
    let right: Vec<CMatrix> = joint_blocks.iter().map(|w| w.matrix().clone()).collect();
    let p = alloc::vec![1.0 / n_blocks as f64; n_blocks];
    assemble_chain(dim_a, dim_e, blocks, &p, &left, &right)
}

/// `|φ⟩⟨φ|` with `|φ⟩ = Σ_{m<l} |m⟩_{a2}|m⟩_l / √l`.
fn maximally_entangled(dim_a2: usize, l: usize) -> CMatrix {
    let mut v = DVector::<Complex64>::zeros(dim_a2 * l);
    for m in 0..l {
        v[m * l + m] = c(1.0 / sqrt(l as f64));
    }
    &v * v.adjoint()
}

/// `tr[(E ⊗ 1 ⊗ 1) ρ]`.
pub fn selection_probability(tri: &TripartiteState, e: &PovmElement) -> Result<f64> {
    Ok(select_unnormalized(tri, e)?.trace().re)
}

fn select_unnormalized(tri: &TripartiteState, e: &PovmElement) -> Result<CMatrix> {
    if e.dim() != tri.dim_a {
        return Err(invalid(format!(
            "POVM element acts on dimension {}, ancilla has {}",
            e.dim(),
            tri.dim_a
        )));
    }
    let rest = tri.dim_s * tri.dim_e;
    let op = kron(e.matrix(), &CMatrix::identity(rest, rest));
    let weighted = op * tri.state.matrix();
    Ok(partial_trace_unchecked(&weighted, tri.dim_a, rest, Subsystem::System))
}

/// `tr_a[(E ⊗ 1 ⊗ 1) ρ] / tr[(E ⊗ 1 ⊗ 1) ρ]`.
pub fn post_select(tri: &TripartiteState, e: &PovmElement) -> Result<DensityOperator> {
    let m = select_unnormalized(tri, e)?;
    let prob = m.trace().re;
    if prob.is_nan() || prob <= 1e-12 {
        return Err(Error::PostSelectionFailed { probability: prob });
    }
    let m = crate::operator::hermitian_part(&m) / c(prob);
    DensityOperator::with_atol(m.clone(), DEFAULT_ATOL)
        .or_else(|_| clip_to_density(&m).ok_or(Error::PostSelectionFailed { probability: prob }))
}

/// Canonical chain over random `ω_{r_j e}`, post-selected with `count`
/// random POVM elements.
pub fn gen_post_selected_family(
    blocks: &[(usize, usize)],
    dim_e: usize,
    count: usize,
    seed: u64,
) -> Result<JointStateFamily> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    if blocks.is_empty() {
        return Err(invalid("at least one block is required"));
    }
    let mut r = rng(seed);
    let joint_blocks: Vec<DensityOperator> = blocks
        .iter()
        .map(|&(_, rr)| random_density(rr * dim_e, &mut r))
        .collect();
    let dim_a2 = blocks.iter().map(|&(l, _)| l).max().unwrap_or(1);
    let tri = canonical_markov_from_structure(blocks, &joint_blocks, dim_e, dim_a2)?;
    let members = (0..count)
        .map(|_| post_select(&tri, &PovmElement::random(tri.dim_a, &mut r)))
        .collect::<Result<Vec<_>>>()?;
    JointStateFamily::new(tri.joint_dims(), members)
}

/// Families built to fail the structural test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleKind {
    /// `{|Φ+⟩⟨Φ+|, |00⟩⟨00|}`.
    BellVsProduct,
    /// A pure state with coherence between two classical blocks, plus the
    /// corresponding incoherent mixture with different weights.
    CoherentBlocks,
    /// Two members on the same classical blocks whose joint redundant part
    /// on one block differs.
    VaryingOmega,
}

impl CounterexampleKind {
    pub const ALL: [CounterexampleKind; 3] = [
        CounterexampleKind::BellVsProduct,
        CounterexampleKind::CoherentBlocks,
        CounterexampleKind::VaryingOmega,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CounterexampleKind::BellVsProduct => "bell-vs-product",
            CounterexampleKind::CoherentBlocks => "coherent-blocks",
            CounterexampleKind::VaryingOmega => "varying-omega",
        }
    }
}

impl core::str::FromStr for CounterexampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CounterexampleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown counterexample kind '{s}'")))
    }
}

/// Two distinct weights in `[0.2, 0.8]` at least 0.1 apart.
fn weight_pair(r: &mut SeededRng) -> (f64, f64) {
    let p = 0.2 + 0.6 * r.gen::<f64>();
    let mut q = 0.2 + 0.6 * r.gen::<f64>();
    while (p - q).abs() < 0.1 {
        q = 0.2 + 0.6 * r.gen::<f64>();
    }
    (p, q)
}

fn outer(a: &DVector<Complex64>, b: &DVector<Complex64>) -> CMatrix {
    a * b.adjoint()
}

pub fn gen_counterexample(kind: CounterexampleKind, dim_s: usize, dim_e: usize, seed: u64) -> Result<JointStateFamily> {
    let dims = BipartitionDims::new(dim_s, dim_e)?;
    if dim_s < 2 || dim_e < 2 {
        return Err(invalid(format!(
            "{} needs at least a qubit system and environment",
            kind.as_str()
        )));
    }
    let n = dims.joint();
    let basis = |i: usize| {
        let mut v = DVector::<Complex64>::zeros(n);
        v[i] = c(1.0);
        v
    };
    let mut r = rng(seed);
    let members = match kind {
        CounterexampleKind::BellVsProduct => {
            let bell = (basis(0) + basis(dim_e + 1)) * c(core::f64::consts::FRAC_1_SQRT_2);
            alloc::vec![
                DensityOperator::pure(&bell)?,
                DensityOperator::pure(&basis(0))?,
            ]
        }
        CounterexampleKind::CoherentBlocks => {
            let us = random_unitary(dim_s, &mut r);
            let ue = random_unitary(dim_e, &mut r);
            let (s0, s1) = (us.column(0).into_owned(), us.column(1).into_owned());
            let (a, b) = (ue.column(0).into_owned(), ue.column(1).into_owned());
            let (p, q) = weight_pair(&mut r);
            let v0 = s0.kronecker(&a);
            let v1 = s1.kronecker(&b);
            let psi = &v0 * c(sqrt(p)) + &v1 * c(sqrt(1.0 - p));
            let mixed = outer(&v0, &v0) * c(q) + outer(&v1, &v1) * c(1.0 - q);
            alloc::vec![DensityOperator::pure(&psi)?, DensityOperator::new(mixed)?]
        }
        CounterexampleKind::VaryingOmega => {
            let us = random_unitary(dim_s, &mut r);
            let p0 = outer(&us.column(0).into_owned(), &us.column(0).into_owned());
            let p1 = outer(&us.column(1).into_owned(), &us.column(1).into_owned());
            let (wa, wb, wc) = (
                random_density(dim_e, &mut r),
                random_density(dim_e, &mut r),
                random_density(dim_e, &mut r),
            );
            let (p, q) = weight_pair(&mut r);
            let m1 = kron(&p0, wa.matrix()) * c(p) + kron(&p1, wc.matrix()) * c(1.0 - p);
            let m2 = kron(&p0, wb.matrix()) * c(q) + kron(&p1, wc.matrix()) * c(1.0 - q);
            alloc::vec![DensityOperator::new(m1)?, DensityOperator::new(m2)?]
        }
    };
    JointStateFamily::new(dims, members)
}
