//! Koashi-Imoto decomposition of a finite family of density operators.
//!
//! Every member is written as `ρ = ⊕_j p_j ρ_{l_j} ⊗ ω_{r_j}` on
//! `supp ρ̄ = ⊕_j H_{l_j} ⊗ H_{r_j}`, with the redundant parts `ω_{r_j}` shared
//! by all members. The block structure is that of the *-algebra generated by
//! the cocycles `ρ̄^{-it} ρ_i^{it}` (`ρ̄` the uniform average), which lie in
//! `⊕_j B(H_{l_j}) ⊗ 1_{r_j}` for states of this form and generate the minimal
//! such algebra for generic sample times. The result is only returned after
//! the reconstruction has been verified.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::algebra::{self, close_star_algebra, decompose_algebra, Block, BlockStructure};
use crate::math::sqrt;
use crate::error::{invalid, Error, Result};
use crate::operator::{
    MaxAbs, apply_function, average, eigh, hermitian_part, partial_trace_unchecked, trace_norm, CMatrix,
    DensityOperator, Isometry, MatrixFunction, Subsystem,
};

/// Cocycle sample times of the first round.
pub const T_SAMPLES: [f64; 4] = [0.37, 0.71, 1.13, 1.94];
/// Sample times appended on each retry round.
const EXTRA_T_SAMPLES: [[f64; 4]; 3] = [
    [2.71, 0.19, 3.37, 1.57],
    [4.43, 0.53, 2.29, 5.87],
    [0.09, 6.61, 1.31, 7.19],
];
/// Default trace-norm tolerance on the reconstruction of each member.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Members at or below this block probability impose no constraint on the block.
pub const CONSTRAINT_PROB: f64 = 1e-7;
/// Block probabilities at or below this are treated as exact zeros.
pub const ZERO_PROB: f64 = 1e-12;
/// Residual threshold of the merge test between two blocks.
pub const MERGE_TOL: f64 = 1e-6;

/// Data of one member restricted to one block.
#[derive(Debug, Clone)]
pub struct MemberBlock {
    pub probability: f64,
    /// `None` when the member has no weight on the block.
    pub quantum: Option<DensityOperator>,
}

/// KI decomposition of a family; blocks act on the full ambient space and
/// together span the support of the family.
#[derive(Debug, Clone)]
pub struct KiDecomposition {
    pub blocks: BlockStructure,
    /// Fixed `ω_{r_j}`, one per block.
    pub redundant: Vec<DensityOperator>,
    /// `per_state[i][j]` is member `i` on block `j`.
    pub per_state: Vec<Vec<MemberBlock>>,
    /// Projector onto the union of supports.
    pub support: CMatrix,
}

impl KiDecomposition {
    pub fn ambient_dim(&self) -> usize {
        self.blocks.ambient_dim
    }

    pub fn num_members(&self) -> usize {
        self.per_state.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.blocks.len()
    }

    /// `(dim_l, dim_r)` per block.
    pub fn block_dims(&self) -> Vec<(usize, usize)> {
        self.blocks.dims()
    }

    pub fn probabilities(&self, member: usize) -> Vec<f64> {
        self.per_state[member].iter().map(|m| m.probability).collect()
    }

    /// `Σ_j V_j (p_j ρ_{l_j} ⊗ ω_{r_j}) V_j†` for member `i`.
    pub fn reconstruct(&self, member: usize) -> CMatrix {
        let n = self.ambient_dim();
        let mut out = CMatrix::zeros(n, n);
        for ((block, omega), data) in self
            .blocks
            .blocks
            .iter()
            .zip(&self.redundant)
            .zip(&self.per_state[member])
        {
            if let Some(q) = &data.quantum {
                let local = q.matrix().kronecker(omega.matrix()) * Complex64::from(data.probability);
                out += block.isometry.expand(&local);
            }
        }
        out
    }
}

/// Outcome of [`pinching_invariance_check`].
#[derive(Debug, Clone)]
pub struct PinchingReport {
    pub holds: bool,
    /// `‖Σ_j Π_j ρ_i Π_j − ρ_i‖_2` per member.
    pub residuals: Vec<f64>,
}

/// Outcome of [`verify_ki`].
#[derive(Debug, Clone)]
pub struct KiReport {
    /// Trace-norm reconstruction error per member.
    pub reconstruction: Vec<f64>,
    /// `|Σ_j p_j − 1|` per member.
    pub probability_deviation: Vec<f64>,
    /// Whether the quantum parts of each block have a trivial commutant.
    pub irreducible: Vec<bool>,
    /// First pair of blocks that could be merged into one, if any.
    pub mergeable_pair: Option<(usize, usize)>,
}

impl KiReport {
    pub fn max_reconstruction(&self) -> f64 {
        self.reconstruction.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_reconstruction() <= tol
            && self.probability_deviation.iter().all(|&d| d <= 1e-9)
            && self.irreducible.iter().all(|&x| x)
            && self.mergeable_pair.is_none()
    }
}

fn common_dim(family: &[DensityOperator]) -> Result<usize> {
    let d = family
        .first()
        .ok_or_else(|| invalid("family must be nonempty"))?
        .dim();
    if family.iter().any(|r| r.dim() != d) {
        return Err(invalid("family members have different dimensions"));
    }
    Ok(d)
}

/// Computes and verifies the KI decomposition of `family`.
///
/// `tol` bounds the trace-norm reconstruction error of every member
/// ([`RECONSTRUCTION_TOL`] is the usual choice).
pub fn ki_decompose(family: &[DensityOperator], seed: u64, tol: f64) -> Result<KiDecomposition> {
    let d = common_dim(family)?;
    let avg = average(family)?;
    let avg_eig = eigh(&avg);
    let support_basis = avg_eig.support_basis();
    let n = support_basis.ncols();
    let support = &support_basis * support_basis.adjoint();
    let compressed: Vec<CMatrix> = family
        .iter()
        .map(|r| hermitian_part(&(support_basis.adjoint() * r.matrix() * &support_basis)))
        .collect();
    let avg_c = eigh(&hermitian_part(&(support_basis.adjoint() * &avg * &support_basis)));
    let member_eigs: Vec<_> = compressed.iter().map(eigh).collect();

    let mut generators: Vec<CMatrix> = member_eigs
        .iter()
        .map(|e| apply_function(e, MatrixFunction::ImaginaryPower(0.0)))
        .collect();
    let mut fresh_times = T_SAMPLES.to_vec();
    let mut last = Error::KiFailed {
        reason: "no round completed".into(),
        rounds: 0,
        residual: f64::INFINITY,
    };
    for round in 0..=EXTRA_T_SAMPLES.len() {
        for &t in &fresh_times {
            let left = apply_function(&avg_c, MatrixFunction::ImaginaryPower(-t));
            for e in &member_eigs {
                generators.push(&left * apply_function(e, MatrixFunction::ImaginaryPower(t)));
            }
        }
        let algebra = close_star_algebra(n, &generators, algebra::CLOSURE_TOL)?;
        let attempt = decompose_algebra(&algebra, seed.wrapping_add(round as u64)).and_then(|s| {
            let lifted = lift(s, &support_basis, d);
            extract(lifted, family)
        });
        match attempt {
            Ok(mut decomp) => {
                decomp.support = support.clone();
                let report = verify_ki(&decomp, family)?;
                if report.passes(tol) {
                    return Ok(decomp);
                }
                last = Error::KiFailed {
                    reason: format!(
                        "verification failed with {} blocks (irreducible: {:?}, mergeable: {:?})",
                        decomp.num_blocks(),
                        report.irreducible,
                        report.mergeable_pair
                    ),
                    rounds: round + 1,
                    residual: report.max_reconstruction(),
                };
            }
            Err(e) => {
                last = Error::KiFailed {
                    reason: format!("{e}"),
                    rounds: round + 1,
                    residual: f64::INFINITY,
                };
            }
        }
        if let Some(extra) = EXTRA_T_SAMPLES.get(round) {
            fresh_times = extra.to_vec();
        }
    }
    Err(last)
}

fn lift(s: BlockStructure, support_basis: &CMatrix, ambient: usize) -> BlockStructure {
    BlockStructure {
        ambient_dim: ambient,
        blocks: s
            .blocks
            .into_iter()
            .map(|b| Block {
                isometry: Isometry::new_unchecked(support_basis * b.isometry.matrix()),
                dim_l: b.dim_l,
                dim_r: b.dim_r,
            })
            .collect(),
    }
}

/// Closest density operator to a Hermitian matrix with unit trace in the
/// sense of clipping negative eigenvalues; absorbs round-off in extracted parts.
pub(crate) fn clip_to_density(m: &CMatrix) -> Option<DensityOperator> {
    let eig = eigh(m);
    let clipped = eig.map(|v| Complex64::from(v.max(0.0)));
    let tr = clipped.trace().re;
    if tr.is_nan() || tr <= 0.0 {
        return None;
    }
    DensityOperator::new(clipped / Complex64::from(tr)).ok()
}

/// Reads per-member probabilities, quantum parts and redundant parts off a
/// given block structure. The redundant part of each block comes from the
/// member with the largest weight on it.
pub fn extract(blocks: BlockStructure, family: &[DensityOperator]) -> Result<KiDecomposition> {
    let d = common_dim(family)?;
    if blocks.ambient_dim != d {
        return Err(invalid(format!(
            "block structure acts on C^{}, family on C^{d}",
            blocks.ambient_dim
        )));
    }
    let mut per_state: Vec<Vec<MemberBlock>> = (0..family.len())
        .map(|_| Vec::with_capacity(blocks.blocks.len()))
        .collect();
    let mut redundant = Vec::with_capacity(blocks.blocks.len());
    for block in &blocks.blocks {
        let (l, r) = (block.dim_l, block.dim_r);
        let local: Vec<CMatrix> = family
            .iter()
            .map(|rho| hermitian_part(&block.isometry.compress(rho.matrix())))
            .collect();
        let probs: Vec<f64> = local.iter().map(|x| x.trace().re.max(0.0)).collect();
        let best = (0..probs.len())
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
            .expect("family is nonempty");
        if probs[best] <= ZERO_PROB {
            return Err(Error::KiFailed {
                reason: "a block carries no weight from any member".into(),
                rounds: 0,
                residual: f64::INFINITY,
            });
        }
        let normalized = &local[best] / Complex64::from(probs[best]);
        let omega = clip_to_density(&partial_trace_unchecked(&normalized, l, r, Subsystem::System))
            .ok_or_else(|| Error::Internal("redundant part has no positive trace".into()))?;
        redundant.push(omega);
        for (i, x) in local.iter().enumerate() {
            let p = probs[i];
            let quantum = if p > ZERO_PROB {
                let y = x / Complex64::from(p);
                clip_to_density(&partial_trace_unchecked(&y, l, r, Subsystem::Environment))
            } else {
                None
            };
            per_state[i].push(MemberBlock {
                probability: p,
                quantum,
            });
        }
    }
    let support = crate::operator::support_projector(family)?;
    Ok(KiDecomposition {
        blocks,
        redundant,
        per_state,
        support,
    })
}

/// Whether the pinching `ρ ↦ Σ_j Π_j ρ Π_j` leaves every member unchanged.
pub fn pinching_invariance_check(
    decomp: &KiDecomposition,
    family: &[DensityOperator],
    tol: f64,
) -> Result<PinchingReport> {
    let d = common_dim(family)?;
    if d != decomp.ambient_dim() {
        return Err(invalid(format!(
            "decomposition acts on C^{}, family on C^{d}",
            decomp.ambient_dim()
        )));
    }
    let projectors: Vec<CMatrix> = decomp.blocks.blocks.iter().map(Block::projector).collect();
    let residuals: Vec<f64> = family
        .iter()
        .map(|rho| {
            let mut pinched = CMatrix::zeros(d, d);
            for p in &projectors {
                pinched += p * rho.matrix() * p;
            }
            (pinched - rho.matrix()).norm()
        })
        .collect();
    Ok(PinchingReport {
        holds: residuals.iter().all(|&r| r <= tol),
        residuals,
    })
}

/// Checks reconstruction, probability normalization, irreducibility of every
/// block and non-mergeability of every pair of blocks.
pub fn verify_ki(decomp: &KiDecomposition, family: &[DensityOperator]) -> Result<KiReport> {
    if family.len() != decomp.num_members() {
        return Err(invalid(format!(
            "decomposition has {} members, family has {}",
            decomp.num_members(),
            family.len()
        )));
    }
    let d = common_dim(family)?;
    if d != decomp.ambient_dim() {
        return Err(invalid("decomposition and family dimensions differ"));
    }
    let reconstruction = family
        .iter()
        .enumerate()
        .map(|(i, rho)| trace_norm(&(rho.matrix() - decomp.reconstruct(i))))
        .collect();
    let probability_deviation = (0..family.len())
        .map(|i| (decomp.probabilities(i).iter().sum::<f64>() - 1.0).abs())
        .collect();
    let irreducible = (0..decomp.num_blocks())
        .map(|j| block_is_irreducible(decomp, j))
        .collect::<Result<Vec<_>>>()?;
    let mut mergeable_pair = None;
    'outer: for j in 0..decomp.num_blocks() {
        for k in (j + 1)..decomp.num_blocks() {
            if blocks_mergeable(decomp, j, k) {
                mergeable_pair = Some((j, k));
                break 'outer;
            }
        }
    }
    Ok(KiReport {
        reconstruction,
        probability_deviation,
        irreducible,
        mergeable_pair,
    })
}

/// Trivial commutant of the quantum parts of block `j` (together with their
/// conjugates by `ρ̄_l^{-1/2}`).
fn block_is_irreducible(decomp: &KiDecomposition, j: usize) -> Result<bool> {
    let l = decomp.blocks.blocks[j].dim_l;
    if l == 1 {
        return Ok(true);
    }
    let parts: Vec<(f64, &CMatrix)> = decomp
        .per_state
        .iter()
        .filter_map(|m| {
            let data = &m[j];
            data.quantum
                .as_ref()
                .filter(|_| data.probability > CONSTRAINT_PROB)
                .map(|q| (data.probability, q.matrix()))
        })
        .collect();
    if parts.is_empty() {
        return Ok(false);
    }
    let mut mean = CMatrix::zeros(l, l);
    for (p, q) in &parts {
        mean += *q * Complex64::from(*p);
    }
    let inv_sqrt = apply_function(&eigh(&mean), MatrixFunction::InvSqrtOnSupport);
    let mut set: Vec<CMatrix> = parts.iter().map(|(_, q)| (*q).clone()).collect();
    set.extend(parts.iter().map(|(_, q)| &inv_sqrt * *q * &inv_sqrt));
    Ok(algebra::commutant_of_set(l, &set)?.dim() == 1)
}

/// Blocks `j` and `k` merge into one `l ⊗ (r_j ⊕ r_k)` block when their weight
/// ratio is constant across members and one unitary aligns all quantum parts.
fn blocks_mergeable(decomp: &KiDecomposition, j: usize, k: usize) -> bool {
    let l = decomp.blocks.blocks[j].dim_l;
    if decomp.blocks.blocks[k].dim_l != l {
        return false;
    }
    let mut ratios = Vec::new();
    let mut pairs: Vec<(&CMatrix, &CMatrix)> = Vec::new();
    for m in &decomp.per_state {
        let (a, b) = (&m[j], &m[k]);
        let total = a.probability + b.probability;
        if total <= CONSTRAINT_PROB {
            continue;
        }
        ratios.push(a.probability / total);
        if a.probability > CONSTRAINT_PROB && b.probability > CONSTRAINT_PROB {
            if let (Some(qa), Some(qb)) = (&a.quantum, &b.quantum) {
                pairs.push((qa.matrix(), qb.matrix()));
            }
        }
    }
    let Some(&first) = ratios.first() else {
        return false;
    };
    if ratios.iter().any(|&q| (q - first).abs() > MERGE_TOL) {
        return false;
    }
    if l == 1 || pairs.is_empty() {
        return true;
    }
    // least-squares W with ρ_j W = W ρ_k for all members
    let l2 = l * l;
    let mut system = DMatrix::<Complex64>::zeros(l2 * pairs.len().max(1), l2);
    let id = CMatrix::identity(l, l);
    for (idx, (a, b)) in pairs.iter().enumerate() {
        // column-major vec: vec(AW) = (1 ⊗ A) vec W, vec(WB) = (Bᵀ ⊗ 1) vec W
        let op = id.kronecker(*a) - b.transpose().kronecker(&id);
        system.view_mut((idx * l2, 0), (l2, l2)).copy_from(&op);
    }
    let normal = system.adjoint() * &system;
    let eig = crate::operator::eigh(&normal);
    let smin = sqrt(eig.values[0].max(0.0));
    if smin > MERGE_TOL {
        return false;
    }
    let w_vec = eig.vectors.column(0).into_owned();
    let w = CMatrix::from_column_slice(l, l, w_vec.as_slice()) * Complex64::from(sqrt(l as f64));
    let defect = (w.adjoint() * &w - CMatrix::identity(l, l)).max_abs();
    defect <= sqrt(MERGE_TOL)
}
