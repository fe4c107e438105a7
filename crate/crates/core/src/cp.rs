//! Structural test for completely positive reduced dynamics and the maps it
//! produces: the assignment map, Kraus operators of the reduced dynamics and
//! the structured mutual information.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math::sqrt;
use crate::error::{invalid, Error, Result};
use crate::ki::{self, ki_decompose, KiDecomposition, CONSTRAINT_PROB};
use crate::operator::{
    apply_function, eigh, entropy, kron, partial_trace_unchecked, trace_distance, trace_norm,
    BipartitionDims, CMatrix, DensityOperator, MatrixFunction, MaxAbs, Subsystem, SUPPORT_CUTOFF,
};

/// Default tolerance for structural checks and reconstructions.
pub const CP_TOL: f64 = 1e-8;

/// Joint system-environment states sharing one bipartition.
#[derive(Debug, Clone)]
pub struct JointStateFamily {
    dims: BipartitionDims,
    members: Vec<DensityOperator>,
}

impl JointStateFamily {
    pub fn new(dims: BipartitionDims, members: Vec<DensityOperator>) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("a family needs at least one member"));
        }
        if let Some((i, m)) = members.iter().enumerate().find(|(_, m)| m.dim() != dims.joint()) {
            return Err(invalid(format!(
                "member {i} has dimension {}, expected {}",
                m.dim(),
                dims.joint()
            )));
        }
        Ok(Self { dims, members })
    }

    pub fn dims(&self) -> BipartitionDims {
        self.dims
    }

    pub fn members(&self) -> &[DensityOperator] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `tr_e` of every member.
    pub fn reduced(&self) -> Vec<DensityOperator> {
        self.members
            .iter()
            .map(|m| {
                let r = partial_trace_unchecked(
                    m.matrix(),
                    self.dims.dim_s,
                    self.dims.dim_e,
                    Subsystem::Environment,
                );
                DensityOperator::with_atol(r, m.atol()).expect("partial trace of a density operator")
            })
            .collect()
    }

    pub fn into_members(self) -> Vec<DensityOperator> {
        self.members
    }
}

/// Result of [`check_injectivity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injectivity {
    pub injective: bool,
    /// First pair with equal reduced states but different joint states.
    pub offending: Option<(usize, usize)>,
    pub joint_distance: f64,
}

/// Whether distinct joint members always have distinct reduced states.
pub fn check_injectivity(family: &JointStateFamily, tol: f64) -> Injectivity {
    let reduced = family.reduced();
    let m = family.members();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            let joint = trace_distance(m[i].matrix(), m[j].matrix());
            if joint > tol && trace_distance(reduced[i].matrix(), reduced[j].matrix()) <= tol {
                return Injectivity {
                    injective: false,
                    offending: Some((i, j)),
                    joint_distance: joint,
                };
            }
        }
    }
    Injectivity {
        injective: true,
        offending: None,
        joint_distance: 0.0,
    }
}

/// The structural requirement a family fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Injectivity,
    BlockCoherence,
    VaryingRedundantPart,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Injectivity => "injectivity",
            ViolationKind::BlockCoherence => "block-coherence",
            ViolationKind::VaryingRedundantPart => "varying-redundant-part",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub members: Vec<usize>,
    /// Blocks of the reduced decomposition involved.
    pub blocks: Vec<usize>,
    /// Trace norm of the offending part of the joint state.
    pub magnitude: f64,
    pub tolerance: f64,
    pub reduced_ki: KiDecomposition,
}

/// Evidence that a family admits CP reduced dynamics: the reduced KI
/// decomposition plus one fixed joint state `ω_{r_j e}` per block.
#[derive(Debug, Clone)]
pub struct CpCertificate {
    pub dims: BipartitionDims,
    pub reduced_ki: KiDecomposition,
    pub joint_blocks: Vec<DensityOperator>,
    /// Trace-norm reconstruction error of each joint member.
    pub reconstruction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum CpVerdict {
    Certified(CpCertificate),
    Violated(ViolationReport),
}

impl CpVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, CpVerdict::Certified(_))
    }

    pub fn certificate(&self) -> Option<&CpCertificate> {
        match self {
            CpVerdict::Certified(c) => Some(c),
            CpVerdict::Violated(_) => None,
        }
    }

    pub fn violation(&self) -> Option<&ViolationReport> {
        match self {
            CpVerdict::Violated(v) => Some(v),
            CpVerdict::Certified(_) => None,
        }
    }
}

/// `V ⊗ 1_e`: maps `l ⊗ r ⊗ e` into `s ⊗ e`.
fn lift_isometry(v: &CMatrix, dim_e: usize) -> CMatrix {
    kron(v, &CMatrix::identity(dim_e, dim_e))
}

/// Decides whether every member factors over the KI blocks of the reduced
/// family with a fixed joint redundant part per block.
pub fn check_cp_guarantee(family: &JointStateFamily, seed: u64, tol: f64) -> Result<CpVerdict> {
    let inj = check_injectivity(family, tol);
    if let Some((first, second)) = inj.offending {
        return Err(Error::IllPosedInitialCondition {
            first,
            second,
            joint_distance: inj.joint_distance,
        });
    }
    let dims = family.dims();
    let de = dims.dim_e;
    let reduced = family.reduced();
    let decomp = ki_decompose(&reduced, seed, ki::RECONSTRUCTION_TOL)?;
    let lifts: Vec<CMatrix> = decomp
        .blocks
        .blocks
        .iter()
        .map(|b| lift_isometry(b.isometry.matrix(), de))
        .collect();

    // coherences between blocks
    for (i, rho) in family.members().iter().enumerate() {
        for j in 0..lifts.len() {
            for k in j + 1..lifts.len() {
                let off = lifts[j].adjoint() * rho.matrix() * &lifts[k];
                let mag = trace_norm(&off);
                if mag > tol {
                    return Ok(CpVerdict::Violated(ViolationReport {
                        kind: ViolationKind::BlockCoherence,
                        members: alloc::vec![i],
                        blocks: alloc::vec![j, k],
                        magnitude: mag,
                        tolerance: tol,
                        reduced_ki: decomp,
                    }));
                }
            }
        }
    }

    let mut joint_blocks = Vec::with_capacity(lifts.len());
    for (j, (block, w)) in decomp.blocks.blocks.iter().zip(&lifts).enumerate() {
        let l = block.dim_l;
        let re = block.dim_r * de;
        let local: Vec<CMatrix> = family
            .members()
            .iter()
            .map(|rho| w.adjoint() * rho.matrix() * w)
            .collect();
        let probs: Vec<f64> = decomp.per_state.iter().map(|m| m[j].probability).collect();
        let best = (0..probs.len())
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
            .expect("nonempty family");
        let omega_re = partial_trace_unchecked(&local[best], l, re, Subsystem::System)
            / Complex64::from(probs[best]);
        let omega_re = ki::clip_to_density(&omega_re)
            .ok_or_else(|| Error::Internal("joint redundant part has no weight".into()))?;
        let mut worst = (0usize, 0.0f64);
        for (i, x) in local.iter().enumerate() {
            let p = probs[i];
            if p <= CONSTRAINT_PROB {
                continue;
            }
            let q = match &decomp.per_state[i][j].quantum {
                Some(q) => q.matrix().clone(),
                None => continue,
            };
            let model = kron(&q, omega_re.matrix()) * Complex64::from(p);
            let res = trace_norm(&(x - model));
            if res > worst.1 {
                worst = (i, res);
            }
        }
        if worst.1 > tol {
            return Ok(CpVerdict::Violated(ViolationReport {
                kind: ViolationKind::VaryingRedundantPart,
                members: alloc::vec![best, worst.0],
                blocks: alloc::vec![j],
                magnitude: worst.1,
                tolerance: tol,
                reduced_ki: decomp,
            }));
        }
        joint_blocks.push(omega_re);
    }

    let mut cert = CpCertificate {
        dims,
        reduced_ki: decomp,
        joint_blocks,
        reconstruction: Vec::new(),
    };
    cert.reconstruction = (0..family.len())
        .map(|i| trace_norm(&(family.members()[i].matrix() - cert.reconstruct(i))))
        .collect();
    if let Some((i, &res)) = cert
        .reconstruction
        .iter()
        .enumerate()
        .find(|(_, &r)| r > tol)
    {
        return Ok(CpVerdict::Violated(ViolationReport {
            kind: ViolationKind::VaryingRedundantPart,
            members: alloc::vec![i],
            blocks: Vec::new(),
            magnitude: res,
            tolerance: tol,
            reduced_ki: cert.reduced_ki,
        }));
    }
    Ok(CpVerdict::Certified(cert))
}

impl CpCertificate {
    pub fn num_blocks(&self) -> usize {
        self.joint_blocks.len()
    }

    fn lifts(&self) -> Vec<CMatrix> {
        self.reduced_ki
            .blocks
            .blocks
            .iter()
            .map(|b| lift_isometry(b.isometry.matrix(), self.dims.dim_e))
            .collect()
    }

    /// `Σ_j (V_j ⊗ 1)(p_j ρ_{l_j} ⊗ ω_{r_j e})(V_j ⊗ 1)†` for member `i`.
    pub fn reconstruct(&self, member: usize) -> CMatrix {
        let parts: Vec<Option<CMatrix>> = self.reduced_ki.per_state[member]
            .iter()
            .map(|b| b.quantum.as_ref().map(|q| q.matrix().clone()))
            .collect();
        let probs = self.reduced_ki.probabilities(member);
        self.assemble(&probs, &parts)
    }

    fn assemble(&self, probs: &[f64], parts: &[Option<CMatrix>]) -> CMatrix {
        let n = self.dims.joint();
        let mut out = CMatrix::zeros(n, n);
        for (((w, omega), p), q) in self.lifts().iter().zip(&self.joint_blocks).zip(probs).zip(parts) {
            if let Some(q) = q {
                let local = kron(q, omega.matrix()) * Complex64::from(*p);
                out += w * local * w.adjoint();
            }
        }
        out
    }

    /// Joint state of `member` with its quantum parts replaced by `parts`
    /// (one per block; blocks the member does not occupy are ignored).
    pub fn with_quantum_parts(&self, member: usize, parts: &[DensityOperator]) -> Result<DensityOperator> {
        let blocks = &self.reduced_ki.blocks.blocks;
        if parts.len() != blocks.len() {
            return Err(invalid(format!(
                "expected {} quantum parts, got {}",
                blocks.len(),
                parts.len()
            )));
        }
        for (j, (p, b)) in parts.iter().zip(blocks).enumerate() {
            if p.dim() != b.dim_l {
                return Err(invalid(format!(
                    "quantum part {j} has dimension {}, block needs {}",
                    p.dim(),
                    b.dim_l
                )));
            }
        }
        let probs = self.reduced_ki.probabilities(member);
        let opt: Vec<Option<CMatrix>> = parts
            .iter()
            .zip(&self.reduced_ki.per_state[member])
            .map(|(p, m)| m.quantum.as_ref().map(|_| p.matrix().clone()))
            .collect();
        DensityOperator::new(self.assemble(&probs, &opt))
    }

    /// `tr_e ω_{r_j e}` for each block.
    pub fn redundant_marginals(&self) -> Vec<CMatrix> {
        self.reduced_ki
            .blocks
            .blocks
            .iter()
            .zip(&self.joint_blocks)
            .map(|(b, w)| partial_trace_unchecked(w.matrix(), b.dim_r, self.dims.dim_e, Subsystem::Environment))
            .collect()
    }

    /// The assignment map applied to an arbitrary operator on the system:
    /// `Σ_j (V_j⊗1)(tr_{r_j}(V_j† X V_j) ⊗ ω_{r_j e})(V_j⊗1)† + P⊥XP⊥ ⊗ 1/d_e`.
    /// The last term only acts off the support of the family and keeps the
    /// map trace preserving.
    pub fn assign(&self, x: &CMatrix) -> Result<CMatrix> {
        let ds = self.dims.dim_s;
        let de = self.dims.dim_e;
        if x.nrows() != ds || x.ncols() != ds {
            return Err(invalid(format!(
                "assignment map takes {ds}x{ds} input, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        let n = ds * de;
        let mut out = CMatrix::zeros(n, n);
        for ((block, omega), w) in self.reduced_ki.blocks.blocks.iter().zip(&self.joint_blocks).zip(self.lifts()) {
            let inner = block.isometry.compress(x);
            let left = partial_trace_unchecked(&inner, block.dim_l, block.dim_r, Subsystem::Environment);
            out += &w * kron(&left, omega.matrix()) * w.adjoint();
        }
        let perp = CMatrix::identity(ds, ds) - &self.reduced_ki.support;
        let off = &perp * x * &perp;
        out += kron(&off, &(CMatrix::identity(de, de) / Complex64::from(de as f64)));
        Ok(out)
    }

    /// The operator `A = Σ_j Π_j ω_{r_j e}^{1/2} ω_{r_j}^{-1/2} + P⊥ ⊗ 1/√d_e`
    /// on the joint space; `A (ρ_s ⊗ 1_e) A†` reproduces the joint members.
    pub fn dilation_operator(&self) -> Result<CMatrix> {
        let ds = self.dims.dim_s;
        let de = self.dims.dim_e;
        let n = ds * de;
        let mut a = CMatrix::zeros(n, n);
        let marginals = self.redundant_marginals();
        for (((block, omega_re), omega_r), w) in self
            .reduced_ki
            .blocks
            .blocks
            .iter()
            .zip(&self.joint_blocks)
            .zip(&marginals)
            .zip(self.lifts())
        {
            let eig_r = eigh(omega_r);
            let smallest = eig_r.values.first().copied().unwrap_or(0.0);
            if smallest <= SUPPORT_CUTOFF * eig_r.spectral_radius() {
                return Err(Error::Internal(format!(
                    "redundant part of a block is rank deficient (smallest eigenvalue {smallest:.3e})"
                )));
            }
            let inv_sqrt = apply_function(&eig_r, MatrixFunction::InvSqrtOnSupport);
            let sqrt_re = apply_function(&eigh(omega_re.matrix()), MatrixFunction::Sqrt);
            let local = sqrt_re * kron(&inv_sqrt, &CMatrix::identity(de, de));
            let full = kron(&CMatrix::identity(block.dim_l, block.dim_l), &local);
            a += &w * full * w.adjoint();
        }
        let perp = CMatrix::identity(ds, ds) - &self.reduced_ki.support;
        a += kron(&perp, &CMatrix::identity(de, de)) / Complex64::from(sqrt(de as f64));
        Ok(a)
    }
}

/// Choi matrix `J = Σ_{ab} |a⟩⟨b| ⊗ Φ(|a⟩⟨b|)` of a map from `in_dim` to `out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    in_dim: usize,
    out_dim: usize,
    matrix: CMatrix,
}

impl ChoiMatrix {
    pub fn new(in_dim: usize, out_dim: usize, matrix: CMatrix) -> Result<Self> {
        let n = in_dim * out_dim;
        if in_dim == 0 || out_dim == 0 || matrix.nrows() != n || matrix.ncols() != n {
            return Err(invalid(format!(
                "Choi matrix for {in_dim} -> {out_dim} must be {n}x{n}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            matrix,
        })
    }

    /// Evaluates `f` on the matrix units.
    pub fn from_map<F>(in_dim: usize, out_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&CMatrix) -> Result<CMatrix>,
    {
        let n = in_dim * out_dim;
        let mut j = CMatrix::zeros(n, n);
        for a in 0..in_dim {
            for b in 0..in_dim {
                let mut unit = CMatrix::zeros(in_dim, in_dim);
                unit[(a, b)] = Complex64::from(1.0);
                let img = f(&unit)?;
                if img.nrows() != out_dim || img.ncols() != out_dim {
                    return Err(invalid("map output has the wrong dimension"));
                }
                j.view_mut((a * out_dim, b * out_dim), (out_dim, out_dim))
                    .copy_from(&img);
            }
        }
        Self::new(in_dim, out_dim, j)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `Φ(ρ) = Σ_{ab} ρ_{ab} J_{ab}`.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.nrows() != self.in_dim || rho.ncols() != self.in_dim {
            return Err(invalid("input dimension does not match the Choi matrix"));
        }
        let d = self.out_dim;
        let mut out = CMatrix::zeros(d, d);
        for a in 0..self.in_dim {
            for b in 0..self.in_dim {
                let c = rho[(a, b)];
                if c != Complex64::from(0.0) {
                    out += self.matrix.view((a * d, b * d), (d, d)) * c;
                }
            }
        }
        Ok(out)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.matrix).values.first().copied().unwrap_or(0.0)
    }

    pub fn is_completely_positive(&self, atol: f64) -> bool {
        self.hermiticity_defect() <= atol && self.min_eigenvalue() >= -atol
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).max_abs()
    }

    /// `‖tr_out J − 1‖_max`.
    pub fn trace_preservation_defect(&self) -> f64 {
        let reduced =
            partial_trace_unchecked(&self.matrix, self.in_dim, self.out_dim, Subsystem::Environment);
        (reduced - CMatrix::identity(self.in_dim, self.in_dim)).max_abs()
    }
}

/// Choi matrix of the assignment map of a certificate.
pub fn assignment_map(cert: &CpCertificate) -> Result<ChoiMatrix> {
    let ds = cert.dims.dim_s;
    ChoiMatrix::from_map(ds, cert.dims.joint(), |x| cert.assign(x))
}

/// Kraus operators `K_{αβ}` labelled by an output environment index `α`
/// and an input environment index `β`.
#[derive(Debug, Clone)]
pub struct KrausSet {
    in_dim: usize,
    out_dim: usize,
    operators: Vec<CMatrix>,
    labels: Vec<(usize, usize)>,
}

impl KrausSet {
    pub fn new(in_dim: usize, out_dim: usize, operators: Vec<CMatrix>) -> Result<Self> {
        if let Some(k) = operators
            .iter()
            .find(|k| k.nrows() != out_dim || k.ncols() != in_dim)
        {
            return Err(invalid(format!(
                "Kraus operator is {}x{}, expected {out_dim}x{in_dim}",
                k.nrows(),
                k.ncols()
            )));
        }
        let labels = (0..operators.len()).map(|i| (i, 0)).collect();
        Ok(Self {
            in_dim,
            out_dim,
            operators,
            labels,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.nrows() != self.in_dim || rho.ncols() != self.in_dim {
            return Err(invalid("input dimension does not match the Kraus operators"));
        }
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.operators {
            out += k * rho * k.adjoint();
        }
        Ok(out)
    }

    /// Operator norm of `Σ K†K − 1`.
    pub fn completeness_defect(&self) -> f64 {
        let mut s = -CMatrix::identity(self.in_dim, self.in_dim);
        for k in &self.operators {
            s += k.adjoint() * k;
        }
        crate::operator::operator_norm(&s)
    }

    pub fn to_choi(&self) -> Result<ChoiMatrix> {
        ChoiMatrix::from_map(self.in_dim, self.out_dim, |x| self.apply(x))
    }
}

fn check_unitary(u: &CMatrix, n: usize) -> Result<()> {
    if u.nrows() != n || u.ncols() != n {
        return Err(invalid(format!(
            "unitary must be {n}x{n}, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    let defect = (u.adjoint() * u - CMatrix::identity(n, n)).max_abs();
    if defect > 1e-9 {
        return Err(invalid(format!("matrix is not unitary (defect {defect:.3e})")));
    }
    Ok(())
}

fn check_final_dims(dims: BipartitionDims, final_dims: BipartitionDims) -> Result<()> {
    if final_dims.joint() != dims.joint() {
        return Err(invalid(format!(
            "final partition {}x{} does not match joint dimension {}",
            final_dims.dim_s,
            final_dims.dim_e,
            dims.joint()
        )));
    }
    Ok(())
}

/// `K_{αβ} = ⟨α_{e'}| U A |β_e⟩` for the dynamics `ρ_s ↦ tr_{e'}(U Λ(ρ_s) U†)`.
pub fn kraus_from_unitary(
    cert: &CpCertificate,
    u: &CMatrix,
    final_dims: BipartitionDims,
) -> Result<KrausSet> {
    check_final_dims(cert.dims, final_dims)?;
    check_unitary(u, cert.dims.joint())?;
    let ua = u * cert.dilation_operator()?;
    let (ds, de) = (cert.dims.dim_s, cert.dims.dim_e);
    let (ds2, de2) = (final_dims.dim_s, final_dims.dim_e);
    let mut operators = Vec::with_capacity(de * de2);
    let mut labels = Vec::with_capacity(de * de2);
    for alpha in 0..de2 {
        for beta in 0..de {
            let k = CMatrix::from_fn(ds2, ds, |s2, s| ua[(s2 * de2 + alpha, s * de + beta)]);
            operators.push(k);
            labels.push((alpha, beta));
        }
    }
    Ok(KrausSet {
        in_dim: ds,
        out_dim: ds2,
        operators,
        labels,
    })
}

/// `tr_{e'}(U ρ_{se} U†)` with the final partition `final_dims`.
pub fn reduced_dynamics_direct(
    rho_se: &DensityOperator,
    u: &CMatrix,
    final_dims: BipartitionDims,
) -> Result<DensityOperator> {
    check_unitary(u, rho_se.dim())?;
    if final_dims.joint() != rho_se.dim() {
        return Err(invalid("final partition does not match the joint dimension"));
    }
    let evolved = u * rho_se.matrix() * u.adjoint();
    let out = partial_trace_unchecked(&evolved, final_dims.dim_s, final_dims.dim_e, Subsystem::Environment);
    ki::clip_to_density(&out).ok_or_else(|| Error::Internal("evolved state has no trace".into()))
}

/// `tr_{e'}(U Λ(ρ_s) U†)` for an arbitrary system state.
pub fn reduced_dynamics_via_assignment(
    cert: &CpCertificate,
    rho_s: &DensityOperator,
    u: &CMatrix,
    final_dims: BipartitionDims,
) -> Result<DensityOperator> {
    check_final_dims(cert.dims, final_dims)?;
    check_unitary(u, cert.dims.joint())?;
    let joint = cert.assign(rho_s.matrix())?;
    let evolved = u * joint * u.adjoint();
    let out = partial_trace_unchecked(&evolved, final_dims.dim_s, final_dims.dim_e, Subsystem::Environment);
    ki::clip_to_density(&out).ok_or_else(|| Error::Internal("evolved state has no trace".into()))
}

/// Choi matrix of `ρ_s ↦ tr_{e'}(U Λ(ρ_s) U†)`.
pub fn reduced_dynamics_choi(
    cert: &CpCertificate,
    u: &CMatrix,
    final_dims: BipartitionDims,
) -> Result<ChoiMatrix> {
    check_final_dims(cert.dims, final_dims)?;
    check_unitary(u, cert.dims.joint())?;
    let ud = u.adjoint();
    ChoiMatrix::from_map(cert.dims.dim_s, final_dims.dim_s, |x| {
        let evolved = u * cert.assign(x)? * &ud;
        Ok(partial_trace_unchecked(
            &evolved,
            final_dims.dim_s,
            final_dims.dim_e,
            Subsystem::Environment,
        ))
    })
}

/// `S(ρ_s) + S(ρ_e) − S(ρ_se)` in nats.
pub fn mutual_information(rho_se: &DensityOperator, dims: BipartitionDims) -> Result<f64> {
    if rho_se.dim() != dims.joint() {
        return Err(invalid("state does not match the bipartition"));
    }
    let m = rho_se.matrix();
    let rs = partial_trace_unchecked(m, dims.dim_s, dims.dim_e, Subsystem::Environment);
    let re = partial_trace_unchecked(m, dims.dim_s, dims.dim_e, Subsystem::System);
    Ok(entropy(&rs) + entropy(&re) - entropy(m))
}

/// `S(ρ_e) + Σ_j p_j (S(ω_{r_j}) − S(ω_{r_j e}))`, which only uses the
/// classical and redundant parts of the member.
pub fn mutual_information_structured(cert: &CpCertificate, member: usize) -> Result<f64> {
    if member >= cert.reduced_ki.num_members() {
        return Err(invalid(format!("member {member} out of range")));
    }
    let de = cert.dims.dim_e;
    let probs = cert.reduced_ki.probabilities(member);
    let marginals = cert.redundant_marginals();
    let mut rho_e = CMatrix::zeros(de, de);
    let mut sum = 0.0;
    for (((block, omega_re), omega_r), &p) in cert
        .reduced_ki
        .blocks
        .blocks
        .iter()
        .zip(&cert.joint_blocks)
        .zip(&marginals)
        .zip(&probs)
    {
        rho_e += partial_trace_unchecked(omega_re.matrix(), block.dim_r, de, Subsystem::System)
            * Complex64::from(p);
        sum += p * (entropy(omega_r) - entropy(omega_re.matrix()));
    }
    Ok(entropy(&rho_e) + sum)
}

/// Human-readable one-line summary of a violation.
pub fn describe_violation(v: &ViolationReport) -> String {
    format!(
        "{} violated by members {:?} on blocks {:?} (magnitude {:.6e}, tolerance {:.1e})",
        v.kind.as_str(),
        v.members,
        v.blocks,
        v.magnitude,
        v.tolerance
    )
}
