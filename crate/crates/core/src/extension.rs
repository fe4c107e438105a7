//! Whether a map known only on finitely many states extends to a completely
//! positive map: a search for a linearly forced violation of positivity,
//! and alternating projections on the Choi matrix.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::cp::{ChoiMatrix, JointStateFamily};
use crate::error::{invalid, Result};
use crate::math::sqrt;
use crate::operator::{
    average, eigh, hermitian_to_real, psd_projection, kron, partial_trace_unchecked, support_basis,
    trace_distance, BipartitionDims, CMatrix, DensityOperator, MatrixFunction, MaxAbs, Subsystem,
};
use crate::random::rng;

/// Inputs closer than this in trace distance count as equal.
pub const DISTINCT_TOL: f64 = 1e-9;
/// Allowed mismatch when a linear dependency among inputs is carried to outputs.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// A forced image with an eigenvalue below `-WITNESS_TOL` refutes extendability.
pub const WITNESS_TOL: f64 = 1e-8;
/// Over-relaxation factor of the Douglas-Rachford update, in `(0, 2)`.
const RELAXATION: f64 = 1.6;

const RANDOM_DIRECTIONS: usize = 96;
const REFINE_ROUNDS: usize = 60;

/// Pairs `ρ_i ↦ σ_i` of a map specified on finitely many states.
#[derive(Debug, Clone)]
pub struct MapOnStates {
    in_dim: usize,
    out_dim: usize,
    inputs: Vec<DensityOperator>,
    outputs: Vec<DensityOperator>,
}

impl MapOnStates {
    pub fn new(pairs: Vec<(DensityOperator, DensityOperator)>) -> Result<Self> {
        let (inputs, outputs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let Some(first) = inputs.first() else {
            return Err(invalid("a map needs at least one pair"));
        };
        let in_dim = first.dim();
        let out_dim = outputs[0].dim();
        if inputs.iter().any(|x| x.dim() != in_dim) || outputs.iter().any(|x| x.dim() != out_dim) {
            return Err(invalid("pairs have inconsistent dimensions"));
        }
        for i in 0..inputs.len() {
            for j in i + 1..inputs.len() {
                if trace_distance(inputs[i].matrix(), inputs[j].matrix()) <= DISTINCT_TOL {
                    return Err(invalid(format!("inputs {i} and {j} coincide")));
                }
            }
        }
        let map = Self {
            in_dim,
            out_dim,
            inputs,
            outputs,
        };
        let defect = map.consistency_defect();
        if defect > CONSISTENCY_TOL {
            return Err(invalid(format!(
                "outputs do not respect a linear dependency among inputs (defect {defect:.3e})"
            )));
        }
        Ok(map)
    }

    /// `ρ_s^{(i)} ↦ tr_{e'}(U ρ_se^{(i)} U†)` for the members of a family.
    /// Repeated members contribute one pair.
    pub fn from_family(family: &JointStateFamily, u: &CMatrix, final_dims: BipartitionDims) -> Result<Self> {
        let n = family.dims().joint();
        if u.nrows() != n || u.ncols() != n || final_dims.joint() != n {
            return Err(invalid("unitary or final partition does not match the family"));
        }
        let ud = u.adjoint();
        let members = family.members();
        let pairs = family
            .reduced()
            .into_iter()
            .zip(members)
            .enumerate()
            .filter(|&(i, (_, rse))| {
                !members[..i].iter().any(|m| trace_distance(m.matrix(), rse.matrix()) <= DISTINCT_TOL)
            })
            .map(|(_, (rs, rse))| {
                let evolved = u * rse.matrix() * &ud;
                let out = partial_trace_unchecked(&evolved, final_dims.dim_s, final_dims.dim_e, Subsystem::Environment);
                Ok((rs, DensityOperator::with_atol(out, rse.atol().max(1e-9))?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    /// The proof's refuting instance: `U = 1` with the whole joint space as output,
    /// so the map sends each reduced state to its joint state.
    pub fn assignment_instance(family: &JointStateFamily) -> Result<Self> {
        let n = family.dims().joint();
        Self::from_family(family, &CMatrix::identity(n, n), BipartitionDims { dim_s: n, dim_e: 1 })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[DensityOperator] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[DensityOperator] {
        &self.outputs
    }

    /// Largest output mismatch `‖Σ c_i σ_i‖` over unit dependencies `Σ c_i ρ_i = 0`.
    pub fn consistency_defect(&self) -> f64 {
        let m = self.inputs.len();
        let cols: Vec<DVector<f64>> = self.inputs.iter().map(|x| hermitian_to_real(x.matrix())).collect();
        let gram = CMatrix::from_fn(m, m, |i, j| Complex64::from(cols[i].dot(&cols[j])));
        let eig = eigh(&gram);
        let top = eig.spectral_radius();
        let mut worst: f64 = 0.0;
        for (k, &v) in eig.values.iter().enumerate() {
            if v > 1e-20 + 1e-14 * top {
                continue;
            }
            let mut img = CMatrix::zeros(self.out_dim, self.out_dim);
            for (i, out) in self.outputs.iter().enumerate() {
                img += out.matrix() * Complex64::from(eig.vectors[(i, k)].re);
            }
            worst = worst.max(img.max_abs());
        }
        worst
    }

    fn combine(&self, coeffs: &[f64]) -> (CMatrix, CMatrix) {
        let mut x = CMatrix::zeros(self.in_dim, self.in_dim);
        let mut y = CMatrix::zeros(self.out_dim, self.out_dim);
        for ((i, o), &c) in self.inputs.iter().zip(&self.outputs).zip(coeffs) {
            x += i.matrix() * Complex64::from(c);
            y += o.matrix() * Complex64::from(c);
        }
        (x, y)
    }
}

/// A PSD input in the span of the inputs whose linearly forced image is not PSD.
#[derive(Debug, Clone)]
pub struct LinearWitness {
    /// Coefficients `c_i` with `input = Σ c_i ρ_i`.
    pub coefficients: Vec<f64>,
    pub input: CMatrix,
    pub output: CMatrix,
    pub min_eigenvalue: f64,
}

/// Searches the trace-one PSD part of the span of the inputs for a point
/// whose forced image has a negative eigenvalue. The smallest eigenvalue of
/// the image is concave along the span, so only boundary points are tried:
/// each direction from the barycenter is followed until the input leaves
/// the PSD cone.
pub fn linear_extension_witness(m: &MapOnStates, seed: u64) -> Option<LinearWitness> {
    let n = m.len();
    let bary = alloc::vec![1.0 / n as f64; n];
    let mut best = evaluate(m, &bary);
    if n > 1 {
        let x0 = average(&m.inputs.iter().map(|x| x.matrix().clone()).collect::<Vec<_>>())
            .expect("nonempty");
        let basis = support_basis(&x0);
        let x0r = basis.adjoint() * &x0 * &basis;
        let inv_sqrt = crate::operator::apply_function(&eigh(&x0r), MatrixFunction::InvSqrtOnSupport);
        let whitened: Vec<CMatrix> = m
            .inputs
            .iter()
            .map(|x| &inv_sqrt * basis.adjoint() * x.matrix() * &basis * &inv_sqrt)
            .collect();
        let boundary = |dir: &[f64]| -> Option<Vec<f64>> {
            let mut d = CMatrix::zeros(whitened[0].nrows(), whitened[0].nrows());
            for (w, &c) in whitened.iter().zip(dir) {
                d += w * Complex64::from(c);
            }
            let low = eigh(&d).values[0];
            if low >= -1e-13 {
                return None;
            }
            let t = -1.0 / low;
            Some(bary.iter().zip(dir).map(|(b, c)| b + t * c).collect())
        };
        let consider = |dir: &[f64], best: &mut (Vec<f64>, CMatrix, CMatrix, f64)| {
            for sign in [1.0, -1.0] {
                let d: Vec<f64> = dir.iter().map(|c| sign * c).collect();
                if let Some(coeffs) = boundary(&d) {
                    let cand = evaluate(m, &coeffs);
                    if cand.3 < best.3 {
                        *best = cand;
                    }
                }
            }
        };
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let mut d = alloc::vec![-1.0 / n as f64; n];
            d[i] += 1.0;
            dirs.push(d);
            for j in i + 1..n {
                let mut d = alloc::vec![0.0; n];
                d[i] = 1.0;
                d[j] = -1.0;
                dirs.push(d);
            }
        }
        let mut r = rng(seed);
        for _ in 0..RANDOM_DIRECTIONS {
            dirs.push(zero_sum_gaussian(n, &mut r));
        }
        for d in &dirs {
            consider(d, &mut best);
        }
        // local refinement around the best boundary point
        let mut center: Vec<f64> = best.0.iter().zip(&bary).map(|(c, b)| c - b).collect();
        let mut radius = 0.5;
        for _ in 0..REFINE_ROUNDS {
            let scale = sqrt(center.iter().map(|c| c * c).sum::<f64>()).max(1e-12);
            let step = zero_sum_gaussian(n, &mut r);
            let trial: Vec<f64> = center
                .iter()
                .zip(&step)
                .map(|(c, s)| c + radius * scale * s)
                .collect();
            let before = best.3;
            consider(&trial, &mut best);
            if best.3 < before {
                center = best.0.iter().zip(&bary).map(|(c, b)| c - b).collect();
            } else {
                radius *= 0.85;
            }
        }
    }
    let (coefficients, input, output, min_eigenvalue) = best;
    (min_eigenvalue < -WITNESS_TOL).then_some(LinearWitness {
        coefficients,
        input,
        output,
        min_eigenvalue,
    })
}

fn evaluate(m: &MapOnStates, coeffs: &[f64]) -> (Vec<f64>, CMatrix, CMatrix, f64) {
    let (x, y) = m.combine(coeffs);
    let low = eigh(&y).values[0];
    (coeffs.to_vec(), x, y, low)
}

/// Unit Gaussian vector with zero sum (a direction inside the affine span).
fn zero_sum_gaussian(n: usize, r: &mut crate::random::SeededRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(r)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-300);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Iteration controls for [`cp_feasibility`].
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub stall_window: usize,
    /// Relative change of the step length over one window below which it counts as settled.
    pub stall_ratio: f64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-7,
            stall_window: 500,
            stall_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Feasibility {
    /// A Choi matrix meeting every pair and PSD within the tolerance.
    Feasible { choi: ChoiMatrix, iterations: usize },
    /// The distance between the cone and the constraint set stopped shrinking.
    Infeasible { gap: f64, iterations: usize },
    /// Budget exhausted while the gap was still shrinking.
    Undecided { gap: f64, iterations: usize },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Feasibility::Infeasible { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Feasibility::Feasible { .. } => "feasible",
            Feasibility::Infeasible { .. } => "infeasible",
            Feasibility::Undecided { .. } => "undecided",
        }
    }
}

/// Affine constraints `Σ_{ab} ρ^{(i)}_{ab} J_{ab} = σ_i` on the Choi matrix.
/// They act on each output entry `(x, y)` separately through the same small
/// matrix `R[i, ab] = ρ^{(i)}_{ab}`, so the Frobenius projection is
/// `j_{xy} ← j_{xy} − R⁺(R j_{xy} − s_{xy})` entry by entry.
struct AffineConstraints {
    k_in: usize,
    k_out: usize,
    r: CMatrix,
    pinv: CMatrix,
    targets: Vec<CMatrix>,
}

impl AffineConstraints {
    fn new(inputs: &[CMatrix], targets: Vec<CMatrix>) -> Self {
        let k_in = inputs[0].nrows();
        let k_out = targets[0].nrows();
        let m = inputs.len();
        let r = CMatrix::from_fn(m, k_in * k_in, |i, ab| inputs[i][(ab / k_in, ab % k_in)]);
        let gram = &r * r.adjoint();
        let eig = eigh(&gram);
        let cut = 1e-12 * eig.spectral_radius();
        let inv = eig.map(|v| Complex64::from(if v > cut { 1.0 / v } else { 0.0 }));
        let pinv = r.adjoint() * inv;
        Self {
            k_in,
            k_out,
            r,
            pinv,
            targets,
        }
    }

    fn project(&self, j: &CMatrix) -> CMatrix {
        let (ki, ko) = (self.k_in, self.k_out);
        let mut out = j.clone();
        let mut v = DVector::<Complex64>::zeros(ki * ki);
        for x in 0..ko {
            for y in 0..ko {
                for a in 0..ki {
                    for b in 0..ki {
                        v[a * ki + b] = j[(a * ko + x, b * ko + y)];
                    }
                }
                let mut res = &self.r * &v;
                for (i, t) in self.targets.iter().enumerate() {
                    res[i] -= t[(x, y)];
                }
                let corr = &self.pinv * res;
                for a in 0..ki {
                    for b in 0..ki {
                        out[(a * ko + x, b * ko + y)] -= corr[a * ki + b];
                    }
                }
            }
        }
        crate::operator::hermitian_part(&out)
    }

    fn residual(&self, j: &CMatrix) -> f64 {
        let (ki, ko) = (self.k_in, self.k_out);
        let mut worst: f64 = 0.0;
        for (i, t) in self.targets.iter().enumerate() {
            let mut img = -t.clone();
            for a in 0..ki {
                for b in 0..ki {
                    img += j.view((a * ko, b * ko), (ko, ko)) * self.r[(i, a * ki + b)];
                }
            }
            worst = worst.max(img.max_abs());
        }
        worst
    }
}

/// Decides whether some CP map reproduces every pair, by Douglas-Rachford
/// splitting between the affine set of matching Choi matrices and the PSD
/// cone. The problem is first restricted to the supports of the inputs and
/// the outputs, which loses no solutions. Infeasibility is reported once the
/// step length settles at a value well above `tol`.
pub fn cp_feasibility(m: &MapOnStates, opts: FeasibilityOptions) -> Result<Feasibility> {
    if opts.tol <= 0.0 || opts.stall_window == 0 {
        return Err(invalid("tolerance and stall window must be positive"));
    }
    let in_avg = average(&m.inputs.iter().map(|x| x.matrix().clone()).collect::<Vec<_>>())?;
    let out_avg = average(&m.outputs.iter().map(|x| x.matrix().clone()).collect::<Vec<_>>())?;
    let v = support_basis(&in_avg);
    let w = support_basis(&out_avg);
    let (k_in, k_out) = (v.ncols(), w.ncols());
    let inputs: Vec<CMatrix> = m.inputs.iter().map(|x| v.adjoint() * x.matrix() * &v).collect();
    let targets: Vec<CMatrix> = m.outputs.iter().map(|x| w.adjoint() * x.matrix() * &w).collect();
    let affine = AffineConstraints::new(&inputs, targets);

    let lift = |j: &CMatrix| -> Result<ChoiMatrix> {
        let t = kron(&v.map(|z| z.conj()), &w);
        ChoiMatrix::new(m.in_dim, m.out_dim, &t * j * t.adjoint())
    };

    let n = k_in * k_out;
    // Douglas-Rachford on the affine set and the PSD cone, started at the
    // completely depolarizing map. The shadow sequence lives in the affine set.
    let mut z = CMatrix::identity(n, n) * Complex64::from(1.0 / k_out as f64);
    let mut gaps: Vec<f64> = Vec::new();
    let mut gap = f64::INFINITY;
    let mut iter = 0;
    while iter < opts.max_iter {
        let a = affine.project(&z);
        let reflected = &a * Complex64::from(2.0) - &z;
        let (c, _) = psd_projection(&reflected);
        let step = &c - &a;
        gap = step.norm();
        // `c` is PSD, so `gap` bounds the distance of `a` to the cone; an
        // exact check every few iterations catches the rest
        let near = gap <= opts.tol || (iter % 25 == 0 && psd_projection(&a).1 >= -opts.tol);
        if near && affine.residual(&a) <= opts.tol {
            return Ok(Feasibility::Feasible {
                choi: lift(&a)?,
                iterations: iter,
            });
        }
        z += step * Complex64::from(RELAXATION);
        iter += 1;
        gaps.push(gap);
        let k = gaps.len();
        if k > opts.stall_window {
            // on infeasible instances the step length settles at the
            // distance between the two sets
            let old = gaps[k - 1 - opts.stall_window];
            let settled = ((old - gap) / old).abs() < opts.stall_ratio;
            if settled && gap >= 10.0 * opts.tol {
                return Ok(Feasibility::Infeasible {
                    gap,
                    iterations: iter,
                });
            }
        }
    }
    Ok(Feasibility::Undecided {
        gap,
        iterations: iter,
    })
}
