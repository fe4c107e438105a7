//! Machine-readable outputs of the subcommands.

use std::time::{SystemTime, UNIX_EPOCH};

use kistruct_core::cp::{describe_violation, CpVerdict, ViolationReport};
use kistruct_core::ki::KiDecomposition;
use kistruct_core::Error;
use serde::{Deserialize, Serialize};

use crate::io::MatrixData;

/// Fields shared by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Seconds since the Unix epoch; omitted in reproducible mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
}

impl Header {
    pub fn new(command: &str, seed: u64, reproducible: bool) -> Self {
        let generated_unix = (!reproducible).then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            generated_unix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    Violated,
    IllPosed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub dim_l: usize,
    pub dim_r: usize,
    /// Weight of every member on this block.
    pub probabilities: Vec<f64>,
}

pub fn block_table(d: &KiDecomposition) -> Vec<BlockRow> {
    let dims = d.block_dims();
    dims.iter()
        .enumerate()
        .map(|(j, &(dim_l, dim_r))| BlockRow {
            dim_l,
            dim_r,
            probabilities: (0..d.num_members()).map(|i| d.probabilities(i)[j]).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationData {
    pub kind: String,
    pub members: Vec<usize>,
    pub blocks: Vec<usize>,
    pub magnitude: f64,
    pub tolerance: f64,
    pub description: String,
}

impl From<&ViolationReport> for ViolationData {
    fn from(v: &ViolationReport) -> Self {
        Self {
            kind: v.kind.as_str().into(),
            members: v.members.clone(),
            blocks: v.blocks.clone(),
            magnitude: v.magnitude,
            tolerance: v.tolerance,
            description: describe_violation(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllPosedData {
    pub first: usize,
    pub second: usize,
    pub joint_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest trace-norm error of a joint member rebuilt from the certificate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_reconstruction: Option<f64>,
    /// Largest trace-norm error of a reduced member rebuilt from its KI decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_reduced_reconstruction: Option<f64>,
}

/// Result of `check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub header: Header,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub dim_s: usize,
    pub dim_e: usize,
    pub members: usize,
    pub blocks: Vec<BlockRow>,
    pub residuals: Residuals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<ViolationData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ill_posed: Option<IllPosedData>,
}

impl ReportFile {
    pub fn from_verdict(
        header: Header,
        tolerance: f64,
        dims: (usize, usize),
        members: usize,
        verdict: &core::result::Result<CpVerdict, Error>,
    ) -> Option<Self> {
        let base = |v, blocks, residuals| Self {
            header: header.clone(),
            verdict: v,
            tolerance,
            dim_s: dims.0,
            dim_e: dims.1,
            members,
            blocks,
            residuals,
            violation: None,
            ill_posed: None,
        };
        match verdict {
            Ok(CpVerdict::Certified(c)) => {
                let worst = c.reconstruction.iter().copied().fold(0.0, f64::max);
                Some(base(
                    Verdict::Certified,
                    block_table(&c.reduced_ki),
                    Residuals {
                        max_reconstruction: Some(worst),
                        max_reduced_reconstruction: None,
                    },
                ))
            }
            Ok(CpVerdict::Violated(v)) => {
                let mut r = base(
                    Verdict::Violated,
                    block_table(&v.reduced_ki),
                    Residuals {
                        max_reconstruction: None,
                        max_reduced_reconstruction: None,
                    },
                );
                r.violation = Some(v.into());
                Some(r)
            }
            Err(Error::IllPosedInitialCondition {
                first,
                second,
                joint_distance,
            }) => {
                let mut r = base(
                    Verdict::IllPosed,
                    Vec::new(),
                    Residuals {
                        max_reconstruction: None,
                        max_reduced_reconstruction: None,
                    },
                );
                r.ill_posed = Some(IllPosedData {
                    first: *first,
                    second: *second,
                    joint_distance: *joint_distance,
                });
                Some(r)
            }
            Err(_) => None,
        }
    }

    /// Whether the verdict agrees with the embedded numbers.
    pub fn is_consistent(&self) -> bool {
        match self.verdict {
            Verdict::Certified => self
                .residuals
                .max_reconstruction
                .is_some_and(|r| r <= self.tolerance),
            Verdict::Violated => self
                .violation
                .as_ref()
                .is_some_and(|v| v.magnitude > v.tolerance),
            Verdict::IllPosed => self.ill_posed.is_some(),
        }
    }
}

/// Result of `decompose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    #[serde(flatten)]
    pub header: Header,
    pub dim: usize,
    pub members: usize,
    pub blocks: Vec<BlockRow>,
    pub residuals: Residuals,
    pub irreducible: Vec<bool>,
    pub mergeable_pair: Option<(usize, usize)>,
}

/// Result of `assignment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiReport {
    #[serde(flatten)]
    pub header: Header,
    /// `J = Σ_ab |a⟩⟨b| ⊗ Φ(|a⟩⟨b|)`, input index major.
    pub convention: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub choi: MatrixData,
    pub min_eigenvalue: f64,
    pub trace_preservation_defect: f64,
    /// Trace-norm error of `Λ(ρ_s)` against each joint member.
    pub member_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausOperator {
    /// Output environment index.
    pub alpha: usize,
    /// Input environment index.
    pub beta: usize,
    pub matrix: MatrixData,
}

/// Result of `kraus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausReport {
    #[serde(flatten)]
    pub header: Header,
    pub in_dim: usize,
    pub out_dim: usize,
    pub final_dim_s: usize,
    pub final_dim_e: usize,
    pub operators: Vec<KrausOperator>,
    /// `‖Σ K†K − 1‖` in operator norm.
    pub completeness_defect: f64,
    /// Trace-norm error of the Kraus action against `tr_e'(U ρ_se U†)` per member.
    pub member_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInformationRow {
    pub member: usize,
    pub direct: f64,
    /// From the certificate; absent when the family is not certified.
    pub structured: Option<f64>,
}

/// Result of `mutualinfo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInformationReport {
    #[serde(flatten)]
    pub header: Header,
    pub verdict: Verdict,
    /// Natural-log units.
    pub unit: String,
    pub members: Vec<MutualInformationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessData {
    pub coefficients: Vec<f64>,
    pub min_eigenvalue: f64,
    pub input: MatrixData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionVerdict {
    Extendable,
    Refuted,
    Undecided,
}

/// Result of `extend`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    #[serde(flatten)]
    pub header: Header,
    pub verdict: ExtensionVerdict,
    pub pairs: usize,
    pub witness: Option<WitnessData>,
    /// `feasible`, `infeasible` or `undecided`.
    pub feasibility: String,
    pub iterations: usize,
    /// Final distance between the iterates; absent when feasible.
    pub gap: Option<f64>,
    /// Smallest eigenvalue of the Choi matrix found; absent unless feasible.
    pub choi_min_eigenvalue: Option<f64>,
}
