//! JSON file formats. Matrices are stored as two row-major real arrays `re`
//! and `im`; joint indices are system-major (`s * dim_e + e`).

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use kistruct_core::cp::JointStateFamily;
use kistruct_core::{BipartitionDims, CMatrix, DensityOperator};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const CONVENTION: &str = "system-major";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixData {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixData {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    /// Converts to a `rows × cols` matrix; `field` names the value in errors.
    pub fn to_matrix(&self, rows: usize, cols: usize, field: &str) -> Result<CMatrix> {
        for (name, part) in [("re", &self.re), ("im", &self.im)] {
            if part.len() != rows {
                bail!("{field}.{name}: expected {rows} rows, found {}", part.len());
            }
            if let Some((i, r)) = part.iter().enumerate().find(|(_, r)| r.len() != cols) {
                bail!("{field}.{name}[{i}]: expected {cols} entries, found {}", r.len());
            }
        }
        Ok(CMatrix::from_fn(rows, cols, |i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }
}

fn check_convention(c: &str) -> Result<()> {
    if c != CONVENTION {
        bail!("convention: expected \"{CONVENTION}\", found \"{c}\"");
    }
    Ok(())
}

fn density(m: CMatrix, field: &str) -> Result<DensityOperator> {
    DensityOperator::new(m).with_context(|| format!("{field}: not a density operator"))
}

/// A family of joint states on `C^{dim_s} ⊗ C^{dim_e}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub convention: String,
    pub dim_s: usize,
    pub dim_e: usize,
    pub states: Vec<MatrixData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

/// How a generated file was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub kind: String,
    pub seed: u64,
}

impl FamilyFile {
    pub fn from_family(f: &JointStateFamily) -> Self {
        let dims = f.dims();
        Self {
            convention: CONVENTION.into(),
            dim_s: dims.dim_s,
            dim_e: dims.dim_e,
            states: f.members().iter().map(|m| MatrixData::from_matrix(m.matrix())).collect(),
            generator: None,
        }
    }

    pub fn to_family(&self) -> Result<JointStateFamily> {
        check_convention(&self.convention)?;
        let dims = BipartitionDims::new(self.dim_s, self.dim_e).map_err(|e| anyhow!("dim_s, dim_e: {e}"))?;
        let n = dims.joint();
        let members = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let field = format!("states[{i}]");
                density(s.to_matrix(n, n, &field)?, &field)
            })
            .collect::<Result<Vec<_>>>()?;
        JointStateFamily::new(dims, members).map_err(|e| anyhow!("states: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryFile {
    pub convention: String,
    pub dim: usize,
    pub matrix: MatrixData,
}

impl UnitaryFile {
    pub fn new(m: &CMatrix) -> Self {
        Self {
            convention: CONVENTION.into(),
            dim: m.nrows(),
            matrix: MatrixData::from_matrix(m),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        check_convention(&self.convention)?;
        let u = self.matrix.to_matrix(self.dim, self.dim, "matrix")?;
        let defect = (u.adjoint() * &u - CMatrix::identity(self.dim, self.dim)).norm();
        if defect > 1e-9 {
            bail!("matrix: not unitary (defect {defect:.3e})");
        }
        Ok(u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairData {
    pub input: MatrixData,
    pub output: MatrixData,
}

/// A map given on finitely many states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsFile {
    pub convention: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub pairs: Vec<PairData>,
}

impl PairsFile {
    pub fn new(in_dim: usize, out_dim: usize, pairs: &[(CMatrix, CMatrix)]) -> Self {
        Self {
            convention: CONVENTION.into(),
            in_dim,
            out_dim,
            pairs: pairs
                .iter()
                .map(|(a, b)| PairData {
                    input: MatrixData::from_matrix(a),
                    output: MatrixData::from_matrix(b),
                })
                .collect(),
        }
    }

    pub fn to_pairs(&self) -> Result<Vec<(DensityOperator, DensityOperator)>> {
        check_convention(&self.convention)?;
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let fi = format!("pairs[{i}].input");
                let fo = format!("pairs[{i}].output");
                let a = density(p.input.to_matrix(self.in_dim, self.in_dim, &fi)?, &fi)?;
                let b = density(p.output.to_matrix(self.out_dim, self.out_dim, &fo)?, &fo)?;
                Ok((a, b))
            })
            .collect()
    }
}

/// Reads `path`, or stdin for `-`.
pub fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

/// Parses JSON; syntax and schema errors carry line and column.
pub fn parse_json<T: DeserializeOwned>(text: &str, source: &Path) -> Result<T> {
    serde_json::from_str(text).with_context(|| format!("parsing {}", source.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, path)
}

pub fn read_family(path: &Path) -> Result<JointStateFamily> {
    let file: FamilyFile = read_json(path)?;
    file.to_family().with_context(|| format!("validating {}", path.display()))
}

/// Pretty JSON with a trailing newline, to `path` or stdout when `None`.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) if p.as_os_str() != "-" => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
