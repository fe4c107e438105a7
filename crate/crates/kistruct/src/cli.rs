//! Subcommands. Each returns an [`Outcome`]; errors map to exit code 1.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kistruct_core::cp::{
    assignment_map, check_cp_guarantee, kraus_from_unitary, mutual_information,
    mutual_information_structured, reduced_dynamics_direct, CpVerdict, JointStateFamily, CP_TOL,
};
use kistruct_core::extension::{
    cp_feasibility, linear_extension_witness, Feasibility, FeasibilityOptions, MapOnStates,
};
use kistruct_core::families::{
    gen_counterexample, gen_liu_tong, gen_planted_ki, gen_post_selected_family,
    gen_product_family, BlockMode, CounterexampleKind, LiuTongBlock,
};
use kistruct_core::ki::{ki_decompose, verify_ki, RECONSTRUCTION_TOL};
use kistruct_core::operator::trace_norm;
use kistruct_core::random::{random_density, rng};
use kistruct_core::{BipartitionDims, DensityOperator};
use log::{debug, info, warn};

use crate::io::{read_family, read_json, write_json, FamilyFile, MatrixData, PairsFile, UnitaryFile};
use crate::report::{
    block_table, ChoiReport, DecompositionReport, ExtensionReport, ExtensionVerdict, Header,
    KrausOperator, KrausReport, MutualInformationReport, MutualInformationRow, ReportFile,
    Residuals, Verdict, WitnessData,
};

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Certified, extendable, or a plain success.
    Positive,
    /// Violated, ill-posed, refuted or undecided.
    Negative,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Positive => 0,
            Outcome::Negative => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kistruct",
    version,
    about = "Decide whether a family of joint system-environment states admits CP reduced dynamics",
    after_help = "Exit codes: 0 certified or success, 2 negative verdict, 1 error.\n\
                  Diagnostics go to stderr; set KISTRUCT_LOG to error, warn, info or debug.\n\
                  A path of \"-\" reads stdin."
)]
pub struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Omit the timestamp so identical inputs give identical output.
    #[arg(long, global = true)]
    pub reproducible: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Analysis {
    /// Family file (`-` for stdin).
    pub family: PathBuf,
    /// Tolerance of the structural test.
    #[arg(long, default_value_t = CP_TOL)]
    pub atol: f64,
    /// Seed of the randomized algebra decomposition.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test the structural condition and report the verdict.
    Check(Analysis),
    /// KI decomposition of the states in a file, taken as they are.
    Decompose {
        #[command(flatten)]
        analysis: Analysis,
        /// Decompose the reduced states `tr_e ρ_se` instead.
        #[arg(long)]
        trace_env: bool,
    },
    /// Choi matrix of the assignment map of a certified family.
    Assignment(Analysis),
    /// Kraus operators of the reduced dynamics under a joint unitary.
    Kraus {
        #[command(flatten)]
        analysis: Analysis,
        /// Unitary file on the joint space.
        #[arg(long)]
        unitary: PathBuf,
        /// Final system and environment dimensions.
        #[arg(long, num_args = 2, value_names = ["DIM_S", "DIM_E"])]
        dims_out: Vec<usize>,
    },
    /// Mutual information of every member, directly and from the certificate.
    Mutualinfo(Analysis),
    /// Write a seeded family file.
    Generate(GenerateArgs),
    /// Decide whether a map given on finitely many states has a CP extension.
    Extend(ExtendArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// One random joint state.
    Singleton,
    /// Random system states with one shared environment state.
    Product,
    /// Fixed and free blocks; needs `--blocks 1:fixed,2:free`.
    LiuTong,
    /// Post-selected canonical Markov chain; needs `--blocks 2x1,1x2`.
    PostSelected,
    /// Planted KI family on one space (dim_e = 1); needs `--blocks 2x1,1x2`.
    Planted,
    BellVsProduct,
    CoherentBlocks,
    VaryingOmega,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// System dimension; implied by `--blocks` when that is given.
    pub dim_s: Option<usize>,
    /// Environment dimension.
    pub dim_e: Option<usize>,
    /// Number of members; ignored for singleton and counterexample kinds.
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    /// Block layout for liu-tong, post-selected and planted.
    #[arg(long)]
    pub blocks: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    /// Pairs file.
    #[arg(long, conflicts_with = "family", required_unless_present = "family")]
    pub pairs: Option<PathBuf>,
    /// Use the map from reduced to joint states of this family instead.
    #[arg(long)]
    pub family: Option<PathBuf>,
    #[arg(long, default_value_t = FeasibilityOptions::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = FeasibilityOptions::default().tol)]
    pub tol: f64,
    /// Seed of the witness search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// One `l x r` entry of a block layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape(pub usize, pub usize);

impl FromStr for BlockShape {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let (l, r) = s
            .split_once('x')
            .ok_or_else(|| anyhow!("block \"{s}\": expected LxR"))?;
        Ok(Self(l.trim().parse()?, r.trim().parse()?))
    }
}

fn parse_list<T: FromStr<Err = anyhow::Error>>(spec: &str) -> Result<Vec<T>> {
    spec.split(',').map(|p| p.trim().parse()).collect()
}

struct LiuTongSpec(LiuTongBlock);

impl FromStr for LiuTongSpec {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let (d, m) = s
            .split_once(':')
            .ok_or_else(|| anyhow!("block \"{s}\": expected DIM:MODE"))?;
        let mode = match m.trim() {
            "fixed" => BlockMode::Fixed,
            "entangled" => BlockMode::Entangled,
            "free" => BlockMode::Free,
            other => bail!("block \"{s}\": unknown mode \"{other}\" (fixed, entangled, free)"),
        };
        Ok(Self(LiuTongBlock {
            dim: d.trim().parse()?,
            mode,
        }))
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let out = cli.out.as_deref();
    let repro = cli.reproducible;
    match &cli.command {
        Command::Check(a) => check(a, out, repro),
        Command::Decompose { analysis, trace_env } => decompose(analysis, *trace_env, out, repro),
        Command::Assignment(a) => assignment(a, out, repro),
        Command::Kraus {
            analysis,
            unitary,
            dims_out,
        } => kraus(analysis, unitary, dims_out, out, repro),
        Command::Mutualinfo(a) => mutualinfo(a, out, repro),
        Command::Generate(g) => generate(g, out),
        Command::Extend(e) => extend(e, out, repro),
    }
}

fn check_report(family: &JointStateFamily, a: &Analysis, repro: bool) -> Result<(ReportFile, Option<CpVerdict>)> {
    let dims = family.dims();
    let verdict = check_cp_guarantee(family, a.seed, a.atol);
    let report = ReportFile::from_verdict(
        Header::new("check", a.seed, repro),
        a.atol,
        (dims.dim_s, dims.dim_e),
        family.len(),
        &verdict,
    );
    match (report, verdict) {
        (Some(r), v) => {
            if !r.is_consistent() {
                warn!("verdict {:?} disagrees with its residuals", r.verdict);
            }
            Ok((r, v.ok()))
        }
        (None, Err(e)) => Err(e).context("structural test"),
        (None, Ok(_)) => unreachable!("every verdict has a report"),
    }
}

fn check(a: &Analysis, out: Option<&std::path::Path>, repro: bool) -> Result<Outcome> {
    let family = read_family(&a.family)?;
    info!("checking {} members on {}x{}", family.len(), family.dims().dim_s, family.dims().dim_e);
    let (report, _) = check_report(&family, a, repro)?;
    write_json(&report, out)?;
    Ok(match report.verdict {
        Verdict::Certified => Outcome::Positive,
        _ => Outcome::Negative,
    })
}

fn decompose(a: &Analysis, trace_env: bool, out: Option<&std::path::Path>, repro: bool) -> Result<Outcome> {
    let family = read_family(&a.family)?;
    let states: Vec<DensityOperator> = if trace_env {
        family.reduced()
    } else {
        family.members().to_vec()
    };
    let tol = a.atol.max(RECONSTRUCTION_TOL);
    let d = ki_decompose(&states, a.seed, tol).context("KI decomposition")?;
    let v = verify_ki(&d, &states)?;
    debug!("reconstruction errors {:?}", v.reconstruction);
    let report = DecompositionReport {
        header: Header::new("decompose", a.seed, repro),
        dim: states[0].dim(),
        members: states.len(),
        blocks: block_table(&d),
        residuals: Residuals {
            max_reconstruction: None,
            max_reduced_reconstruction: Some(v.max_reconstruction()),
        },
        irreducible: v.irreducible.clone(),
        mergeable_pair: v.mergeable_pair,
    };
    write_json(&report, out)?;
    Ok(Outcome::Positive)
}

/// Writes the check report and returns `None` unless the family is certified.
fn certified_or_report(
    family: &JointStateFamily,
    a: &Analysis,
    out: Option<&std::path::Path>,
    repro: bool,
) -> Result<Option<kistruct_core::cp::CpCertificate>> {
    let (report, verdict) = check_report(family, a, repro)?;
    match verdict {
        Some(CpVerdict::Certified(c)) => Ok(Some(c)),
        _ => {
            warn!("family is not certified; writing the check report");
            write_json(&report, out)?;
            Ok(None)
        }
    }
}

fn assignment(a: &Analysis, out: Option<&std::path::Path>, repro: bool) -> Result<Outcome> {
    let family = read_family(&a.family)?;
    let Some(cert) = certified_or_report(&family, a, out, repro)? else {
        return Ok(Outcome::Negative);
    };
    let choi = assignment_map(&cert)?;
    let member_residuals = family
        .members()
        .iter()
        .zip(family.reduced())
        .map(|(rho, red)| Ok(trace_norm(&(choi.apply(red.matrix())? - rho.matrix()))))
        .collect::<Result<Vec<f64>>>()?;
    let report = ChoiReport {
        header: Header::new("assignment", a.seed, repro),
        convention: "sum_ab |a><b| (x) Phi(|a><b|), system-major".into(),
        in_dim: choi.in_dim(),
        out_dim: choi.out_dim(),
        choi: MatrixData::from_matrix(choi.matrix()),
        min_eigenvalue: choi.min_eigenvalue(),
        trace_preservation_defect: choi.trace_preservation_defect(),
        member_residuals,
    };
    write_json(&report, out)?;
    Ok(Outcome::Positive)
}

fn kraus(
    a: &Analysis,
    unitary: &std::path::Path,
    dims_out: &[usize],
    out: Option<&std::path::Path>,
    repro: bool,
) -> Result<Outcome> {
    let family = read_family(&a.family)?;
    let u = read_json::<UnitaryFile>(unitary)?
        .to_matrix()
        .with_context(|| format!("validating {}", unitary.display()))?;
    let final_dims = match dims_out {
        [s, e] => BipartitionDims::new(*s, *e).map_err(|e| anyhow!("--dims-out: {e}"))?,
        _ => family.dims(),
    };
    let Some(cert) = certified_or_report(&family, a, out, repro)? else {
        return Ok(Outcome::Negative);
    };
    let k = kraus_from_unitary(&cert, &u, final_dims)?;
    let member_residuals = family
        .members()
        .iter()
        .zip(family.reduced())
        .map(|(rho, red)| {
            let direct = reduced_dynamics_direct(rho, &u, final_dims)?;
            Ok(trace_norm(&(k.apply(red.matrix())? - direct.matrix())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let report = KrausReport {
        header: Header::new("kraus", a.seed, repro),
        in_dim: k.in_dim(),
        out_dim: k.out_dim(),
        final_dim_s: final_dims.dim_s,
        final_dim_e: final_dims.dim_e,
        operators: k
            .operators()
            .iter()
            .zip(k.labels())
            .map(|(m, &(alpha, beta))| KrausOperator {
                alpha,
                beta,
                matrix: MatrixData::from_matrix(m),
            })
            .collect(),
        completeness_defect: k.completeness_defect(),
        member_residuals,
    };
    write_json(&report, out)?;
    Ok(Outcome::Positive)
}

fn mutualinfo(a: &Analysis, out: Option<&std::path::Path>, repro: bool) -> Result<Outcome> {
    let family = read_family(&a.family)?;
    let (report, verdict) = check_report(&family, a, repro)?;
    let cert = verdict.as_ref().and_then(|v| v.certificate());
    let members = family
        .members()
        .iter()
        .enumerate()
        .map(|(i, rho)| {
            Ok(MutualInformationRow {
                member: i,
                direct: mutual_information(rho, family.dims())?,
                structured: cert.map(|c| mutual_information_structured(c, i)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out_report = MutualInformationReport {
        header: Header::new("mutualinfo", a.seed, repro),
        verdict: report.verdict,
        unit: "nat".into(),
        members,
    };
    write_json(&out_report, out)?;
    Ok(match report.verdict {
        Verdict::Certified => Outcome::Positive,
        _ => Outcome::Negative,
    })
}

fn require_dims(g: &GenerateArgs) -> Result<(usize, usize)> {
    match (g.dim_s, g.dim_e) {
        (Some(s), Some(e)) => Ok((s, e)),
        _ => bail!("--kind {:?} needs DIM_S and DIM_E", g.kind),
    }
}

fn blocks_spec(g: &GenerateArgs) -> Result<&str> {
    g.blocks
        .as_deref()
        .ok_or_else(|| anyhow!("--kind {:?} needs --blocks", g.kind))
}

/// Checks optional positional dims against the ones implied by the blocks.
fn match_dims(g: &GenerateArgs, dim_s: usize, dim_e: Option<usize>) -> Result<()> {
    if let Some(s) = g.dim_s {
        if s != dim_s {
            bail!("DIM_S is {s} but the blocks give {dim_s}");
        }
    }
    if let (Some(e), Some(want)) = (g.dim_e, dim_e) {
        if e != want {
            bail!("DIM_E is {e} but this kind gives {want}");
        }
    }
    Ok(())
}

fn generate(g: &GenerateArgs, out: Option<&std::path::Path>) -> Result<Outcome> {
    let family = match g.kind {
        Kind::Singleton => {
            let (s, e) = require_dims(g)?;
            let dims = BipartitionDims::new(s, e)?;
            JointStateFamily::new(dims, vec![random_density(s * e, &mut rng(g.seed))])?
        }
        Kind::Product => {
            let (s, e) = require_dims(g)?;
            gen_product_family(s, e, g.count, g.seed)?
        }
        Kind::LiuTong => {
            let blocks: Vec<LiuTongBlock> = parse_list::<LiuTongSpec>(blocks_spec(g)?)?
                .into_iter()
                .map(|b| b.0)
                .collect();
            let e = g.dim_e.ok_or_else(|| anyhow!("--kind liu-tong needs DIM_E"))?;
            match_dims(g, blocks.iter().map(|b| b.dim).sum(), None)?;
            gen_liu_tong(&blocks, e, g.count, g.seed)?
        }
        Kind::PostSelected => {
            let blocks: Vec<(usize, usize)> =
                parse_list::<BlockShape>(blocks_spec(g)?)?.into_iter().map(|b| (b.0, b.1)).collect();
            let e = g.dim_e.ok_or_else(|| anyhow!("--kind post-selected needs DIM_E"))?;
            match_dims(g, blocks.iter().map(|(l, r)| l * r).sum(), None)?;
            gen_post_selected_family(&blocks, e, g.count, g.seed)?
        }
        Kind::Planted => {
            let blocks: Vec<(usize, usize)> =
                parse_list::<BlockShape>(blocks_spec(g)?)?.into_iter().map(|b| (b.0, b.1)).collect();
            let d: usize = blocks.iter().map(|(l, r)| l * r).sum();
            match_dims(g, d, Some(1))?;
            let planted = gen_planted_ki(&blocks, g.count, g.seed)?;
            JointStateFamily::new(BipartitionDims::new(d, 1)?, planted.members)?
        }
        Kind::BellVsProduct | Kind::CoherentBlocks | Kind::VaryingOmega => {
            let kind = match g.kind {
                Kind::BellVsProduct => CounterexampleKind::BellVsProduct,
                Kind::CoherentBlocks => CounterexampleKind::CoherentBlocks,
                _ => CounterexampleKind::VaryingOmega,
            };
            let (s, e) = require_dims(g)?;
            gen_counterexample(kind, s, e, g.seed)?
        }
    };
    let mut file = FamilyFile::from_family(&family);
    file.generator = Some(crate::io::Generator {
        kind: g.kind.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default(),
        seed: g.seed,
    });
    write_json(&file, out)?;
    Ok(Outcome::Positive)
}

fn extend(e: &ExtendArgs, out: Option<&std::path::Path>, repro: bool) -> Result<Outcome> {
    let map = match (&e.pairs, &e.family) {
        (Some(p), _) => {
            let file: PairsFile = read_json(p)?;
            let pairs = file.to_pairs().with_context(|| format!("validating {}", p.display()))?;
            MapOnStates::new(pairs).with_context(|| format!("validating {}", p.display()))?
        }
        (None, Some(f)) => MapOnStates::assignment_instance(&read_family(f)?)?,
        (None, None) => bail!("either --pairs or --family is required"),
    };
    let witness = linear_extension_witness(&map, e.seed);
    let opts = FeasibilityOptions {
        max_iter: e.max_iter,
        tol: e.tol,
        ..FeasibilityOptions::default()
    };
    let feasibility = cp_feasibility(&map, opts)?;
    if witness.is_some() && feasibility.is_feasible() {
        warn!("witness found but the Choi search reports feasible; trusting the witness");
    }
    let (iterations, gap, choi_min) = match &feasibility {
        Feasibility::Feasible { choi, iterations } => (*iterations, None, Some(choi.min_eigenvalue())),
        Feasibility::Infeasible { gap, iterations } | Feasibility::Undecided { gap, iterations } => {
            (*iterations, Some(*gap), None)
        }
    };
    let verdict = if witness.is_some() || feasibility.is_infeasible() {
        ExtensionVerdict::Refuted
    } else if feasibility.is_feasible() {
        ExtensionVerdict::Extendable
    } else {
        ExtensionVerdict::Undecided
    };
    let report = ExtensionReport {
        header: Header::new("extend", e.seed, repro),
        verdict,
        pairs: map.len(),
        witness: witness.map(|w| WitnessData {
            coefficients: w.coefficients,
            min_eigenvalue: w.min_eigenvalue,
            input: MatrixData::from_matrix(&w.input),
        }),
        feasibility: feasibility.label().into(),
        iterations,
        gap,
        choi_min_eigenvalue: choi_min,
    };
    write_json(&report, out)?;
    Ok(match verdict {
        ExtensionVerdict::Extendable => Outcome::Positive,
        _ => Outcome::Negative,
    })
}
