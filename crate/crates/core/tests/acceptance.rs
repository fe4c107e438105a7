//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::time::{Duration, Instant};

use kistruct_core::cp::{
    check_cp_guarantee, kraus_from_unitary, mutual_information, mutual_information_structured,
    reduced_dynamics_choi, reduced_dynamics_direct, CpCertificate, CpVerdict, JointStateFamily,
    CP_TOL,
};
use kistruct_core::extension::{
    cp_feasibility, linear_extension_witness, Feasibility, FeasibilityOptions, MapOnStates,
};
use kistruct_core::families::{
    gen_counterexample, gen_liu_tong, gen_planted_ki, gen_post_selected_family,
    gen_product_family, BlockMode, CounterexampleKind, LiuTongBlock,
};
use kistruct_core::ki::{ki_decompose, verify_ki};
use kistruct_core::operator::{kron, trace_norm};
use kistruct_core::random::{random_density, random_unitary, rng};
use kistruct_core::{BipartitionDims, DensityOperator, Error};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

const RECONSTRUCTION_TOL: f64 = 1e-8;
const CHOI_MIN_EIG: f64 = -1e-9;
const COMPLETENESS_TOL: f64 = 1e-9;
const DOMAIN_TOL: f64 = 1e-8;
const GOLDEN_WITNESS: f64 = -0.618_033_988_749_894_9;
const WITNESS_MATCH_TOL: f64 = 1e-6;
const MI_AGREE_TOL: f64 = 1e-9;
const MI_SUBSTITUTION_TOL: f64 = 1e-10;
const MI_PRODUCT_TOL: f64 = 1e-10;
const MI_BELL_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn report(id: usize, name: &str, o: &Outcome) -> bool {
    let ok = o.pass && o.elapsed < o.budget;
    println!(
        "criterion {id} {}: {name} ({}; {:.1} s of {} s)",
        if ok { "PASS" } else { "FAIL" },
        o.detail,
        o.elapsed.as_secs_f64(),
        o.budget.as_secs()
    );
    ok
}

fn bell() -> DensityOperator {
    let mut v = DVector::<Complex64>::zeros(4);
    v[0] = Complex64::from(core::f64::consts::FRAC_1_SQRT_2);
    v[3] = Complex64::from(core::f64::consts::FRAC_1_SQRT_2);
    DensityOperator::pure(&v).unwrap()
}

fn ket00() -> DensityOperator {
    let mut v = DVector::<Complex64>::zeros(4);
    v[0] = Complex64::from(1.0);
    DensityOperator::pure(&v).unwrap()
}

/// Random `(l, r)` blocks with `Σ l·r ≤ max_dim`.
fn random_blocks<R: Rng>(max_blocks: usize, max_dim: usize, r: &mut R) -> Vec<(usize, usize)> {
    let count = r.gen_range(1..=max_blocks);
    let mut blocks = Vec::new();
    let mut used = 0;
    for _ in 0..count {
        let room = max_dim - used;
        if room == 0 {
            break;
        }
        let l = r.gen_range(1..=room.min(3));
        let rr = r.gen_range(1..=(room / l).min(3));
        used += l * rr;
        blocks.push((l, rr));
    }
    blocks
}

#[derive(Clone, Copy, Debug)]
enum Class {
    Singleton,
    Product,
    LiuTong,
    PostSelected,
}

fn certified_family(class: Class, seed: u64) -> JointStateFamily {
    let mut r = rng(seed ^ 0x5eed);
    let de = r.gen_range(2..=3);
    match class {
        Class::Singleton => {
            let ds = r.gen_range(2..=4);
            let dims = BipartitionDims::new(ds, de).unwrap();
            JointStateFamily::new(dims, vec![random_density(ds * de, &mut r)]).unwrap()
        }
        Class::Product => gen_product_family(r.gen_range(2..=4), de, r.gen_range(2..=5), seed).unwrap(),
        Class::LiuTong => {
            let n = r.gen_range(1..=3);
            let mut blocks = Vec::new();
            let mut used = 0;
            for _ in 0..n {
                if used == 4 {
                    break;
                }
                let dim = r.gen_range(1..=(4 - used).min(2));
                used += dim;
                let mode = match r.gen_range(0..3) {
                    0 => BlockMode::Fixed,
                    1 => BlockMode::Entangled,
                    _ => BlockMode::Free,
                };
                blocks.push(LiuTongBlock { dim, mode });
            }
            gen_liu_tong(&blocks, de, r.gen_range(2..=5), seed).unwrap()
        }
        Class::PostSelected => {
            let blocks = random_blocks(3, 4, &mut r);
            gen_post_selected_family(&blocks, de, r.gen_range(2..=5), seed).unwrap()
        }
    }
}

fn certify(f: &JointStateFamily, seed: u64) -> Option<CpCertificate> {
    match check_cp_guarantee(f, seed, CP_TOL) {
        Ok(CpVerdict::Certified(c)) => Some(c),
        _ => None,
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut exact = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let blocks = random_blocks(3, 8, &mut r);
        let members = r.gen_range(2..=5);
        let planted = gen_planted_ki(&blocks, members, seed).unwrap();
        let Ok(d) = ki_decompose(&planted.members, seed, RECONSTRUCTION_TOL) else {
            continue;
        };
        let mut got = d.block_dims();
        let mut want = planted.block_dims.clone();
        got.sort_unstable();
        want.sort_unstable();
        if got == want {
            exact += 1;
        }
        worst = worst.max(verify_ki(&d, &planted.members).unwrap().max_reconstruction());
    }
    Outcome {
        pass: exact == 100 && worst <= RECONSTRUCTION_TOL,
        detail: format!("{exact}/100 exact block dims, worst reconstruction {worst:.2e}"),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(60),
    }
}

fn final_partitions(dims: BipartitionDims) -> [BipartitionDims; 2] {
    let n = dims.joint();
    let other = if dims.dim_s != dims.dim_e {
        BipartitionDims::new(dims.dim_e, dims.dim_s).unwrap()
    } else {
        BipartitionDims::new(n, 1).unwrap()
    };
    [dims, other]
}

fn criterion_2(families: &[JointStateFamily]) -> Outcome {
    let start = Instant::now();
    let mut failures = 0;
    let mut min_eig = f64::INFINITY;
    let mut completeness: f64 = 0.0;
    let mut domain: f64 = 0.0;
    for (k, fam) in families.iter().enumerate() {
        let Some(cert) = certify(fam, k as u64) else {
            failures += 1;
            continue;
        };
        let n = fam.dims().joint();
        for t in 0..20u64 {
            let u = random_unitary(n, &mut rng(7000 + 100 * k as u64 + t));
            for final_dims in final_partitions(fam.dims()) {
                let choi = reduced_dynamics_choi(&cert, &u, final_dims).unwrap();
                min_eig = min_eig.min(choi.min_eigenvalue());
                let kraus = kraus_from_unitary(&cert, &u, final_dims).unwrap();
                completeness = completeness.max(kraus.completeness_defect());
                for (rho, red) in fam.members().iter().zip(fam.reduced()) {
                    let direct = reduced_dynamics_direct(rho, &u, final_dims).unwrap();
                    let via = kraus.apply(red.matrix()).unwrap();
                    domain = domain.max(trace_norm(&(via - direct.matrix())));
                }
            }
        }
    }
    Outcome {
        pass: failures == 0
            && min_eig >= CHOI_MIN_EIG
            && completeness <= COMPLETENESS_TOL
            && domain <= DOMAIN_TOL,
        detail: format!(
            "{} families x 20 U x 2 partitions, min Choi eig {min_eig:.2e}, completeness {completeness:.2e}, domain {domain:.2e}",
            families.len()
        ),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(120),
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let dims = BipartitionDims::new(2, 2).unwrap();
    let fam = JointStateFamily::new(dims, vec![bell(), ket00()]).unwrap();
    let rejected = matches!(check_cp_guarantee(&fam, 0, CP_TOL), Ok(CpVerdict::Violated(_)));
    let m = MapOnStates::assignment_instance(&fam).unwrap();
    let witness = linear_extension_witness(&m, 0).map(|w| w.min_eigenvalue);
    let matches = witness.is_some_and(|l| (l - GOLDEN_WITNESS).abs() <= WITNESS_MATCH_TOL);
    let verdict = cp_feasibility(&m, FeasibilityOptions::default()).unwrap();
    Outcome {
        pass: rejected && matches && !verdict.is_feasible(),
        detail: format!(
            "rejected {rejected}, witness eigenvalue {witness:?}, feasibility {}",
            verdict.label()
        ),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(5),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut agree: f64 = 0.0;
    let mut subst: f64 = 0.0;
    let mut members = 0;
    let mut trials = 0;
    let mut seed = 0u64;
    let mut r = rng(4040);
    while members < 50 {
        let fam = certified_family(Class::PostSelected, 400 + seed);
        seed += 1;
        let Some(cert) = certify(&fam, seed) else {
            continue;
        };
        for (m, rho) in fam.members().iter().enumerate() {
            if members == 50 {
                break;
            }
            members += 1;
            let direct = mutual_information(rho, fam.dims()).unwrap();
            let structured = mutual_information_structured(&cert, m).unwrap();
            agree = agree.max((direct - structured).abs());
            let parts: Vec<DensityOperator> = cert
                .reduced_ki
                .block_dims()
                .iter()
                .map(|&(l, _)| random_density(l, &mut r))
                .collect();
            let swapped = cert.with_quantum_parts(m, &parts).unwrap();
            let i = mutual_information(&swapped, fam.dims()).unwrap();
            subst = subst.max((i - direct).abs());
            trials += 1;
        }
    }
    let mut product: f64 = 0.0;
    for k in 0..50u64 {
        let fam = certified_family(Class::Product, 500 + k);
        for rho in fam.members() {
            product = product.max(mutual_information(rho, fam.dims()).unwrap().abs());
        }
    }
    let dims = BipartitionDims::new(2, 2).unwrap();
    let bell_i = mutual_information(&bell(), dims).unwrap();
    let bell_err = (bell_i - 2.0 * core::f64::consts::LN_2).abs();
    // a product of two random states, outside any generated family
    let p = kron(random_density(2, &mut r).matrix(), random_density(2, &mut r).matrix());
    product = product.max(mutual_information(&DensityOperator::new(p).unwrap(), dims).unwrap().abs());
    Outcome {
        pass: members == 50
            && trials == 50
            && agree <= MI_AGREE_TOL
            && subst <= MI_SUBSTITUTION_TOL
            && product <= MI_PRODUCT_TOL
            && bell_err <= MI_BELL_TOL,
        detail: format!(
            "agreement {agree:.2e} over {members} members, substitution {subst:.2e} over {trials} trials, product {product:.2e}, Bell error {bell_err:.2e}"
        ),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(10),
    }
}

struct Corpus {
    certified: Vec<(Class, JointStateFamily)>,
    rejected: Vec<(CounterexampleKind, JointStateFamily)>,
    ill_posed: JointStateFamily,
}

fn corpus() -> Corpus {
    let mut certified = Vec::new();
    for (c, class) in [Class::Singleton, Class::Product, Class::LiuTong, Class::PostSelected]
        .into_iter()
        .enumerate()
    {
        for k in 0..50u64 {
            certified.push((class, certified_family(class, 10_000 * (c as u64 + 1) + k)));
        }
    }
    let mut rejected = Vec::new();
    for k in 0..50u64 {
        let mut r = rng(90_000 + k);
        let kind = CounterexampleKind::ALL[k as usize % CounterexampleKind::ALL.len()];
        let (ds, de) = (r.gen_range(2..=4), r.gen_range(2..=3));
        rejected.push((kind, gen_counterexample(kind, ds, de, k).unwrap()));
    }
    let dims = BipartitionDims::new(2, 2).unwrap();
    let ill_posed = JointStateFamily::new(dims, vec![bell(), DensityOperator::maximally_mixed(4).unwrap()]).unwrap();
    Corpus {
        certified,
        rejected,
        ill_posed,
    }
}

fn criterion_5(c: &Corpus) -> Outcome {
    let start = Instant::now();
    let mut missed = Vec::new();
    for (k, (class, fam)) in c.certified.iter().enumerate() {
        if certify(fam, k as u64).is_none() {
            missed.push(format!("{class:?}#{k}"));
        }
    }
    let mut accepted = Vec::new();
    for (k, (kind, fam)) in c.rejected.iter().enumerate() {
        if !matches!(check_cp_guarantee(fam, k as u64, CP_TOL), Ok(CpVerdict::Violated(_))) {
            accepted.push(format!("{}#{k}", kind.as_str()));
        }
    }
    let ill = matches!(
        check_cp_guarantee(&c.ill_posed, 0, CP_TOL),
        Err(Error::IllPosedInitialCondition { .. })
    );
    Outcome {
        pass: missed.is_empty() && accepted.is_empty() && ill,
        detail: format!(
            "{}/{} certified, {}/{} rejected, ill-posed flagged {ill}{}{}",
            c.certified.len() - missed.len(),
            c.certified.len(),
            c.rejected.len() - accepted.len(),
            c.rejected.len(),
            if missed.is_empty() { String::new() } else { format!(", not certified {missed:?}") },
            if accepted.is_empty() { String::new() } else { format!(", not rejected {accepted:?}") },
        ),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(120),
    }
}

fn criterion_6(crit2: &[JointStateFamily], c: &Corpus) -> Outcome {
    let start = Instant::now();
    let opts = FeasibilityOptions::default();
    let mut inconsistent = Vec::new();
    let mut checked = 0;
    let positives = crit2.iter().chain(c.certified.iter().map(|(_, f)| f));
    for (k, fam) in positives.enumerate() {
        checked += 1;
        let structural = certify(fam, k as u64).is_some();
        let m = MapOnStates::assignment_instance(fam).unwrap();
        let verdict = cp_feasibility(&m, opts).unwrap();
        if structural != verdict.is_feasible() {
            inconsistent.push(format!("certified#{k}: {}", verdict.label()));
        }
    }
    for (k, (kind, fam)) in c.rejected.iter().enumerate() {
        checked += 1;
        let m = MapOnStates::assignment_instance(fam).unwrap();
        let refuted = linear_extension_witness(&m, k as u64).is_some()
            || matches!(cp_feasibility(&m, opts).unwrap(), Feasibility::Infeasible { .. });
        if !refuted {
            inconsistent.push(format!("{}#{k}", kind.as_str()));
        }
    }
    // identical reduced states leave no map to test
    checked += 1;
    if MapOnStates::assignment_instance(&c.ill_posed).is_ok() {
        inconsistent.push("ill-posed pair accepted as a map".into());
    }
    Outcome {
        pass: inconsistent.is_empty(),
        detail: format!(
            "{}/{checked} consistent{}",
            checked - inconsistent.len(),
            if inconsistent.is_empty() { String::new() } else { format!(", inconsistent {inconsistent:?}") }
        ),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(180),
    }
}

#[test]
fn acceptance() {
    let suite = Instant::now();
    let mut ok = report(1, "planted KI recovery", &criterion_1());

    let classes = [Class::Product, Class::LiuTong, Class::PostSelected, Class::Singleton];
    let crit2: Vec<JointStateFamily> = (0..25u64)
        .map(|k| certified_family(classes[k as usize % classes.len()], 2000 + k))
        .collect();
    ok &= report(2, "certified families give CP reduced dynamics", &criterion_2(&crit2));
    ok &= report(3, "Bell versus product is refuted", &criterion_3());
    ok &= report(4, "mutual information", &criterion_4());
    let c = corpus();
    ok &= report(5, "family-class closure", &criterion_5(&c));
    ok &= report(6, "oracle cross-validation", &criterion_6(&crit2, &c));
    let total = suite.elapsed();
    let in_budget = total < Duration::from_secs(600);
    println!(
        "suite {}: {:.1} s of 600 s",
        if in_budget { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    assert!(ok && in_budget, "acceptance criteria failed");
}
