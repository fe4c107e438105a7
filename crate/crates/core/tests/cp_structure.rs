use kistruct_core::cp::{
    assignment_map, check_cp_guarantee, check_injectivity, kraus_from_unitary,
    mutual_information, mutual_information_structured, reduced_dynamics_choi,
    reduced_dynamics_direct, reduced_dynamics_via_assignment, ChoiMatrix, CpCertificate,
    JointStateFamily, ViolationKind, CP_TOL,
};
use kistruct_core::families::{
    gen_counterexample, gen_liu_tong, gen_post_selected_family, gen_product_family,
    BlockMode, CounterexampleKind, LiuTongBlock,
};
use kistruct_core::operator::{kron, partial_trace, trace_norm};
use kistruct_core::random::{random_density, random_unitary, rng};
use kistruct_core::{BipartitionDims, CMatrix, DensityOperator, Error, Subsystem};
use nalgebra::DVector;
use num_complex::Complex64;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

fn bell() -> DensityOperator {
    let mut v = DVector::<Complex64>::zeros(4);
    v[0] = c(core::f64::consts::FRAC_1_SQRT_2);
    v[3] = c(core::f64::consts::FRAC_1_SQRT_2);
    DensityOperator::pure(&v).unwrap()
}

fn certify(f: &JointStateFamily) -> CpCertificate {
    match check_cp_guarantee(f, 1, CP_TOL).unwrap().certificate() {
        Some(c) => c.clone(),
        None => panic!("expected a certificate"),
    }
}

fn swap(ds: usize, de: usize) -> CMatrix {
    let n = ds * de;
    CMatrix::from_fn(n, n, |row, col| {
        let (s, e) = (col / de, col % de);
        if row == e * ds + s {
            c(1.0)
        } else {
            c(0.0)
        }
    })
}

#[test]
fn injectivity_examples() {
    let dims = BipartitionDims::new(2, 2).unwrap();
    let omega = random_density(2, &mut rng(1));
    let a = random_density(2, &mut rng(2));
    let b = random_density(2, &mut rng(3));
    let fam = JointStateFamily::new(
        dims,
        vec![
            DensityOperator::new(kron(a.matrix(), omega.matrix())).unwrap(),
            DensityOperator::new(kron(b.matrix(), omega.matrix())).unwrap(),
        ],
    )
    .unwrap();
    assert!(check_injectivity(&fam, CP_TOL).injective);

    let mixed = DensityOperator::maximally_mixed(4).unwrap();
    let fam = JointStateFamily::new(dims, vec![bell(), mixed]).unwrap();
    let inj = check_injectivity(&fam, CP_TOL);
    assert!(!inj.injective);
    assert_eq!(inj.offending, Some((0, 1)));
    assert!(matches!(
        check_cp_guarantee(&fam, 0, CP_TOL),
        Err(Error::IllPosedInitialCondition { .. })
    ));

    let single = JointStateFamily::new(dims, vec![bell()]).unwrap();
    assert!(check_injectivity(&single, CP_TOL).injective);
}

#[test]
fn singleton_is_all_redundant() {
    let dims = BipartitionDims::new(2, 2).unwrap();
    let rho = random_density(4, &mut rng(8));
    let fam = JointStateFamily::new(dims, vec![rho.clone()]).unwrap();
    let cert = certify(&fam);
    assert_eq!(cert.reduced_ki.block_dims(), vec![(1, 2)]);
    // ω_{re} lives in the block basis; embedded it is the member itself
    let v = kron(cert.reduced_ki.blocks.blocks[0].isometry.matrix(), &CMatrix::identity(2, 2));
    let embedded = &v * cert.joint_blocks[0].matrix() * v.adjoint();
    assert!(trace_norm(&(embedded - rho.matrix())) < 1e-9);
    let lam = assignment_map(&cert).unwrap();
    let rs = partial_trace(rho.matrix(), dims, Subsystem::Environment).unwrap();
    assert!(trace_norm(&(lam.apply(&rs).unwrap() - rho.matrix())) < 1e-8);
}

#[test]
fn product_family_assignment_is_tensoring() {
    let fam = gen_product_family(2, 2, 3, 7).unwrap();
    let cert = certify(&fam);
    let lam = assignment_map(&cert).unwrap();
    assert!(lam.min_eigenvalue() >= -1e-9);
    assert!(lam.trace_preservation_defect() < 1e-9);
    let omega = partial_trace(fam.members()[0].matrix(), fam.dims(), Subsystem::System).unwrap();
    let id_choi = ChoiMatrix::from_map(2, 2, |x| Ok(x.clone())).unwrap();
    let expected = kron(id_choi.matrix(), &omega);
    assert!((lam.matrix() - expected).norm() < 1e-8);
    for (rho, red) in fam.members().iter().zip(fam.reduced()) {
        assert!(trace_norm(&(lam.apply(red.matrix()).unwrap() - rho.matrix())) < 1e-8);
    }
}

#[test]
fn liu_tong_planted_block_dims() {
    let blocks = [
        LiuTongBlock {
            dim: 2,
            mode: BlockMode::Fixed,
        },
        LiuTongBlock {
            dim: 2,
            mode: BlockMode::Free,
        },
    ];
    let fam = gen_liu_tong(&blocks, 2, 4, 3).unwrap();
    let cert = certify(&fam);
    assert_eq!(cert.reduced_ki.block_dims(), vec![(1, 2), (2, 1)]);
    let max = cert.reconstruction.iter().cloned().fold(0.0, f64::max);
    assert!(max <= 1e-8);
}

#[test]
fn entangled_fixed_block_is_certified() {
    let blocks = [
        LiuTongBlock {
            dim: 2,
            mode: BlockMode::Entangled,
        },
        LiuTongBlock {
            dim: 1,
            mode: BlockMode::Free,
        },
    ];
    let fam = gen_liu_tong(&blocks, 2, 3, 5).unwrap();
    let cert = certify(&fam);
    for (i, rho) in fam.members().iter().enumerate() {
        let direct = mutual_information(rho, fam.dims()).unwrap();
        assert!(direct > 0.1, "member {i} has correlations");
        let structured = mutual_information_structured(&cert, i).unwrap();
        assert!((direct - structured).abs() < 1e-9);
    }
}

#[test]
fn bell_vs_product_is_block_coherence() {
    let fam = gen_counterexample(CounterexampleKind::BellVsProduct, 2, 2, 0).unwrap();
    let verdict = check_cp_guarantee(&fam, 0, CP_TOL).unwrap();
    let v = verdict.violation().expect("violation");
    assert_eq!(v.kind, ViolationKind::BlockCoherence);
    assert!((v.magnitude - 0.5).abs() < 1e-9);
}

#[test]
fn counterexamples_are_rejected() {
    for seed in 0..5 {
        let fam = gen_counterexample(CounterexampleKind::CoherentBlocks, 3, 2, seed).unwrap();
        let v = check_cp_guarantee(&fam, seed, CP_TOL).unwrap();
        assert_eq!(v.violation().unwrap().kind, ViolationKind::BlockCoherence);
        let fam = gen_counterexample(CounterexampleKind::VaryingOmega, 2, 3, seed).unwrap();
        assert!(check_injectivity(&fam, CP_TOL).injective);
        let v = check_cp_guarantee(&fam, seed, CP_TOL).unwrap();
        assert_eq!(v.violation().unwrap().kind, ViolationKind::VaryingRedundantPart);
    }
}

#[test]
fn kraus_completeness_and_domain_action() {
    let fam = gen_liu_tong(
        &[
            LiuTongBlock {
                dim: 1,
                mode: BlockMode::Fixed,
            },
            LiuTongBlock {
                dim: 2,
                mode: BlockMode::Free,
            },
        ],
        2,
        3,
        11,
    )
    .unwrap();
    let cert = certify(&fam);
    let u = random_unitary(6, &mut rng(4));
    for final_dims in [BipartitionDims::new(3, 2).unwrap(), BipartitionDims::new(2, 3).unwrap()] {
        let k = kraus_from_unitary(&cert, &u, final_dims).unwrap();
        assert!(k.completeness_defect() < 1e-9);
        let choi = reduced_dynamics_choi(&cert, &u, final_dims).unwrap();
        assert!(choi.min_eigenvalue() >= -1e-9);
        for (rho, red) in fam.members().iter().zip(fam.reduced()) {
            let direct = reduced_dynamics_direct(rho, &u, final_dims).unwrap();
            let via_k = k.apply(red.matrix()).unwrap();
            assert!(trace_norm(&(via_k - direct.matrix())) < 1e-8);
            let via_l = reduced_dynamics_via_assignment(&cert, &red, &u, final_dims).unwrap();
            assert!(trace_norm(&(via_l.matrix() - direct.matrix())) < 1e-9);
            let via_choi = choi.apply(red.matrix()).unwrap();
            assert!(trace_norm(&(via_choi - direct.matrix())) < 1e-9);
        }
    }
}

#[test]
fn kraus_with_identity_unitary_and_trivial_environment() {
    let fam = gen_product_family(2, 2, 2, 5).unwrap();
    let cert = certify(&fam);
    let final_dims = BipartitionDims::new(4, 1).unwrap();
    let k = kraus_from_unitary(&cert, &CMatrix::identity(4, 4), final_dims).unwrap();
    assert!(k.completeness_defect() < 1e-9);
    for (rho, red) in fam.members().iter().zip(fam.reduced()) {
        assert!(trace_norm(&(k.apply(red.matrix()).unwrap() - rho.matrix())) < 1e-8);
    }
}

#[test]
fn swap_sends_members_to_environment_state() {
    let fam = gen_product_family(2, 2, 3, 9).unwrap();
    let cert = certify(&fam);
    let omega = partial_trace(fam.members()[0].matrix(), fam.dims(), Subsystem::System).unwrap();
    let u = swap(2, 2);
    let dims = fam.dims();
    for (rho, red) in fam.members().iter().zip(fam.reduced()) {
        let out = reduced_dynamics_direct(rho, &u, dims).unwrap();
        assert!((out.matrix() - &omega).norm() < 1e-12);
        let k = kraus_from_unitary(&cert, &u, dims).unwrap();
        assert!((k.apply(red.matrix()).unwrap() - &omega).norm() < 1e-9);
    }
}

#[test]
fn choi_and_kraus_agree_as_linear_maps() {
    let fam = gen_post_selected_family(&[(2, 1), (1, 2)], 2, 4, 21).unwrap();
    let cert = certify(&fam);
    let u = random_unitary(fam.dims().joint(), &mut rng(2));
    let final_dims = fam.dims();
    let k = kraus_from_unitary(&cert, &u, final_dims).unwrap();
    let from_k = k.to_choi().unwrap();
    assert!(from_k.min_eigenvalue() >= -1e-9);
    for red in fam.reduced() {
        let a = from_k.apply(red.matrix()).unwrap();
        let b = k.apply(red.matrix()).unwrap();
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn mutual_information_values() {
    let dims = BipartitionDims::new(2, 2).unwrap();
    let i = mutual_information(&bell(), dims).unwrap();
    assert!((i - 2.0 * core::f64::consts::LN_2).abs() < 1e-9);
    let prod = kron(random_density(2, &mut rng(1)).matrix(), random_density(2, &mut rng(2)).matrix());
    let i = mutual_information(&DensityOperator::new(prod).unwrap(), dims).unwrap();
    assert!(i.abs() < 1e-10);
}

#[test]
fn mutual_information_ignores_quantum_parts() {
    let fam = gen_post_selected_family(&[(2, 1), (1, 2)], 2, 3, 4).unwrap();
    let cert = certify(&fam);
    let mut r = rng(77);
    for (m, rho) in fam.members().iter().enumerate() {
        let base = mutual_information(rho, fam.dims()).unwrap();
        let structured = mutual_information_structured(&cert, m).unwrap();
        assert!((base - structured).abs() < 1e-9);
        let parts: Vec<DensityOperator> = cert
            .reduced_ki
            .block_dims()
            .iter()
            .map(|&(l, _)| random_density(l, &mut r))
            .collect();
        let swapped = cert.with_quantum_parts(m, &parts).unwrap();
        let i = mutual_information(&swapped, fam.dims()).unwrap();
        assert!((i - base).abs() < 1e-10);
    }
}

#[test]
fn post_selected_family_is_certified() {
    for seed in 0..5 {
        let fam = gen_post_selected_family(&[(2, 1), (1, 2)], 2, 4, seed).unwrap();
        let cert = certify(&fam);
        assert_eq!(cert.reduced_ki.block_dims(), vec![(1, 2), (2, 1)]);
    }
}
