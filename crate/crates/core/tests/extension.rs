use kistruct_core::cp::{check_cp_guarantee, reduced_dynamics_choi, CP_TOL};
use kistruct_core::extension::{
    cp_feasibility, linear_extension_witness, Feasibility, FeasibilityOptions, MapOnStates,
};
use kistruct_core::families::{
    gen_counterexample, gen_liu_tong, gen_post_selected_family, gen_product_family, BlockMode,
    CounterexampleKind, LiuTongBlock,
};
use kistruct_core::operator::trace_norm;
use kistruct_core::random::{random_density, random_unitary, rng};
use kistruct_core::{BipartitionDims, CMatrix, DensityOperator};
use nalgebra::DVector;
use num_complex::Complex64;
use std::time::Instant;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

fn bell_pairs() -> MapOnStates {
    let mut phi = DVector::<Complex64>::zeros(4);
    phi[0] = c(core::f64::consts::FRAC_1_SQRT_2);
    phi[3] = c(core::f64::consts::FRAC_1_SQRT_2);
    let mut zero = DVector::<Complex64>::zeros(4);
    zero[0] = c(1.0);
    MapOnStates::new(vec![
        (
            DensityOperator::maximally_mixed(2).unwrap(),
            DensityOperator::pure(&phi).unwrap(),
        ),
        (
            DensityOperator::diagonal(&[1.0, 0.0]).unwrap(),
            DensityOperator::pure(&zero).unwrap(),
        ),
    ])
    .unwrap()
}

#[test]
fn bell_pairs_have_closed_form_witness() {
    let m = bell_pairs();
    let w = linear_extension_witness(&m, 0).expect("witness");
    let expected = (1.0 - 5f64.sqrt()) / 2.0;
    assert!((w.min_eigenvalue - expected).abs() < 1e-9, "{}", w.min_eigenvalue);
    // the extreme input is |1><1|
    assert!((w.input[(1, 1)].re - 1.0).abs() < 1e-9);
    let t = Instant::now();
    let f = cp_feasibility(&m, FeasibilityOptions::default()).unwrap();
    assert!(f.is_infeasible(), "{f:?}");
    if let Feasibility::Infeasible { gap, .. } = f {
        assert!(gap >= 1e-3);
    }
    println!("bell feasibility {:?}", t.elapsed());
}

#[test]
fn single_pair_has_no_witness_and_is_feasible() {
    let rho = random_density(2, &mut rng(1));
    let sigma = random_density(3, &mut rng(2));
    let m = MapOnStates::new(vec![(rho, sigma.clone())]).unwrap();
    assert!(linear_extension_witness(&m, 0).is_none());
    let mixed = DensityOperator::maximally_mixed(2).unwrap();
    let m = MapOnStates::new(vec![(mixed.clone(), mixed.clone())]).unwrap();
    match cp_feasibility(&m, FeasibilityOptions::default()).unwrap() {
        Feasibility::Feasible { choi, .. } => {
            assert!(choi.min_eigenvalue() >= -1e-7);
            assert!((choi.apply(mixed.matrix()).unwrap() - mixed.matrix()).max_abs_el() < 1e-7);
        }
        other => panic!("{other:?}"),
    }
}

trait MaxAbsEl {
    fn max_abs_el(&self) -> f64;
}
impl MaxAbsEl for CMatrix {
    fn max_abs_el(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[test]
fn cp_maps_have_no_witness() {
    let fam = gen_product_family(2, 2, 3, 3).unwrap();
    let u = random_unitary(4, &mut rng(9));
    let m = MapOnStates::from_family(&fam, &u, BipartitionDims::new(2, 2).unwrap()).unwrap();
    assert!(linear_extension_witness(&m, 1).is_none());
}

#[test]
fn inconsistent_pairs_are_rejected() {
    let a = DensityOperator::diagonal(&[1.0, 0.0]).unwrap();
    let b = DensityOperator::diagonal(&[0.0, 1.0]).unwrap();
    let mid = DensityOperator::maximally_mixed(2).unwrap();
    let res = MapOnStates::new(vec![
        (a.clone(), a.clone()),
        (b.clone(), b.clone()),
        (mid, a.clone()),
    ]);
    assert!(res.is_err());
    assert!(MapOnStates::new(vec![(a.clone(), a.clone()), (a.clone(), b)]).is_err());
}

#[test]
fn certified_families_are_feasible() {
    let blocks = [
        LiuTongBlock {
            dim: 1,
            mode: BlockMode::Fixed,
        },
        LiuTongBlock {
            dim: 2,
            mode: BlockMode::Free,
        },
    ];
    let fams = vec![
        gen_product_family(2, 2, 3, 1).unwrap(),
        gen_liu_tong(&blocks, 2, 3, 2).unwrap(),
        gen_post_selected_family(&[(2, 1), (1, 2)], 2, 4, 3).unwrap(),
    ];
    for fam in fams {
        let cert = check_cp_guarantee(&fam, 0, CP_TOL).unwrap();
        let cert = cert.certificate().unwrap();
        let t = Instant::now();
        let m = MapOnStates::assignment_instance(&fam).unwrap();
        assert!(linear_extension_witness(&m, 0).is_none());
        let f = cp_feasibility(&m, FeasibilityOptions::default()).unwrap();
        println!("{} {:?} {:?}", f.label(), f_iters(&f), t.elapsed());
        let Feasibility::Feasible { choi, .. } = f else {
            panic!("{f:?}");
        };
        assert!(choi.min_eigenvalue() >= -1e-7);
        for (x, y) in m.inputs().iter().zip(m.outputs()) {
            assert!(trace_norm(&(choi.apply(x.matrix()).unwrap() - y.matrix())) < 1e-7);
        }
        // random unitary instance agrees with the structural map
        let u = random_unitary(fam.dims().joint(), &mut rng(4));
        let dims = fam.dims();
        let m = MapOnStates::from_family(&fam, &u, dims).unwrap();
        let f = cp_feasibility(&m, FeasibilityOptions::default()).unwrap();
        assert!(f.is_feasible(), "{f:?}");
        let lam = reduced_dynamics_choi(cert, &u, dims).unwrap();
        let Feasibility::Feasible { choi, .. } = f else { unreachable!() };
        for x in m.inputs() {
            let a = choi.apply(x.matrix()).unwrap();
            let b = lam.apply(x.matrix()).unwrap();
            assert!((a - b).max_abs_el() < 1e-7);
        }
    }
}

fn f_iters(f: &Feasibility) -> usize {
    match f {
        Feasibility::Feasible { iterations, .. }
        | Feasibility::Infeasible { iterations, .. }
        | Feasibility::Undecided { iterations, .. } => *iterations,
    }
}

#[test]
fn counterexamples_are_refuted_on_the_assignment_instance() {
    for kind in CounterexampleKind::ALL {
        for seed in 0..3 {
            let fam = gen_counterexample(kind, 2, 2, seed).unwrap();
            let m = MapOnStates::assignment_instance(&fam).unwrap();
            let t = Instant::now();
            let w = linear_extension_witness(&m, seed);
            assert!(w.is_some(), "{kind:?} seed {seed}");
            let f = cp_feasibility(&m, FeasibilityOptions::default()).unwrap();
            println!("{kind:?} {} {} {:?}", f.label(), f_iters(&f), t.elapsed());
            assert!(!f.is_feasible());
        }
    }
}
