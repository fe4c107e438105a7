use kistruct_core::cp::{check_cp_guarantee, kraus_from_unitary, CP_TOL};
use kistruct_core::families::{
    gen_markov_chain, gen_planted_ki, gen_product_family, markov_form_residual, post_select,
    selection_probability, PovmElement,
};
use kistruct_core::ki::{ki_decompose, verify_ki};
use kistruct_core::operator::{
    hermitian_eig, kron, partial_trace, trace_norm, von_neumann_entropy,
};
use kistruct_core::random::{random_density, random_hermitian, random_unitary, rng};
use kistruct_core::{BipartitionDims, CMatrix, DensityOperator, Subsystem};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigh_reconstructs(n in 1usize..12, seed in any::<u64>()) {
        let m = random_hermitian(n, &mut rng(seed));
        let e = hermitian_eig(&m).unwrap();
        let v = &e.vectors;
        prop_assert!((v.adjoint() * v - CMatrix::identity(n, n)).norm() < 1e-12);
        prop_assert!((e.map(c) - &m).norm() < 1e-12 * m.norm().max(1.0));
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn partial_trace_of_products(ds in 1usize..5, de in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_density(ds, &mut r);
        let b = random_density(de, &mut r);
        let dims = BipartitionDims::new(ds, de).unwrap();
        let joint = kron(a.matrix(), b.matrix());
        let ts = partial_trace(&joint, dims, Subsystem::Environment).unwrap();
        let te = partial_trace(&joint, dims, Subsystem::System).unwrap();
        prop_assert!((ts - a.matrix()).norm() < 1e-13);
        prop_assert!((te - b.matrix()).norm() < 1e-13);
    }

    #[test]
    fn entropy_is_additive_and_unitarily_invariant(ds in 1usize..4, de in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_density(ds, &mut r);
        let b = random_density(de, &mut r);
        let joint = DensityOperator::new(kron(a.matrix(), b.matrix())).unwrap();
        let sum = von_neumann_entropy(&a) + von_neumann_entropy(&b);
        prop_assert!((von_neumann_entropy(&joint) - sum).abs() < 1e-10);
        let u = random_unitary(ds * de, &mut r);
        let rotated = DensityOperator::new(&u * joint.matrix() * u.adjoint()).unwrap();
        prop_assert!((von_neumann_entropy(&rotated) - sum).abs() < 1e-10);
    }

    #[test]
    fn planted_structure_is_recovered(
        blocks in prop::collection::vec((1usize..3, 1usize..3), 1..3),
        count in 2usize..5,
        seed in any::<u64>(),
    ) {
        let planted = gen_planted_ki(&blocks, count, seed).unwrap();
        let d = ki_decompose(&planted.members, seed, 1e-8).unwrap();
        let mut got = d.block_dims();
        let mut want = blocks.clone();
        got.sort_unstable();
        want.sort_unstable();
        prop_assert_eq!(got, want);
        prop_assert!(verify_ki(&d, &planted.members).unwrap().max_reconstruction() < 1e-8);
    }

    #[test]
    fn kraus_and_choi_agree(ds in 2usize..4, de in 1usize..3, seed in any::<u64>()) {
        let fam = gen_product_family(ds, de, 3, seed).unwrap();
        let verdict = check_cp_guarantee(&fam, seed, CP_TOL).unwrap();
        let cert = verdict.certificate().unwrap();
        let u = random_unitary(ds * de, &mut rng(seed.wrapping_add(1)));
        let k = kraus_from_unitary(cert, &u, fam.dims()).unwrap();
        prop_assert!(k.completeness_defect() < 1e-9);
        let choi = k.to_choi().unwrap();
        prop_assert!(choi.min_eigenvalue() > -1e-9);
        let x = random_hermitian(ds, &mut rng(seed.wrapping_add(2)));
        prop_assert!((choi.apply(&x).unwrap() - k.apply(&x).unwrap()).norm() < 1e-9);
    }

    #[test]
    fn post_selection_is_linear_before_normalization(seed in any::<u64>()) {
        let blocks = [(2, 1), (1, 2)];
        let tri = gen_markov_chain(&blocks, 3, 2, seed).unwrap();
        prop_assert!(markov_form_residual(&tri, &blocks).unwrap() < 1e-9);
        let mut r = rng(seed);
        let half = |m: &CMatrix| PovmElement::new(m * c(0.5), 1e-9).unwrap();
        let e1 = half(PovmElement::random(3, &mut r).matrix());
        let e2 = half(PovmElement::random(3, &mut r).matrix());
        let sum = PovmElement::new(e1.matrix() + e2.matrix(), 1e-9).unwrap();
        let (p1, p2) = (
            selection_probability(&tri, &e1).unwrap(),
            selection_probability(&tri, &e2).unwrap(),
        );
        let mix = (post_select(&tri, &e1).unwrap().matrix() * c(p1)
            + post_select(&tri, &e2).unwrap().matrix() * c(p2))
            / c(p1 + p2);
        let joint = post_select(&tri, &sum).unwrap();
        prop_assert!(trace_norm(&(joint.matrix() - mix)) < 1e-10);
    }
}
