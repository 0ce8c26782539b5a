//! Properties of the linear-algebra kernel, finite-dimensional algebras and
//! Hilbert modules.

mod common;

use amalgam::algebra::{gns_faithful, Algebra};
use amalgam::hilbmod::{gns_module, interior_tensor, scalarize, FaithfulStateRep, HilbertModule};
use amalgam::numerics::{frobenius, hermitian_eigen, kron, null_space_basis, operator_norm, svd, CMat, C64};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| CMat::from_iterator(rows, cols, v.into_iter().map(|(a, b)| C64::new(a, b))))
}

fn spectrum(m: &CMat) -> Vec<f64> {
    hermitian_eigen(m, &tol()).unwrap().values
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_submultiplicative(a in matrix(6, 6), b in matrix(6, 6)) {
        let ab = operator_norm(&(&a * &b)).unwrap();
        prop_assert!(ab <= operator_norm(&a).unwrap() * operator_norm(&b).unwrap() * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn c_star_identity(a in matrix(6, 6)) {
        let n = operator_norm(&a).unwrap();
        let nn = operator_norm(&(a.adjoint() * &a)).unwrap();
        prop_assert!((nn - n * n).abs() <= 1e-10 * nn.max(1.0));
    }

    #[test]
    fn null_space_is_annihilated(a in matrix(6, 3)) {
        let g = &a * a.adjoint();
        let split = null_space_basis(&g, &tol()).unwrap();
        prop_assert_eq!(split.null.ncols(), 3);
        let scale = operator_norm(&g).unwrap().max(1.0);
        prop_assert!(frobenius(&(&g * &split.null)) <= 10.0 * tol().abs_eps * scale);
    }

    #[test]
    fn svd_recomposes_low_rank(a in matrix(4, 2), b in matrix(2, 5)) {
        let m = &a * &b;
        let s = svd(&m);
        prop_assert!(frobenius(&(s.recompose() - &m)) <= 1e-12 * frobenius(&m).max(1.0));
        prop_assert!(s.values.windows(2).all(|w| w[0] + 1e-14 >= w[1]));
    }

    #[test]
    fn rebuilding_from_basis_is_idempotent(g in matrix(3, 3)) {
        let t = tol();
        let a = Algebra::build(3, &[g], &t).unwrap();
        let again = Algebra::build(3, a.basis(), &t).unwrap();
        prop_assert_eq!(a.dim(), again.dim());
        for x in a.basis() {
            prop_assert!(again.contains(x, &t));
        }
    }

    #[test]
    fn states_respect_adjoints(seed in any::<u64>(), x in matrix(3, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Algebra::full(3, &tol());
        let ce = density_state(&a, &random_density(&mut rng, 3));
        let lhs = ce.apply(&x.adjoint());
        let rhs = ce.apply(&x).adjoint();
        prop_assert!(dist(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn gns_module_reproduces_the_state(seed in any::<u64>(), n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Algebra::full(n, &tol());
        let ce = density_state(&a, &random_density(&mut rng, n));
        let pm = gns_module(&ce, &tol()).unwrap();
        prop_assert!(pm.expectation_defect(&ce) <= 10.0 * tol().abs_eps);
        prop_assert!(pm.left().star_defects(pm.module()).max() <= 10.0 * tol().abs_eps);
        let x = amalgam::sampling::random_element(&mut rng, &a);
        let y = amalgam::sampling::random_element(&mut rng, &a);
        prop_assert!(dist(&pm.pi(&(&x * &y)), &(pm.pi(&x) * pm.pi(&y))) <= 1e-9);
        prop_assert!(dist(&pm.pi(&x.adjoint()), &pm.pi(&x).adjoint()) <= 1e-9);
    }

    #[test]
    fn diagonal_gns_module_reproduces_the_compression(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ce = diagonal_compression(3);
        let pm = gns_module(&ce, &tol()).unwrap();
        let x = amalgam::sampling::random_element(&mut rng, ce.source());
        let xi = pm.cyclic();
        let moment = pm.module().inner_product(&xi, &(pm.pi(&x) * &xi));
        prop_assert!(dist(&moment, &ce.apply(&x)) <= 1e-10);
    }

    #[test]
    fn scalarized_null_vectors_are_module_null(p in matrix(2, 1)) {
        prop_assume!(p.norm() > 1e-3);
        let t = tol();
        let e = gns_module(&diagonal_compression(2), &t).unwrap();
        let m = e.module();
        let proj = &p * p.adjoint();
        let grams = m.grams().iter().map(|g| kron(&proj, g)).collect();
        let rights = m.right_matrices().iter().map(|r| kron(&CMat::identity(2, 2), r)).collect();
        let f = HilbertModule::new(m.coefficient().clone(), grams, rights).unwrap();
        let rep = FaithfulStateRep::normalized_trace(m.coefficient());
        let split = null_space_basis(&scalarize(&f, &rep).unwrap(), &t).unwrap();
        prop_assert_eq!(split.null.ncols(), m.dim());
        for v in split.null.column_iter() {
            let v = v.into_owned();
            prop_assert!(frobenius(&f.inner_product(&v, &v)) <= 10.0 * t.abs_eps);
        }
        for v in split.range.column_iter() {
            let v = v.into_owned();
            prop_assert!(frobenius(&f.inner_product(&v, &v)) > t.abs_eps);
        }
    }
}

#[test]
fn trace_is_gns_faithful_on_small_matrix_algebras() {
    for n in 1..=4 {
        let a = Algebra::full(n, &tol());
        assert!(gns_faithful(&trace_state(&a), &tol()).unwrap(), "M_{n}");
    }
}

#[test]
fn interior_tensor_is_associative() {
    let t = tol();
    let e = gns_module(&diagonal_compression(2), &t).unwrap();
    let (m, b) = (e.module(), e.left_b());
    let left = {
        let t12 = interior_tensor(m, m, b, &t).unwrap();
        interior_tensor(&t12.module, m, b, &t).unwrap()
    };
    let right = {
        let t23 = interior_tensor(m, m, b, &t).unwrap();
        let lifted = t23.lift_left_action(b);
        interior_tensor(m, &t23.module, &lifted, &t).unwrap()
    };
    assert_eq!(left.module.dim(), right.module.dim());
    let (sl, sr) = (spectrum(&left.module.gram_blocks()), spectrum(&right.module.gram_blocks()));
    for (x, y) in sl.iter().zip(&sr) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}
