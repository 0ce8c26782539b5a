//! Properties of nested free products and of free products of UCP maps.

mod common;

use std::sync::OnceLock;

use amalgam::embedding::{build_nested, NestedFreeProduct};
use amalgam::fock::ReducedWord;
use amalgam::freespace::Letter;
use amalgam::numerics::{frobenius, r, CMat, C64};
use amalgam::sampling::{random_combination, random_element, random_word};
use amalgam::ucp::{dilate, free_ucp, FreeUcp, UcpMap};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nested(truncation: usize) -> &'static NestedFreeProduct {
    static CACHE: [OnceLock<NestedFreeProduct>; 7] = [const { OnceLock::new() }; 7];
    CACHE[truncation].get_or_init(|| {
        let cfg = fixture("nested_m2");
        let m = model(&cfg);
        let spec = m.nested(&cfg).unwrap().expect("fixture has a nested section");
        build_nested(&spec, truncation, &tol()).unwrap()
    })
}

fn lower_algebras() -> Vec<std::sync::Arc<amalgam::algebra::Algebra>> {
    let cfg = fixture("nested_m2");
    let m = model(&cfg);
    m.nested(&cfg).unwrap().unwrap().lower
}

const UCP_L: usize = 3;

fn diagonal_ucp() -> &'static FreeUcp {
    static S: OnceLock<FreeUcp> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = fixture("diagonal_ucp");
        let maps = model(&cfg).ucp_maps(&cfg).unwrap();
        free_ucp(maps, UCP_L, &tol()).unwrap()
    })
}

/// Conjugation by a fixed unitary on two tracial copies of M2: a
/// trace-preserving *-automorphism of each factor.
fn rotation() -> &'static FreeUcp {
    static S: OnceLock<FreeUcp> = OnceLock::new();
    S.get_or_init(|| {
        let t = tol();
        let m2 = amalgam::algebra::Algebra::full(2, &t);
        let (c, s) = (0.6f64, 0.8f64);
        let u = CMat::from_row_slice(2, 2, &[r(c), C64::new(0.0, -s), C64::new(0.0, -s), r(c)]);
        let maps = (0..2)
            .map(|_| {
                let u = u.clone();
                UcpMap::new(trace_state(&m2), trace_state(&m2), move |x| &u * x * u.adjoint(), &t).unwrap()
            })
            .collect();
        free_ucp(maps, UCP_L, &t).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn upper_norm_dominates_lower_norm(seed in any::<u64>(), truncation in 3usize..=6) {
        let nested = nested(truncation);
        let margin = truncation.min(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_combination(&mut rng, &lower_algebras(), 3, margin);
        let (lo, hi) = nested.norm_dominance(&x, margin).unwrap();
        prop_assert!(lo <= hi + tol().abs_eps, "{lo} > {hi}");
    }

    #[test]
    fn inclusion_is_isometric_and_intertwines(seed in any::<u64>(), len in 0usize..=3) {
        let nested = nested(3);
        let w = random_word(&mut ChaCha8Rng::seed_from_u64(seed), &lower_algebras(), len);
        let report = nested.verify_restriction(&[w]).unwrap();
        prop_assert!(report.isometry_defect <= 10.0 * tol().abs_eps);
        prop_assert!(report.max_leakage() <= 100.0 * tol().abs_eps);
        prop_assert!(report.max_defect() <= 100.0 * tol().abs_eps);
    }

    #[test]
    fn single_letters_map_to_their_images(seed in any::<u64>()) {
        for f in [diagonal_ucp(), rotation()] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (i, map) in f.maps().iter().enumerate() {
                let a = random_element(&mut rng, map.source());
                let w = ReducedWord::new(vec![Letter::new(i, a)]);
                let (defect, residual) = f.product_defect(&w).unwrap();
                prop_assert!(defect <= 100.0 * tol().abs_eps && residual <= 100.0 * tol().abs_eps);
            }
        }
    }

    #[test]
    fn centered_words_map_multiplicatively(seed in any::<u64>(), len in 1usize..=UCP_L) {
        for f in [diagonal_ucp(), rotation()] {
            let ces: Vec<_> = f.maps().iter().map(|m| m.source_expectation().clone()).collect();
            let w = centered_word(&mut ChaCha8Rng::seed_from_u64(seed), &ces, len);
            let (defect, _) = f.product_defect(&w).unwrap();
            prop_assert!(defect <= 100.0 * tol().abs_eps, "{defect}");
        }
    }

    #[test]
    fn automorphisms_map_every_word_multiplicatively(seed in any::<u64>(), len in 0usize..=UCP_L) {
        let f = rotation();
        let algebras: Vec<_> = f.maps().iter().map(|m| m.source().clone()).collect();
        let w = random_word(&mut ChaCha8Rng::seed_from_u64(seed), &algebras, len);
        let (defect, _) = f.product_defect(&w).unwrap();
        prop_assert!(defect <= 100.0 * tol().abs_eps, "{defect}");
    }
}

#[test]
fn complement_blocks_are_complete_and_equivalent() {
    for truncation in 3..=4 {
        let report = nested(truncation).complement_decomposition().unwrap();
        assert!(report.dimensions_complete(), "L={truncation}");
        assert!(report.max_equivalence_defect() <= 100.0 * tol().abs_eps);
        assert!(report.max_invariance_defect() <= 100.0 * tol().abs_eps);
    }
}

#[test]
fn dilations_preserve_inner_products_and_grading() {
    let cfg = fixture("depolarizing");
    for map in model(&cfg).ucp_maps(&cfg).unwrap() {
        let d = dilate(&map, &tol()).unwrap();
        assert!(d.defects().max() <= 10.0 * tol().abs_eps, "{:?}", d.defects());
        let (e, f) = (d.source_module(), d.dilated_module());
        let v = d.isometry();
        for (ge, gf) in e.module().grams().iter().zip(f.module().grams()) {
            assert!(frobenius(&(v.adjoint() * gf * v - ge)) <= 1e-9);
        }
        let kb = e.b_dim();
        let leak = v.view((0, kb), (kb, e.dim() - kb)).into_owned();
        assert!(frobenius(&leak) <= 1e-9);
    }
}
