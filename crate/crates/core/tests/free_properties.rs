//! Properties of the truncated Fock module, the factor expectations and
//! induced representations, checked against the moment oracles.

mod common;

use std::sync::{Arc, OnceLock};

use amalgam::algebra::{Algebra, ConditionalExpectation};
use amalgam::fock::{FockModule, ReducedWord};
use amalgam::freespace::Letter;
use amalgam::freestruct::{factor_cexp, induce_rep, SeedRep};
use amalgam::numerics::{diag, frobenius, r, CMat, C64};
use amalgam::oracle::{nc_moment, recursion_moment, MomentQuery};
use amalgam::sampling::{random_element, random_word};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const L: usize = 4;

struct Setup {
    ces: Vec<ConditionalExpectation>,
    algebras: Vec<Arc<Algebra>>,
    fock: FockModule,
}

impl Setup {
    fn new(ces: Vec<ConditionalExpectation>) -> Self {
        let algebras = ces.iter().map(|ce| ce.source().clone()).collect();
        let fock = fock(&ces, L);
        Setup { ces, algebras, fock }
    }

    fn word(&self, seed: u64, len: usize) -> ReducedWord {
        random_word(&mut ChaCha8Rng::seed_from_u64(seed), &self.algebras, len)
    }
}

/// Three factors over the scalars: a tracial M2, a biased two-point algebra
/// and an M2 with a non-tracial state.
fn scalar() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let t = tol();
        let m2 = Algebra::full(2, &t);
        let d2 = Algebra::diagonal(2, &t);
        let h = random_density(&mut ChaCha8Rng::seed_from_u64(7), 2);
        Setup::new(vec![trace_state(&m2), density_state(&d2, &diag(&[r(0.8), r(1.2)])), density_state(&m2, &h)])
    })
}

/// Two copies of the diagonal compression on M2, amalgamated over D2.
fn diagonal() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| Setup::new(vec![diagonal_compression(2), diagonal_compression(2)]))
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

fn sandwich(w: &ReducedWord, b1: &CMat, b2: &CMat) -> ReducedWord {
    let mut letters = w.letters().to_vec();
    letters[0].element = b1 * &letters[0].element;
    let last = letters.len() - 1;
    letters[last].element = &letters[last].element * b2;
    ReducedWord::new(letters)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn word_adjoint_matches_adjoint_word(seed in any::<u64>(), len in 1usize..=L) {
        let s = scalar();
        let w = s.word(seed, len);
        let support = L - len;
        let k = s.fock.space().prefix_dim(support);
        let a = s.fock.act_word(&w, support).unwrap();
        let b = s.fock.act_word(&w.adjoint(), support).unwrap();
        prop_assert!(a.is_exact() && b.is_exact());
        let (a, b) = (a.matrix.rows(0, k).into_owned(), b.matrix.rows(0, k).into_owned());
        prop_assert!(frobenius(&(a.adjoint() - b)) <= 1e-9);
    }

    #[test]
    fn centered_alternating_words_vanish(seed in any::<u64>(), len in 1usize..=L) {
        for s in [scalar(), diagonal()] {
            let w = centered_word(&mut ChaCha8Rng::seed_from_u64(seed), &s.ces, len);
            prop_assert!(frobenius(&s.fock.free_expectation(&w).unwrap()) <= 1e-9);
        }
    }

    #[test]
    fn single_letter_moment_is_factor_expectation(seed in any::<u64>()) {
        for s in [scalar(), diagonal()] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (i, ce) in s.ces.iter().enumerate() {
                let a = random_element(&mut rng, ce.source());
                let w = ReducedWord::new(vec![Letter::new(i, a.clone())]);
                prop_assert!(dist(&s.fock.free_expectation(&w).unwrap(), &ce.apply(&a)) <= 1e-10);
            }
        }
    }

    #[test]
    fn fock_moments_match_the_recursion(seed in any::<u64>(), len in 0usize..=L) {
        for s in [scalar(), diagonal()] {
            let w = s.word(seed, len);
            let fock = s.fock.free_expectation(&w).unwrap();
            let oracle = recursion_moment(&MomentQuery::new(&s.ces, &w)).unwrap();
            prop_assert!(dist(&fock, &oracle) <= 1e-9, "{}", dist(&fock, &oracle));
        }
    }

    #[test]
    fn recursion_matches_cumulants(seed in any::<u64>(), len in 0usize..=6) {
        let s = scalar();
        let w = s.word(seed, len);
        let q = MomentQuery::new(&s.ces, &w);
        let rec = recursion_moment(&q).unwrap()[(0, 0)];
        let nc = nc_moment(&q).unwrap();
        prop_assert!((rec - nc).norm() <= 1e-9 * rec.norm().max(1.0));
    }

    #[test]
    fn moments_are_bimodular(seed in any::<u64>(), len in 1usize..=3) {
        let s = diagonal();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = s.fock.coefficient().clone();
        let (b1, b2) = (random_element(&mut rng, &b), random_element(&mut rng, &b));
        let w = s.word(seed ^ 0x55, len);
        let v = sandwich(&w, &b1, &b2);
        let m = recursion_moment(&MomentQuery::new(&s.ces, &w)).unwrap();
        let mv = recursion_moment(&MomentQuery::new(&s.ces, &v)).unwrap();
        prop_assert!(dist(&mv, &(&b1 * &m * &b2)) <= 1e-9);
        let e = factor_cexp(&s.fock, 0, &[(one(), w)]).unwrap();
        let ev = factor_cexp(&s.fock, 0, &[(one(), v)]).unwrap();
        prop_assert!(dist(&ev, &(&b1 * e * &b2)) <= 1e-9);
    }

    #[test]
    fn factor_expectation_is_idempotent_and_composes(seed in any::<u64>(), len in 0usize..L, pivot in 0usize..3) {
        let s = scalar();
        let w = s.word(seed, len);
        let e = factor_cexp(&s.fock, pivot, &[(one(), w.clone())]).unwrap();
        let again = factor_cexp(&s.fock, pivot, &[(one(), ReducedWord::new(vec![Letter::new(pivot, e.clone())]))]).unwrap();
        prop_assert!(dist(&again, &e) <= 1e-9);
        let direct = s.fock.free_expectation(&w).unwrap();
        prop_assert!(dist(&s.ces[pivot].apply(&e), &direct) <= 1e-9);
    }

    #[test]
    fn induced_representation_is_multiplicative(seed in any::<u64>(), lu in 0usize..=2, lw in 0usize..=2) {
        let s = scalar();
        let seed_rep = SeedRep::from_fn(s.algebras[0].clone(), |a| a.clone(), &tol()).unwrap();
        let induced = induce_rep(&s.fock, 0, &seed_rep, L).unwrap();
        let (u, w) = (s.word(seed, lu), s.word(seed.wrapping_add(1), lw));
        prop_assert!(induced.multiplicativity_defect(&u, &w).unwrap() <= 1e-8);
        prop_assert!(induced.adjoint_defect(&u).unwrap() <= 1e-8);
    }
}

#[test]
fn words_inside_the_truncation_are_exact() {
    let s = scalar();
    for len in 0..=L {
        let w = s.word(len as u64, len);
        assert!(s.fock.act_word(&w, L - len).unwrap().is_exact());
    }
    let long = s.word(99, L + 1);
    assert!(s.fock.act_word(&long, 0).is_err());
}
