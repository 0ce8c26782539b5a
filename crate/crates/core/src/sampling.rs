//! Word generators shared by the verification suites: centered bases,
//! exhaustive alternating words and seeded random words.

use std::sync::Arc;

use rand::Rng;

use crate::algebra::{Algebra, ConditionalExpectation};
use crate::fock::ReducedWord;
use crate::freespace::Letter;
use crate::numerics::{column_space, CMat, CVec, Tolerance, C64};

/// Trace-orthonormal basis of `ker φ`.
pub fn centered_basis(ce: &ConditionalExpectation, tol: &Tolerance) -> Vec<CMat> {
    let a = ce.source();
    let cols: Vec<CVec> = a.basis().iter().map(|x| a.coords(&ce.center(x))).collect();
    let span = column_space(&CMat::from_columns(&cols), tol);
    span.column_iter().map(|c| a.element(&c.into_owned())).collect()
}

/// All words of exactly `len` letters with consecutive letters from different
/// factors, letters drawn from `bases[factor]`. Marked as centered.
pub fn alternating_words(bases: &[Vec<CMat>], len: usize) -> Vec<ReducedWord> {
    let mut layer = vec![ReducedWord::empty()];
    for _ in 0..len {
        let mut next = Vec::new();
        for w in &layer {
            let last = w.letters().last().map(|l| l.index);
            for (i, fam) in bases.iter().enumerate() {
                if Some(i) == last {
                    continue;
                }
                for x in fam {
                    let mut w2 = w.clone();
                    w2.push(Letter::new(i, x.clone()), true);
                    next.push(w2);
                }
            }
        }
        layer = next;
    }
    layer
}

/// Deterministic subsample of at most `cap` items, evenly strided.
pub fn thin<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap || cap == 0 {
        return items.to_vec();
    }
    (0..cap).map(|k| items[k * items.len() / cap].clone()).collect()
}

/// Element with coordinates uniform in `[-1, 1] + i[-1, 1]`.
pub fn random_element<R: Rng>(rng: &mut R, a: &Algebra) -> CMat {
    let c = CVec::from_fn(a.dim(), |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    a.element(&c)
}

/// Word of `len` random letters from random factors (not necessarily alternating).
pub fn random_word<R: Rng>(rng: &mut R, algebras: &[Arc<Algebra>], len: usize) -> ReducedWord {
    let letters = (0..len)
        .map(|_| {
            let i = rng.random_range(0..algebras.len());
            Letter::new(i, random_element(rng, &algebras[i]))
        })
        .collect();
    ReducedWord::new(letters)
}

/// Random linear combination of `terms` random words of length `≤ max_len`.
pub fn random_combination<R: Rng>(
    rng: &mut R,
    algebras: &[Arc<Algebra>],
    terms: usize,
    max_len: usize,
) -> Vec<(C64, ReducedWord)> {
    (0..terms)
        .map(|_| {
            let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let len = rng.random_range(0..=max_len);
            (c, random_word(rng, algebras, len))
        })
        .collect()
}
