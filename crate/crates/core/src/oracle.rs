//! Brute-force moment engines that do not touch the Fock construction.
//!
//! [`recursion_moment`] expands letters into centered part plus expectation
//! and uses that alternating centered words have zero expectation.
//! [`nc_moment`] sums free cumulants over non-crossing partitions and only
//! applies when the coefficients are scalars.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::algebra::ConditionalExpectation;
use crate::error::{Error, Result};
use crate::fock::ReducedWord;
use crate::numerics::{identity, CMat, C64, ONE, ZERO};

pub const MAX_RECURSION_LEN: usize = 12;
pub const MAX_NC_LEN: usize = 8;

/// A word together with the factor expectations that define its moments.
#[derive(Clone, Copy)]
pub struct MomentQuery<'a> {
    pub expectations: &'a [ConditionalExpectation],
    pub word: &'a ReducedWord,
}

impl<'a> MomentQuery<'a> {
    pub fn new(expectations: &'a [ConditionalExpectation], word: &'a ReducedWord) -> Self {
        MomentQuery { expectations, word }
    }

    fn check(&self) -> Result<()> {
        let b = self
            .expectations
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no factor expectations".into()))?
            .target();
        for ce in self.expectations {
            if ce.target().ambient() != b.ambient() || ce.target().dim() != b.dim() {
                return Err(Error::MixedCoefficients);
            }
        }
        for l in self.word.letters() {
            let ce = self.expectations.get(l.index).ok_or(Error::IndexUnknown(l.index))?;
            let n = ce.source().ambient();
            if l.element.nrows() != n || l.element.ncols() != n {
                return Err(Error::DimensionMismatch(format!("letter for factor {}", l.index)));
            }
        }
        Ok(())
    }
}

fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| *z == ZERO)
}

struct Recursion<'a> {
    ces: &'a [ConditionalExpectation],
    unit: CMat,
}

impl Recursion<'_> {
    /// Expectation of `p₁⋯p_k · r₁⋯r_m` where the `p` are centered and alternating.
    fn moment(&self, prefix: &mut Vec<(usize, CMat)>, rest: &[(usize, CMat)]) -> CMat {
        let Some(((idx, r), tail)) = rest.split_first() else {
            return if prefix.is_empty() { self.unit.clone() } else { self.unit.clone() * ZERO };
        };
        if let Some((last_idx, _)) = prefix.last() {
            if last_idx == idx {
                let (li, la) = prefix.pop().expect("nonempty prefix");
                let mut merged = vec![(li, la.clone() * r)];
                merged.extend_from_slice(tail);
                let out = self.moment(prefix, &merged);
                prefix.push((li, la));
                return out;
            }
        }
        let ce = &self.ces[*idx];
        let b = ce.apply(r);
        let centered = r - ce.inclusion().map(&b);
        let mut total = self.unit.clone() * ZERO;
        if !is_zero(&centered) {
            prefix.push((*idx, centered));
            total += self.moment(prefix, tail);
            prefix.pop();
        }
        if !is_zero(&b) {
            match prefix.last().cloned() {
                None => total += &b * self.moment(prefix, tail),
                Some((li, la)) => {
                    let lifted = self.ces[li].inclusion().map(&b);
                    let n = prefix.len();
                    prefix[n - 1] = (li, &la * lifted);
                    total += self.moment(prefix, tail);
                    prefix[n - 1] = (li, la);
                }
            }
        }
        total
    }
}

/// The B-valued moment of a word determined by freeness with amalgamation.
pub fn recursion_moment(q: &MomentQuery) -> Result<CMat> {
    let n = q.word.len();
    if n > MAX_RECURSION_LEN {
        return Err(Error::WordTooLong { len: n, max: MAX_RECURSION_LEN });
    }
    q.check()?;
    let unit = identity(q.expectations[0].target().ambient());
    let rec = Recursion { ces: q.expectations, unit };
    let letters: Vec<(usize, CMat)> = q.word.letters().iter().map(|l| (l.index, l.element.clone())).collect();
    Ok(rec.moment(&mut Vec::new(), &letters))
}

type Partition = Vec<Vec<usize>>;

fn crossing(a: &[usize], b: &[usize]) -> bool {
    for (i, &x1) in a.iter().enumerate() {
        for &x2 in &a[i + 1..] {
            for (j, &y1) in b.iter().enumerate() {
                for &y2 in &b[j + 1..] {
                    if (x1 < y1 && y1 < x2 && x2 < y2) || (y1 < x1 && x1 < y2 && y2 < x2) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn all_partitions(n: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(k: usize, max: usize, labels: &mut [usize], out: &mut Vec<Partition>) {
        let n = labels.len();
        if k == n {
            let blocks = labels.iter().copied().max().map(|m| m + 1).unwrap_or(0);
            let mut p: Partition = vec![Vec::new(); blocks];
            for (i, &l) in labels.iter().enumerate() {
                p[l].push(i);
            }
            out.push(p);
            return;
        }
        for l in 0..=max {
            labels[k] = l;
            rec(k + 1, if l == max { max + 1 } else { max }, labels, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    labels[0] = 0;
    rec(1, 1, &mut labels, &mut out);
    out
}

/// Non-crossing partitions of `0..n` for `n ≤ MAX_NC_LEN`, computed once.
pub fn non_crossing_partitions(n: usize) -> &'static [Partition] {
    static TABLE: OnceLock<Vec<Vec<Partition>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        (0..=MAX_NC_LEN)
            .map(|k| {
                all_partitions(k)
                    .into_iter()
                    .filter(|p| {
                        (0..p.len()).all(|i| (i + 1..p.len()).all(|j| !crossing(&p[i], &p[j])))
                    })
                    .collect()
            })
            .collect()
    });
    &table[n]
}

struct Cumulants<'a> {
    ces: &'a [ConditionalExpectation],
    letters: Vec<(usize, CMat)>,
    memo: HashMap<Vec<usize>, C64>,
}

impl Cumulants<'_> {
    fn single_moment(&self, positions: &[usize]) -> C64 {
        let idx = self.letters[positions[0]].0;
        let ce = &self.ces[idx];
        let mut prod = identity(ce.source().ambient());
        for &p in positions {
            prod *= &self.letters[p].1;
        }
        ce.apply(&prod)[(0, 0)]
    }

    /// Free cumulant of the letters at `positions`, all from one factor.
    fn cumulant(&mut self, positions: &[usize]) -> C64 {
        if let Some(v) = self.memo.get(positions) {
            return *v;
        }
        let k = positions.len();
        let mut value = self.single_moment(positions);
        for p in non_crossing_partitions(k) {
            if p.len() == 1 {
                continue;
            }
            let mut term = ONE;
            for block in p {
                let sub: Vec<usize> = block.iter().map(|&i| positions[i]).collect();
                term *= self.cumulant(&sub);
                if term == ZERO {
                    break;
                }
            }
            value -= term;
        }
        self.memo.insert(positions.to_vec(), value);
        value
    }
}

/// Scalar moment of a word from free cumulants over non-crossing partitions
/// whose blocks use a single factor.
pub fn nc_moment(q: &MomentQuery) -> Result<C64> {
    let n = q.word.len();
    q.check()?;
    if q.expectations.iter().any(|ce| ce.target().dim() != 1) {
        return Err(Error::NotScalarCoefficients);
    }
    if n > MAX_NC_LEN {
        return Err(Error::WordTooLong { len: n, max: MAX_NC_LEN });
    }
    let letters: Vec<(usize, CMat)> = q.word.letters().iter().map(|l| (l.index, l.element.clone())).collect();
    let mut cum = Cumulants { ces: q.expectations, letters, memo: HashMap::new() };
    let mut total = ZERO;
    for p in non_crossing_partitions(n) {
        let mono = p.iter().all(|b| b.iter().all(|&i| cum.letters[i].0 == cum.letters[b[0]].0));
        if !mono {
            continue;
        }
        let mut term = ONE;
        for block in p {
            term *= cum.cumulant(block);
            if term == ZERO {
                break;
            }
        }
        total += term;
    }
    if n == 0 {
        total = ONE;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Algebra, UnitalInclusion};
    use crate::numerics::{diag, frobenius, matrix_unit, r, Tolerance};
    use std::sync::Arc;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn scalar_inc(a: &Arc<Algebra>) -> UnitalInclusion {
        UnitalInclusion::new(Algebra::scalars(1), a.clone(), |x| a.one() * x[(0, 0)], &tol()).unwrap()
    }

    fn half_half() -> ConditionalExpectation {
        let a = Algebra::diagonal(2, &tol());
        ConditionalExpectation::new(scalar_inc(&a), |x| CMat::from_element(1, 1, (x[(0, 0)] + x[(1, 1)]) / r(2.0)), &tol())
            .unwrap()
    }

    fn trace_m2() -> ConditionalExpectation {
        let a = Algebra::full(2, &tol());
        ConditionalExpectation::new(scalar_inc(&a), |x| CMat::from_element(1, 1, x.trace() / r(2.0)), &tol())
            .unwrap()
    }

    fn diag_compression() -> ConditionalExpectation {
        let t = tol();
        let inc = UnitalInclusion::subalgebra(Algebra::diagonal(2, &t), Algebra::full(2, &t), &t).unwrap();
        ConditionalExpectation::new(inc, |x| diag(&[x[(0, 0)], x[(1, 1)]]), &t).unwrap()
    }

    fn p() -> CMat {
        matrix_unit(2, 0, 0)
    }

    fn sum_power(ces: &[ConditionalExpectation], n: usize) -> (C64, C64) {
        let mut rec = ZERO;
        let mut nc = ZERO;
        for bits in 0..(1u32 << n) {
            let w = ReducedWord::from_pairs((0..n).map(|k| (((bits >> k) & 1) as usize, p())).collect());
            let q = MomentQuery::new(ces, &w);
            rec += recursion_moment(&q).unwrap()[(0, 0)];
            nc += nc_moment(&q).unwrap();
        }
        (rec, nc)
    }

    #[test]
    fn non_crossing_counts_are_catalan() {
        let catalan = [1, 1, 2, 5, 14, 42, 132, 429, 1430];
        for (n, c) in catalan.iter().enumerate() {
            assert_eq!(non_crossing_partitions(n).len(), *c);
        }
    }

    #[test]
    fn single_letter_and_centered_words() {
        let ces = vec![trace_m2(), half_half()];
        let a = CMat::from_row_slice(2, 2, &[r(3.0), r(1.0), r(0.5), r(-1.0)]);
        let w = ReducedWord::from_pairs(vec![(0, a.clone())]);
        let q = MomentQuery::new(&ces, &w);
        assert!((recursion_moment(&q).unwrap()[(0, 0)] - r(1.0)).norm() < 1e-14);
        assert!((nc_moment(&q).unwrap() - r(1.0)).norm() < 1e-14);
        let c0 = matrix_unit(2, 0, 1);
        let c1 = diag(&[r(1.0), r(-1.0)]);
        let w = ReducedWord::from_pairs(vec![(0, c0.clone()), (1, c1.clone()), (0, c0), (1, c1)]);
        let q = MomentQuery::new(&ces, &w);
        assert!(recursion_moment(&q).unwrap()[(0, 0)].norm() < 1e-14);
        assert!(nc_moment(&q).unwrap().norm() < 1e-14);
    }

    #[test]
    fn projection_moments() {
        let ces = vec![half_half(), half_half()];
        let w = ReducedWord::from_pairs(vec![(0, p()), (1, p())]);
        assert!((recursion_moment(&MomentQuery::new(&ces, &w)).unwrap()[(0, 0)] - r(0.25)).norm() < 1e-14);
        for (n, want) in [(1, 1.0), (2, 1.5), (3, 2.5)] {
            let (rec, nc) = sum_power(&ces, n);
            assert!((rec - r(want)).norm() < 1e-12, "recursion m{n} = {rec}");
            assert!((nc - r(want)).norm() < 1e-12, "nc m{n} = {nc}");
        }
    }

    #[test]
    fn length_guards() {
        let ces = vec![half_half(), half_half()];
        let long = ReducedWord::from_pairs((0..13).map(|k| (k % 2, p())).collect());
        assert!(matches!(recursion_moment(&MomentQuery::new(&ces, &long)), Err(Error::WordTooLong { .. })));
        let nine = ReducedWord::from_pairs((0..9).map(|k| (k % 2, p())).collect());
        assert!(matches!(nc_moment(&MomentQuery::new(&ces, &nine)), Err(Error::WordTooLong { .. })));
        let ces = vec![diag_compression(), diag_compression()];
        let w = ReducedWord::from_pairs(vec![(0, p())]);
        assert!(matches!(nc_moment(&MomentQuery::new(&ces, &w)), Err(Error::NotScalarCoefficients)));
    }

    #[test]
    fn bimodule_property_over_diagonal() {
        let ces = vec![diag_compression(), diag_compression()];
        let x = CMat::from_row_slice(2, 2, &[r(1.0), r(2.0), r(-1.0), r(0.5)]);
        let y = matrix_unit(2, 1, 0) + matrix_unit(2, 0, 1) * r(3.0);
        let b1 = diag(&[r(2.0), r(-3.0)]);
        let b2 = diag(&[r(0.5), r(4.0)]);
        let w = ReducedWord::from_pairs(vec![(0, x.clone()), (1, y.clone()), (0, x.clone())]);
        let plain = recursion_moment(&MomentQuery::new(&ces, &w)).unwrap();
        let wb = ReducedWord::from_pairs(vec![(0, &b1 * &x), (1, y), (0, &x * &b2)]);
        let both = recursion_moment(&MomentQuery::new(&ces, &wb)).unwrap();
        assert!(frobenius(&(both - &b1 * plain * &b2)) < 1e-12);
    }
}
