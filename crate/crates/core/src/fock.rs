//! The truncated free-product module `(E, ξ) = *_ι (E_ι, ξ_ι)` and the left
//! free representations of the factors on it.

use std::sync::Arc;

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::freespace::{FreeSpace, Letter};
use crate::hilbmod::PointedModule;
use crate::numerics::{frobenius, operator_norm, CMat, CVec, Tolerance, C64, ONE};

/// A word `a₁ a₂ ⋯ a_n` with `a_j ∈ A_{ι_j}`, together with flags recording
/// which letters are known to be centered.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReducedWord {
    letters: Vec<Letter>,
    centered: Vec<bool>,
}

impl ReducedWord {
    pub fn new(letters: Vec<Letter>) -> Self {
        let centered = vec![false; letters.len()];
        ReducedWord { letters, centered }
    }

    pub fn from_pairs(pairs: Vec<(usize, CMat)>) -> Self {
        Self::new(pairs.into_iter().map(|(i, a)| Letter::new(i, a)).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn centered_flags(&self) -> &[bool] {
        &self.centered
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.letters.iter().map(|l| l.index).collect()
    }

    pub fn is_alternating(&self) -> bool {
        self.letters.windows(2).all(|w| w[0].index != w[1].index)
    }

    /// Alternating with every letter flagged centered.
    pub fn is_reduced(&self) -> bool {
        self.is_alternating() && self.centered.iter().all(|c| *c)
    }

    pub fn push(&mut self, letter: Letter, centered: bool) {
        self.letters.push(letter);
        self.centered.push(centered);
    }

    /// `(a₁⋯a_n)* = a_n*⋯a₁*`.
    pub fn adjoint(&self) -> Self {
        ReducedWord {
            letters: self.letters.iter().rev().map(|l| Letter::new(l.index, l.element.adjoint())).collect(),
            centered: self.centered.iter().rev().copied().collect(),
        }
    }

    pub fn concat(&self, other: &ReducedWord) -> Self {
        let mut w = self.clone();
        w.letters.extend(other.letters.iter().cloned());
        w.centered.extend(other.centered.iter().copied());
        w
    }
}

/// Matrix of an operator on the coordinates at levels `0..=support_level`,
/// with the size of anything pushed past the truncation.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub matrix: CMat,
    pub support_level: usize,
    pub overflow: f64,
}

impl TruncatedOperator {
    pub fn is_exact(&self) -> bool {
        self.overflow == 0.0
    }
}

/// Orthogonal projection onto one level of the grading.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedProjection {
    pub level: usize,
    pub range: std::ops::Range<usize>,
    pub dim: usize,
}

impl GradedProjection {
    pub fn matrix(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for i in self.range.clone() {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(x.nrows(), x.ncols());
        let r = self.range.clone();
        out.rows_mut(r.start, r.len()).copy_from(&x.rows(r.start, r.len()));
        out
    }
}

pub struct FockModule {
    space: FreeSpace,
    tol: Tolerance,
}

impl FockModule {
    pub fn build(factors: Vec<PointedModule>, truncation: usize, tol: &Tolerance) -> Result<Self> {
        Ok(FockModule { space: FreeSpace::fock(factors, truncation, tol)?, tol: *tol })
    }

    pub fn space(&self) -> &FreeSpace {
        &self.space
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn truncation(&self) -> usize {
        self.space.truncation()
    }

    pub fn factor_count(&self) -> usize {
        self.space.factor_count()
    }

    pub fn factor(&self, index: usize) -> Result<&PointedModule> {
        self.space.pointed(index)
    }

    pub fn coefficient(&self) -> &Arc<Algebra> {
        self.space.coefficient()
    }

    /// `(tuple, dimension)` for every summand in layout order.
    pub fn summand_dims(&self) -> Vec<(Vec<usize>, usize)> {
        (0..self.space.summand_count())
            .map(|s| (self.space.tuple(s).to_vec(), self.space.summand_dim(s)))
            .collect()
    }

    pub fn level_dim(&self, level: usize) -> usize {
        self.space.level_range(level).len()
    }

    pub fn vacuum(&self) -> CVec {
        self.space.vacuum()
    }

    /// `φ_ι(a)`.
    pub fn factor_expectation(&self, index: usize, a: &CMat) -> Result<CMat> {
        Ok(self.factor(index)?.expectation(a))
    }

    /// `a - φ_ι(a)` as an element of `A_ι`.
    pub fn center(&self, index: usize, a: &CMat) -> Result<CMat> {
        let pm = self.factor(index)?;
        Ok(a - pm.inclusion().map(&pm.expectation(a)))
    }

    pub fn is_centered(&self, index: usize, a: &CMat) -> Result<bool> {
        Ok(frobenius(&self.factor_expectation(index, a)?) <= self.tol.abs_eps)
    }

    /// Set the centered flags from the factor expectations.
    pub fn annotate(&self, w: &ReducedWord) -> Result<ReducedWord> {
        let mut out = ReducedWord::empty();
        for l in w.letters() {
            let c = self.is_centered(l.index, &l.element)?;
            out.push(l.clone(), c);
        }
        Ok(out)
    }

    fn check_flags(&self, w: &ReducedWord) -> Result<()> {
        for (l, c) in w.letters().iter().zip(w.centered_flags()) {
            if *c {
                let e = frobenius(&self.factor_expectation(l.index, &l.element)?);
                if e > self.tol.abs_eps {
                    return Err(Error::InvalidCe(format!("letter flagged centered has expectation norm {e:.3e}")));
                }
            }
        }
        Ok(())
    }

    /// Apply a word to column vectors; no safe-zone check.
    pub fn apply_word(&self, w: &ReducedWord, x: &CMat) -> Result<(CMat, f64)> {
        self.space.apply_letters(w.letters(), x, &self.tol)
    }

    /// `λ_ι(a)` on the whole truncated module.
    pub fn lambda(&self, index: usize, a: &CMat) -> Result<TruncatedOperator> {
        let l = self.truncation();
        let x = self.space.prefix_columns(l);
        let (m, overflow) = self.space.apply_letters(&[Letter::new(index, a.clone())], &x, &self.tol)?;
        Ok(TruncatedOperator { matrix: m, support_level: l, overflow })
    }

    /// `λ(a₁)⋯λ(a_n)` on the coordinates at levels `0..=support_level`,
    /// which requires `n + support_level ≤ L`.
    pub fn act_word(&self, w: &ReducedWord, support_level: usize) -> Result<TruncatedOperator> {
        let needed = w.len() + support_level;
        if needed > self.truncation() {
            return Err(Error::TruncationOverflow { needed, truncation: self.truncation() });
        }
        self.check_flags(w)?;
        let x = self.space.prefix_columns(support_level);
        let (m, overflow) = self.apply_word(w, &x)?;
        Ok(TruncatedOperator { matrix: m, support_level, overflow })
    }

    /// `w·ξ` as a vector.
    pub fn word_vector(&self, w: &ReducedWord) -> Result<CVec> {
        if w.len() > self.truncation() {
            return Err(Error::TruncationOverflow { needed: w.len(), truncation: self.truncation() });
        }
        let x = CMat::from_column_slice(self.dim(), 1, self.vacuum().as_slice());
        let (y, _) = self.apply_word(w, &x)?;
        Ok(y.column(0).into_owned())
    }

    /// `⟨ξ, w ξ⟩ ∈ B`.
    pub fn free_expectation(&self, w: &ReducedWord) -> Result<CMat> {
        let v = self.word_vector(w)?;
        let kb = self.coefficient().dim();
        Ok(self.coefficient().element(&v.rows(0, kb).into_owned()))
    }

    pub fn length_projection(&self, level: usize) -> Result<GradedProjection> {
        if level > self.truncation() {
            return Err(Error::LevelOutOfRange { level, truncation: self.truncation() });
        }
        Ok(GradedProjection { level, range: self.space.level_range(level), dim: self.dim() })
    }

    /// Matrix of `Σ c_j w_j` on the coordinates at levels `0..=L - margin`.
    pub fn combination_matrix(&self, terms: &[(C64, ReducedWord)], margin: usize) -> Result<CMat> {
        let l = self.truncation();
        if margin > l {
            return Err(Error::TruncationOverflow { needed: margin, truncation: l });
        }
        if let Some(long) = terms.iter().map(|(_, w)| w.len()).max() {
            if long > margin {
                return Err(Error::TruncationOverflow { needed: long + l - margin, truncation: l });
            }
        }
        let x = self.space.prefix_columns(l - margin);
        let mut acc = CMat::zeros(self.dim(), x.ncols());
        for (c, w) in terms {
            let (y, _) = self.apply_word(w, &x)?;
            acc += y * *c;
        }
        Ok(acc)
    }

    /// Norm of a word combination on the vectors at levels `≤ L - margin`.
    pub fn safe_norm(&self, terms: &[(C64, ReducedWord)], margin: usize) -> Result<f64> {
        operator_norm(&self.combination_matrix(terms, margin)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ConditionalExpectation, UnitalInclusion};
    use crate::hilbmod::gns_module;
    use crate::numerics::{c, diag, identity, matrix_unit, r, ZERO};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn scalar_inc(a: &Arc<Algebra>) -> UnitalInclusion {
        UnitalInclusion::new(Algebra::scalars(1), a.clone(), |x| a.one() * x[(0, 0)], &tol()).unwrap()
    }

    fn two_point(w0: f64) -> PointedModule {
        let a = Algebra::diagonal(2, &tol());
        let ce = ConditionalExpectation::new(
            scalar_inc(&a),
            move |x| CMat::from_element(1, 1, x[(0, 0)] * r(w0) + x[(1, 1)] * r(1.0 - w0)),
            &tol(),
        )
        .unwrap();
        gns_module(&ce, &tol()).unwrap()
    }

    fn trace_m2() -> PointedModule {
        let a = Algebra::full(2, &tol());
        let ce = ConditionalExpectation::new(scalar_inc(&a), |x| CMat::from_element(1, 1, x.trace() / r(2.0)), &tol())
            .unwrap();
        gns_module(&ce, &tol()).unwrap()
    }

    fn diag_compression() -> PointedModule {
        let t = tol();
        let inc = UnitalInclusion::subalgebra(Algebra::diagonal(2, &t), Algebra::full(2, &t), &t).unwrap();
        let ce = ConditionalExpectation::new(inc, |x| diag(&[x[(0, 0)], x[(1, 1)]]), &t).unwrap();
        gns_module(&ce, &t).unwrap()
    }

    fn p() -> CMat {
        matrix_unit(2, 0, 0)
    }

    #[test]
    fn build_dimensions() {
        // a single factor has no alternating tuples beyond length one
        let f = FockModule::build(vec![two_point(0.5)], 3, &tol()).unwrap();
        assert_eq!(f.dim(), 2);
        let f = FockModule::build(vec![two_point(0.5), two_point(0.5)], 2, &tol()).unwrap();
        assert_eq!(f.dim(), 5);
        let tuples: Vec<_> = f.summand_dims().into_iter().map(|(t, _)| t).collect();
        assert_eq!(tuples, vec![vec![], vec![0], vec![1], vec![0, 1], vec![1, 0]]);
        let f = FockModule::build(vec![trace_m2(), trace_m2()], 0, &tol()).unwrap();
        assert_eq!(f.dim(), 1);
        let f = FockModule::build(vec![diag_compression()], 0, &tol()).unwrap();
        assert_eq!(f.dim(), 2);
    }

    #[test]
    fn mixed_coefficients_rejected() {
        let r = FockModule::build(vec![trace_m2(), diag_compression()], 2, &tol());
        assert!(matches!(r, Err(Error::MixedCoefficients)));
    }

    #[test]
    fn unknown_index() {
        let f = FockModule::build(vec![trace_m2()], 2, &tol()).unwrap();
        assert!(matches!(f.lambda(3, &identity(2)), Err(Error::IndexUnknown(3))));
    }

    #[test]
    fn unit_and_coefficients_act_trivially() {
        let f = FockModule::build(vec![diag_compression(), diag_compression()], 3, &tol()).unwrap();
        let id = f.lambda(0, &identity(2)).unwrap();
        assert!(frobenius(&(id.matrix - identity(f.dim()))) < 1e-12);
        let b = diag(&[r(2.0), c(0.0, 1.0)]);
        let m = f.lambda(1, &b).unwrap();
        // ξ·b has coordinates of b in the vacuum block
        let v = m.matrix.column(0).into_owned();
        let want = f.coefficient().coords(&b);
        assert!((v.rows(0, 2).into_owned() - want).norm() < 1e-12);
        assert!(v.rows(2, f.dim() - 2).norm() < 1e-12);
    }

    #[test]
    fn two_letter_moment_over_scalars() {
        let f = FockModule::build(vec![two_point(0.3), trace_m2()], 3, &tol()).unwrap();
        let a1 = diag(&[r(2.0), r(-1.0)]);
        let a2 = CMat::from_row_slice(2, 2, &[r(1.0), c(0.0, 2.0), r(3.0), r(-0.5)]);
        let w = ReducedWord::from_pairs(vec![(0, a1.clone()), (1, a2.clone())]);
        let got = f.free_expectation(&w).unwrap()[(0, 0)];
        let want = (r(0.3 * 2.0 - 0.7)) * (a2.trace() / r(2.0));
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn projection_moment() {
        let f = FockModule::build(vec![two_point(0.5), two_point(0.5)], 4, &tol()).unwrap();
        let w = ReducedWord::from_pairs(vec![(0, p()), (1, p())]);
        assert!((f.free_expectation(&w).unwrap()[(0, 0)] - r(0.25)).norm() < 1e-12);
        // (p+q)^3 expanded
        let mut m3 = ZERO;
        for bits in 0..8u32 {
            let pairs = (0..3).map(|k| (((bits >> k) & 1) as usize, p())).collect();
            m3 += f.free_expectation(&ReducedWord::from_pairs(pairs)).unwrap()[(0, 0)];
        }
        assert!((m3 - r(2.5)).norm() < 1e-12);
    }

    #[test]
    fn centered_words_vanish_and_map_vacuum_to_tensors() {
        let f = FockModule::build(vec![trace_m2(), diag_compression_scalar_free()], 5, &tol()).unwrap();
        let x = matrix_unit(2, 0, 1);
        let y = diag(&[r(1.0), r(-1.0)]);
        let mut w = ReducedWord::empty();
        for k in 0..5 {
            let idx = k % 2;
            w.push(Letter::new(idx, if idx == 0 { x.clone() } else { y.clone() }), true);
        }
        assert!(w.is_reduced());
        assert!(frobenius(&f.free_expectation(&w).unwrap()) < 1e-12);
        // the vector lives in the level-5 summand (0,1,0,1,0) and equals the
        // tensor of the letter classes
        let v = f.word_vector(&w).unwrap();
        let s = f.space().summand_index(&[0, 1, 0, 1, 0]).unwrap();
        let off = f.space().summand_offset(s);
        let d = f.space().summand_dim(s);
        assert!((v.norm() - v.rows(off, d).norm()).abs() < 1e-12);
        let c0 = f.factor(0).unwrap().class_of(&x).unwrap().rows(1, 3).into_owned();
        let c1 = f.factor(1).unwrap().class_of(&y).unwrap().rows(1, 1).into_owned();
        let mut t = c0.clone();
        for k in 1..5 {
            let next = if k % 2 == 0 { &c0 } else { &c1 };
            t = crate::numerics::kron_vec(&t, next);
        }
        assert!((v.rows(off, d).into_owned() - t).norm() < 1e-12);
    }

    fn diag_compression_scalar_free() -> PointedModule {
        two_point(0.5)
    }

    #[test]
    fn projections_partition_identity() {
        let f = FockModule::build(vec![trace_m2(), two_point(0.5)], 3, &tol()).unwrap();
        let mut sum = CMat::zeros(f.dim(), f.dim());
        for l in 0..=3 {
            let p = f.length_projection(l).unwrap();
            let m = p.matrix();
            assert!(frobenius(&(&m * &m - &m)) < 1e-14);
            for l2 in 0..=3 {
                if l2 != l {
                    assert!(frobenius(&(&m * f.length_projection(l2).unwrap().matrix())) < 1e-14);
                }
            }
            sum += m;
        }
        assert!(frobenius(&(sum - identity(f.dim()))) < 1e-14);
        let p0 = f.length_projection(0).unwrap();
        let xi = CMat::from_column_slice(f.dim(), 1, f.vacuum().as_slice());
        assert!(frobenius(&(p0.apply(&xi) - &xi)) < 1e-14);
        assert!(matches!(f.length_projection(4), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn act_word_safe_zone() {
        let f = FockModule::build(vec![trace_m2(), trace_m2()], 3, &tol()).unwrap();
        let w = ReducedWord::from_pairs(vec![(0, matrix_unit(2, 0, 1)), (1, matrix_unit(2, 1, 1))]);
        assert!(f.act_word(&w, 1).unwrap().is_exact());
        assert!(matches!(f.act_word(&w, 2), Err(Error::TruncationOverflow { .. })));
        let e = f.act_word(&ReducedWord::empty(), 3).unwrap();
        assert!(frobenius(&(e.matrix - identity(f.dim()))) < 1e-14);
        // the full operator does overflow at the top level
        assert!(!f.lambda(0, &matrix_unit(2, 0, 1)).unwrap().is_exact());
    }

    #[test]
    fn star_property_over_diagonal() {
        let f = FockModule::build(vec![diag_compression(), diag_compression()], 4, &tol()).unwrap();
        let w = ReducedWord::from_pairs(vec![
            (0, CMat::from_row_slice(2, 2, &[r(1.0), c(0.5, 1.0), r(2.0), r(-1.0)])),
            (1, matrix_unit(2, 0, 1)),
        ]);
        let k = f.space().prefix_dim(2);
        let a = f.act_word(&w, 2).unwrap().matrix.rows(0, k).into_owned();
        let b = f.act_word(&w.adjoint(), 2).unwrap().matrix.rows(0, k).into_owned();
        assert!(frobenius(&(a.adjoint() - b)) < 1e-12);
    }

    #[test]
    fn safe_norm_examples() {
        let f = FockModule::build(vec![trace_m2(), two_point(0.5)], 3, &tol()).unwrap();
        let one = [(ONE, ReducedWord::empty())];
        assert!((f.safe_norm(&one, 0).unwrap() - 1.0).abs() < 1e-12);
        let u = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let w = [(ONE, ReducedWord::from_pairs(vec![(0, u)]))];
        assert!((f.safe_norm(&w, 1).unwrap() - 1.0).abs() < 1e-12);
    }
}
