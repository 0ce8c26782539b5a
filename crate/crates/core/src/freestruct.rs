//! Structure of the free product relative to one factor: the conditional
//! expectation onto that factor, representations induced from it, and a
//! freeness checker for families of subalgebras.

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::fock::{FockModule, ReducedWord};
use crate::freespace::{FreeSpace, Letter, LetterAction};
use crate::hilbmod::{HilbertModule, LeftAction};
use crate::numerics::{column_space, frobenius, identity, least_squares, vectorize, CMat, CVec, Tolerance, C64, ONE};
use std::sync::Arc;

/// Compression of a word combination to `ξB ⊕ E°_ι₀`, identified with an
/// element of `A_ι₀`.
pub fn factor_cexp(fock: &FockModule, pivot: usize, x: &[(C64, ReducedWord)]) -> Result<CMat> {
    let tol = fock.tolerance();
    let pm = fock.factor(pivot)?;
    let space = fock.space();
    let longest = x.iter().map(|(_, w)| w.len()).max().unwrap_or(0);
    if longest + 1 > fock.truncation() {
        return Err(Error::TruncationOverflow { needed: longest + 1, truncation: fock.truncation() });
    }
    let kb = fock.coefficient().dim();
    let s = space.summand_index(&[pivot]).expect("level one exists when L ≥ 1");
    let (off, dc) = (space.summand_offset(s), space.summand_dim(s));
    let rows: Vec<usize> = (0..kb).chain(off..off + dc).collect();
    let mut cols = CMat::zeros(space.dim(), rows.len());
    for (j, &r) in rows.iter().enumerate() {
        cols[(r, j)] = ONE;
    }
    let mut image = CMat::zeros(space.dim(), rows.len());
    for (c, w) in x {
        let (y, _) = fock.apply_word(w, &cols)?;
        image += y * *c;
    }
    let compressed = CMat::from_fn(rows.len(), rows.len(), |i, j| image[(rows[i], j)]);
    let alg = pm.algebra();
    let design = CMat::from_columns(
        &pm.left().matrices().iter().map(vectorize).collect::<Vec<_>>(),
    );
    let target = vectorize(&compressed);
    let (coords, residual) = least_squares(&design, &target, tol);
    if residual > 100.0 * tol.abs_eps * frobenius(&compressed).max(1.0) {
        return Err(Error::NotInFactor { residual });
    }
    Ok(alg.element(&coords))
}

/// A representation of one factor on a finite-dimensional Hilbert space,
/// stored on the factor's basis.
#[derive(Clone, Debug)]
pub struct SeedRep {
    action: LeftAction,
}

impl SeedRep {
    pub fn new(algebra: Arc<Algebra>, mats: Vec<CMat>, tol: &Tolerance) -> Result<Self> {
        let action = LeftAction::new(algebra, mats).map_err(|e| Error::SeedNotStar(e.to_string()))?;
        let d = action.dim();
        let defects = action.star_defects(&HilbertModule::hilbert_space(d));
        let scale = action.matrices().iter().map(frobenius).fold(1.0, f64::max);
        if defects.max() > 100.0 * tol.abs_eps * scale {
            return Err(Error::SeedNotStar(format!(
                "multiplicative {:.3e}, adjoint {:.3e}, unit {:.3e}",
                defects.multiplicative, defects.adjoint, defects.unit
            )));
        }
        Ok(SeedRep { action })
    }

    /// Build from a map evaluated on the basis.
    pub fn from_fn<F: Fn(&CMat) -> CMat>(algebra: Arc<Algebra>, f: F, tol: &Tolerance) -> Result<Self> {
        let mats = algebra.basis().iter().map(f).collect();
        Self::new(algebra, mats, tol)
    }

    pub fn dim(&self) -> usize {
        self.action.dim()
    }

    pub fn action(&self) -> &LeftAction {
        &self.action
    }
}

/// Representation of the free product induced from a representation of one
/// factor, on `V ⊕ ⨁ E°_ι₁ ⊗ ⋯ ⊗ E°_ι_n ⊗ V` with `ι_n ≠ ι₀`.
pub struct InducedRep {
    space: FreeSpace,
    tol: Tolerance,
}

pub fn induce_rep(fock: &FockModule, pivot: usize, seed: &SeedRep, truncation: usize) -> Result<InducedRep> {
    let factors = (0..fock.factor_count()).map(|i| fock.factor(i).cloned()).collect::<Result<Vec<_>>>()?;
    let space = FreeSpace::induced(factors, pivot, seed.action().clone(), truncation, fock.tolerance())?;
    Ok(InducedRep { space, tol: *fock.tolerance() })
}

impl InducedRep {
    pub fn space(&self) -> &FreeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn pivot(&self) -> usize {
        self.space.pivot().expect("induced spaces have a pivot")
    }

    pub fn truncation(&self) -> usize {
        self.space.truncation()
    }

    pub fn apply_word(&self, w: &ReducedWord, x: &CMat) -> Result<(CMat, f64)> {
        self.space.apply_letters(w.letters(), x, &self.tol)
    }

    /// `σ(w)` on the coordinates at levels `0..=support_level`.
    pub fn word_matrix(&self, w: &ReducedWord, support_level: usize) -> Result<CMat> {
        let needed = w.len() + support_level;
        if needed > self.truncation() {
            return Err(Error::TruncationOverflow { needed, truncation: self.truncation() });
        }
        Ok(self.apply_word(w, &self.space.prefix_columns(support_level))?.0)
    }

    /// `‖σ(u)σ(w) - σ(u·w)‖` where the last letter of `u` and the first of `w`
    /// are multiplied into one letter when they come from the same factor.
    pub fn multiplicativity_defect(&self, u: &ReducedWord, w: &ReducedWord) -> Result<f64> {
        let support = self.truncation().checked_sub(u.len() + w.len()).ok_or(Error::TruncationOverflow {
            needed: u.len() + w.len(),
            truncation: self.truncation(),
        })?;
        let x = self.space.prefix_columns(support);
        let (sw, _) = self.apply_word(w, &x)?;
        let (usw, _) = self.apply_word(u, &sw)?;
        let mut merged: Vec<Letter> = u.letters().to_vec();
        let mut rest = w.letters();
        if let (Some(last), Some(first)) = (merged.last_mut(), rest.first()) {
            if last.index == first.index {
                last.element = &last.element * &first.element;
                rest = &rest[1..];
            }
        }
        merged.extend(rest.iter().cloned());
        let (direct, _) = self.space.apply_letters(&merged, &x, &self.tol)?;
        Ok(frobenius(&(usw - direct)))
    }

    /// `‖σ(w)* - σ(w*)‖` on the block of levels `0..=L - |w|`.
    pub fn adjoint_defect(&self, w: &ReducedWord) -> Result<f64> {
        let support = self.truncation().checked_sub(w.len()).ok_or(Error::TruncationOverflow {
            needed: w.len(),
            truncation: self.truncation(),
        })?;
        let k = self.space.prefix_dim(support);
        let a = self.word_matrix(w, support)?.rows(0, k).into_owned();
        let b = self.word_matrix(&w.adjoint(), support)?.rows(0, k).into_owned();
        Ok(frobenius(&(a.adjoint() - b)))
    }
}

/// Intertwiner from the representation induced by `π_ι₀` on `E_ι₀` into a
/// Fock module of truncation at least one more than the induced one.
pub fn gns_seed_intertwiner(fock: &FockModule, induced: &InducedRep) -> Result<CMat> {
    let pivot = induced.pivot();
    let space = fock.space();
    let kb = fock.coefficient().dim();
    let s = space.summand_index(&[pivot]).ok_or(Error::TruncationOverflow { needed: 1, truncation: 0 })?;
    let dv = induced.space.terminal_dim();
    let dc = space.summand_dim(s);
    if dv != kb + dc {
        return Err(Error::DimensionMismatch("seed is not the pivot module".into()));
    }
    let mut base = CMat::zeros(space.dim(), dv);
    for i in 0..kb {
        base[(i, i)] = ONE;
    }
    for i in 0..dc {
        base[(space.summand_offset(s) + i, kb + i)] = ONE;
    }
    let maps = (0..fock.factor_count())
        .map(|i| Ok(identity(fock.factor(i)?.center_dim())))
        .collect::<Result<Vec<_>>>()?;
    space.transport(&induced.space, &base, &maps, fock.tolerance())
}

/// A family member: a subalgebra of one factor, given by a spanning set.
#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub factor: usize,
    pub basis: Vec<CMat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreenessReport {
    pub max_residual: f64,
    pub words_checked: usize,
    /// `(member, basis element)` pairs of the worst word, leftmost first.
    pub worst_word: Vec<(usize, usize)>,
}

impl FreenessReport {
    pub fn passed(&self, bound: f64) -> bool {
        self.max_residual <= bound
    }
}

/// Orthonormal basis (for the trace inner product) of the span of the
/// centered elements.
fn centered_basis(elements: &[CMat], center: impl Fn(&CMat) -> CMat, tol: &Tolerance) -> Vec<CMat> {
    if elements.is_empty() {
        return vec![];
    }
    let n = elements[0].nrows();
    let cols: Vec<CVec> = elements.iter().map(|e| vectorize(&center(e))).collect();
    let span = column_space(&CMat::from_columns(&cols), tol);
    (0..span.ncols())
        .map(|j| CMat::from_column_slice(n, n, span.column(j).as_slice()))
        .collect()
}

fn dfs<F, E>(
    members: usize,
    basis_len: &[usize],
    depth: usize,
    apply: &F,
    expect: &E,
    start: CMat,
) -> Result<FreenessReport>
where
    F: Fn(usize, usize, &CMat) -> Result<CMat>,
    E: Fn(&CMat) -> f64,
{
    let mut report = FreenessReport { max_residual: 0.0, words_checked: 0, worst_word: vec![] };
    let mut stack: Vec<(usize, usize)> = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn go<F, E>(
        members: usize,
        basis_len: &[usize],
        depth: usize,
        apply: &F,
        expect: &E,
        v: &CMat,
        last: Option<usize>,
        stack: &mut Vec<(usize, usize)>,
        report: &mut FreenessReport,
    ) -> Result<()>
    where
        F: Fn(usize, usize, &CMat) -> Result<CMat>,
        E: Fn(&CMat) -> f64,
    {
        if stack.len() == depth {
            return Ok(());
        }
        for m in 0..members {
            if Some(m) == last {
                continue;
            }
            for k in 0..basis_len[m] {
                let next = apply(m, k, v)?;
                stack.push((m, k));
                let e = expect(&next);
                report.words_checked += 1;
                if e > report.max_residual || report.worst_word.is_empty() {
                    report.max_residual = report.max_residual.max(e);
                    report.worst_word = stack.iter().rev().copied().collect();
                }
                go(members, basis_len, depth, apply, expect, &next, Some(m), stack, report)?;
                stack.pop();
            }
        }
        Ok(())
    }
    go(members, basis_len, depth, apply, expect, &start, None, &mut stack, &mut report)?;
    Ok(report)
}

/// Largest vacuum expectation over alternating products of centered
/// elements from the family members, up to the given length.
pub fn verify_freeness(fock: &FockModule, family: &[FamilyMember], depth: usize) -> Result<FreenessReport> {
    if depth > fock.truncation() {
        return Err(Error::TruncationOverflow { needed: depth, truncation: fock.truncation() });
    }
    let tol = fock.tolerance();
    let space = fock.space();
    let mut actions: Vec<Vec<LetterAction>> = Vec::new();
    for m in family {
        let pm = fock.factor(m.factor)?;
        let basis = centered_basis(&m.basis, |a| a - pm.inclusion().map(&pm.expectation(a)), tol);
        actions.push(
            basis
                .into_iter()
                .map(|a| space.prepare(&Letter::new(m.factor, a), tol))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let lens: Vec<usize> = actions.iter().map(|a| a.len()).collect();
    let kb = fock.coefficient().dim();
    let xi = CMat::from_column_slice(space.dim(), 1, space.vacuum().as_slice());
    dfs(
        family.len(),
        &lens,
        depth,
        &|m, k, v| Ok(space.apply_action(&actions[m][k], v).0),
        &|v| v.rows(0, kb).norm(),
        xi,
    )
}

/// The same check for operators on a Hilbert space with a vector state,
/// for models outside any free product.
pub fn verify_freeness_model(ops: &[Vec<CMat>], state: &CVec, depth: usize, tol: &Tolerance) -> Result<FreenessReport> {
    let d = state.len();
    let xi = CMat::from_column_slice(d, 1, state.as_slice());
    let expect = |a: &CMat| (state.adjoint() * a * state)[(0, 0)];
    let centered: Vec<Vec<CMat>> = ops
        .iter()
        .map(|m| centered_basis(m, |a| a - identity(d) * expect(a), tol))
        .collect();
    let lens: Vec<usize> = centered.iter().map(|c| c.len()).collect();
    dfs(
        ops.len(),
        &lens,
        depth,
        &|m, k, v| Ok(&centered[m][k] * v),
        &|v| (state.adjoint() * v)[(0, 0)].norm(),
        xi,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ConditionalExpectation, UnitalInclusion};
    use crate::hilbmod::{gns_module, PointedModule};
    use crate::numerics::{c, diag, matrix_unit, r, ZERO};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn scalar_inc(a: &Arc<Algebra>) -> UnitalInclusion {
        UnitalInclusion::new(Algebra::scalars(1), a.clone(), |x| a.one() * x[(0, 0)], &tol()).unwrap()
    }

    fn two_point() -> PointedModule {
        let a = Algebra::diagonal(2, &tol());
        let ce = ConditionalExpectation::new(scalar_inc(&a), |x| CMat::from_element(1, 1, (x[(0, 0)] + x[(1, 1)]) / r(2.0)), &tol())
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

    fn generic() -> CMat {
        CMat::from_row_slice(2, 2, &[r(1.0), c(2.0, -1.0), r(0.5), c(0.0, 3.0)])
    }

    #[test]
    fn factor_cexp_examples() {
        for fock in [
            FockModule::build(vec![trace_m2(), trace_m2()], 5, &tol()).unwrap(),
            FockModule::build(vec![diag_compression(), diag_compression()], 5, &tol()).unwrap(),
        ] {
            let a = generic();
            let on = factor_cexp(&fock, 0, &[(ONE, ReducedWord::from_pairs(vec![(0, a.clone())]))]).unwrap();
            assert!(frobenius(&(on - &a)) < 1e-10);
            let off = factor_cexp(&fock, 0, &[(ONE, ReducedWord::from_pairs(vec![(1, a.clone())]))]).unwrap();
            let pm1 = fock.factor(1).unwrap();
            let want = pm1.inclusion().map(&pm1.expectation(&a));
            assert!(frobenius(&(off - want)) < 1e-10);
            let x0 = fock.center(0, &a).unwrap();
            let x1 = fock.center(1, &matrix_unit(2, 0, 1)).unwrap();
            for n in 2..=4 {
                let w = ReducedWord::from_pairs(
                    (0..n).map(|k| if k % 2 == 0 { (0, x0.clone()) } else { (1, x1.clone()) }).collect(),
                );
                let v = factor_cexp(&fock, 0, &[(ONE, w)]).unwrap();
                assert!(frobenius(&v) < 1e-10, "length {n}: {v}");
            }
        }
    }

    #[test]
    fn factor_cexp_needs_room() {
        let fock = FockModule::build(vec![trace_m2(), trace_m2()], 2, &tol()).unwrap();
        let w = ReducedWord::from_pairs(vec![(0, generic()), (1, generic())]);
        assert!(matches!(factor_cexp(&fock, 0, &[(ONE, w)]), Err(Error::TruncationOverflow { .. })));
    }

    #[test]
    fn seed_validation() {
        let a = Algebra::diagonal(2, &tol());
        assert!(SeedRep::from_fn(a.clone(), |x| CMat::from_element(1, 1, x[(0, 0)]), &tol()).is_ok());
        let bad = SeedRep::from_fn(a, |x| CMat::from_element(1, 1, x[(0, 0)] * r(2.0)), &tol());
        assert!(matches!(bad, Err(Error::SeedNotStar(_))));
    }

    #[test]
    fn character_seed_gives_representation() {
        let fock = FockModule::build(vec![two_point(), trace_m2()], 4, &tol()).unwrap();
        let seed = SeedRep::from_fn(Algebra::diagonal(2, &tol()), |x| CMat::from_element(1, 1, x[(0, 0)]), &tol()).unwrap();
        let ind = induce_rep(&fock, 0, &seed, 4).unwrap();
        let u = ReducedWord::from_pairs(vec![(1, generic()), (0, diag(&[r(2.0), r(-1.0)]))]);
        let w = ReducedWord::from_pairs(vec![(0, diag(&[c(0.0, 1.0), r(3.0)])), (1, matrix_unit(2, 1, 0))]);
        assert!(ind.multiplicativity_defect(&u, &w).unwrap() < 1e-10);
        assert!(ind.adjoint_defect(&u.concat(&w)).unwrap() < 1e-10);
        // a letter from the other factor applied to V lands in V ⊕ E°⊗V
        let x = ind.space().prefix_columns(0);
        let (y, _) = ind.apply_word(&ReducedWord::from_pairs(vec![(1, generic())]), &x).unwrap();
        let s = ind.space().summand_index(&[1]).unwrap();
        let end = ind.space().summand_offset(s) + ind.space().summand_dim(s);
        assert!(y.rows(end, ind.dim() - end).norm() == 0.0);
        assert!((y[(0, 0)] - generic().trace() / r(2.0)).norm() < 1e-12);
    }

    #[test]
    fn gns_seed_matches_fock() {
        for (factors, l) in [
            (vec![trace_m2(), two_point()], 3usize),
            (vec![diag_compression(), diag_compression()], 3),
        ] {
            let fock = FockModule::build(factors, l + 1, &tol()).unwrap();
            let pm = fock.factor(0).unwrap();
            let seed = SeedRep::new(pm.algebra().clone(), pm.left().matrices().to_vec(), &tol()).unwrap();
            let ind = induce_rep(&fock, 0, &seed, l).unwrap();
            let u = gns_seed_intertwiner(&fock, &ind).unwrap();
            assert!(frobenius(&(u.adjoint() * &u - identity(ind.dim()))) < 1e-10);
            let k = fock.space().prefix_dim(l);
            let cover = u.rows(0, k).into_owned();
            assert!(frobenius(&(&cover * cover.adjoint() - identity(k))) < 1e-10);
            let a1 = fock.factor(1).unwrap().algebra();
            let g1 = a1.element(&a1.coords(&generic()));
            let w = ReducedWord::from_pairs(vec![(1, g1), (0, generic().adjoint())]);
            let support = l - w.len();
            let x = ind.space().prefix_columns(support);
            let lhs = &u * ind.apply_word(&w, &x).unwrap().0;
            let rhs = fock.apply_word(&w, &(&u * &x)).unwrap().0;
            assert!(frobenius(&(lhs - rhs)) < 1e-10);
        }
    }

    #[test]
    fn canonical_factors_are_free() {
        let t = tol();
        let fock = FockModule::build(vec![trace_m2(), diag_compression_free_partner()], 4, &t).unwrap();
        let family = vec![
            FamilyMember { factor: 0, basis: Algebra::full(2, &t).basis().to_vec() },
            FamilyMember { factor: 1, basis: Algebra::diagonal(2, &t).basis().to_vec() },
        ];
        let rep = verify_freeness(&fock, &family, 4).unwrap();
        assert!(rep.passed(10.0 * t.abs_eps), "{rep:?}");
        assert_eq!(rep.words_checked, 4 + 6 + 12 + 18);
        let rep = verify_freeness(&fock, &family, 1).unwrap();
        assert_eq!(rep.max_residual, 0.0f64.max(rep.max_residual));
        assert!(rep.max_residual < 1e-15);
    }

    fn diag_compression_free_partner() -> PointedModule {
        two_point()
    }

    #[test]
    fn commuting_copies_are_not_free() {
        let t = tol();
        let p = diag(&[ONE, ZERO]);
        let one = identity(2);
        let ops = vec![
            vec![crate::numerics::kron(&p, &one)],
            vec![crate::numerics::kron(&one, &p)],
        ];
        let state = CVec::from_element(4, r(0.5));
        let rep = verify_freeness_model(&ops, &state, 4, &t).unwrap();
        // E[p°q°p°q°] = E[p°²] E[q°²] = 1/16
        assert!((rep.max_residual - 1.0 / 16.0).abs() < 1e-12, "{rep:?}");
        assert_eq!(rep.worst_word.len(), 4);
    }
}
