//! Free products of unital completely positive bimodule maps.
//!
//! Each `θ_ι: A_ι → D_ι` is dilated through `F_ι = A_ι ⊗_{π∘θ_ι} E_ι` with
//! `E_ι = L²(D_ι, ψ_ι)`, the isometry `v_ι: ζ ↦ 1 ⊗ ζ` and the left action
//! `σ_ι` of `A_ι` on the first factor. The free product map is
//! `θ(x) = v* σ(x) v` on the Fock module of the `E_ι`, where `v` is the free
//! tensor product of the `v_ι`.

use std::sync::Arc;

use crate::algebra::{coordinate_matrix, Algebra, ConditionalExpectation};
use crate::error::{Error, Result};
use crate::fock::{FockModule, ReducedWord};
use crate::freespace::{GradedMap, Letter};
use crate::hilbmod::{gns_module, interior_tensor, same_algebra, HilbertModule, LeftAction, PointedModule};
use crate::numerics::{
    frobenius, identity, kron, least_squares, min_eigenvalue, operator_norm, vectorize, CMat, Tolerance, C64,
};
use crate::oracle::{recursion_moment, MomentQuery};
use crate::sampling::centered_basis;

/// Validated `θ: A → D` with `ψ∘θ = φ`, stored on coordinates.
#[derive(Clone, Debug)]
pub struct UcpMap {
    phi: ConditionalExpectation,
    psi: ConditionalExpectation,
    matrix: CMat,
    checks: UcpChecks,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UcpChecks {
    pub unital_defect: f64,
    /// Smallest eigenvalue of `[θ(aᵢ* aⱼ)]` over the basis of A.
    pub choi_min_eigenvalue: f64,
    pub bimodule_defect: f64,
    pub expectation_defect: f64,
}

impl UcpMap {
    /// `phi: A → B` and `psi: D → B` share the coefficient algebra.
    pub fn new<F>(phi: ConditionalExpectation, psi: ConditionalExpectation, f: F, tol: &Tolerance) -> Result<Self>
    where
        F: Fn(&CMat) -> CMat,
    {
        if !same_algebra(phi.target(), psi.target()) {
            return Err(Error::DimensionMismatch("source and target expectations have different coefficients".into()));
        }
        let a = phi.source().clone();
        let d = psi.source().clone();
        let (matrix, residual) = coordinate_matrix(&a, &d, f)?;
        let bound = 1e3 * tol.abs_eps;
        if residual > bound {
            return Err(Error::NotUcp(format!("image leaves the target algebra (residual {residual:.3e})")));
        }
        let map = |x: &CMat| d.element(&(&matrix * a.coords(x)));

        let unital_defect = frobenius(&(map(&a.one()) - d.one()));
        if unital_defect > bound {
            return Err(Error::NotUcp(format!("θ(1) differs from 1 by {unital_defect:.3e}")));
        }
        let (n, m) = (a.dim(), d.ambient());
        let mut choi = CMat::zeros(n * m, n * m);
        for (i, x) in a.basis().iter().enumerate() {
            for (j, y) in a.basis().iter().enumerate() {
                choi.view_mut((i * m, j * m), (m, m)).copy_from(&map(&(x.adjoint() * y)));
            }
        }
        let choi_min_eigenvalue = min_eigenvalue(&choi, tol)?;
        if choi_min_eigenvalue < -tol.abs_eps * frobenius(&choi).max(1.0) {
            return Err(Error::NotUcp(format!("not completely positive (eigenvalue {choi_min_eigenvalue:.3e})")));
        }
        let mut bimodule_defect = 0.0f64;
        for b in phi.target().basis() {
            let (ba, bd) = (phi.inclusion().map(b), psi.inclusion().map(b));
            for x in a.basis() {
                let tx = map(x);
                bimodule_defect = bimodule_defect
                    .max(frobenius(&(map(&(&ba * x)) - &bd * &tx)))
                    .max(frobenius(&(map(&(x * &ba)) - &tx * &bd)));
            }
        }
        if bimodule_defect > bound {
            return Err(Error::NotBimodule { defect: bimodule_defect });
        }
        let expectation_defect = a
            .basis()
            .iter()
            .map(|x| frobenius(&(psi.apply(&map(x)) - phi.apply(x))))
            .fold(0.0, f64::max);
        if expectation_defect > bound {
            return Err(Error::ExpectationMismatch { defect: expectation_defect });
        }
        let checks = UcpChecks { unital_defect, choi_min_eigenvalue, bimodule_defect, expectation_defect };
        Ok(UcpMap { phi, psi, matrix, checks })
    }

    pub fn source(&self) -> &Arc<Algebra> {
        self.phi.source()
    }

    pub fn target(&self) -> &Arc<Algebra> {
        self.psi.source()
    }

    pub fn coefficient(&self) -> &Arc<Algebra> {
        self.phi.target()
    }

    pub fn source_expectation(&self) -> &ConditionalExpectation {
        &self.phi
    }

    pub fn target_expectation(&self) -> &ConditionalExpectation {
        &self.psi
    }

    /// Coordinates of `θ`, `dim D × dim A`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn checks(&self) -> &UcpChecks {
        &self.checks
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        self.target().element(&(&self.matrix * self.source().coords(a)))
    }
}

#[derive(Clone, Debug)]
pub struct Dilation {
    e: PointedModule,
    f: PointedModule,
    v: CMat,
    defects: DilationDefects,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DilationDefects {
    /// `max_k ‖v* G_k v - G_k‖` over the Gram matrices.
    pub isometry: f64,
    /// `max ‖v* σ(a) v - π(θ(a))‖` over the basis of A.
    pub compression: f64,
    /// `max ‖⟨η, σ(a)η⟩ - φ(a)‖`.
    pub state: f64,
    /// Failure of `v(ξb) = ηb` and `v(E°) ⊆ F°`.
    pub grading: f64,
}

impl DilationDefects {
    pub fn max(&self) -> f64 {
        self.isometry.max(self.compression).max(self.state).max(self.grading)
    }
}

/// Dilate `θ` through `E = L²(D, ψ)`.
pub fn dilate(theta: &UcpMap, tol: &Tolerance) -> Result<Dilation> {
    let e = gns_module(theta.target_expectation(), tol)?;
    let a = theta.source();
    let pi_theta = e.left().pullback(a.clone(), theta.matrix());
    let tp = interior_tensor(&HilbertModule::algebra_module(a), e.module(), &pi_theta, tol)?;
    let sigma = tp.lift_left_action(&LeftAction::regular(a));
    let eta = tp.elementary(&a.unit_coords(), &e.cyclic());
    let f = PointedModule::from_cyclic(
        tp.module.clone(),
        &eta,
        sigma,
        theta.source_expectation().inclusion().clone(),
        tol,
    )?;
    let basis_change = f.class_matrix().expect("pointed modules record their basis change");
    let unit = CMat::from_column_slice(a.dim(), 1, a.unit_coords().as_slice());
    let v = basis_change * tp.realization.quotient_block(&kron(&unit, &identity(e.dim())));

    let isometry = e
        .module()
        .grams()
        .iter()
        .zip(f.module().grams())
        .map(|(ge, gf)| frobenius(&(v.adjoint() * gf * &v - ge)))
        .fold(0.0, f64::max);
    let compression = a
        .basis()
        .iter()
        .map(|x| frobenius(&(v.adjoint() * f.pi(x) * &v - e.pi(&theta.apply(x)))))
        .fold(0.0, f64::max);
    let state = f.expectation_defect(theta.source_expectation());
    let kb = e.b_dim();
    let mut expected = CMat::zeros(f.dim(), e.dim());
    expected.view_mut((0, 0), (kb, kb)).copy_from(&identity(kb));
    let mut graded = v.clone();
    graded.view_mut((kb, kb), (f.center_dim(), e.center_dim())).fill(C64::new(0.0, 0.0));
    let grading = frobenius(&(graded - expected));
    let defects = DilationDefects { isometry, compression, state, grading };
    Ok(Dilation { e, f, v, defects })
}

impl Dilation {
    pub fn source_module(&self) -> &PointedModule {
        &self.e
    }

    pub fn dilated_module(&self) -> &PointedModule {
        &self.f
    }

    /// `v: E → F` in pointed coordinates.
    pub fn isometry(&self) -> &CMat {
        &self.v
    }

    pub fn defects(&self) -> &DilationDefects {
        &self.defects
    }

    /// `v` restricted to `E° → F°`.
    pub fn center_isometry(&self) -> CMat {
        let kb = self.e.b_dim();
        self.v.view((kb, kb), (self.f.center_dim(), self.e.center_dim())).into_owned()
    }
}

/// `θ(x)` identified with an element of the target free product.
#[derive(Clone, Debug)]
pub struct ThetaValue {
    /// Coefficients on target words; letters of length-zero terms are
    /// coefficients placed in factor 0.
    pub terms: Vec<(C64, ReducedWord)>,
    pub residual: f64,
    /// `v* σ(x) v` applied to the coordinates of levels `0..=support`.
    pub operator: CMat,
    pub support: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GradedCase {
    /// Level above `n + p`.
    Above,
    /// Level `n + p`.
    Top,
    /// Level `n + p - 2r`.
    Even,
    /// Level `n + p - 2r - 1`.
    Odd,
    /// Level `n + p - 1` on tensors whose first index differs from the last letter.
    Mismatch,
}

impl GradedCase {
    pub fn name(self) -> &'static str {
        match self {
            GradedCase::Above => "above",
            GradedCase::Top => "top",
            GradedCase::Even => "even",
            GradedCase::Odd => "odd",
            GradedCase::Mismatch => "mismatch",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradedEntry {
    pub word: Vec<usize>,
    pub tensor_level: usize,
    pub level: usize,
    pub case: GradedCase,
    pub residual: f64,
    /// Size of `P_ℓ θ(a₁)⋯θ(a_n)ζ`, to tell vanishing cases apart.
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UcpOutputReport {
    pub unital_defect: f64,
    pub cp_min_eigenvalue: f64,
    pub expectation_defect: f64,
    pub identification_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WordDefects {
    /// `‖θ(w) - θ(a₁)⋯θ(a_n)‖` on the safe coordinates.
    pub product: f64,
    /// Least-squares residual of identifying `θ(w)` with target words.
    pub residual: f64,
    /// `‖ψ(θ(w)) - φ(w)‖`, both sides from the moment recursion.
    pub expectation: f64,
}

pub struct FreeUcp {
    maps: Vec<UcpMap>,
    dilations: Vec<Dilation>,
    target: FockModule,
    dilated: FockModule,
    v: GradedMap,
    target_basis: Vec<Vec<CMat>>,
    tol: Tolerance,
}

/// Build the free product of `thetas` at truncation `L`.
pub fn free_ucp(thetas: Vec<UcpMap>, truncation: usize, tol: &Tolerance) -> Result<FreeUcp> {
    let first = thetas.first().ok_or_else(|| Error::DimensionMismatch("no maps".into()))?;
    if thetas.iter().any(|t| !same_algebra(t.coefficient(), first.coefficient())) {
        return Err(Error::MixedCoefficients);
    }
    let dilations = thetas.iter().map(|t| dilate(t, tol)).collect::<Result<Vec<_>>>()?;
    let target = FockModule::build(dilations.iter().map(|d| d.e.clone()).collect(), truncation, tol)?;
    let dilated = FockModule::build(dilations.iter().map(|d| d.f.clone()).collect(), truncation, tol)?;
    let kb = first.coefficient().dim();
    let letter_maps: Vec<CMat> = dilations.iter().map(|d| d.center_isometry()).collect();
    let v = dilated.space().transport_blocks(target.space(), &identity(kb), &letter_maps)?;
    let target_basis = thetas.iter().map(|t| centered_basis(t.target_expectation(), tol)).collect();
    Ok(FreeUcp { maps: thetas, dilations, target, dilated, v, target_basis, tol: *tol })
}

impl FreeUcp {
    pub fn maps(&self) -> &[UcpMap] {
        &self.maps
    }

    pub fn dilations(&self) -> &[Dilation] {
        &self.dilations
    }

    /// Fock module of the `(E_ι, ξ_ι)` carrying the target free product.
    pub fn target_fock(&self) -> &FockModule {
        &self.target
    }

    /// Fock module of the `(F_ι, η_ι)` carrying `σ`.
    pub fn dilated_fock(&self) -> &FockModule {
        &self.dilated
    }

    pub fn truncation(&self) -> usize {
        self.target.truncation()
    }

    /// `v* σ(x) v` applied to `x` (target Fock coordinates).
    pub fn compress(&self, terms: &[(C64, ReducedWord)], x: &CMat) -> Result<CMat> {
        let (src, dst) = (self.target.space(), self.dilated.space());
        let vx = self.v.apply(src, dst, x);
        let mut acc = CMat::zeros(dst.dim(), x.ncols());
        for (c, w) in terms {
            let (y, overflow) = self.dilated.apply_word(w, &vx)?;
            if overflow > self.tol.abs_eps {
                return Err(Error::TruncationOverflow { needed: w.len(), truncation: self.truncation() });
            }
            acc += y * *c;
        }
        Ok(self.v.adjoint_apply(src, dst, &acc))
    }

    /// Spanning words of the target free product up to length `n`:
    /// coefficients, then alternating words in centered bases.
    pub fn target_words(&self, n: usize) -> Vec<ReducedWord> {
        let b = self.maps[0].coefficient();
        let inc = self.maps[0].target_expectation().inclusion();
        let mut out: Vec<ReducedWord> =
            b.basis().iter().map(|x| ReducedWord::new(vec![Letter::new(0, inc.map(x))])).collect();
        let mut layer = vec![ReducedWord::empty()];
        for _ in 0..n {
            let mut next = Vec::new();
            for w in &layer {
                let last = w.letters().last().map(|l| l.index);
                for (i, fam) in self.target_basis.iter().enumerate() {
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
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }

    fn support_for(&self, n: usize) -> Result<usize> {
        self.truncation().checked_sub(n).ok_or(Error::TruncationOverflow { needed: n, truncation: self.truncation() })
    }

    /// Evaluate `θ` on a combination of words in the `A_ι` and identify the
    /// result with a combination of target words.
    pub fn theta(&self, x: &[(C64, ReducedWord)]) -> Result<ThetaValue> {
        let n = x.iter().map(|(_, w)| w.len()).max().unwrap_or(0);
        let support = self.support_for(n)?;
        let cols = self.target.space().prefix_columns(support);
        let operator = self.compress(x, &cols)?;
        let words = self.target_words(n);
        let mut columns = Vec::with_capacity(words.len());
        for w in &words {
            let (y, _) = self.target.apply_word(w, &cols)?;
            columns.push(vectorize(&y));
        }
        let rhs = vectorize(&operator);
        let (coef, residual) = least_squares(&CMat::from_columns(&columns), &rhs, &self.tol);
        let scale = rhs.norm().max(1.0);
        if residual > 100.0 * self.tol.abs_eps * scale {
            return Err(Error::NotInTarget { residual });
        }
        let terms = coef
            .iter()
            .zip(words)
            .filter(|(c, _)| c.norm() > self.tol.abs_eps)
            .map(|(c, w)| (*c, w))
            .collect();
        Ok(ThetaValue { terms, residual, operator, support })
    }

    /// The word `θ_ι₁(a₁)⋯θ_ιₙ(a_n)` in the target letters.
    pub fn image_word(&self, w: &ReducedWord) -> Result<ReducedWord> {
        let mut out = ReducedWord::empty();
        for (l, &c) in w.letters().iter().zip(w.centered_flags()) {
            let map = self.maps.get(l.index).ok_or(Error::IndexUnknown(l.index))?;
            out.push(Letter::new(l.index, map.apply(&l.element)), c);
        }
        Ok(out)
    }

    /// `‖θ(w) - θ(a₁)⋯θ(a_n)‖` on the safe coordinates, with the
    /// identification residual of `θ(w)`.
    pub fn product_defect(&self, w: &ReducedWord) -> Result<(f64, f64)> {
        let d = self.word_defects(w)?;
        Ok((d.product, d.residual))
    }

    /// Multiplicativity and `ψ∘θ = φ` on one word, sharing the evaluation of `θ(w)`.
    pub fn word_defects(&self, w: &ReducedWord) -> Result<WordDefects> {
        let value = self.theta(&[(C64::new(1.0, 0.0), w.clone())])?;
        let cols = self.target.space().prefix_columns(value.support);
        let (prod, _) = self.target.apply_word(&self.image_word(w)?, &cols)?;
        let product = operator_norm(&(&value.operator - prod))?;
        let expectation = self.expectation_gap(w, &value)?;
        Ok(WordDefects { product, residual: value.residual, expectation })
    }

    fn expectation_gap(&self, w: &ReducedWord, value: &ThetaValue) -> Result<f64> {
        let phis: Vec<ConditionalExpectation> = self.maps.iter().map(|t| t.source_expectation().clone()).collect();
        let psis: Vec<ConditionalExpectation> = self.maps.iter().map(|t| t.target_expectation().clone()).collect();
        let lhs = recursion_moment(&MomentQuery::new(&phis, w))?;
        let mut rhs = CMat::zeros(lhs.nrows(), lhs.ncols());
        for (c, u) in &value.terms {
            rhs += recursion_moment(&MomentQuery::new(&psis, u))? * *c;
        }
        Ok(frobenius(&(lhs - rhs)))
    }

    /// Compare `P_ℓ θ(a₁)⋯θ(a_n) ζ` with `P_ℓ θ(a₁⋯a_n) ζ` for every
    /// canonical basis tensor `ζ` of level `p` and every level `ℓ`.
    pub fn graded_identities(&self, w: &ReducedWord, p: usize) -> Result<Vec<GradedEntry>> {
        let n = w.len();
        let l = self.truncation();
        if n + p > l {
            return Err(Error::TruncationOverflow { needed: n + p, truncation: l });
        }
        let space = self.target.space();
        let range = space.level_range(p);
        let mut z = CMat::zeros(space.dim(), range.len());
        let mut first_index = Vec::with_capacity(range.len());
        for s in 0..space.summand_count() {
            if space.tuple(s).len() != p {
                continue;
            }
            for k in 0..space.summand_dim(s) {
                let col = space.summand_offset(s) + k - range.start;
                z[(space.summand_offset(s) + k, col)] = C64::new(1.0, 0.0);
                first_index.push((col, space.tuple(s).first().copied()));
            }
        }
        first_index.sort();
        let (lhs, _) = self.target.apply_word(&self.image_word(w)?, &z)?;
        let rhs = self.compress(&[(C64::new(1.0, 0.0), w.clone())], &z)?;
        let last = w.letters().last().map(|x| x.index);
        let mut out = Vec::new();
        for level in 0..=l {
            let rows = space.level_range(level);
            let top = n + p;
            let groups: Vec<(GradedCase, Vec<usize>)> = if level > top {
                vec![(GradedCase::Above, (0..z.ncols()).collect())]
            } else if level == top {
                vec![(GradedCase::Top, (0..z.ncols()).collect())]
            } else if level + 1 == top && p > 0 && last.is_some() {
                let (mis, mat): (Vec<_>, Vec<_>) = first_index.iter().partition(|(_, k)| *k != last);
                vec![
                    (GradedCase::Odd, mat.into_iter().map(|(c, _)| c).collect()),
                    (GradedCase::Mismatch, mis.into_iter().map(|(c, _)| c).collect()),
                ]
            } else if (top - level) % 2 == 0 {
                vec![(GradedCase::Even, (0..z.ncols()).collect())]
            } else {
                vec![(GradedCase::Odd, (0..z.ncols()).collect())]
            };
            for (case, cols) in groups {
                if cols.is_empty() {
                    continue;
                }
                let pick = |m: &CMat| CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows.start + i, cols[j])]);
                let (a, b) = (pick(&lhs), pick(&rhs));
                out.push(GradedEntry {
                    word: w.indices(),
                    tensor_level: p,
                    level,
                    case,
                    residual: frobenius(&(&a - &b)),
                    magnitude: frobenius(&a),
                });
            }
        }
        Ok(out)
    }

    /// Unitality, a complete positivity certificate over `[θ(wᵢ* wⱼ)]` and
    /// `ψ∘θ = φ` on `words`.
    pub fn verify_ucp_output(&self, words: &[ReducedWord]) -> Result<UcpOutputReport> {
        let one = C64::new(1.0, 0.0);
        let unit = self.theta(&[(one, ReducedWord::empty())])?;
        let cols = self.target.space().prefix_columns(unit.support);
        let mut unital_defect = frobenius(&(&unit.operator - &cols));
        let mut identification_residual = unit.residual;
        for (c, w) in &unit.terms {
            if w.is_empty() {
                unital_defect = unital_defect.max(c.norm());
            }
        }

        let span = words.iter().map(|w| w.len()).max().unwrap_or(0);
        let support = self.support_for(2 * span)?;
        let k = self.target.space().prefix_dim(support);
        let x = self.target.space().prefix_columns(support);
        let m = words.len();
        let mut block = CMat::zeros(m * k, m * k);
        for (i, wi) in words.iter().enumerate() {
            for (j, wj) in words.iter().enumerate() {
                let value = self.theta(&[(one, wi.adjoint().concat(wj))])?;
                identification_residual = identification_residual.max(value.residual);
                let mut rec = CMat::zeros(self.target.dim(), k);
                for (c, u) in &value.terms {
                    rec += self.target.apply_word(u, &x)?.0 * *c;
                }
                block.view_mut((i * k, j * k), (k, k)).copy_from(&rec.rows(0, k));
            }
        }
        let herm = (&block + block.adjoint()) * C64::new(0.5, 0.0);
        let cp_min_eigenvalue = if m == 0 { 0.0 } else { min_eigenvalue(&herm, &self.tol)? };

        let mut expectation_defect = 0.0f64;
        for w in words {
            let value = self.theta(&[(one, w.clone())])?;
            expectation_defect = expectation_defect.max(self.expectation_gap(w, &value)?);
        }
        Ok(UcpOutputReport { unital_defect, cp_min_eigenvalue, expectation_defect, identification_residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::UnitalInclusion;
    use crate::numerics::{c, diag, matrix_unit, r, ONE};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn trace_m2() -> ConditionalExpectation {
        let a = Algebra::full(2, &tol());
        let inc = UnitalInclusion::new(Algebra::scalars(1), a.clone(), |x| a.one() * x[(0, 0)], &tol()).unwrap();
        ConditionalExpectation::new(inc, |x| CMat::from_element(1, 1, x.trace() / r(2.0)), &tol()).unwrap()
    }

    fn diag_m2() -> ConditionalExpectation {
        let t = tol();
        let inc = UnitalInclusion::subalgebra(Algebra::diagonal(2, &t), Algebra::full(2, &t), &t).unwrap();
        ConditionalExpectation::new(inc, |x| diag(&[x[(0, 0)], x[(1, 1)]]), &t).unwrap()
    }

    fn depolarizing(t: f64) -> UcpMap {
        let ce = trace_m2();
        UcpMap::new(ce.clone(), ce, move |x| x * r(1.0 - t) + identity(2) * (x.trace() / r(2.0) * r(t)), &tol()).unwrap()
    }

    fn diagonal_mix(t: f64) -> UcpMap {
        let ce = diag_m2();
        UcpMap::new(ce.clone(), ce, move |x| x * r(1.0 - t) + diag(&[x[(0, 0)], x[(1, 1)]]) * r(t), &tol()).unwrap()
    }

    #[test]
    fn rejects_bad_maps() {
        let ce = trace_m2();
        assert!(matches!(UcpMap::new(ce.clone(), ce.clone(), |x| x * r(2.0), &tol()), Err(Error::NotUcp(_))));
        assert!(matches!(UcpMap::new(ce.clone(), ce.clone(), |x| x.transpose(), &tol()), Err(Error::NotUcp(_))));
        let swap = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), ONE, ONE, c(0.0, 0.0)]);
        let d = diag_m2();
        assert!(matches!(
            UcpMap::new(d.clone(), d, move |x| &swap * x * &swap, &tol()),
            Err(Error::NotBimodule { .. })
        ));
        let a = Algebra::full(2, &tol());
        let inc = UnitalInclusion::new(Algebra::scalars(1), a.clone(), |x| a.one() * x[(0, 0)], &tol()).unwrap();
        let skew = ConditionalExpectation::new(inc, |x| CMat::from_element(1, 1, x[(0, 0)] * r(0.75) + x[(1, 1)] * r(0.25)), &tol())
            .unwrap();
        assert!(matches!(UcpMap::new(skew, ce, |x| x.clone(), &tol()), Err(Error::ExpectationMismatch { .. })));
    }

    #[test]
    fn identity_dilates_trivially() {
        let ce = trace_m2();
        let id = UcpMap::new(ce.clone(), ce, |x| x.clone(), &tol()).unwrap();
        let d = dilate(&id, &tol()).unwrap();
        assert_eq!(d.dilated_module().dim(), d.source_module().dim());
        let v = d.isometry();
        assert!(frobenius(&(v * v.adjoint() - identity(v.nrows()))) < 1e-10);
        assert!(d.defects().max() < 1e-10);
    }

    #[test]
    fn depolarizing_dilation() {
        let d = dilate(&depolarizing(0.5), &tol()).unwrap();
        assert_eq!(d.source_module().dim(), 4);
        assert_eq!(d.dilated_module().dim(), 16);
        assert!(d.defects().max() < 1e-10, "{:?}", d.defects());
    }

    #[test]
    fn fixes_coefficients() {
        let m = diagonal_mix(0.25);
        for b in m.coefficient().basis() {
            assert!(frobenius(&(m.apply(b) - b)) < 1e-12);
        }
        assert!(dilate(&m, &tol()).unwrap().defects().max() < 1e-10);
    }

    fn letter(i: usize, x: CMat) -> ReducedWord {
        ReducedWord::from_pairs(vec![(i, x)])
    }

    #[test]
    fn free_depolarizing_product() {
        let f = free_ucp(vec![depolarizing(0.5), depolarizing(0.25)], 3, &tol()).unwrap();
        let unit = f.theta(&[(ONE, ReducedWord::empty())]).unwrap();
        assert_eq!(unit.terms.len(), 1);
        assert!((unit.terms[0].0 - ONE).norm() < 1e-10);
        let x = matrix_unit(2, 0, 1);
        let (d, _) = f.product_defect(&letter(1, x.clone())).unwrap();
        assert!(d < 1e-10);
        let z = diag(&[ONE, -ONE]);
        let w = ReducedWord::from_pairs(vec![(0, z.clone()), (1, x.clone()), (0, x.adjoint())]);
        let (d, res) = f.product_defect(&w).unwrap();
        assert!(d < 1e-8 && res < 1e-8, "{d} {res}");
        for p in 0..=1 {
            for e in f.graded_identities(&ReducedWord::from_pairs(vec![(0, z.clone()), (1, x.clone())]), p).unwrap() {
                assert!(e.residual < 1e-8, "{e:?}");
                if matches!(e.case, GradedCase::Above | GradedCase::Mismatch) {
                    assert!(e.magnitude < 1e-12, "{e:?}");
                }
            }
        }
        let words = vec![ReducedWord::empty(), letter(0, z), letter(1, x)];
        let rep = f.verify_ucp_output(&words).unwrap();
        assert!(rep.unital_defect < 1e-10 && rep.expectation_defect < 1e-9, "{rep:?}");
        assert!(rep.cp_min_eigenvalue > -1e-9, "{rep:?}");
    }

    #[test]
    fn same_factor_products_are_not_preserved() {
        let f = free_ucp(vec![depolarizing(0.5), depolarizing(0.5)], 2, &tol()).unwrap();
        let p = matrix_unit(2, 0, 0);
        let w = ReducedWord::from_pairs(vec![(0, p.clone()), (0, p)]);
        let (d, _) = f.product_defect(&w).unwrap();
        assert!(d > 1e-3);
    }

    #[test]
    fn identity_maps_embed() {
        let ce = trace_m2();
        let id = UcpMap::new(ce.clone(), ce, |x| x.clone(), &tol()).unwrap();
        let f = free_ucp(vec![id.clone(), id], 3, &tol()).unwrap();
        let p = matrix_unit(2, 0, 0);
        let w = ReducedWord::from_pairs(vec![(0, p.clone()), (1, p.clone()), (0, matrix_unit(2, 1, 0))]);
        assert!(f.product_defect(&w).unwrap().0 < 1e-10);
    }

    #[test]
    fn diagonal_coefficients() {
        let f = free_ucp(vec![diagonal_mix(0.5), diagonal_mix(0.25)], 3, &tol()).unwrap();
        let x = matrix_unit(2, 0, 1);
        let w = ReducedWord::from_pairs(vec![(0, x.clone()), (1, x.adjoint()), (0, x.clone())]);
        let (d, res) = f.product_defect(&w).unwrap();
        assert!(d < 1e-8 && res < 1e-8, "{d} {res}");
        let e = diag(&[ONE, r(2.0)]);
        let rep = f.verify_ucp_output(&[ReducedWord::empty(), letter(0, x.clone()), letter(1, e)]).unwrap();
        assert!(rep.unital_defect < 1e-10 && rep.expectation_defect < 1e-9, "{rep:?}");
        assert!(rep.cp_min_eigenvalue > -1e-9, "{rep:?}");
    }
}
