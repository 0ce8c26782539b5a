//! Nested free products: subalgebras `A_ι ⊆ Ã_ι`, coefficients `B ⊆ B̃` and
//! expectations `φ̃_ι` with `φ̃_ι(A_ι) ⊆ B`. The lower Fock module sits inside
//! the upper one, and the orthogonal complement splits into blocks carrying
//! induced representations of the lower free product.

use std::collections::HashMap;
use std::sync::Arc;

use crate::algebra::{coordinate_matrix, gns_faithful, Algebra, ConditionalExpectation, UnitalInclusion};
use crate::error::{Error, Result};
use crate::fock::{FockModule, ReducedWord};
use crate::freestruct::{induce_rep, SeedRep};
use crate::freespace::Letter;
use crate::hilbmod::{gns_module, gns_module_unchecked};
use crate::numerics::{column_space, frobenius, identity, operator_norm, relative_complement, svd, CMat, CVec, Tolerance, C64};

/// Input for [`build_nested`].
#[derive(Clone)]
pub struct NestedSpec {
    /// `φ̃_ι: Ã_ι → B̃`.
    pub upper: Vec<ConditionalExpectation>,
    /// `A_ι`, subalgebras of the ambient matrices of `Ã_ι`.
    pub lower: Vec<Arc<Algebra>>,
    /// `B`, a subalgebra of the ambient matrices of `B̃`.
    pub coefficient: Arc<Algebra>,
}

pub struct NestedFreeProduct {
    lower: FockModule,
    upper: FockModule,
    inclusion: CMat,
    letter_maps: Vec<CMat>,
    tol: Tolerance,
}

/// Build both free products and the isometric inclusion of the lower Fock
/// module into the upper one.
pub fn build_nested(spec: &NestedSpec, truncation: usize, tol: &Tolerance) -> Result<NestedFreeProduct> {
    if spec.upper.len() != spec.lower.len() || spec.upper.is_empty() {
        return Err(Error::DimensionMismatch("one lower algebra per upper factor".into()));
    }
    let b = &spec.coefficient;
    let mut lower_pm = Vec::new();
    let mut upper_pm = Vec::new();
    for (factor, (ce, a)) in spec.upper.iter().zip(&spec.lower).enumerate() {
        if a.ambient() != ce.source().ambient() || b.ambient() != ce.target().ambient() {
            return Err(Error::DimensionMismatch(format!("factor {factor}: ambient sizes differ")));
        }
        let (_, residual) = coordinate_matrix(a, b, |x| ce.apply(x))?;
        if residual > 1e3 * tol.abs_eps {
            return Err(Error::RangeViolation { factor, residual });
        }
        let lower_inc = UnitalInclusion::new(b.clone(), a.clone(), |x| ce.inclusion().map(x), tol)?;
        let restricted = ConditionalExpectation::new(lower_inc, |x| ce.apply(x), tol)?;
        if !gns_faithful(&restricted, tol)? {
            return Err(Error::NotFaithfulRestriction { factor });
        }
        lower_pm.push(gns_module(&restricted, tol)?);
        upper_pm.push(gns_module_unchecked(ce, tol)?);
    }
    let upper_b = spec.upper[0].target().clone();
    let lower = FockModule::build(lower_pm, truncation, tol)?;
    let upper = FockModule::build(upper_pm, truncation, tol)?;

    let mut letter_maps = Vec::new();
    for (factor, a) in spec.lower.iter().enumerate() {
        let lp = lower.factor(factor)?;
        let up = upper.factor(factor)?;
        let lo_class = lp.class_matrix().expect("GNS modules carry classes");
        let up_class = up.class_matrix().expect("GNS modules carry classes");
        let ua = up.algebra();
        let lift = CMat::from_columns(&a.basis().iter().map(|x| ua.coords(x)).collect::<Vec<_>>());
        let up_of_lower = up_class * lift;
        // J_ι = (upper classes) · (lower classes)⁺, well defined since lower
        // null classes are upper null classes
        let pinv = svd(lo_class).pseudo_inverse(tol.abs_eps);
        let j = up_of_lower * pinv;
        let (kb, kbt) = (lp.b_dim(), up.b_dim());
        let leak = frobenius(&j.view((0, kb), (kbt, lp.center_dim())).into_owned());
        if leak > 1e3 * tol.abs_eps {
            return Err(Error::RangeViolation { factor, residual: leak });
        }
        letter_maps.push(j.view((kbt, kb), (up.center_dim(), lp.center_dim())).into_owned());
    }
    let (base_coords, _) = coordinate_matrix(b, &upper_b, |x| x.clone())?;
    let mut base = CMat::zeros(upper.dim(), b.dim());
    base.view_mut((0, 0), (upper_b.dim(), b.dim())).copy_from(&base_coords);
    let inclusion = upper.space().transport(lower.space(), &base, &letter_maps, tol)?;
    Ok(NestedFreeProduct { lower, upper, inclusion, letter_maps, tol: *tol })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionEntry {
    pub word: Vec<usize>,
    /// `‖(1 - JJ*) Ũ J‖` on the lower safe columns.
    pub leakage: f64,
    /// `‖J* Ũ J - U‖`, when every letter lies in the lower algebras.
    pub defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionReport {
    pub entries: Vec<RestrictionEntry>,
    /// `‖J*J - 1‖`.
    pub isometry_defect: f64,
}

impl RestrictionReport {
    pub fn max_leakage(&self) -> f64 {
        self.entries.iter().map(|e| e.leakage).fold(0.0, f64::max)
    }

    pub fn max_defect(&self) -> f64 {
        self.entries.iter().filter_map(|e| e.defect).fold(0.0, f64::max)
    }
}

/// A summand of the complement, `W̃(s)`, in upper Fock coordinates.
#[derive(Clone, Debug)]
pub struct ComplementBlock {
    pub tuple: Vec<usize>,
    /// Orthonormal basis of the block.
    pub basis: CMat,
    /// Orthonormal basis of the seed space `K_{s₁} ⊗ Ẽ°_{s₂} ⊗ ⋯`.
    pub seed: CMat,
    pub invariance_defect: f64,
    pub seed_invariance_defect: f64,
    pub equivalence: Option<BlockEquivalence>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockEquivalence {
    pub isometry_defect: f64,
    pub range_defect: f64,
    pub intertwining_defect: f64,
    pub induced_dim: usize,
}

#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub blocks: Vec<ComplementBlock>,
    /// Dimension of the span of the lower module times the upper coefficients.
    pub lower_dim: usize,
    pub upper_dim: usize,
    /// `‖Σ P - 1‖` over the lower part and all blocks.
    pub completeness_defect: f64,
    /// Largest leakage of the lower part under the lower letters.
    pub lower_invariance_defect: f64,
}

impl DecompositionReport {
    pub fn dimensions_complete(&self) -> bool {
        self.lower_dim + self.blocks.iter().map(|b| b.basis.ncols()).sum::<usize>() == self.upper_dim
    }

    pub fn max_equivalence_defect(&self) -> f64 {
        self.blocks
            .iter()
            .filter_map(|b| b.equivalence.as_ref())
            .map(|e| e.isometry_defect.max(e.range_defect).max(e.intertwining_defect))
            .fold(0.0, f64::max)
    }

    pub fn max_invariance_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.invariance_defect.max(b.seed_invariance_defect))
            .fold(self.lower_invariance_defect, f64::max)
    }
}

impl NestedFreeProduct {
    pub fn lower(&self) -> &FockModule {
        &self.lower
    }

    pub fn upper(&self) -> &FockModule {
        &self.upper
    }

    /// `J: E → Ẽ` in Fock coordinates.
    pub fn inclusion(&self) -> &CMat {
        &self.inclusion
    }

    pub fn truncation(&self) -> usize {
        self.lower.truncation()
    }

    fn in_lower(&self, w: &ReducedWord) -> bool {
        w.letters().iter().all(|l| {
            self.lower.factor(l.index).map(|p| p.algebra().contains(&l.element, &self.tol)).unwrap_or(false)
        })
    }

    pub fn verify_restriction(&self, words: &[ReducedWord]) -> Result<RestrictionReport> {
        let l = self.truncation();
        let j = &self.inclusion;
        let isometry_defect = frobenius(&(j.adjoint() * j - identity(j.ncols())));
        let mut entries = Vec::new();
        for w in words {
            let support = l.checked_sub(w.len()).ok_or(Error::TruncationOverflow { needed: w.len(), truncation: l })?;
            let k = self.lower.space().prefix_dim(support);
            let jx = j.columns(0, k).into_owned();
            let (ujx, _) = self.upper.apply_word(w, &jx)?;
            let back = j.adjoint() * &ujx;
            let leakage = operator_norm(&(&ujx - j * &back))?;
            let defect = if self.in_lower(w) {
                let x = self.lower.space().prefix_columns(support);
                let (ux, _) = self.lower.apply_word(w, &x)?;
                Some(operator_norm(&(back - ux))?)
            } else {
                None
            };
            entries.push(RestrictionEntry { word: w.indices(), leakage, defect });
        }
        Ok(RestrictionReport { entries, isometry_defect })
    }

    /// `(lower, upper)` restricted norms of a word combination.
    pub fn norm_dominance(&self, x: &[(C64, ReducedWord)], margin: usize) -> Result<(f64, f64)> {
        Ok((self.lower.safe_norm(x, margin)?, self.upper.safe_norm(x, margin)?))
    }

    /// Orthonormal basis, in coordinates of upper summand `s`, of the span of
    /// `j(ζ₁)⊗⋯⊗j(ζ_p)⊗y` with the first `p` factors lower.
    fn lower_prefix_span(&self, s: usize, p: usize, memo: &mut HashMap<(usize, usize), CMat>) -> Result<CMat> {
        if let Some(m) = memo.get(&(s, p)) {
            return Ok(m.clone());
        }
        let space = self.upper.space();
        let d = space.summand_dim(s);
        let out = if p == 0 {
            identity(d)
        } else {
            let iota = space.tuple(s)[0];
            let tail = space.tail_of(s);
            let tail_span = self.lower_prefix_span(tail, p - 1, memo)?;
            let mut y = CMat::zeros(space.dim(), tail_span.ncols());
            y.rows_mut(space.summand_offset(tail), space.summand_dim(tail)).copy_from(&tail_span);
            let jm = &self.letter_maps[iota];
            let mut cols = Vec::new();
            for i in 0..jm.ncols() {
                let z = jm.columns(i, 1).into_owned();
                let c = space.create(iota, &z, &y, &self.tol)?;
                let block = c.rows(space.summand_offset(s), d).into_owned();
                cols.extend(block.column_iter().map(|c| c.into_owned()));
            }
            if cols.is_empty() {
                CMat::zeros(d, 0)
            } else {
                column_space(&CMat::from_columns(&cols), &self.tol)
            }
        };
        memo.insert((s, p), out.clone());
        Ok(out)
    }

    fn embed_rows(&self, s: usize, m: &CMat) -> CMat {
        let space = self.upper.space();
        let mut out = CMat::zeros(space.dim(), m.ncols());
        out.rows_mut(space.summand_offset(s), space.summand_dim(s)).copy_from(m);
        out
    }

    fn lower_basis_letters(&self) -> Result<Vec<Vec<Letter>>> {
        (0..self.lower.factor_count())
            .map(|i| Ok(self.lower.factor(i)?.algebra().basis().iter().map(|a| Letter::new(i, a.clone())).collect()))
            .collect()
    }

    /// Largest `‖(1 - P) Ũ(a) v‖` over lower basis letters and basis vectors
    /// of `span` at levels `≤ L - 1`.
    fn invariance(&self, span: &CMat, levels: &[usize], letters: &[Vec<Letter>]) -> Result<f64> {
        let l = self.truncation();
        let keep: Vec<usize> = (0..span.ncols()).filter(|&c| levels[c] < l).collect();
        if keep.is_empty() {
            return Ok(0.0);
        }
        let x = CMat::from_fn(span.nrows(), keep.len(), |i, j| span[(i, keep[j])]);
        let mut worst = 0.0f64;
        for fam in letters {
            for letter in fam {
                let (y, _) = self.upper.space().apply_letters(std::slice::from_ref(letter), &x, &self.tol)?;
                let leak = &y - span * (span.adjoint() * &y);
                worst = worst.max(operator_norm(&leak)?);
            }
        }
        Ok(worst)
    }

    /// Split `Ẽ` (scalarized) into the lower part and the blocks `W̃(s)`.
    pub fn complement_decomposition(&self) -> Result<DecompositionReport> {
        let l = self.truncation();
        let space = self.upper.space();
        let mut memo = HashMap::new();
        let letters = self.lower_basis_letters()?;

        // lower part: X_{|t|}(t) for every tuple
        let mut lower_cols: Vec<CVec> = Vec::new();
        let mut lower_levels = Vec::new();
        for s in 0..space.summand_count() {
            let n = space.tuple(s).len();
            let x = self.lower_prefix_span(s, n, &mut memo)?;
            let e = self.embed_rows(s, &x);
            lower_cols.extend(e.column_iter().map(|c| c.into_owned()));
            lower_levels.extend(std::iter::repeat_n(n, x.ncols()));
        }
        let lower_basis = if lower_cols.is_empty() { CMat::zeros(space.dim(), 0) } else { CMat::from_columns(&lower_cols) };
        let lower_invariance_defect = self.invariance(&lower_basis, &lower_levels, &letters)?;

        let mut blocks = Vec::new();
        let mut all_cols = lower_cols.clone();
        for s in 1..space.summand_count() {
            let st = space.tuple(s).to_vec();
            let seed_local = relative_complement(
                &self.lower_prefix_span(s, 0, &mut memo)?,
                &self.lower_prefix_span(s, 1, &mut memo)?,
                &self.tol,
            );
            let seed = self.embed_rows(s, &seed_local);
            let mut cols: Vec<CVec> = Vec::new();
            let mut levels = Vec::new();
            for t in 0..space.summand_count() {
                let tt = space.tuple(t);
                if tt.len() < st.len() || tt[tt.len() - st.len()..] != st[..] {
                    continue;
                }
                let q = tt.len() - st.len();
                let piece = relative_complement(
                    &self.lower_prefix_span(t, q, &mut memo)?,
                    &self.lower_prefix_span(t, q + 1, &mut memo)?,
                    &self.tol,
                );
                let e = self.embed_rows(t, &piece);
                cols.extend(e.column_iter().map(|c| c.into_owned()));
                levels.extend(std::iter::repeat_n(tt.len(), piece.ncols()));
            }
            if cols.is_empty() {
                continue;
            }
            let basis = CMat::from_columns(&cols);
            all_cols.extend(cols.iter().cloned());
            let invariance_defect = self.invariance(&basis, &levels, &letters)?;
            let seed_levels = vec![st.len(); seed.ncols()];
            let seed_letters = vec![letters[st[0]].clone()];
            let seed_invariance_defect = self.invariance(&seed, &seed_levels, &seed_letters)?;
            let equivalence = if st.len() < l {
                Some(self.block_equivalence(&st, &seed, &basis)?)
            } else {
                None
            };
            blocks.push(ComplementBlock { tuple: st, basis, seed, invariance_defect, seed_invariance_defect, equivalence });
        }
        let all = CMat::from_columns(&all_cols);
        let completeness_defect = frobenius(&(&all * all.adjoint() - identity(space.dim())));
        Ok(DecompositionReport {
            blocks,
            lower_dim: lower_basis.ncols(),
            upper_dim: space.dim(),
            completeness_defect,
            lower_invariance_defect,
        })
    }

    /// Compare the block `W̃(s)` with the representation induced from the
    /// seed action of `A_{s₁}`.
    fn block_equivalence(&self, tuple: &[usize], seed: &CMat, basis: &CMat) -> Result<BlockEquivalence> {
        let l = self.truncation();
        let pivot = tuple[0];
        let pm = self.lower.factor(pivot)?;
        let mut mats = Vec::new();
        for a in pm.algebra().basis() {
            let (y, _) = self.upper.space().apply_letters(&[Letter::new(pivot, a.clone())], seed, &self.tol)?;
            mats.push(seed.adjoint() * y);
        }
        let nu = SeedRep::new(pm.algebra().clone(), mats, &self.tol).map_err(|e| Error::BlockMismatch {
            tuple: tuple.to_vec(),
            detail: e.to_string(),
        })?;
        let induced_trunc = l - tuple.len();
        let ind = induce_rep(&self.lower, pivot, &nu, induced_trunc)?;
        if ind.dim() != basis.ncols() {
            return Err(Error::BlockMismatch {
                tuple: tuple.to_vec(),
                detail: format!("induced dimension {} but block dimension {}", ind.dim(), basis.ncols()),
            });
        }
        let u = self.upper.space().transport(ind.space(), seed, &self.letter_maps, &self.tol)?;
        let isometry_defect = frobenius(&(u.adjoint() * &u - identity(u.ncols())));
        let range_defect = frobenius(&(&u - basis * (basis.adjoint() * &u)));
        let mut intertwining_defect = 0.0f64;
        let letters = self.lower_basis_letters()?;
        for depth in 1..=induced_trunc.min(2) {
            let support = induced_trunc - depth;
            let x = ind.space().prefix_columns(support);
            let ux = &u * &x;
            for w in letter_words(&letters, depth) {
                let (sx, _) = ind.apply_word(&w, &x)?;
                let (tx, _) = self.upper.apply_word(&w, &ux)?;
                intertwining_defect = intertwining_defect.max(frobenius(&(&u * sx - tx)));
            }
        }
        Ok(BlockEquivalence { isometry_defect, range_defect, intertwining_defect, induced_dim: ind.dim() })
    }
}

/// Words of the given length whose consecutive letters come from different
/// factors, over the given letter sets.
fn letter_words(letters: &[Vec<Letter>], depth: usize) -> Vec<ReducedWord> {
    let mut out = vec![ReducedWord::empty()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &out {
            let last = w.letters().last().map(|l| l.index);
            for fam in letters {
                for l in fam {
                    if Some(l.index) == last {
                        continue;
                    }
                    let mut w2 = w.clone();
                    w2.push(l.clone(), false);
                    next.push(w2);
                }
            }
        }
        out = next;
    }
    out
}
