//! Truncated free-product spaces shared by the Fock module and by induced
//! representations.
//!
//! A space is a direct sum of summands indexed by alternating index tuples
//! `(ι₁, …, ι_n)`, `n ≤ L`. The summand for `(ι, tail)` is the interior tensor
//! product `E°_ι ⊗_B S(tail)`, and the empty tuple is a terminal space: the
//! vacuum `ξB` for the Fock module, or a seed space `V` carrying a
//! representation of one pivot factor for an induced representation. With a
//! pivot, the last index of every tuple differs from the pivot.
//!
//! Summands are laid out in order of (length, index sequence), so the
//! coordinates of levels `0..=m` form a prefix.

use std::collections::HashMap;
use std::sync::Arc;

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::hilbmod::{interior_tensor, same_algebra, HilbertModule, LeftAction, PointedModule, Realization};
use crate::numerics::{frobenius, identity, kron, CMat, CVec, Tolerance, C64, ZERO};

/// One letter `a ∈ A_ι` of a word.
#[derive(Clone, Debug, PartialEq)]
pub struct Letter {
    pub index: usize,
    pub element: CMat,
}

impl Letter {
    pub fn new(index: usize, element: CMat) -> Self {
        Letter { index, element }
    }
}

/// A letter resolved against a space: the blocks of `π_ι(a)` along
/// `E_ι = ξB ⊕ E°_ι`, plus the seed operator when `ι` is the pivot.
#[derive(Clone, Debug)]
pub struct LetterAction {
    index: usize,
    beta: CVec,
    zeta: CMat,
    pbo: CMat,
    poo: CMat,
    seed: Option<CMat>,
}

struct Factor {
    pointed: PointedModule,
    center: HilbertModule,
    center_left_b: LeftAction,
}

enum Terminal {
    Vacuum,
    Seed { pivot: usize, rho: LeftAction },
}

struct Summand {
    tuple: Vec<usize>,
    offset: usize,
    dim: usize,
    tail: usize,
    real: Realization,
    left_b: Vec<CMat>,
    module: Option<HilbertModule>,
}

pub struct FreeSpace {
    coeff: Arc<Algebra>,
    factors: Vec<Factor>,
    truncation: usize,
    terminal: Terminal,
    summands: Vec<Summand>,
    lookup: HashMap<Vec<usize>, usize>,
    level_ends: Vec<usize>,
    dim: usize,
}

fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| *z == ZERO)
}

impl FreeSpace {
    /// The truncated Fock module of a family of pointed modules.
    pub fn fock(pointed: Vec<PointedModule>, truncation: usize, tol: &Tolerance) -> Result<Self> {
        Self::build(pointed, truncation, None, tol)
    }

    /// Representation induced from `rho`, a representation of the pivot factor
    /// on a Hilbert space.
    pub fn induced(
        pointed: Vec<PointedModule>,
        pivot: usize,
        rho: LeftAction,
        truncation: usize,
        tol: &Tolerance,
    ) -> Result<Self> {
        if pivot >= pointed.len() {
            return Err(Error::IndexUnknown(pivot));
        }
        Self::build(pointed, truncation, Some((pivot, rho)), tol)
    }

    fn build(
        pointed: Vec<PointedModule>,
        truncation: usize,
        seed: Option<(usize, LeftAction)>,
        tol: &Tolerance,
    ) -> Result<Self> {
        let coeff = pointed
            .first()
            .ok_or_else(|| Error::DimensionMismatch("free product needs at least one factor".into()))?
            .coefficient()
            .clone();
        if pointed.iter().any(|p| !same_algebra(p.coefficient(), &coeff)) {
            return Err(Error::MixedCoefficients);
        }
        let scalar = coeff.dim() == 1;
        let factors: Vec<Factor> = pointed
            .into_iter()
            .map(|p| Factor { center: p.center_module(), center_left_b: p.center_left_b(), pointed: p })
            .collect();

        let (terminal, term) = match seed {
            None => {
                let dim = coeff.dim();
                let (left_b, module) = if scalar {
                    (vec![], None)
                } else {
                    (
                        coeff.basis().iter().map(|b| coeff.left_mult(b)).collect(),
                        Some(HilbertModule::algebra_module(&coeff)),
                    )
                };
                let s = Summand { tuple: vec![], offset: 0, dim, tail: 0, real: Realization::identity(dim), left_b, module };
                (Terminal::Vacuum, s)
            }
            Some((pivot, rho)) => {
                let pf = &factors[pivot];
                if !same_algebra(rho.algebra(), pf.pointed.algebra()) {
                    return Err(Error::ActionMismatch("seed does not act by the pivot factor".into()));
                }
                let rho_b = rho.restrict(pf.pointed.inclusion());
                let dim = rho.dim();
                let (left_b, module) = if scalar {
                    (vec![], None)
                } else {
                    (rho_b.matrices().to_vec(), Some(HilbertModule::hilbert_space(dim)))
                };
                let s = Summand { tuple: vec![], offset: 0, dim, tail: 0, real: Realization::identity(dim), left_b, module };
                (Terminal::Seed { pivot, rho }, s)
            }
        };
        let pivot = match &terminal {
            Terminal::Seed { pivot, .. } => Some(*pivot),
            Terminal::Vacuum => None,
        };

        let mut space = FreeSpace {
            coeff,
            factors,
            truncation,
            terminal,
            summands: vec![],
            lookup: HashMap::new(),
            level_ends: vec![],
            dim: 0,
        };
        space.push(term);
        space.level_ends.push(space.dim);

        let mut previous: Vec<Vec<usize>> = vec![vec![]];
        for _level in 1..=truncation {
            let mut current = Vec::new();
            for first in 0..space.factors.len() {
                for tail in &previous {
                    if tail.first() == Some(&first) || (tail.is_empty() && pivot == Some(first)) {
                        continue;
                    }
                    let mut t = vec![first];
                    t.extend_from_slice(tail);
                    current.push(t);
                }
            }
            current.sort();
            for t in &current {
                let s = space.make_summand(t, tol)?;
                space.push(s);
            }
            space.level_ends.push(space.dim);
            previous = current;
        }
        Ok(space)
    }

    fn push(&mut self, mut s: Summand) {
        s.offset = self.dim;
        self.dim += s.dim;
        self.lookup.insert(s.tuple.clone(), self.summands.len());
        self.summands.push(s);
    }

    fn make_summand(&self, tuple: &[usize], tol: &Tolerance) -> Result<Summand> {
        let first = tuple[0];
        let tail_idx = self.lookup[&tuple[1..]];
        let tail = &self.summands[tail_idx];
        let f = &self.factors[first];
        let dc = f.center.dim();
        let kb = self.coeff.dim();
        let (dim, real, left_b, module) = if kb == 1 {
            let d = dc * tail.dim;
            (d, Realization::identity(d), vec![], None)
        } else if tail_idx == 0 && matches!(self.terminal, Terminal::Vacuum) {
            // E°⊗_B B ≅ E° through ζ⊗b ↦ ζ·b
            let mut unit = CMat::zeros(kb, 1);
            unit[(0, 0)] = crate::numerics::ONE;
            let embed = kron(&identity(dc), &unit);
            let mut quotient = CMat::zeros(dc, dc * kb);
            for i in 0..dc {
                for (k, rk) in f.center.right_matrices().iter().enumerate() {
                    quotient.column_mut(i * kb + k).copy_from(&rk.column(i));
                }
            }
            (dc, Realization::explicit(embed, quotient), f.center_left_b.matrices().to_vec(), Some(f.center.clone()))
        } else {
            let tail_module = tail.module.as_ref().expect("non-scalar summands keep their module");
            let act = LeftAction::new(self.coeff.clone(), tail.left_b.clone())?;
            let tp = interior_tensor(&f.center, tail_module, &act, tol)?;
            let left = tp.lift_left_action(&f.center_left_b);
            (tp.module.dim(), tp.realization.clone(), left.matrices().to_vec(), Some(tp.module))
        };
        Ok(Summand { tuple: tuple.to_vec(), offset: 0, dim, tail: tail_idx, real, left_b, module })
    }

    pub fn coefficient(&self) -> &Arc<Algebra> {
        &self.coeff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn pointed(&self, index: usize) -> Result<&PointedModule> {
        self.factors.get(index).map(|f| &f.pointed).ok_or(Error::IndexUnknown(index))
    }

    pub fn pivot(&self) -> Option<usize> {
        match &self.terminal {
            Terminal::Seed { pivot, .. } => Some(*pivot),
            Terminal::Vacuum => None,
        }
    }

    pub fn terminal_dim(&self) -> usize {
        self.summands[0].dim
    }

    pub fn summand_count(&self) -> usize {
        self.summands.len()
    }

    pub fn tuple(&self, s: usize) -> &[usize] {
        &self.summands[s].tuple
    }

    pub fn summand_offset(&self, s: usize) -> usize {
        self.summands[s].offset
    }

    pub fn summand_dim(&self, s: usize) -> usize {
        self.summands[s].dim
    }

    pub fn summand_index(&self, tuple: &[usize]) -> Option<usize> {
        self.lookup.get(tuple).copied()
    }

    /// Summand index of the tail `(ι₂, …, ι_n)`.
    pub fn tail_of(&self, s: usize) -> usize {
        self.summands[s].tail
    }

    /// Number of coordinates at levels `0..=level`.
    pub fn prefix_dim(&self, level: usize) -> usize {
        self.level_ends[level.min(self.truncation)]
    }

    /// Coordinates of level `level`.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        let start = if level == 0 { 0 } else { self.level_ends[level - 1] };
        start..self.level_ends[level]
    }

    /// Embedding matrix of a summand into the algebraic tensor `ℂ^{d°} ⊗ S(tail)`.
    pub fn summand_embed(&self, s: usize) -> CMat {
        self.summands[s].real.embed_matrix()
    }

    /// Left action of a coefficient element (given by coordinates) on a summand block.
    pub fn left_b_block(&self, s: usize, coords: &CVec, h: &CMat) -> CMat {
        let sm = &self.summands[s];
        if sm.left_b.is_empty() {
            return h * coords[0];
        }
        let mut out = CMat::zeros(h.nrows(), h.ncols());
        for (l, c) in sm.left_b.iter().zip(coords.iter()) {
            if *c != ZERO {
                out += l * h * *c;
            }
        }
        out
    }

    fn left_b_single(&self, s: usize, k: usize, h: &CMat) -> CMat {
        let sm = &self.summands[s];
        if sm.left_b.is_empty() {
            h.clone()
        } else {
            &sm.left_b[k] * h
        }
    }

    pub fn prepare(&self, letter: &Letter, tol: &Tolerance) -> Result<LetterAction> {
        let f = self.factors.get(letter.index).ok_or(Error::IndexUnknown(letter.index))?;
        let alg = f.pointed.algebra();
        if letter.element.nrows() != alg.ambient() || letter.element.ncols() != alg.ambient() {
            return Err(Error::DimensionMismatch(format!(
                "letter for factor {} must be {}×{}",
                letter.index,
                alg.ambient(),
                alg.ambient()
            )));
        }
        let res = alg.residual(&letter.element);
        if res > 1e3 * tol.abs_eps * (1.0 + frobenius(&letter.element)) {
            return Err(Error::NotInAlgebra { residual: res });
        }
        let p = f.pointed.pi(&letter.element);
        let kb = self.coeff.dim();
        let dc = p.nrows() - kb;
        let seed = match &self.terminal {
            Terminal::Seed { pivot, rho } if *pivot == letter.index => Some(rho.apply(&letter.element)),
            _ => None,
        };
        Ok(LetterAction {
            index: letter.index,
            beta: p.view((0, 0), (kb, 1)).column(0).into_owned(),
            zeta: p.view((kb, 0), (dc, 1)).into_owned(),
            pbo: p.view((0, kb), (kb, dc)).into_owned(),
            poo: p.view((kb, kb), (dc, dc)).into_owned(),
            seed,
        })
    }

    /// Apply one letter to a block of column vectors. The second value is a
    /// bound on the norm of components pushed beyond the truncation.
    pub fn apply_action(&self, la: &LetterAction, x: &CMat) -> (CMat, f64) {
        let m = x.ncols();
        let mut out = CMat::zeros(self.dim, m);
        let mut overflow = 0.0f64;
        let iota = la.index;
        let zeta_zero = is_zero(&la.zeta);
        for (si, s) in self.summands.iter().enumerate() {
            let hv = x.rows(s.offset, s.dim);
            if hv.iter().all(|z| *z == ZERO) {
                continue;
            }
            let h = hv.into_owned();
            if si == 0 {
                if let Some(rho) = &la.seed {
                    let mut o = out.rows_mut(0, s.dim);
                    o += rho * &h;
                    continue;
                }
            }
            if si == 0 || s.tuple[0] != iota {
                let lb = self.left_b_block(si, &la.beta, &h);
                {
                    let mut o = out.rows_mut(s.offset, s.dim);
                    o += lb;
                }
                if zeta_zero {
                    continue;
                }
                let mut key = Vec::with_capacity(s.tuple.len() + 1);
                key.push(iota);
                key.extend_from_slice(&s.tuple);
                match self.lookup.get(&key) {
                    Some(&t) => {
                        let target = &self.summands[t];
                        let q = target.real.quotient_block(&kron(&la.zeta, &h));
                        let mut o = out.rows_mut(target.offset, target.dim);
                        o += q;
                    }
                    None => overflow = overflow.max(frobenius(&la.zeta) * frobenius(&h)),
                }
            } else {
                let tail = &self.summands[s.tail];
                let dt = tail.dim;
                let dc = la.poo.nrows();
                let e = s.real.embed_block(&h);
                let mut eo = CMat::zeros(dc * dt, m);
                for rr in 0..dc {
                    for i in 0..dc {
                        let c = la.poo[(rr, i)];
                        if c != ZERO {
                            let mut o = eo.rows_mut(rr * dt, dt);
                            o += e.rows(i * dt, dt) * c;
                        }
                    }
                }
                {
                    let q = s.real.quotient_block(&eo);
                    let mut o = out.rows_mut(s.offset, s.dim);
                    o += q;
                }
                let mut acc = CMat::zeros(dt, m);
                for k in 0..self.coeff.dim() {
                    let mut y = CMat::zeros(dt, m);
                    let mut any = false;
                    for i in 0..dc {
                        let c = la.pbo[(k, i)];
                        if c != ZERO {
                            y += e.rows(i * dt, dt) * c;
                            any = true;
                        }
                    }
                    if any {
                        acc += self.left_b_single(s.tail, k, &y);
                    }
                }
                let mut o = out.rows_mut(tail.offset, dt);
                o += acc;
            }
        }
        (out, overflow)
    }

    /// Apply letters right to left.
    pub fn apply_actions(&self, actions: &[LetterAction], x: &CMat) -> (CMat, f64) {
        let mut cur = x.clone();
        let mut overflow = 0.0f64;
        for la in actions.iter().rev() {
            let (next, o) = self.apply_action(la, &cur);
            overflow = overflow.max(o);
            cur = next;
        }
        (cur, overflow)
    }

    pub fn apply_letters(&self, letters: &[Letter], x: &CMat, tol: &Tolerance) -> Result<(CMat, f64)> {
        let actions = letters.iter().map(|l| self.prepare(l, tol)).collect::<Result<Vec<_>>>()?;
        Ok(self.apply_actions(&actions, x))
    }

    /// Identity columns of the coordinates at levels `0..=level`.
    pub fn prefix_columns(&self, level: usize) -> CMat {
        let k = self.prefix_dim(level);
        let mut m = CMat::zeros(self.dim, k);
        for i in 0..k {
            m[(i, i)] = crate::numerics::ONE;
        }
        m
    }

    /// The prepend map `y ↦ ζ ⊗ y` for `ζ ∈ E°_ι`, defined on components
    /// whose leading index differs from `ι`.
    pub fn create(&self, index: usize, zeta: &CMat, y: &CMat, tol: &Tolerance) -> Result<CMat> {
        let mut out = CMat::zeros(self.dim, y.ncols());
        for (si, s) in self.summands.iter().enumerate() {
            let h = y.rows(s.offset, s.dim).into_owned();
            if is_zero(&h) {
                continue;
            }
            let blocked = (si == 0 && self.pivot() == Some(index)) || (si > 0 && s.tuple[0] == index);
            let mut key = vec![index];
            key.extend_from_slice(&s.tuple);
            let target = if blocked { None } else { self.lookup.get(&key).copied() };
            match target {
                Some(t) => {
                    let ts = &self.summands[t];
                    let q = ts.real.quotient_block(&kron(zeta, &h));
                    let mut o = out.rows_mut(ts.offset, ts.dim);
                    o += q;
                }
                None => {
                    if frobenius(&h) * frobenius(zeta) <= tol.abs_eps {
                        continue;
                    }
                    if blocked {
                        return Err(Error::DimensionMismatch(format!(
                            "cannot prepend index {index} to summand {:?}",
                            s.tuple
                        )));
                    }
                    return Err(Error::TruncationOverflow { needed: s.tuple.len() + 1, truncation: self.truncation });
                }
            }
        }
        Ok(out)
    }

    /// Intertwiner from `src` into this space assembled from a map on the
    /// terminal (`base`, one column per terminal coordinate of `src`) and maps
    /// `letter_maps[ι]: E°_ι(src) → E°_ι(self)`, extended by
    /// `ζ ⊗ y ↦ j_ι(ζ) ⊗ T(y)`.
    pub fn transport(&self, src: &FreeSpace, base: &CMat, letter_maps: &[CMat], tol: &Tolerance) -> Result<CMat> {
        if base.nrows() != self.dim || base.ncols() != src.terminal_dim() {
            return Err(Error::DimensionMismatch("transport base map".into()));
        }
        if letter_maps.len() != src.factor_count() {
            return Err(Error::DimensionMismatch("one letter map per factor".into()));
        }
        let mut t = CMat::zeros(self.dim, src.dim);
        t.columns_mut(0, src.terminal_dim()).copy_from(base);
        for (si, s) in src.summands.iter().enumerate().skip(1) {
            let iota = s.tuple[0];
            let tail = &src.summands[s.tail];
            let dt = tail.dim;
            let tt = t.columns(tail.offset, dt).into_owned();
            let jm = &letter_maps[iota];
            let dc = src.factors[iota].center.dim();
            if jm.ncols() != dc || jm.nrows() != self.factors.get(iota).map(|f| f.center.dim()).unwrap_or(usize::MAX) {
                return Err(Error::DimensionMismatch(format!("letter map for factor {iota}")));
            }
            let mut block = CMat::zeros(self.dim, s.dim);
            if s.real.is_identity() {
                for i in 0..dc {
                    let z = jm.columns(i, 1).into_owned();
                    let c = self.create(iota, &z, &tt, tol)?;
                    block.columns_mut(i * dt, dt).copy_from(&c);
                }
            } else {
                let e = src.summand_embed(si);
                for i in 0..dc {
                    let ei = e.rows(i * dt, dt);
                    if ei.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    let z = jm.columns(i, 1).into_owned();
                    block += self.create(iota, &z, &(&tt * ei), tol)?;
                }
            }
            t.columns_mut(s.offset, s.dim).copy_from(&block);
        }
        Ok(t)
    }

    /// Tuple-preserving variant of [`transport`](Self::transport) that keeps
    /// only the diagonal blocks: summand `t` of `src` goes to summand `t` of
    /// this space. `base` maps the terminal of `src` into the terminal here.
    pub fn transport_blocks(
        &self,
        src: &FreeSpace,
        base: &CMat,
        letter_maps: &[CMat],
    ) -> Result<GradedMap> {
        if base.nrows() != self.terminal_dim() || base.ncols() != src.terminal_dim() {
            return Err(Error::DimensionMismatch("transport base map".into()));
        }
        if letter_maps.len() != src.factor_count() || src.factor_count() != self.factor_count() {
            return Err(Error::DimensionMismatch("one letter map per factor".into()));
        }
        let mut targets = vec![0];
        for s in src.summands.iter().skip(1) {
            let iota = s.tuple[0];
            let target = self.lookup.get(&s.tuple).copied().ok_or(Error::TruncationOverflow {
                needed: s.tuple.len(),
                truncation: self.truncation,
            })?;
            let jm = &letter_maps[iota];
            if jm.ncols() != src.factors[iota].center.dim() || jm.nrows() != self.factors[iota].center.dim() {
                return Err(Error::DimensionMismatch(format!("letter map for factor {iota}")));
            }
            targets.push(target);
        }
        Ok(GradedMap { base: base.clone(), letter_maps: letter_maps.to_vec(), targets })
    }

    /// Vacuum-style vector `ξ` for Fock spaces: the unit of the coefficients.
    pub fn vacuum(&self) -> CVec {
        let mut v = CVec::zeros(self.dim);
        v[0] = crate::numerics::ONE;
        v
    }

    /// Norm of a word combination restricted to coordinates at levels `0..=level`.
    pub fn restricted_norm(&self, terms: &[(C64, Vec<Letter>)], level: usize, tol: &Tolerance) -> Result<f64> {
        let x = self.prefix_columns(level);
        let mut acc = CMat::zeros(self.dim, x.ncols());
        for (c, w) in terms {
            let (y, _) = self.apply_letters(w, &x, tol)?;
            acc += y * *c;
        }
        crate::numerics::operator_norm(&acc)
    }
}

/// A map between two free spaces that sends summand `t` into summand `t`,
/// stored block by block (one block per source summand).
#[derive(Clone, Debug)]
pub struct GradedMap {
    base: CMat,
    letter_maps: Vec<CMat>,
    /// Target summand of each source summand.
    targets: Vec<usize>,
}

impl GradedMap {
    /// Target summand of each source summand.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// The block on source summand `s`: `Q_t (j ⊗ T_tail) E_s`, applied
    /// recursively so no block is ever formed.
    fn block_apply(&self, src: &FreeSpace, dst: &FreeSpace, s: usize, h: &CMat) -> CMat {
        if s == 0 {
            return &self.base * h;
        }
        let ss = &src.summands[s];
        let ts = &dst.summands[self.targets[s]];
        let jm = &self.letter_maps[ss.tuple[0]];
        let dt = src.summands[ss.tail].dim;
        let e = ss.real.embed_block(h);
        let parts: Vec<CMat> =
            (0..jm.ncols()).map(|i| self.block_apply(src, dst, ss.tail, &e.rows(i * dt, dt).into_owned())).collect();
        let dt2 = parts.first().map_or(0, |p| p.nrows());
        let mut y = CMat::zeros(jm.nrows() * dt2, h.ncols());
        for a in 0..jm.nrows() {
            let mut o = y.rows_mut(a * dt2, dt2);
            for (i, p) in parts.iter().enumerate() {
                let c = jm[(a, i)];
                if c != ZERO {
                    o += p * c;
                }
            }
        }
        ts.real.quotient_block(&y)
    }

    fn block_adjoint_apply(&self, src: &FreeSpace, dst: &FreeSpace, s: usize, h: &CMat) -> CMat {
        if s == 0 {
            return self.base.adjoint() * h;
        }
        let ss = &src.summands[s];
        let ts = &dst.summands[self.targets[s]];
        let jm = &self.letter_maps[ss.tuple[0]];
        let y = if ts.real.is_identity() { h.clone() } else { ts.real.quotient_matrix().adjoint() * h };
        let dt2 = y.nrows() / jm.nrows().max(1);
        let mut x = CMat::zeros(0, h.ncols());
        let mut parts = Vec::with_capacity(jm.ncols());
        for i in 0..jm.ncols() {
            let mut z = CMat::zeros(dt2, h.ncols());
            for a in 0..jm.nrows() {
                let c = jm[(a, i)];
                if c != ZERO {
                    z += y.rows(a * dt2, dt2) * c.conj();
                }
            }
            parts.push(self.block_adjoint_apply(src, dst, ss.tail, &z));
        }
        if let Some(p) = parts.first() {
            let dt = p.nrows();
            x = CMat::zeros(dt * parts.len(), h.ncols());
            for (i, p) in parts.iter().enumerate() {
                x.rows_mut(i * dt, dt).copy_from(p);
            }
        }
        if ss.real.is_identity() {
            x
        } else {
            ss.real.embed_matrix().adjoint() * x
        }
    }

    pub fn apply(&self, src: &FreeSpace, dst: &FreeSpace, x: &CMat) -> CMat {
        let mut out = CMat::zeros(dst.dim, x.ncols());
        for (si, s) in src.summands.iter().enumerate() {
            let h = x.rows(s.offset, s.dim);
            if h.iter().all(|z| *z == ZERO) {
                continue;
            }
            let t = &dst.summands[self.targets[si]];
            let mut o = out.rows_mut(t.offset, t.dim);
            o += self.block_apply(src, dst, si, &h.into_owned());
        }
        out
    }

    pub fn adjoint_apply(&self, src: &FreeSpace, dst: &FreeSpace, y: &CMat) -> CMat {
        let mut out = CMat::zeros(src.dim, y.ncols());
        for (si, s) in src.summands.iter().enumerate() {
            let ts = &dst.summands[self.targets[si]];
            let h = y.rows(ts.offset, ts.dim);
            if h.iter().all(|z| *z == ZERO) {
                continue;
            }
            out.rows_mut(s.offset, s.dim).copy_from(&self.block_adjoint_apply(src, dst, si, &h.into_owned()));
        }
        out
    }

    pub fn to_dense(&self, src: &FreeSpace, dst: &FreeSpace) -> CMat {
        self.apply(src, dst, &identity(src.dim))
    }
}


