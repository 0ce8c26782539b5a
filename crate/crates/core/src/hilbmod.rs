//! Finite-dimensional Hilbert modules over concrete C*-algebras.
//!
//! A module is a complex vector space `ℂ^d` together with
//!
//! * one Gram matrix `G_k` per basis element `β_k` of the coefficient algebra,
//!   so that `⟨x, y⟩ = Σ_k (x* G_k y) β_k`;
//! * one matrix `R_k` per basis element for the right action `x·β_k = R_k x`.
//!
//! Because the coefficient basis is orthonormal for the normalized trace τ and
//! starts with the identity, `G_0` is the scalarized Gram `τ(⟨x, y⟩)`. Every
//! module built here is quotiented by its null vectors and re-based so that
//! `G_0 = 1`; matrices of operators between such modules then have the
//! Hilbert-space norms and adjoints of the scalarized spaces.

use std::sync::Arc;

use crate::algebra::{gns_faithful, Algebra, ConditionalExpectation, UnitalInclusion};
use crate::error::{Error, Result};
use crate::numerics::{
    frobenius, hermitian_eigen, identity, kron, min_eigenvalue, null_space_basis,
    operator_norm, r, relative_complement, CMat, CVec, Tolerance, ZERO,
};

#[derive(Clone, Debug)]
pub struct HilbertModule {
    coeff: Arc<Algebra>,
    dim: usize,
    inner: Vec<CMat>,
    right: Vec<CMat>,
}

impl HilbertModule {
    pub fn new(coeff: Arc<Algebra>, inner: Vec<CMat>, right: Vec<CMat>) -> Result<Self> {
        let k = coeff.dim();
        if inner.len() != k || right.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "module needs {k} Gram and right-action matrices"
            )));
        }
        let dim = inner[0].nrows();
        if inner.iter().chain(right.iter()).any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::DimensionMismatch("module matrices must be square".into()));
        }
        Ok(HilbertModule { coeff, dim, inner, right })
    }

    /// The coefficient algebra as a right module over itself, `⟨a, a'⟩ = a* a'`.
    pub fn algebra_module(a: &Arc<Algebra>) -> Self {
        let basis = a.basis();
        let n = basis.len();
        let mut inner = vec![CMat::zeros(n, n); n];
        for i in 0..n {
            for j in 0..n {
                let c = a.coords(&(basis[i].adjoint() * &basis[j]));
                for k in 0..n {
                    inner[k][(i, j)] = c[k];
                }
            }
        }
        let right = basis.iter().map(|b| a.right_mult(b)).collect();
        HilbertModule { coeff: a.clone(), dim: n, inner, right }
    }

    /// `ℂ^d` with the standard inner product, as a module over `ℂ`.
    pub fn hilbert_space(dim: usize) -> Self {
        HilbertModule {
            coeff: Algebra::scalars(1),
            dim,
            inner: vec![identity(dim)],
            right: vec![identity(dim)],
        }
    }

    pub fn coefficient(&self) -> &Arc<Algebra> {
        &self.coeff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self, k: usize) -> &CMat {
        &self.inner[k]
    }

    pub fn grams(&self) -> &[CMat] {
        &self.inner
    }

    pub fn right_matrices(&self) -> &[CMat] {
        &self.right
    }

    /// Scalar Gram for the normalized trace of the coefficient algebra.
    pub fn scalar_gram(&self) -> &CMat {
        &self.inner[0]
    }

    pub fn inner_coords(&self, x: &CVec, y: &CVec) -> CVec {
        let xa = x.adjoint();
        CVec::from_iterator(self.inner.len(), self.inner.iter().map(|g| (&xa * g * y)[(0, 0)]))
    }

    /// `⟨x, y⟩` as an element of the coefficient algebra.
    pub fn inner_product(&self, x: &CVec, y: &CVec) -> CMat {
        self.coeff.element(&self.inner_coords(x, y))
    }

    pub fn right_matrix(&self, b: &CMat) -> CMat {
        let c = self.coeff.coords(b);
        let mut m = CMat::zeros(self.dim, self.dim);
        for (rk, ck) in self.right.iter().zip(c.iter()) {
            if *ck != ZERO {
                m += rk * *ck;
            }
        }
        m
    }

    pub fn right_act(&self, x: &CVec, b: &CMat) -> CVec {
        self.right_matrix(b) * x
    }

    /// Inner products of all basis pairs as a `(d·m) × (d·m)` block matrix.
    pub fn gram_blocks(&self) -> CMat {
        let m = self.coeff.ambient();
        let d = self.dim;
        let mut out = CMat::zeros(d * m, d * m);
        for (g, b) in self.inner.iter().zip(self.coeff.basis()) {
            out += kron(g, b);
        }
        out
    }

    /// Checks of the module axioms on basis vectors.
    pub fn axiom_defects(&self, tol: &Tolerance) -> ModuleDefects {
        let kdim = self.coeff.dim();
        // ⟨x, y·b⟩ = ⟨x, y⟩ b: G_j R_l = Σ_k G_k c_j(β_k β_l)
        let mut right_linear = 0.0f64;
        for l in 0..kdim {
            let mult = self.coeff.right_mult(&self.coeff.basis()[l]);
            for j in 0..kdim {
                let mut rhs = CMat::zeros(self.dim, self.dim);
                for k in 0..kdim {
                    rhs += &self.inner[k] * mult[(j, k)];
                }
                right_linear = right_linear.max(frobenius(&(&self.inner[j] * &self.right[l] - rhs)));
            }
        }
        // ⟨x, y⟩* = ⟨y, x⟩ is Hermiticity of the block Gram
        let blocks = self.gram_blocks();
        let hermitian = frobenius(&(&blocks - blocks.adjoint()));
        let positivity = min_eigenvalue(&blocks, tol).unwrap_or(f64::NEG_INFINITY).min(0.0).abs();
        let scalar_floor = min_eigenvalue(self.scalar_gram(), tol).unwrap_or(0.0);
        ModuleDefects { right_linear, hermitian, positivity, scalar_floor }
    }

    /// Quotient by the null vectors of the scalar Gram, re-based to `G_0 = 1`.
    pub fn orthonormalize(&self, tol: &Tolerance) -> Result<(HilbertModule, Realization)> {
        let real = Realization::from_gram(self.scalar_gram(), tol)?;
        Ok((real.compress_module(self), real))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleDefects {
    pub right_linear: f64,
    pub hermitian: f64,
    pub positivity: f64,
    /// Smallest eigenvalue of the scalar Gram; positive iff nondegenerate.
    pub scalar_floor: f64,
}

impl ModuleDefects {
    pub fn ok(&self, tol: &Tolerance) -> bool {
        let eps = 10.0 * tol.abs_eps;
        self.right_linear <= eps
            && self.hermitian <= eps
            && self.positivity <= eps
            && self.scalar_floor > tol.abs_eps
    }
}

/// Identification of a quotient space `ℂ^small` with a complement of the
/// null space in `ℂ^big`: `quotient · embed = 1` and `quotient` kills nulls.
#[derive(Clone, Debug)]
pub struct Realization {
    big: usize,
    small: usize,
    embed: Option<CMat>,
    quotient: Option<CMat>,
}

impl Realization {
    pub fn identity(n: usize) -> Self {
        Realization { big: n, small: n, embed: None, quotient: None }
    }

    pub fn explicit(embed: CMat, quotient: CMat) -> Self {
        Realization { big: embed.nrows(), small: embed.ncols(), embed: Some(embed), quotient: Some(quotient) }
    }

    /// Realization making the given PSD scalar Gram the identity on the quotient.
    pub fn from_gram(gram: &CMat, tol: &Tolerance) -> Result<Self> {
        let n = gram.nrows();
        if frobenius(&(gram - identity(n))) <= tol.abs_eps {
            return Ok(Self::identity(n));
        }
        let split = null_space_basis(gram, tol)?;
        let u = &split.range;
        let k = u.ncols();
        let mut embed = u.clone();
        let mut quotient = u.adjoint();
        for (j, lam) in split.range_values.iter().enumerate() {
            let s = lam.sqrt();
            embed.column_mut(j).scale_mut(1.0 / s);
            quotient.row_mut(j).scale_mut(s);
        }
        debug_assert_eq!(quotient.nrows(), k);
        Ok(Realization { big: n, small: k, embed: Some(embed), quotient: Some(quotient) })
    }

    pub fn big(&self) -> usize {
        self.big
    }

    pub fn small(&self) -> usize {
        self.small
    }

    pub fn is_identity(&self) -> bool {
        self.embed.is_none()
    }

    pub fn embed_vec(&self, h: &CVec) -> CVec {
        match &self.embed {
            Some(e) => e * h,
            None => h.clone(),
        }
    }

    pub fn quotient_vec(&self, x: &CVec) -> CVec {
        match &self.quotient {
            Some(q) => q * x,
            None => x.clone(),
        }
    }

    pub fn embed_block(&self, h: &CMat) -> CMat {
        match &self.embed {
            Some(e) => e * h,
            None => h.clone(),
        }
    }

    pub fn quotient_block(&self, x: &CMat) -> CMat {
        match &self.quotient {
            Some(q) => q * x,
            None => x.clone(),
        }
    }

    pub fn embed_matrix(&self) -> CMat {
        self.embed.clone().unwrap_or_else(|| identity(self.big))
    }

    pub fn quotient_matrix(&self) -> CMat {
        self.quotient.clone().unwrap_or_else(|| identity(self.big))
    }

    /// `quotient · op · embed`.
    pub fn compress(&self, op: &CMat) -> CMat {
        match (&self.embed, &self.quotient) {
            (Some(e), Some(q)) => q * op * e,
            _ => op.clone(),
        }
    }

    /// `embed* · g · embed`, the form of a Gram matrix on the quotient.
    pub fn compress_form(&self, g: &CMat) -> CMat {
        match &self.embed {
            Some(e) => e.adjoint() * g * e,
            None => g.clone(),
        }
    }

    fn compress_module(&self, m: &HilbertModule) -> HilbertModule {
        HilbertModule {
            coeff: m.coeff.clone(),
            dim: self.small,
            inner: m.inner.iter().map(|g| self.compress_form(g)).collect(),
            right: m.right.iter().map(|x| self.compress(x)).collect(),
        }
    }
}

/// A linear map from an algebra into operators on a module, stored on the
/// algebra's basis. Used both for *-representations and, in the dilation of
/// completely positive maps, for the non-multiplicative `π∘θ`.
#[derive(Clone, Debug)]
pub struct LeftAction {
    algebra: Arc<Algebra>,
    mats: Vec<CMat>,
}

impl LeftAction {
    pub fn new(algebra: Arc<Algebra>, mats: Vec<CMat>) -> Result<Self> {
        if mats.len() != algebra.dim() {
            return Err(Error::ActionMismatch(format!(
                "{} matrices for an algebra of dimension {}",
                mats.len(),
                algebra.dim()
            )));
        }
        if let Some(first) = mats.first() {
            let d = first.nrows();
            if mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
                return Err(Error::DimensionMismatch("left action matrices".into()));
            }
        }
        Ok(LeftAction { algebra, mats })
    }

    /// Left multiplication of the algebra on itself.
    pub fn regular(a: &Arc<Algebra>) -> Self {
        LeftAction { algebra: a.clone(), mats: a.basis().iter().map(|b| a.left_mult(b)).collect() }
    }

    /// Scalar multiplication of `ℂ` on `ℂ^d`.
    pub fn scalar(dim: usize) -> Self {
        LeftAction { algebra: Algebra::scalars(1), mats: vec![identity(dim)] }
    }

    /// Precompose with a linear map given by coordinates, `dim(self.algebra) × dim(src)`.
    pub fn pullback(&self, src: Arc<Algebra>, coords: &CMat) -> Self {
        let mats = (0..src.dim())
            .map(|j| self.apply_coords(&coords.column(j).into_owned()))
            .collect();
        LeftAction { algebra: src, mats }
    }

    /// Precompose with a unital inclusion into the acting algebra.
    pub fn restrict(&self, inc: &UnitalInclusion) -> Self {
        self.pullback(inc.sub().clone(), inc.matrix())
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.algebra
    }

    pub fn dim(&self) -> usize {
        self.mats.first().map(|m| m.nrows()).unwrap_or(0)
    }

    pub fn matrices(&self) -> &[CMat] {
        &self.mats
    }

    pub fn apply_coords(&self, c: &CVec) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for (mk, ck) in self.mats.iter().zip(c.iter()) {
            if *ck != ZERO {
                m += mk * *ck;
            }
        }
        m
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        self.apply_coords(&self.algebra.coords(a))
    }

    pub fn compress(&self, real: &Realization) -> Self {
        LeftAction { algebra: self.algebra.clone(), mats: self.mats.iter().map(|m| real.compress(m)).collect() }
    }

    pub fn conjugate(&self, t: &CMat) -> Self {
        let ta = t.adjoint();
        LeftAction { algebra: self.algebra.clone(), mats: self.mats.iter().map(|m| &ta * m * t).collect() }
    }

    /// Multiplicativity, adjoint (for the module's B-valued inner product),
    /// unit and B-linearity defects on basis pairs.
    pub fn star_defects(&self, module: &HilbertModule) -> StarDefects {
        let a = &self.algebra;
        let mut mult = 0.0f64;
        let mut adjoint = 0.0f64;
        let mut linear = 0.0f64;
        for (i, x) in a.basis().iter().enumerate() {
            let px = &self.mats[i];
            let pstar = self.apply(&x.adjoint());
            // ⟨π(x) u, v⟩ = ⟨u, π(x*) v⟩ for every coefficient coordinate
            for g in module.grams() {
                adjoint = adjoint.max(frobenius(&(px.adjoint() * g - g * &pstar)));
            }
            for rk in module.right_matrices() {
                linear = linear.max(frobenius(&(px * rk - rk * px)));
            }
            for (j, y) in a.basis().iter().enumerate() {
                let lhs = self.apply(&(x * y));
                mult = mult.max(frobenius(&(lhs - px * &self.mats[j])));
            }
        }
        let unit = frobenius(&(self.apply(&a.one()) - identity(self.dim())));
        StarDefects { multiplicative: mult, adjoint, unit, module_linear: linear }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarDefects {
    pub multiplicative: f64,
    pub adjoint: f64,
    pub unit: f64,
    pub module_linear: f64,
}

impl StarDefects {
    pub fn max(&self) -> f64 {
        self.multiplicative.max(self.adjoint).max(self.unit).max(self.module_linear)
    }
}

/// Interior tensor product `E1 ⊗_B E2` with its realization inside the
/// algebraic tensor product `ℂ^{d1} ⊗ ℂ^{d2}` (left factor slow).
#[derive(Clone, Debug)]
pub struct TensorProduct {
    pub module: HilbertModule,
    pub realization: Realization,
    pub left_dim: usize,
    pub right_dim: usize,
}

impl TensorProduct {
    /// Transport an operator on the left factor, `quotient (op ⊗ 1) embed`.
    pub fn lift_left_operator(&self, op: &CMat) -> CMat {
        self.realization.compress(&kron(op, &identity(self.right_dim)))
    }

    pub fn lift_left_action(&self, act: &LeftAction) -> LeftAction {
        LeftAction {
            algebra: act.algebra.clone(),
            mats: act.mats.iter().map(|m| self.lift_left_operator(m)).collect(),
        }
    }

    /// Class of the elementary tensor `x ⊗ y`.
    pub fn elementary(&self, x: &CVec, y: &CVec) -> CVec {
        self.realization.quotient_vec(&crate::numerics::kron_vec(x, y))
    }
}

pub(crate) fn same_algebra(a: &Algebra, b: &Algebra) -> bool {
    a.ambient() == b.ambient()
        && a.dim() == b.dim()
        && a.basis().iter().zip(b.basis()).all(|(x, y)| frobenius(&(x - y)) < 1e-12)
}

/// `E1 ⊗_B E2` where `action` is a linear map from E1's coefficient algebra B
/// into operators on E2. The semi-inner product is
/// `⟨e1⊗e2, f1⊗f2⟩ = ⟨e2, ⟨e1,f1⟩·f2⟩`, and the quotient is taken through the
/// scalarized Gram.
pub fn interior_tensor(
    e1: &HilbertModule,
    e2: &HilbertModule,
    action: &LeftAction,
    tol: &Tolerance,
) -> Result<TensorProduct> {
    if !same_algebra(e1.coefficient(), action.algebra()) {
        return Err(Error::ActionMismatch("acting algebra is not the left coefficient algebra".into()));
    }
    if action.dim() != e2.dim() {
        return Err(Error::ActionMismatch(format!(
            "action on dimension {} but right module has dimension {}",
            action.dim(),
            e2.dim()
        )));
    }
    let inner: Vec<CMat> = e2
        .grams()
        .iter()
        .map(|g2| {
            let mut acc = CMat::zeros(e1.dim() * e2.dim(), e1.dim() * e2.dim());
            for (g1, l) in e1.grams().iter().zip(action.matrices()) {
                if g1.iter().all(|z| *z == ZERO) {
                    continue;
                }
                acc += kron(g1, &(g2 * l));
            }
            acc
        })
        .collect();
    let right: Vec<CMat> =
        e2.right_matrices().iter().map(|rk| kron(&identity(e1.dim()), rk)).collect();
    let full = HilbertModule::new(e2.coefficient().clone(), inner, right)?;
    let (module, realization) = full.orthonormalize(tol)?;
    Ok(TensorProduct { module, realization, left_dim: e1.dim(), right_dim: e2.dim() })
}

/// An operator between modules, stored as a matrix on the underlying spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleOperator {
    pub matrix: CMat,
}

impl ModuleOperator {
    pub fn new(matrix: CMat) -> Self {
        ModuleOperator { matrix }
    }

    pub fn identity(n: usize) -> Self {
        ModuleOperator { matrix: identity(n) }
    }

    /// `max_k ‖T R_k - R_k T‖` for modules over the same algebra.
    pub fn b_linearity_defect(&self, dom: &HilbertModule, cod: &HilbertModule) -> f64 {
        dom.right_matrices()
            .iter()
            .zip(cod.right_matrices())
            .map(|(rd, rc)| frobenius(&(&self.matrix * rd - rc * &self.matrix)))
            .fold(0.0, f64::max)
    }

    /// Adjoint solved in the scalarized spaces and then checked against the
    /// B-valued identity `⟨Tx, y⟩ = ⟨x, T*y⟩`.
    pub fn adjoint(
        &self,
        dom: &HilbertModule,
        cod: &HilbertModule,
        tol: &Tolerance,
    ) -> Result<ModuleOperator> {
        let sd = dom.scalar_gram();
        let sc = cod.scalar_gram();
        let rhs = self.matrix.adjoint() * sc;
        let adj = sd
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::NotAdjointable { defect: f64::INFINITY })?;
        let mut defect = 0.0f64;
        for (gd, gc) in dom.grams().iter().zip(cod.grams()) {
            defect = defect.max(frobenius(&(self.matrix.adjoint() * gc - gd * &adj)));
        }
        if defect > 10.0 * tol.abs_eps * (1.0 + frobenius(&self.matrix)) {
            return Err(Error::NotAdjointable { defect });
        }
        Ok(ModuleOperator { matrix: adj })
    }

    /// `max_j ‖T* G̃_j T - Σ_k M_jk G_k‖` where `M` embeds the domain's
    /// coefficients into the codomain's (identity when `coeff` is `None`).
    pub fn inner_product_defect(
        &self,
        dom: &HilbertModule,
        cod: &HilbertModule,
        coeff: Option<&UnitalInclusion>,
    ) -> f64 {
        let t = &self.matrix;
        let ta = t.adjoint();
        let mut worst = 0.0f64;
        for (j, gc) in cod.grams().iter().enumerate() {
            let lhs = &ta * gc * t;
            let mut rhs = CMat::zeros(dom.dim(), dom.dim());
            for (k, gd) in dom.grams().iter().enumerate() {
                let m = match coeff {
                    Some(inc) => inc.matrix()[(j, k)],
                    None => {
                        if j == k {
                            r(1.0)
                        } else {
                            ZERO
                        }
                    }
                };
                if m != ZERO {
                    rhs += gd * m;
                }
            }
            worst = worst.max(frobenius(&(lhs - rhs)));
        }
        worst
    }

    /// Norm of the operator between the scalarized spaces.
    pub fn norm(&self, dom: &HilbertModule, cod: &HilbertModule, tol: &Tolerance) -> Result<f64> {
        let sqrt_c = psd_power(cod.scalar_gram(), 0.5, tol)?;
        let isqrt_d = psd_power(dom.scalar_gram(), -0.5, tol)?;
        operator_norm(&(sqrt_c * &self.matrix * isqrt_d))
    }
}

fn psd_power(m: &CMat, p: f64, tol: &Tolerance) -> Result<CMat> {
    if frobenius(&(m - identity(m.nrows()))) <= tol.abs_eps {
        return Ok(identity(m.nrows()));
    }
    let eig = hermitian_eigen(m, tol)?;
    let mut d = CMat::zeros(m.nrows(), m.nrows());
    for (i, v) in eig.values.iter().enumerate() {
        if *v <= tol.abs_eps {
            return Err(Error::NotPsd { min_eigenvalue: *v });
        }
        d[(i, i)] = r(v.powf(p));
    }
    Ok(&eig.vectors * d * eig.vectors.adjoint())
}

/// `v ⊗ w` between interior tensor products. `w` must intertwine the left
/// actions: `w(π(b)ξ) = π̃(b) w(ξ)`, with `b` carried into the target's
/// acting algebra by `coeff` when the two differ.
#[allow(clippy::too_many_arguments)]
pub fn tensor_operator(
    v: &ModuleOperator,
    w: &ModuleOperator,
    src: &TensorProduct,
    dst: &TensorProduct,
    src_action: &LeftAction,
    dst_action: &LeftAction,
    coeff: Option<&UnitalInclusion>,
    tol: &Tolerance,
) -> Result<ModuleOperator> {
    if v.matrix.ncols() != src.left_dim
        || w.matrix.ncols() != src.right_dim
        || v.matrix.nrows() != dst.left_dim
        || w.matrix.nrows() != dst.right_dim
    {
        return Err(Error::DimensionMismatch("tensor operator factors".into()));
    }
    let mut defect = 0.0f64;
    let b = src_action.algebra();
    for (k, bk) in b.basis().iter().enumerate() {
        let img = match coeff {
            Some(inc) => dst_action.apply(&inc.map(bk)),
            None => dst_action.matrices()[k].clone(),
        };
        defect = defect.max(frobenius(&(&w.matrix * &src_action.matrices()[k] - img * &w.matrix)));
    }
    if defect > 10.0 * tol.abs_eps * (1.0 + frobenius(&w.matrix)) {
        return Err(Error::IntertwineViolation { defect });
    }
    let full = kron(&v.matrix, &w.matrix);
    let m = dst.realization.quotient_matrix() * full * src.realization.embed_matrix();
    Ok(ModuleOperator { matrix: m })
}

/// A faithful state on a coefficient algebra, stored by its values on the
/// basis.
#[derive(Clone, Debug)]
pub struct FaithfulStateRep {
    algebra: Arc<Algebra>,
    values: CVec,
}

impl FaithfulStateRep {
    pub fn normalized_trace(algebra: &Arc<Algebra>) -> Self {
        FaithfulStateRep { algebra: algebra.clone(), values: algebra.unit_coords() }
    }

    /// State with density `h`: `b ↦ tr(h b)/n` in the ambient algebra.
    pub fn with_density(algebra: &Arc<Algebra>, h: &CMat, tol: &Tolerance) -> Result<Self> {
        let n = algebra.ambient() as f64;
        let values = CVec::from_iterator(
            algebra.dim(),
            algebra.basis().iter().map(|b| (h * b).trace() / r(n)),
        );
        let rep = FaithfulStateRep { algebra: algebra.clone(), values };
        rep.validate(tol)?;
        Ok(rep)
    }

    fn validate(&self, tol: &Tolerance) -> Result<()> {
        let one = self.apply(&self.algebra.one());
        if (one - r(1.0)).norm() > 10.0 * tol.abs_eps {
            return Err(Error::InvalidCe(format!("state is not unital: {one}")));
        }
        let basis = self.algebra.basis();
        let k = basis.len();
        let gram = CMat::from_fn(k, k, |i, j| self.apply(&(basis[i].adjoint() * &basis[j])));
        let floor = min_eigenvalue(&gram, tol)?;
        if floor <= tol.abs_eps {
            return Err(Error::NotFaithful);
        }
        Ok(())
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.algebra
    }

    pub fn apply(&self, b: &CMat) -> crate::numerics::C64 {
        self.values.dot(&self.algebra.coords(b))
    }

    pub fn values(&self) -> &CVec {
        &self.values
    }
}

/// Scalar Gram `state(⟨x_i, x_j⟩)` of a module.
pub fn scalarize(e: &HilbertModule, rep: &FaithfulStateRep) -> Result<CMat> {
    if !same_algebra(e.coefficient(), rep.algebra()) {
        return Err(Error::DimensionMismatch("state lives on a different algebra".into()));
    }
    let mut g = CMat::zeros(e.dim(), e.dim());
    for (gk, s) in e.grams().iter().zip(rep.values().iter()) {
        if *s != ZERO {
            g += gk * *s;
        }
    }
    Ok(g)
}

/// A Hilbert B-module with a left action and a unit cyclic vector ξ, in
/// coordinates adapted to `E = ξB ⊕ E°`: the first `dim(B)` coordinates are
/// the coordinates of `b` in `ξ·b`, the rest span the orthogonal complement.
#[derive(Clone, Debug)]
pub struct PointedModule {
    module: HilbertModule,
    algebra: Arc<Algebra>,
    left: LeftAction,
    left_b: LeftAction,
    inclusion: UnitalInclusion,
    class_map: Option<CMat>,
}

impl PointedModule {
    /// Split an orthonormal module along `ξB`.
    pub fn from_cyclic(
        module: HilbertModule,
        cyclic: &CVec,
        left: LeftAction,
        inclusion: UnitalInclusion,
        tol: &Tolerance,
    ) -> Result<Self> {
        let d = module.dim();
        if frobenius(&(module.scalar_gram() - identity(d))) > 1e3 * tol.abs_eps {
            return Err(Error::DimensionMismatch("pointed module must be orthonormal".into()));
        }
        let norm = module.inner_product(cyclic, cyclic);
        let b = module.coefficient().clone();
        if frobenius(&(&norm - b.one())) > 1e3 * tol.abs_eps {
            return Err(Error::InvalidCe("cyclic vector does not have unit inner product".into()));
        }
        let hb = CMat::from_columns(
            &module.right_matrices().iter().map(|rk| rk * cyclic).collect::<Vec<_>>(),
        );
        let comp = relative_complement(&identity(d), &hb, tol);
        let mut t = CMat::zeros(d, d);
        t.view_mut((0, 0), (d, b.dim())).copy_from(&hb);
        t.view_mut((0, b.dim()), (d, comp.ncols())).copy_from(&comp);
        if comp.ncols() + b.dim() != d {
            return Err(Error::DimensionMismatch("cyclic splitting lost dimensions".into()));
        }
        let ta = t.adjoint();
        let module = HilbertModule {
            coeff: b.clone(),
            dim: d,
            inner: module.inner.iter().map(|g| &ta * g * &t).collect(),
            right: module.right.iter().map(|m| &ta * m * &t).collect(),
        };
        let left = left.conjugate(&t);
        let left_b = left.restrict(&inclusion);
        Ok(PointedModule { module, algebra: left.algebra().clone(), left, left_b, inclusion, class_map: Some(ta) })
    }

    pub fn module(&self) -> &HilbertModule {
        &self.module
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.algebra
    }

    pub fn coefficient(&self) -> &Arc<Algebra> {
        self.module.coefficient()
    }

    pub fn inclusion(&self) -> &UnitalInclusion {
        &self.inclusion
    }

    pub fn left(&self) -> &LeftAction {
        &self.left
    }

    pub fn left_b(&self) -> &LeftAction {
        &self.left_b
    }

    pub fn dim(&self) -> usize {
        self.module.dim()
    }

    pub fn b_dim(&self) -> usize {
        self.coefficient().dim()
    }

    pub fn center_dim(&self) -> usize {
        self.dim() - self.b_dim()
    }

    pub fn cyclic(&self) -> CVec {
        let mut v = CVec::zeros(self.dim());
        v[0] = r(1.0);
        v
    }

    pub fn pi(&self, a: &CMat) -> CMat {
        self.left.apply(a)
    }

    /// `⟨ξ, a ξ⟩`.
    pub fn expectation(&self, a: &CMat) -> CMat {
        let v = self.pi(a).column(0).rows(0, self.b_dim()).into_owned();
        self.coefficient().element(&v)
    }

    /// Module coordinates of the class of `a ∈ A` (only for GNS modules).
    pub fn class_of(&self, a: &CMat) -> Option<CVec> {
        self.class_map.as_ref().map(|m| m * self.algebra.coords(a))
    }

    /// Matrix taking algebra coordinates to module coordinates of classes.
    pub fn class_matrix(&self) -> Option<&CMat> {
        self.class_map.as_ref()
    }

    /// E° as a module.
    pub fn center_module(&self) -> HilbertModule {
        let (b, n) = (self.b_dim(), self.center_dim());
        HilbertModule {
            coeff: self.coefficient().clone(),
            dim: n,
            inner: self.module.inner.iter().map(|g| g.view((b, b), (n, n)).into_owned()).collect(),
            right: self.module.right.iter().map(|m| m.view((b, b), (n, n)).into_owned()).collect(),
        }
    }

    /// Left B-action restricted to E°.
    pub fn center_left_b(&self) -> LeftAction {
        let (b, n) = (self.b_dim(), self.center_dim());
        LeftAction {
            algebra: self.coefficient().clone(),
            mats: self.left_b.mats.iter().map(|m| m.view((b, b), (n, n)).into_owned()).collect(),
        }
    }

    /// `‖⟨ξ, aξ⟩ - φ(a)‖` over the basis of A.
    pub fn expectation_defect(&self, ce: &ConditionalExpectation) -> f64 {
        self.algebra
            .basis()
            .iter()
            .map(|a| frobenius(&(self.expectation(a) - ce.apply(a))))
            .fold(0.0, f64::max)
    }

    /// Largest `‖⟨ξ·b, e°⟩‖` over basis vectors.
    pub fn splitting_defect(&self) -> f64 {
        let b = self.b_dim();
        let mut worst = 0.0f64;
        for g in self.module.grams() {
            worst = worst.max(frobenius(&g.view((0, b), (b, self.center_dim())).into_owned()));
        }
        worst
    }
}

/// GNS module `L²(A, φ)` with its cyclic vector and left action.
pub fn gns_module(ce: &ConditionalExpectation, tol: &Tolerance) -> Result<PointedModule> {
    if !gns_faithful(ce, tol)? {
        return Err(Error::NotFaithful);
    }
    gns_module_unchecked(ce, tol)
}

/// GNS module without the faithfulness requirement; the left action then
/// factors through a quotient of the algebra.
pub fn gns_module_unchecked(ce: &ConditionalExpectation, tol: &Tolerance) -> Result<PointedModule> {
    let a = ce.source();
    let b = ce.target();
    let basis = a.basis();
    let n = a.dim();
    let mut inner = vec![CMat::zeros(n, n); b.dim()];
    for i in 0..n {
        for j in 0..n {
            let v = ce.apply_coords(&a.coords(&(basis[i].adjoint() * &basis[j])));
            for k in 0..b.dim() {
                inner[k][(i, j)] = v[k];
            }
        }
    }
    let inc = ce.inclusion();
    let right: Vec<CMat> = b.basis().iter().map(|bk| a.right_mult(&inc.map(bk))).collect();
    let raw = HilbertModule::new(b.clone(), inner, right)?;
    let (module, real) = raw.orthonormalize(tol)?;
    let left = LeftAction::regular(a).compress(&real);
    let cyclic = real.quotient_vec(&a.unit_coords());
    let mut pm = PointedModule::from_cyclic(module, &cyclic, left, inc.clone(), tol)?;
    pm.class_map = pm.class_map.map(|t| t * real.quotient_matrix());
    Ok(pm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{diag, matrix_unit, ONE};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn scalar_inc(a: &Arc<Algebra>) -> UnitalInclusion {
        UnitalInclusion::new(Algebra::scalars(1), a.clone(), |x| a.one() * x[(0, 0)], &tol()).unwrap()
    }

    fn diag_state(w0: f64, w1: f64) -> ConditionalExpectation {
        let a = Algebra::diagonal(2, &tol());
        ConditionalExpectation::new(
            scalar_inc(&a),
            move |x| CMat::from_element(1, 1, x[(0, 0)] * r(w0) + x[(1, 1)] * r(w1)),
            &tol(),
        )
        .unwrap()
    }

    fn trace_m2() -> ConditionalExpectation {
        let a = Algebra::full(2, &tol());
        ConditionalExpectation::new(scalar_inc(&a), |x| CMat::from_element(1, 1, x.trace() / r(2.0)), &tol())
            .unwrap()
    }

    #[test]
    fn gns_dimensions() {
        let e = gns_module(&diag_state(0.5, 0.5), &tol()).unwrap();
        assert_eq!((e.dim(), e.center_dim()), (2, 1));
        let e = gns_module(&trace_m2(), &tol()).unwrap();
        assert_eq!((e.dim(), e.center_dim()), (4, 3));
        assert!(matches!(gns_module(&diag_state(1.0, 0.0), &tol()), Err(Error::NotFaithful)));
    }

    #[test]
    fn gns_reproduces_expectation_and_is_star() {
        for ce in [diag_state(0.25, 0.75), trace_m2()] {
            let e = gns_module(&ce, &tol()).unwrap();
            assert!(e.expectation_defect(&ce) < 1e-12);
            assert!(e.splitting_defect() < 1e-12);
            assert!(e.left().star_defects(e.module()).max() < 1e-12);
            assert!(e.module().axiom_defects(&tol()).ok(&tol()));
        }
    }

    #[test]
    fn gns_over_diagonal_coefficients() {
        let t = tol();
        let m2 = Algebra::full(2, &t);
        let d = Algebra::diagonal(2, &t);
        let inc = UnitalInclusion::subalgebra(d, m2, &t).unwrap();
        let ce = ConditionalExpectation::new(inc, |x| diag(&[x[(0, 0)], x[(1, 1)]]), &t).unwrap();
        let e = gns_module(&ce, &t).unwrap();
        assert_eq!((e.dim(), e.center_dim()), (4, 2));
        assert!(e.expectation_defect(&ce) < 1e-12);
        assert!(e.left().star_defects(e.module()).max() < 1e-12);
        assert!(e.module().axiom_defects(&t).ok(&t));
    }

    #[test]
    fn tensor_with_unit_module_preserves_dimension() {
        let e = gns_module(&trace_m2(), &tol()).unwrap();
        let b = e.coefficient().clone();
        let unit = HilbertModule::algebra_module(&b);
        let tp = interior_tensor(e.module(), &unit, &LeftAction::regular(&b), &tol()).unwrap();
        assert_eq!(tp.module.dim(), e.dim());
    }

    #[test]
    fn tensor_of_hilbert_spaces() {
        let tp = interior_tensor(
            &HilbertModule::hilbert_space(2),
            &HilbertModule::hilbert_space(3),
            &LeftAction::scalar(3),
            &tol(),
        )
        .unwrap();
        assert_eq!(tp.module.dim(), 6);
    }

    #[test]
    fn centered_trace_modules_tensor_to_nine() {
        let e = gns_module(&trace_m2(), &tol()).unwrap();
        let c = e.center_module();
        // oracle: Gram of the algebraic tensor is kron(G, G) = kron(1_3, 1_3), full rank 9
        let g = kron(c.scalar_gram(), c.scalar_gram());
        assert_eq!(null_space_basis(&g, &tol()).unwrap().range.ncols(), 9);
        let tp = interior_tensor(&c, &c, &e.center_left_b(), &tol()).unwrap();
        assert_eq!(tp.module.dim(), 9);
    }

    #[test]
    fn tensor_rejects_wrong_action() {
        let e = gns_module(&trace_m2(), &tol()).unwrap();
        let err = interior_tensor(e.module(), &HilbertModule::hilbert_space(3), &LeftAction::scalar(2), &tol());
        assert!(matches!(err, Err(Error::ActionMismatch(_))));
    }

    #[test]
    fn tensor_operators() {
        let t = tol();
        let e = gns_module(&trace_m2(), &t).unwrap();
        let c = e.center_module();
        let act = e.center_left_b();
        let tp = interior_tensor(&c, &c, &act, &t).unwrap();
        let id = ModuleOperator::identity(3);
        let idid = tensor_operator(&id, &id, &tp, &tp, &act, &act, None, &t).unwrap();
        assert!(frobenius(&(idid.matrix.clone() - identity(9))) < 1e-12);

        let two = ModuleOperator::new(identity(3) * r(2.0));
        let op = tensor_operator(&two, &id, &tp, &tp, &act, &act, None, &t).unwrap();
        assert!((op.norm(&tp.module, &tp.module, &t).unwrap() - 2.0).abs() < 1e-12);

        // a unitary on E° commuting with the (scalar) B-action is an isometry
        let theta = 0.3f64;
        let mut u = identity(3);
        u[(0, 0)] = crate::numerics::c(theta.cos(), 0.0);
        u[(0, 1)] = crate::numerics::c(-theta.sin(), 0.0);
        u[(1, 0)] = crate::numerics::c(theta.sin(), 0.0);
        u[(1, 1)] = crate::numerics::c(theta.cos(), 0.0);
        let uu = ModuleOperator::new(u);
        let op = tensor_operator(&uu, &uu, &tp, &tp, &act, &act, None, &t).unwrap();
        assert!(op.inner_product_defect(&tp.module, &tp.module, None) < 1e-12);
        assert!(op.b_linearity_defect(&tp.module, &tp.module) < 1e-12);
    }

    #[test]
    fn tensor_operator_detects_intertwining_failure() {
        let t = tol();
        let m2 = Algebra::full(2, &t);
        let d = Algebra::diagonal(2, &t);
        let inc = UnitalInclusion::subalgebra(d, m2, &t).unwrap();
        let ce = ConditionalExpectation::new(inc, |x| diag(&[x[(0, 0)], x[(1, 1)]]), &t).unwrap();
        let e = gns_module(&ce, &t).unwrap();
        let c = e.center_module();
        let act = e.center_left_b();
        let tp = interior_tensor(&c, &c, &act, &t).unwrap();
        // the swap of the two off-diagonal directions anticommutes with diag(1,-1)
        let swap = ModuleOperator::new(CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]));
        let id = ModuleOperator::identity(2);
        assert!(matches!(
            tensor_operator(&id, &swap, &tp, &tp, &act, &act, None, &t),
            Err(Error::IntertwineViolation { .. })
        ));
    }

    #[test]
    fn adjoint_matches_b_valued_identity() {
        let t = tol();
        let e = gns_module(&trace_m2(), &t).unwrap();
        let x = matrix_unit(2, 0, 1);
        let op = ModuleOperator::new(e.pi(&x));
        let adj = op.adjoint(e.module(), e.module(), &t).unwrap();
        assert!(frobenius(&(adj.matrix - e.pi(&x.adjoint()))) < 1e-12);
    }

    #[test]
    fn scalarize_examples() {
        let t = tol();
        let m2 = Algebra::full(2, &t);
        let own = HilbertModule::algebra_module(&m2);
        let g = scalarize(&own, &FaithfulStateRep::normalized_trace(&m2)).unwrap();
        assert!(min_eigenvalue(&g, &t).unwrap() > 0.1);

        let degenerate = HilbertModule::new(
            Algebra::scalars(1),
            vec![diag(&[ONE, ZERO])],
            vec![identity(2)],
        )
        .unwrap();
        let g = scalarize(&degenerate, &FaithfulStateRep::normalized_trace(&Algebra::scalars(1))).unwrap();
        assert_eq!(null_space_basis(&g, &t).unwrap().null.ncols(), 1);

        // E° of (ℂ⊕ℂ, (3/4, 1/4)): centered generator a = e_00 - 3/4, so
        // φ(a*a) - |φ(a)|² = 3/4 - 9/16 = 3/16 > 0
        let ce = diag_state(0.75, 0.25);
        let a = matrix_unit(2, 0, 0) - identity(2) * r(0.75);
        let var = ce.apply(&(a.adjoint() * &a))[(0, 0)].re;
        assert!((var - 3.0 / 16.0).abs() < 1e-14);
        let e = gns_module(&ce, &t).unwrap();
        let c = e.center_module();
        let g = scalarize(&c, &FaithfulStateRep::normalized_trace(c.coefficient())).unwrap();
        assert_eq!(g.nrows(), 1);
        assert!(g[(0, 0)].re > 0.0);
        // the class of the centered generator has the variance as its norm
        let cls = e.class_of(&a).unwrap();
        assert!((e.module().inner_product(&cls, &cls)[(0, 0)].re - var).abs() < 1e-12);
    }

    #[test]
    fn faithful_state_with_density() {
        let t = tol();
        let d = Algebra::diagonal(2, &t);
        assert!(FaithfulStateRep::with_density(&d, &diag(&[r(1.5), r(0.5)]), &t).is_ok());
        assert!(matches!(
            FaithfulStateRep::with_density(&d, &diag(&[r(2.0), ZERO]), &t),
            Err(Error::NotFaithful)
        ));
    }
}
