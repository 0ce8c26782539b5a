//! Concrete finite-dimensional C*-algebras, unital inclusions and conditional
//! expectations.
//!
//! An [`Algebra`] is a unital *-subalgebra of `M_n`, stored through a basis
//! that is orthonormal for the normalized trace `tr(x* y)/n` and starts with
//! the identity. Coordinates of an element are its trace inner products with
//! the basis, so the coordinate of index 0 is always the normalized trace.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{
    column_space, frobenius, identity, min_eigenvalue, null_space_basis, r, trace_inner,
    CMat, CVec, Tolerance, ONE, ZERO,
};

#[derive(Clone)]
pub struct Algebra {
    ambient: usize,
    basis: Vec<CMat>,
}

impl fmt::Debug for Algebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Algebra")
            .field("ambient", &self.ambient)
            .field("dim", &self.basis.len())
            .finish()
    }
}

impl Algebra {
    /// Smallest unital *-subalgebra of `M_ambient` containing `generators`.
    pub fn build(ambient: usize, generators: &[CMat], tol: &Tolerance) -> Result<Arc<Self>> {
        for (k, g) in generators.iter().enumerate() {
            if g.nrows() != ambient || g.ncols() != ambient {
                return Err(Error::DimensionMismatch(format!(
                    "generator {k} is {}x{}, expected {ambient}x{ambient}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            crate::numerics::check_finite(g)?;
        }
        let cap = ambient * ambient;
        let thr = 1e3 * tol.abs_eps;
        let mut basis: Vec<CMat> = vec![identity(ambient)];
        let push = |basis: &mut Vec<CMat>, x: &CMat| -> Result<bool> {
            match orthonormal_residual(basis, x, thr) {
                Some(v) => {
                    if basis.len() == cap {
                        return Err(Error::ClosureOverflow { cap });
                    }
                    basis.push(v);
                    Ok(true)
                }
                None => Ok(false),
            }
        };
        for g in generators {
            push(&mut basis, g)?;
            push(&mut basis, &g.adjoint())?;
        }
        // close under products until the span stabilizes; pairs are visited in
        // a fixed order so the resulting basis is reproducible
        let mut done = 0usize;
        loop {
            let n = basis.len();
            let mut grew = false;
            for i in 0..n {
                for j in 0..n {
                    if i < done && j < done {
                        continue;
                    }
                    let p = &basis[i] * &basis[j];
                    grew |= push(&mut basis, &p)?;
                }
            }
            done = n;
            if !grew {
                break;
            }
        }
        Ok(Arc::new(Algebra { ambient, basis }))
    }

    /// `ℂ·1` inside `M_n`.
    pub fn scalars(ambient: usize) -> Arc<Self> {
        Arc::new(Algebra { ambient, basis: vec![identity(ambient)] })
    }

    /// All of `M_n`.
    pub fn full(ambient: usize, tol: &Tolerance) -> Arc<Self> {
        let units: Vec<CMat> = (0..ambient)
            .flat_map(|i| (0..ambient).map(move |j| crate::numerics::matrix_unit(ambient, i, j)))
            .collect();
        Self::build(ambient, &units, tol).expect("matrix units generate M_n")
    }

    /// Diagonal matrices in `M_n`.
    pub fn diagonal(ambient: usize, tol: &Tolerance) -> Arc<Self> {
        let units: Vec<CMat> =
            (0..ambient).map(|i| crate::numerics::matrix_unit(ambient, i, i)).collect();
        Self::build(ambient, &units, tol).expect("diagonal units generate the diagonal")
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn is_scalar(&self) -> bool {
        self.basis.len() == 1
    }

    /// Coordinates of the unit (always the first basis vector).
    pub fn unit_coords(&self) -> CVec {
        let mut v = CVec::zeros(self.dim());
        v[0] = ONE;
        v
    }

    pub fn one(&self) -> CMat {
        identity(self.ambient)
    }

    pub fn coords(&self, x: &CMat) -> CVec {
        CVec::from_iterator(self.dim(), self.basis.iter().map(|b| trace_inner(b, x)))
    }

    pub fn element(&self, coords: &CVec) -> CMat {
        let mut m = CMat::zeros(self.ambient, self.ambient);
        for (b, c) in self.basis.iter().zip(coords.iter()) {
            if *c != ZERO {
                m += b * *c;
            }
        }
        m
    }

    /// Normalized-trace distance from `x` to the algebra.
    pub fn residual(&self, x: &CMat) -> f64 {
        if x.nrows() != self.ambient || x.ncols() != self.ambient {
            return f64::INFINITY;
        }
        let proj = self.element(&self.coords(x));
        frobenius(&(x - proj)) / (self.ambient as f64).sqrt()
    }

    pub fn contains(&self, x: &CMat, tol: &Tolerance) -> bool {
        self.residual(x) <= tol.abs_eps * frobenius(x).max(1.0)
    }

    /// Coordinate matrix of `x ↦ a x`.
    pub fn left_mult(&self, a: &CMat) -> CMat {
        let cols: Vec<CVec> = self.basis.iter().map(|b| self.coords(&(a * b))).collect();
        CMat::from_columns(&cols)
    }

    /// Coordinate matrix of `x ↦ x a`.
    pub fn right_mult(&self, a: &CMat) -> CMat {
        let cols: Vec<CVec> = self.basis.iter().map(|b| self.coords(&(b * a))).collect();
        CMat::from_columns(&cols)
    }

    /// Largest distance of a product of basis elements from the span.
    pub fn closure_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in &self.basis {
            worst = worst.max(self.residual(&x.adjoint()));
            for y in &self.basis {
                worst = worst.max(self.residual(&(x * y)));
            }
        }
        worst
    }
}

/// Gram-Schmidt step against an orthonormal list; `None` if `x` is in the span.
fn orthonormal_residual(basis: &[CMat], x: &CMat, thr: f64) -> Option<CMat> {
    let scale = trace_inner(x, x).re.sqrt();
    if scale == 0.0 {
        return None;
    }
    let mut v = x.clone();
    for _ in 0..2 {
        for b in basis {
            let p = trace_inner(b, &v);
            v -= b * p;
        }
    }
    let norm = trace_inner(&v, &v).re.sqrt();
    if norm <= thr * scale.max(1.0) {
        None
    } else {
        Some(v / r(norm))
    }
}

/// Coordinate matrix of a linear map between two algebras, with the largest
/// distance of an image from the target algebra.
pub fn coordinate_matrix<F>(source: &Algebra, target: &Algebra, f: F) -> Result<(CMat, f64)>
where
    F: Fn(&CMat) -> CMat,
{
    let mut worst = 0.0f64;
    let mut cols = Vec::with_capacity(source.dim());
    for b in source.basis() {
        let img = f(b);
        if img.nrows() != target.ambient() || img.ncols() != target.ambient() {
            return Err(Error::DimensionMismatch(format!(
                "map image is {}x{}, target ambient is {}",
                img.nrows(),
                img.ncols(),
                target.ambient()
            )));
        }
        crate::numerics::check_finite(&img)?;
        worst = worst.max(target.residual(&img));
        cols.push(target.coords(&img));
    }
    Ok((CMat::from_columns(&cols), worst))
}

/// A unital injective *-homomorphism `sub → sup`.
#[derive(Clone, Debug)]
pub struct UnitalInclusion {
    sub: Arc<Algebra>,
    sup: Arc<Algebra>,
    matrix: CMat,
}

impl UnitalInclusion {
    pub fn new<F>(sub: Arc<Algebra>, sup: Arc<Algebra>, f: F, tol: &Tolerance) -> Result<Self>
    where
        F: Fn(&CMat) -> CMat,
    {
        let (matrix, range) = coordinate_matrix(&sub, &sup, f)?;
        if range > tol.abs_eps.sqrt() {
            return Err(Error::NotInAlgebra { residual: range });
        }
        let inc = UnitalInclusion { sub, sup, matrix };
        inc.validate(tol)?;
        Ok(inc)
    }

    /// Inclusion of a subalgebra living in the same ambient matrix algebra.
    pub fn subalgebra(sub: Arc<Algebra>, sup: Arc<Algebra>, tol: &Tolerance) -> Result<Self> {
        if sub.ambient() != sup.ambient() {
            return Err(Error::DimensionMismatch(format!(
                "subalgebra ambient {} vs {}",
                sub.ambient(),
                sup.ambient()
            )));
        }
        Self::new(sub, sup, |x| x.clone(), tol)
    }

    fn validate(&self, tol: &Tolerance) -> Result<()> {
        let eps = tol.abs_eps.sqrt();
        let unit = frobenius(&(self.map(&self.sub.one()) - self.sup.one()));
        if unit > eps {
            return Err(Error::NotHomomorphism(format!("unit defect {unit:.3e}")));
        }
        for x in self.sub.basis() {
            let star = frobenius(&(self.map(&x.adjoint()) - self.map(x).adjoint()));
            if star > eps {
                return Err(Error::NotHomomorphism(format!("adjoint defect {star:.3e}")));
            }
            for y in self.sub.basis() {
                let d = frobenius(&(self.map(&(x * y)) - self.map(x) * self.map(y)));
                if d > eps {
                    return Err(Error::NotHomomorphism(format!("multiplicativity defect {d:.3e}")));
                }
            }
        }
        if column_space(&self.matrix, tol).ncols() != self.sub.dim() {
            return Err(Error::NotHomomorphism("map is not injective".into()));
        }
        Ok(())
    }

    pub fn sub(&self) -> &Arc<Algebra> {
        &self.sub
    }

    pub fn sup(&self) -> &Arc<Algebra> {
        &self.sup
    }

    /// Coordinate matrix, `dim(sup) × dim(sub)`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn map(&self, x: &CMat) -> CMat {
        self.sup.element(&(&self.matrix * self.sub.coords(x)))
    }

    pub fn map_coords(&self, c: &CVec) -> CVec {
        &self.matrix * c
    }
}

/// A linear map `A → B` onto a unital subalgebra `B ⊆ A`, checked by
/// [`validate_cexp`].
#[derive(Clone, Debug)]
pub struct ConditionalExpectation {
    inclusion: UnitalInclusion,
    map: CMat,
}

impl ConditionalExpectation {
    /// `f` sends elements of `A` (in A's ambient) to elements of `B` (in B's
    /// ambient).
    pub fn new<F>(inclusion: UnitalInclusion, f: F, tol: &Tolerance) -> Result<Self>
    where
        F: Fn(&CMat) -> CMat,
    {
        let (map, range) = coordinate_matrix(inclusion.sup(), inclusion.sub(), f)?;
        if range > tol.abs_eps.sqrt() {
            return Err(Error::InvalidCe(format!("image leaves the target algebra ({range:.3e})")));
        }
        Ok(ConditionalExpectation { inclusion, map })
    }

    pub fn from_matrix(inclusion: UnitalInclusion, map: CMat) -> Result<Self> {
        if map.nrows() != inclusion.sub().dim() || map.ncols() != inclusion.sup().dim() {
            return Err(Error::DimensionMismatch("expectation coordinate matrix".into()));
        }
        Ok(ConditionalExpectation { inclusion, map })
    }

    pub fn source(&self) -> &Arc<Algebra> {
        self.inclusion.sup()
    }

    pub fn target(&self) -> &Arc<Algebra> {
        self.inclusion.sub()
    }

    pub fn inclusion(&self) -> &UnitalInclusion {
        &self.inclusion
    }

    /// Coordinate matrix, `dim(B) × dim(A)`.
    pub fn matrix(&self) -> &CMat {
        &self.map
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        self.target().element(&self.apply_coords(&self.source().coords(a)))
    }

    pub fn apply_coords(&self, a: &CVec) -> CVec {
        &self.map * a
    }

    /// `a - φ(a)` inside `A`.
    pub fn center(&self, a: &CMat) -> CMat {
        a - self.inclusion.map(&self.apply(a))
    }

    /// Restriction to a unital subalgebra `sub ⊆ A` whose image lies in
    /// `target_sub ⊆ B`; fails with the distance from `target_sub` otherwise.
    pub fn restrict(
        &self,
        sub: &Arc<Algebra>,
        target_sub: &Arc<Algebra>,
        tol: &Tolerance,
    ) -> Result<Self> {
        let (map, range) = coordinate_matrix(sub, target_sub, |x| self.apply(x))?;
        if range > tol.abs_eps.sqrt() {
            return Err(Error::NotInAlgebra { residual: range });
        }
        let inclusion =
            UnitalInclusion::new(target_sub.clone(), sub.clone(), |b| self.inclusion.map(b), tol)?;
        Ok(ConditionalExpectation { inclusion, map })
    }

    /// B-valued Gram tensor `[φ(a_i* a_j)]` over the basis of A as a
    /// `(k·m) × (k·m)` block matrix.
    pub fn gram_blocks(&self) -> CMat {
        let a = self.source().basis();
        let m = self.target().ambient();
        let k = a.len();
        let mut out = CMat::zeros(k * m, k * m);
        for i in 0..k {
            for j in 0..k {
                let blk = self.apply(&(a[i].adjoint() * &a[j]));
                out.view_mut((i * m, j * m), (m, m)).copy_from(&blk);
            }
        }
        out
    }

    /// Scalar GNS Gram `τ(φ(a_i* a_j))` for the normalized trace τ of B.
    pub fn scalar_gram(&self) -> CMat {
        let a = self.source().basis();
        let k = a.len();
        CMat::from_fn(k, k, |i, j| {
            let blk = self.apply_coords(&self.source().coords(&(a[i].adjoint() * &a[j])));
            blk[0]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CexpReport {
    pub entries: Vec<CheckEntry>,
}

impl CexpReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Unitality, projection, bimodule property and complete positivity.
pub fn validate_cexp(ce: &ConditionalExpectation, tol: &Tolerance) -> CexpReport {
    let eps = 10.0 * tol.abs_eps;
    let a = ce.source();
    let b = ce.target();
    let inc = ce.inclusion();

    let unital = frobenius(&(ce.apply(&a.one()) - b.one()));

    let mut projection = 0.0f64;
    for x in b.basis() {
        projection = projection.max(frobenius(&(ce.apply(&inc.map(x)) - x)));
    }

    let mut bimodule = 0.0f64;
    for b1 in b.basis() {
        for b2 in b.basis() {
            let (l, rr) = (inc.map(b1), inc.map(b2));
            for x in a.basis() {
                let lhs = ce.apply(&(&l * x * &rr));
                let rhs = b1 * ce.apply(x) * b2;
                bimodule = bimodule.max(frobenius(&(lhs - rhs)));
            }
        }
    }

    let (cp_ok, cp_min) = match min_eigenvalue(&ce.gram_blocks(), tol) {
        Ok(v) => (v >= -tol.abs_eps, v),
        Err(_) => (false, f64::NEG_INFINITY),
    };

    CexpReport {
        entries: vec![
            CheckEntry { name: "unital", passed: unital <= eps, residual: unital },
            CheckEntry { name: "projection", passed: projection <= eps, residual: projection },
            CheckEntry { name: "bimodule", passed: bimodule <= eps, residual: bimodule },
            CheckEntry { name: "completely_positive", passed: cp_ok, residual: cp_min.min(0.0).abs() },
        ],
    }
}

/// Largest `‖φ(a*) - φ(a)*‖` over the basis.
pub fn self_adjointness_defect(ce: &ConditionalExpectation) -> f64 {
    ce.source()
        .basis()
        .iter()
        .map(|x| frobenius(&(ce.apply(&x.adjoint()) - ce.apply(x).adjoint())))
        .fold(0.0, f64::max)
}

/// Whether the left action of A on `L²(A, φ)` is injective.
pub fn gns_faithful(ce: &ConditionalExpectation, tol: &Tolerance) -> Result<bool> {
    let report = validate_cexp(ce, tol);
    if !report.passed() {
        let failed: Vec<&str> =
            report.entries.iter().filter(|e| !e.passed).map(|e| e.name).collect();
        return Err(Error::InvalidCe(failed.join(", ")));
    }
    let a = ce.source();
    let split = null_space_basis(&ce.scalar_gram(), tol)?;
    if split.null.ncols() == 0 {
        return Ok(true);
    }
    // x is in the kernel iff x·a_j is null for every basis element a_j
    let q = split.range.adjoint();
    let blocks: Vec<CMat> = a.basis().iter().map(|aj| &q * a.right_mult(aj)).collect();
    let rows: usize = blocks.iter().map(|m| m.nrows()).sum();
    let mut stacked = CMat::zeros(rows, a.dim());
    let mut off = 0;
    for m in &blocks {
        stacked.view_mut((off, 0), (m.nrows(), m.ncols())).copy_from(m);
        off += m.nrows();
    }
    Ok(column_space(&stacked, tol).ncols() == a.dim())
}
