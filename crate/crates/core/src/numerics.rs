//! Dense complex linear algebra shared by every construction, plus the global
//! tolerance policy.
//!
//! Decompositions go through nalgebra. Eigenvalues are returned in
//! ascending order with ties broken by original index so repeated runs agree
//! bit for bit. Singular value decompositions are verified by recomposition;
//! nalgebra's iteration occasionally converges to a wrong factorization on
//! small rank-deficient inputs, and those fall back to one-sided Jacobi.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Absolute and relative thresholds threaded through all checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_eps: f64,
    pub rel_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs_eps: 1e-10, rel_eps: 1e-8 }
    }
}

impl Tolerance {
    pub fn new(abs_eps: f64, rel_eps: f64) -> Result<Self> {
        if !(abs_eps.is_finite() && abs_eps > 0.0) {
            return Err(Error::InvalidTolerance(format!("abs_eps must be positive, got {abs_eps}")));
        }
        if !(rel_eps.is_finite() && rel_eps > 0.0) {
            return Err(Error::InvalidTolerance(format!("rel_eps must be positive, got {rel_eps}")));
        }
        Ok(Tolerance { abs_eps, rel_eps })
    }

    /// Threshold for singular values when extracting a column space.
    pub(crate) fn rank_threshold(&self, scale: f64) -> f64 {
        1e3 * self.abs_eps * scale.max(1.0)
    }
}

pub fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix unit `e_ij` in `M_n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn diag(entries: &[C64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(entries))
}

pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMat {
    assert_eq!(data.len(), rows * cols);
    CMat::from_fn(rows, cols, |i, j| r(data[i * cols + j]))
}

/// Kronecker product with the left factor as the slow index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        if *x == ZERO {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

/// Normalized Hilbert-Schmidt inner product `tr(x* y) / n`.
pub fn trace_inner(x: &CMat, y: &CMat) -> C64 {
    let n = x.nrows() as f64;
    let mut acc = ZERO;
    for (a, b) in x.iter().zip(y.iter()) {
        acc += a.conj() * b;
    }
    acc / n
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// Eigendecomposition of a Hermitian matrix, values ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn hermitian_eigen(m: &CMat, tol: &Tolerance) -> Result<HermitianEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let defect = hermitian_defect(m);
    if defect > tol.abs_eps * frobenius(m).max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let sym = (m + m.adjoint()) * r(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

pub fn min_eigenvalue(m: &CMat, tol: &Tolerance) -> Result<f64> {
    Ok(hermitian_eigen(m, tol)?.values.first().copied().unwrap_or(0.0))
}

/// Largest singular value.
pub fn operator_norm(m: &CMat) -> Result<f64> {
    check_finite(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(svd(m).values.iter().cloned().fold(0.0, f64::max))
}

/// True iff the smallest eigenvalue is at least `-abs_eps`.
pub fn psd_floor(m: &CMat, tol: &Tolerance) -> Result<bool> {
    Ok(min_eigenvalue(m, tol)? >= -tol.abs_eps)
}

/// Splitting of a positive semidefinite matrix into kernel and range.
#[derive(Debug, Clone)]
pub struct NullSplit {
    /// Orthonormal columns spanning eigenvectors with eigenvalue below `abs_eps`.
    pub null: CMat,
    /// Orthonormal columns spanning the complementary eigenvectors.
    pub range: CMat,
    /// Eigenvalues matching the columns of `range`.
    pub range_values: Vec<f64>,
}

pub fn null_space_basis(g: &CMat, tol: &Tolerance) -> Result<NullSplit> {
    let eig = hermitian_eigen(g, tol)?;
    let n = g.nrows();
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if let Some(&lo) = eig.values.first() {
        if lo < -(tol.abs_eps + tol.rel_eps * scale) {
            return Err(Error::NotPsd { min_eigenvalue: lo });
        }
    }
    let split = eig.values.iter().take_while(|&&v| v < tol.abs_eps).count();
    let null = eig.vectors.columns(0, split).into_owned();
    let range = eig.vectors.columns(split, n - split).into_owned();
    Ok(NullSplit { null, range, range_values: eig.values[split..].to_vec() })
}

/// Orthonormal basis of the column span of `m`.
pub fn column_space(m: &CMat, tol: &Tolerance) -> CMat {
    if m.ncols() == 0 || m.nrows() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let d = svd(m);
    let smax = d.values.iter().cloned().fold(0.0, f64::max);
    let thr = tol.rank_threshold(smax);
    let keep: Vec<usize> = (0..d.values.len()).filter(|&i| d.values[i] > thr).collect();
    let u = d.u;
    CMat::from_fn(m.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthonormal basis of `span(outer) ⊖ span(inner)`; both inputs orthonormal.
pub fn relative_complement(outer: &CMat, inner: &CMat, tol: &Tolerance) -> CMat {
    if inner.ncols() == 0 {
        return outer.clone();
    }
    let residue = outer - inner * (inner.adjoint() * outer);
    column_space(&residue, tol)
}

/// Least-squares solution of `a x = b` and the residual norm `‖a x - b‖`.
pub fn least_squares(a: &CMat, b: &CVec, tol: &Tolerance) -> (CVec, f64) {
    if a.ncols() == 0 {
        return (CVec::zeros(0), vec_norm(b));
    }
    let d = svd(a);
    let smax = d.values.iter().cloned().fold(0.0, f64::max);
    let x = d.pseudo_inverse(tol.abs_eps * smax.max(1.0)) * b;
    let res = vec_norm(&(a * &x - b));
    (x, res)
}

/// Thin singular value decomposition `m = u · diag(values) · v_t`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub values: Vec<f64>,
    pub v_t: CMat,
}

impl Svd {
    pub fn recompose(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, s) in self.values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.v_t
    }

    /// Pseudo-inverse discarding singular values at or below `cutoff`.
    pub fn pseudo_inverse(&self, cutoff: f64) -> CMat {
        let mut v = self.v_t.adjoint();
        for (j, s) in self.values.iter().enumerate() {
            v.column_mut(j).scale_mut(if *s > cutoff { 1.0 / s } else { 0.0 });
        }
        v * self.u.adjoint()
    }
}

/// Singular value decomposition, verified by recomposition.
pub fn svd(m: &CMat) -> Svd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        let k = rows.min(cols);
        return Svd { u: CMat::zeros(rows, k), values: vec![], v_t: CMat::zeros(k, cols) };
    }
    let d = m.clone().svd(true, true);
    let fast = Svd {
        u: d.u.expect("requested U"),
        values: d.singular_values.iter().cloned().collect(),
        v_t: d.v_t.expect("requested V"),
    };
    let scale = frobenius(m).max(1.0);
    if frobenius(&(fast.recompose() - m)) <= 1e-12 * scale {
        return fast;
    }
    if rows >= cols {
        jacobi_svd(m)
    } else {
        let t = jacobi_svd(&m.adjoint());
        Svd { u: t.v_t.adjoint(), values: t.values, v_t: t.u.adjoint() }
    }
}

/// One-sided Jacobi SVD for `rows ≥ cols`.
fn jacobi_svd(m: &CMat) -> Svd {
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = identity(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    let cp = mat.column(p).into_owned();
                    let cq = mat.column(q).into_owned() * phase.conj();
                    mat.set_column(p, &(&cp * r(c) - &cq * r(s)));
                    mat.set_column(q, &((&cp * r(s) + &cq * r(c)) * phase));
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    // columns with vanishing norm are completed to an orthonormal set
    let mut u = CMat::zeros(m.nrows(), n);
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        if values[k] > f64::MIN_POSITIVE.sqrt() {
            u.set_column(k, &(a.column(j) * r(1.0 / values[k])));
            filled += 1;
        }
    }
    let mut e = 0;
    while filled < n {
        let mut x = CVec::zeros(m.nrows());
        x[e] = ONE;
        e += 1;
        let head = u.columns(0, filled).into_owned();
        let x = &x - &head * (head.adjoint() * &x);
        let nx = x.norm();
        if nx > 1e-6 {
            u.set_column(filled, &(x * r(1.0 / nx)));
            filled += 1;
        }
    }
    let v_t = CMat::from_fn(n, n, |i, k| v[(k, order[i])].conj());
    Svd { u, values, v_t }
}

/// Stack the columns of a matrix into one vector.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}
