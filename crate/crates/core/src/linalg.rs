//! Dense complex linear algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn basis(dim: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    v[k] = ONE;
    v
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let sv = m.clone().singular_values();
    sv.iter().cloned().fold(0.0, f64::max)
}

pub fn unitarity_defect(m: &CMat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    op_norm(&(m.adjoint() * m - identity(n)))
}

pub fn is_unitary(m: &CMat, tol: f64) -> bool {
    unitarity_defect(m) <= tol
}

/// Thin SVD pieces: (U_r, sigma_r, V_r) keeping singular values above `rel * sigma_max`.
pub fn ranked_svd(a: &CMat, rel: f64) -> (CMat, Vec<f64>, CMat) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (CMat::zeros(m, 0), vec![], CMat::zeros(n, 0));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > rel * smax)
        .collect();
    let mut ur = CMat::zeros(m, keep.len());
    let mut vr = CMat::zeros(n, keep.len());
    let mut s = Vec::with_capacity(keep.len());
    for (c_, &k) in keep.iter().enumerate() {
        ur.set_column(c_, &u.column(k));
        vr.set_column(c_, &vt.row(k).adjoint());
        s.push(svd.singular_values[k]);
    }
    (ur, s, vr)
}

/// Moore-Penrose inverse with relative singular value cutoff.
pub fn pinv(a: &CMat, rel: f64) -> CMat {
    let (u, s, v) = ranked_svd(a, rel);
    let mut vs = v.clone();
    for (k, sk) in s.iter().enumerate() {
        let inv = 1.0 / sk;
        for row in 0..vs.nrows() {
            vs[(row, k)] *= inv;
        }
    }
    vs * u.adjoint()
}

pub fn rank(a: &CMat, rel: f64) -> usize {
    ranked_svd(a, rel).1.len()
}

/// Orthonormal basis of the column span.
pub fn orth(cols: &CMat, rel: f64) -> CMat {
    ranked_svd(cols, rel).0
}

pub fn projector_onto(cols: &CMat, rel: f64) -> CMat {
    let q = orth(cols, rel);
    &q * q.adjoint()
}

/// Orthonormal basis of the null space of `a`, as columns.
pub fn null_space(a: &CMat, rel: f64) -> CMat {
    let n = a.ncols();
    let (_, _, v) = ranked_svd(a, rel);
    let comp = identity(n) - &v * v.adjoint();
    let eig = comp.symmetric_eigen();
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    let mut out = CMat::zeros(n, keep.len());
    for (c_, &k) in keep.iter().enumerate() {
        out.set_column(c_, &eig.eigenvectors.column(k));
    }
    out
}

pub fn nullity(a: &CMat, rel: f64) -> usize {
    a.ncols() - rank(a, rel)
}

pub fn norm(v: &CVec) -> f64 {
    v.norm()
}

pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

/// 2P - I for a projector P.
pub fn reflection(p: &CMat) -> CMat {
    p * r(2.0) - identity(p.nrows())
}

pub fn diag_projector(mask: &[bool]) -> CMat {
    let n = mask.len();
    let mut m = CMat::zeros(n, n);
    for (k, &b) in mask.iter().enumerate() {
        if b {
            m[(k, k)] = ONE;
        }
    }
    m
}

/// Operator norm of `m` restricted to the span of the orthonormal columns `q`.
pub fn restricted_norm(m: &CMat, q: &CMat) -> f64 {
    op_norm(&(m * q))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unitary on C^d whose first row is the normalized conjugate of `v`, so that it maps v/|v| to e_0.
pub fn rotation_to_e0(v: &CVec) -> CMat {
    let d = v.len();
    let nv = v.norm();
    let mut cols: Vec<CVec> = vec![v / r(nv)];
    for k in 0..d {
        if cols.len() == d {
            break;
        }
        let mut w = basis(d, k);
        for q in &cols {
            let p = q.dotc(&w);
            w -= q * p;
        }
        let nw = w.norm();
        if nw > 1e-8 {
            cols.push(w / r(nw));
        }
    }
    let mut q = CMat::zeros(d, d);
    for (k, col) in cols.iter().enumerate() {
        q.set_column(k, col);
    }
    q.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_row_vector() {
        let a = CMat::from_row_slice(1, 2, &[ONE, ONE]);
        let p = pinv(&a, 1e-10);
        assert!((p[(0, 0)] - r(0.5)).norm() < 1e-12);
        assert!((p[(1, 0)] - r(0.5)).norm() < 1e-12);
    }

    #[test]
    fn null_space_of_row_vector() {
        let a = CMat::from_row_slice(1, 3, &[ONE, ONE, ZERO]);
        let ns = null_space(&a, 1e-10);
        assert_eq!(ns.ncols(), 2);
        assert!(op_norm(&(&a * &ns)) < 1e-12);
    }

    #[test]
    fn rotation_maps_vector_to_e0() {
        let v = CVec::from_vec(vec![c(1.0, 1.0), r(0.0), r(-2.0)]);
        let q = rotation_to_e0(&v);
        assert!(is_unitary(&q, 1e-12));
        let img = &q * &v;
        assert!((img[0] - r(v.norm())).norm() < 1e-12);
        assert!(img[1].norm() < 1e-12 && img[2].norm() < 1e-12);
    }
}
