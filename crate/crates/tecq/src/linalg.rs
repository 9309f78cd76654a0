//! Small dense complex linear algebra: just enough for channel covariance
//! work (Hermitian eigendecomposition, matrix square root, dominant
//! eigenvectors). Matrices are column-major.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

/// `a^H b` over equal-length slices.
pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sq(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Dense column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Single-column matrix wrapping a vector.
    pub fn from_col(v: &[C64]) -> Self {
        CMat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// Column-major construction from raw storage.
    pub fn from_data(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        CMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn col(&self, c: usize) -> &[C64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// Rows `r0..r1` as a new matrix (all columns).
    pub fn row_block(&self, r0: usize, r1: usize) -> CMat {
        CMat::from_fn(r1 - r0, self.cols, |r, c| self[(r0 + r, c)])
    }

    pub fn frobenius_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    pub fn scale(&self, s: f64) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.rows, "matrix dimension mismatch");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for c in 0..rhs.cols {
            for k in 0..self.cols {
                let x = rhs[(k, c)];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                let lhs_col = self.col(k);
                let out_col = out.col_mut(c);
                for r in 0..self.rows {
                    out_col[r] += lhs_col[r] * x;
                }
            }
        }
        out
    }

    /// `self^H * rhs` without forming the adjoint.
    pub fn adjoint_mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.rows, rhs.rows, "matrix dimension mismatch");
        CMat::from_fn(self.cols, rhs.cols, |r, c| vdot(self.col(r), rhs.col(c)))
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matrix dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for (k, &x) in v.iter().enumerate() {
            let col = self.col(k);
            for r in 0..self.rows {
                out[r] += col[r] * x;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from the adjoint, used by the Hermitian guards.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                d = d.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        d
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[c * self.rows + r]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[c * self.rows + r]
    }
}

/// In-place modified Gram-Schmidt. Columns that vanish (rank deficiency) are
/// replaced by the first canonical basis vector orthogonal to the ones kept,
/// so the result always has orthonormal columns.
pub fn orthonormalize(m: &mut CMat) {
    let rows = m.rows();
    for c in 0..m.cols() {
        for prev in 0..c {
            let proj = vdot(m.col(prev), m.col(c));
            let (head, tail) = m.data.split_at_mut(c * rows);
            let prev_col = &head[prev * rows..(prev + 1) * rows];
            let cur = &mut tail[..rows];
            for r in 0..rows {
                cur[r] -= proj * prev_col[r];
            }
        }
        let n = norm_sq(m.col(c)).sqrt();
        if n > 1e-12 {
            let inv = 1.0 / n;
            for x in m.col_mut(c) {
                *x *= inv;
            }
        } else {
            // Rank-deficient input: substitute a canonical vector and redo
            // the projections for this column.
            for e in 0..rows {
                let mut cand = vec![C64::new(0.0, 0.0); rows];
                cand[e] = C64::new(1.0, 0.0);
                for prev in 0..c {
                    let proj = vdot(m.col(prev), &cand);
                    for (x, p) in cand.iter_mut().zip(m.col(prev)) {
                        *x -= proj * p;
                    }
                }
                let cn = norm_sq(&cand).sqrt();
                if cn > 0.5 {
                    let inv = 1.0 / cn;
                    for (dst, x) in m.col_mut(c).iter_mut().zip(&cand) {
                        *dst = x * inv;
                    }
                    break;
                }
            }
        }
    }
}

/// Eigendecomposition of a Hermitian matrix by the cyclic complex Jacobi
/// method. Returns eigenvalues in nonincreasing order with matching
/// eigenvector columns.
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::invalid("hermitian_eigen: matrix must be square"));
    }
    let scale = a.data.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
    if a.hermitian_defect() > 1e-10 * scale {
        return Err(Error::invalid("hermitian_eigen: matrix is not Hermitian"));
    }

    let mut m = a.clone();
    let mut v = CMat::identity(n);
    let tol = 1e-14 * scale;
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g <= tol * 1e-2 {
                    continue;
                }
                // Phase that makes the off-diagonal entry real, then a real
                // Jacobi rotation that annihilates it.
                let phase = apq / g; // e^{jβ}
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns of the unitary rotation restricted to (p, q):
                //   [ c       s*phase ]
                //   [ -s*conj(phase)  c ]  applied as R^H M R.
                let r_pp = C64::new(c, 0.0);
                let r_pq = phase * s;
                let r_qp = -phase.conj() * s;
                let r_qq = C64::new(c, 0.0);
                // M <- R^H M R: update columns p and q, then rows p and q.
                for r in 0..n {
                    let mp = m[(r, p)];
                    let mq = m[(r, q)];
                    m[(r, p)] = mp * r_pp + mq * r_qp;
                    m[(r, q)] = mp * r_pq + mq * r_qq;
                }
                for cidx in 0..n {
                    let mp = m[(p, cidx)];
                    let mq = m[(q, cidx)];
                    m[(p, cidx)] = r_pp.conj() * mp + r_qp.conj() * mq;
                    m[(q, cidx)] = r_pq.conj() * mp + r_qq.conj() * mq;
                }
                // Clean the annihilated pair and enforce real diagonal.
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                for r in 0..n {
                    let vp = v[(r, p)];
                    let vq = v[(r, q)];
                    v[(r, p)] = vp * r_pp + vq * r_qp;
                    v[(r, q)] = vp * r_pq + vq * r_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.partial_cmp(&m[(i, i)].re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let vecs = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((vals, vecs))
}

/// Hermitian PSD square root `A^{1/2}` (eigenvalues clamped at zero).
pub fn hermitian_sqrt(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(a)?;
    let n = a.rows();
    let mut scaled = vecs.clone();
    for (c, &lam) in vals.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for x in scaled.col_mut(c) {
            *x *= s;
        }
    }
    // V sqrt(Λ) V^H
    let mut out = CMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += scaled[(r, k)] * vecs[(c, k)].conj();
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// First `k` dominant eigenvectors of a Hermitian PSD matrix by subspace
/// (block power) iteration with a deterministic identity-block start,
/// followed by a Rayleigh-Ritz rotation. Eigenvalues come back in
/// nonincreasing order. With degenerate leading eigenvalues the columns are
/// only guaranteed to span the leading invariant subspace.
pub fn dominant_eigenvectors(a: &CMat, k: usize) -> Result<(Vec<f64>, CMat)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::invalid("dominant_eigenvectors: matrix must be square"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid("dominant_eigenvectors: k out of range"));
    }
    let scale = a.data.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
    if a.hermitian_defect() > 1e-10 * scale {
        return Err(Error::invalid("dominant_eigenvectors: matrix is not Hermitian"));
    }

    let mut x = CMat::from_fn(n, k, |r, c| {
        if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    for _ in 0..20_000 {
        let mut y = a.mul(&x);
        orthonormalize(&mut y);
        // Subspace convergence: residual of Y against span(X).
        let xy = x.adjoint_mul(&y);
        let proj = x.mul(&xy);
        let mut defect: f64 = 0.0;
        for (yv, pv) in y.data().iter().zip(proj.data()) {
            defect += (yv - pv).norm_sqr();
        }
        x = y;
        if defect.sqrt() < 1e-10 {
            break;
        }
    }
    // Rayleigh-Ritz on the converged subspace.
    let small = x.adjoint_mul(&a.mul(&x));
    // Symmetrize away iteration round-off before the small eigensolve.
    let small = CMat::from_fn(k, k, |r, c| (small[(r, c)] + small[(c, r)].conj()) * 0.5);
    let (vals, w) = hermitian_eigen(&small)?;
    Ok((vals, x.mul(&w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;

    fn random_hermitian(n: usize, rng: &mut SimRng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| rng.complex_normal());
        let mut h = CMat::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                h[(r, c)] = (g[(r, c)] + g[(c, r)].conj()) * 0.5;
            }
        }
        h
    }

    #[test]
    fn jacobi_matches_nalgebra_on_random_hermitian() {
        let mut rng = SimRng::from_seed(42);
        for &n in &[2usize, 3, 8, 24] {
            let h = random_hermitian(n, &mut rng);
            let (vals, vecs) = hermitian_eigen(&h).unwrap();
            // Independent reference eigenvalues.
            let na = nalgebra::DMatrix::from_fn(n, n, |r, c| h[(r, c)]);
            let mut reference: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (a, b) in vals.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
            }
            // Residual and orthonormality.
            for c in 0..n {
                let av = h.mul_vec(vecs.col(c));
                let lv: Vec<C64> = vecs.col(c).iter().map(|x| x * vals[c]).collect();
                let res: f64 = av.iter().zip(&lv).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                assert!(res < 1e-8 * (1.0 + vals[0].abs()), "residual {res}");
            }
            let gram = vecs.adjoint_mul(&vecs);
            assert!(gram.max_abs_diff(&CMat::identity(n)) < 1e-10);
        }
    }

    #[test]
    fn hermitian_sqrt_squares_back() {
        let mut rng = SimRng::from_seed(3);
        let g = CMat::from_fn(6, 6, |_, _| rng.complex_normal());
        let psd = g.mul(&g.adjoint()); // PSD by construction
        let s = hermitian_sqrt(&psd).unwrap();
        let back = s.mul(&s);
        assert!(back.max_abs_diff(&psd) < 1e-8 * (1.0 + psd.frobenius_sq().sqrt()));
        assert!(s.hermitian_defect() < 1e-9);
    }

    #[test]
    fn dominant_eigenvectors_identity_matrix() {
        let (vals, vecs) = dominant_eigenvectors(&CMat::identity(5), 1).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((norm_sq(vecs.col(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_eigenvectors_diagonal_case() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 0)] = C64::new(4.0, 0.0);
        a[(1, 1)] = C64::new(1.0, 0.0);
        let (vals, vecs) = dominant_eigenvectors(&a, 1).unwrap();
        assert!((vals[0] - 4.0).abs() < 1e-10);
        assert!((vecs[(0, 0)].norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dominant_eigenvectors_recovers_constructed_subspace() {
        let mut rng = SimRng::from_seed(9);
        let n = 12;
        let mut q = CMat::from_fn(n, 2, |_, _| rng.complex_normal());
        orthonormalize(&mut q);
        // A = 5 q1 q1^H + 2 q2 q2^H
        let mut a = CMat::zeros(n, n);
        for (w, c) in [(5.0, 0), (2.0, 1)] {
            for r in 0..n {
                for s in 0..n {
                    a[(r, s)] += q[(r, c)] * q[(s, c)].conj() * w;
                }
            }
        }
        let a = CMat::from_fn(n, n, |r, c| (a[(r, c)] + a[(c, r)].conj()) * 0.5);
        let (vals, u) = dominant_eigenvectors(&a, 2).unwrap();
        assert!((vals[0] - 5.0).abs() < 1e-7 && (vals[1] - 2.0).abs() < 1e-7);
        // Principal angle between span(u) and span(q) should be ~0.
        let overlap = q.adjoint_mul(&u);
        let min_sv = {
            let g = overlap.adjoint_mul(&overlap);
            let (ev, _) = hermitian_eigen(&g).unwrap();
            ev[1].max(0.0).sqrt()
        };
        assert!((1.0 - min_sv).abs() < 1e-6, "subspace angle too large, cos = {min_sv}");
    }

    #[test]
    fn dominant_eigenvectors_rejects_non_hermitian() {
        let mut a = CMat::identity(3);
        a[(0, 1)] = C64::new(0.5, 0.1);
        assert!(dominant_eigenvectors(&a, 1).is_err());
    }

    #[test]
    fn orthonormalize_handles_rank_deficiency() {
        let mut m = CMat::zeros(4, 2);
        m[(0, 0)] = C64::new(2.0, 0.0);
        m[(0, 1)] = C64::new(1.0, 0.0); // parallel to column 0
        orthonormalize(&mut m);
        let gram = m.adjoint_mul(&m);
        assert!(gram.max_abs_diff(&CMat::identity(2)) < 1e-10);
    }
}
