//! Dense matrices and the Hermitian eigensolver.
//!
//! The eigensolver reduces a Hermitian matrix to real symmetric tridiagonal
//! form with Householder reflectors (lower storage, unblocked), then runs the
//! implicit QL iteration with Wilkinson-style shifts. Eigenvectors, when
//! requested, are accumulated in the tridiagonal basis and transformed back.
//! Everything is sequential and deterministic for a fixed input.

use num_complex::Complex;

use crate::scalar::{Elem, Real};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("QL iteration did not converge for eigenvalue {index}")]
    NoConvergence { index: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Copy + num_traits::Zero> Mat<E> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![E::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<E>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self
    where
        E: num_traits::One,
    {
        Self::from_fn(n, n, |i, j| if i == j { E::one() } else { E::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[E] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [E] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[E] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<E> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn map<F: Copy + num_traits::Zero>(&self, f: impl Fn(E) -> F) -> Mat<F> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl<E> std::ops::Index<(usize, usize)> for Mat<E> {
    type Output = E;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &E {
        &self.data[i * self.cols + j]
    }
}

impl<E> std::ops::IndexMut<(usize, usize)> for Mat<E> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut E {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real, E: Elem<Real = T>> Mat<E> {
    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matvec(&self, x: &[E]) -> Vec<E> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).fold(E::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == E::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Largest deviation from Hermitian symmetry, `max |A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..=i.min(self.cols.saturating_sub(1)) {
                let d = (self[(i, j)] - self[(j, i)].conj()).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|x| x.abs_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|x| x.abs()).fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Adds `diag` to the main diagonal.
    pub fn add_diagonal(&mut self, diag: &[T]) {
        assert_eq!(diag.len(), self.rows.min(self.cols));
        for (i, &d) in diag.iter().enumerate() {
            self[(i, i)] += E::from_re(d);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map(|x| x.scale(s))
    }

    /// Block-diagonal direct sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (r, c) = (self.rows + other.rows, self.cols + other.cols);
        let mut out = Self::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out[(self.rows + i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// `V diag(w) V^H` for a matrix `V` whose columns are the vectors.
    pub fn from_spectral(vectors: &Self, weights: &[T]) -> Self {
        assert_eq!(vectors.cols, weights.len());
        let n = vectors.rows;
        let active: Vec<usize> =
            (0..weights.len()).filter(|&k| weights[k] != T::zero()).collect();
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            let vi = vectors.row(i);
            for j in 0..=i {
                let vj = vectors.row(j);
                let mut acc = E::zero();
                for &k in &active {
                    acc += (vi[k] * vj[k].conj()).scale(weights[k]);
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
            out[(i, i)] = E::from_re(out[(i, i)].re());
        }
        out
    }
}

impl<T: Real> Mat<T> {
    pub fn to_complex(&self) -> Mat<Complex<T>> {
        self.map(|x| Complex::new(x, T::zero()))
    }
}

impl<T: Real> Mat<Complex<T>> {
    /// Returns the real part if every imaginary part is exactly zero.
    pub fn try_real(&self) -> Option<Mat<T>> {
        if self.data.iter().all(|z| z.im == T::zero()) {
            Some(self.map(|z| z.re))
        } else {
            None
        }
    }
}

/// Inner product `<x, y> = sum conj(x_i) y_i`.
pub fn dot<T: Real, E: Elem<Real = T>>(x: &[E], y: &[E]) -> E {
    x.iter().zip(y).fold(E::zero(), |acc, (&a, &b)| acc + a.conj() * b)
}

pub fn norm<T: Real, E: Elem<Real = T>>(x: &[E]) -> T {
    x.iter().map(|v| v.abs_sqr()).sum::<T>().sqrt()
}

/// Eigenvalues (ascending) and optionally eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct Eigh<T, E> {
    pub values: Vec<T>,
    pub vectors: Option<Mat<E>>,
}

/// Full eigendecomposition of a Hermitian matrix. Only the lower triangle is read.
pub fn eigh<T: Real, E: Elem<Real = T>>(a: &Mat<E>, want_vectors: bool) -> Result<Eigh<T, E>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    let n = a.rows;
    if n == 0 {
        return Ok(Eigh { values: Vec::new(), vectors: want_vectors.then(|| Mat::zeros(0, 0)) });
    }
    let mut work = a.clone();
    let tri = tridiagonalize(&mut work);
    let mut d = tri.diag.clone();
    let mut e = tri.offdiag.clone();
    e.push(T::zero());

    // Rows of `zt` are eigenvectors of the tridiagonal matrix.
    let mut zt = want_vectors.then(|| Mat::<T>::identity(n));
    tql2(&mut d, &mut e, zt.as_mut())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();

    let vectors = zt.map(|zt| {
        let q = tri.accumulate_q(&work);
        let mut v = Mat::<E>::zeros(n, n);
        for r in 0..n {
            let qr = q.row(r);
            let vr = v.row_mut(r);
            for (col, &src) in order.iter().enumerate() {
                let z = zt.row(src);
                let mut acc = E::zero();
                for (&qv, &zv) in qr.iter().zip(z) {
                    acc += qv.scale(zv);
                }
                vr[col] = acc;
            }
        }
        v
    });
    Ok(Eigh { values, vectors })
}

struct Tridiagonal<T, E> {
    diag: Vec<T>,
    offdiag: Vec<T>,
    taus: Vec<E>,
}

/// Householder reduction in place. On return the strict lower part of column
/// `k` below the subdiagonal holds the tail of reflector `k` (leading 1 implicit).
fn tridiagonalize<T: Real, E: Elem<Real = T>>(a: &mut Mat<E>) -> Tridiagonal<T, E> {
    let n = a.rows;
    let mut diag = vec![T::zero(); n];
    let mut offdiag = vec![T::zero(); n.saturating_sub(1)];
    let mut taus = vec![E::zero(); n.saturating_sub(1)];
    let mut v = vec![E::zero(); n];
    let mut x = vec![E::zero(); n];

    for k in 0..n.saturating_sub(1) {
        diag[k] = a[(k, k)].re();
        let alpha = a[(k + 1, k)];
        let mut xnorm2 = T::zero();
        for i in k + 2..n {
            xnorm2 += a[(i, k)].abs_sqr();
        }
        if xnorm2 == T::zero() && alpha.im() == T::zero() {
            taus[k] = E::zero();
            offdiag[k] = alpha.re();
            continue;
        }
        let mut beta = (alpha.abs_sqr() + xnorm2).sqrt();
        if alpha.re() >= T::zero() {
            beta = -beta;
        }
        let beta_e = E::from_re(beta);
        let tau = (beta_e - alpha) / beta_e;
        let inv = E::one() / (alpha - beta_e);
        v[k + 1] = E::one();
        a[(k + 1, k)] = E::from_re(beta);
        for i in k + 2..n {
            let vi = a[(i, k)] * inv;
            a[(i, k)] = vi;
            v[i] = vi;
        }
        taus[k] = tau;
        offdiag[k] = beta;

        // x = tau * B v with B the trailing Hermitian block (lower storage).
        for xi in x[k + 1..n].iter_mut() {
            *xi = E::zero();
        }
        for i in k + 1..n {
            let row = &a.data[i * n..i * n + i];
            let vi = v[i];
            let mut acc = E::zero();
            for j in k + 1..i {
                let aij = row[j];
                acc += aij * v[j];
                x[j] += aij.conj() * vi;
            }
            acc += E::from_re(a.data[i * n + i].re()) * vi;
            x[i] += acc;
        }
        let mut xhv = E::zero();
        for i in k + 1..n {
            x[i] = tau * x[i];
            xhv += x[i].conj() * v[i];
        }
        let alpha2 = E::from_re(T::lit(-0.5)) * tau * xhv;
        for i in k + 1..n {
            x[i] += alpha2 * v[i];
        }
        // B -= v x^H + x v^H
        for i in k + 1..n {
            let (vi, xi) = (v[i], x[i]);
            let row = &mut a.data[i * n..i * n + i + 1];
            for j in k + 1..=i {
                row[j] -= vi * x[j].conj() + xi * v[j].conj();
            }
        }
    }
    if n > 0 {
        diag[n - 1] = a[(n - 1, n - 1)].re();
    }
    Tridiagonal { diag, offdiag, taus }
}

impl<T: Real, E: Elem<Real = T>> Tridiagonal<T, E> {
    /// Forms `Q = H_0 H_1 ... H_{n-2}` from the reflectors stored in `a`.
    fn accumulate_q(&self, a: &Mat<E>) -> Mat<E> {
        let n = a.rows;
        let mut q = Mat::<E>::identity(n);
        let mut v = vec![E::zero(); n];
        let mut w = vec![E::zero(); n];
        for k in (0..n.saturating_sub(1)).rev() {
            let tau = self.taus[k];
            if tau == E::zero() {
                continue;
            }
            v[k + 1] = E::one();
            for i in k + 2..n {
                v[i] = a[(i, k)];
            }
            // w = v^H Q[k+1.., k+1..]
            for wc in w[k + 1..n].iter_mut() {
                *wc = E::zero();
            }
            for r in k + 1..n {
                let vr = v[r].conj();
                let qr = &q.data[r * n..(r + 1) * n];
                for c in k + 1..n {
                    w[c] += vr * qr[c];
                }
            }
            for r in k + 1..n {
                let f = tau * v[r];
                let qr = &mut q.data[r * n..(r + 1) * n];
                for c in k + 1..n {
                    qr[c] -= f * w[c];
                }
            }
        }
        q
    }
}

/// Implicit QL on a symmetric tridiagonal matrix (`d` diagonal, `e[i]` the
/// entry coupling `i` and `i+1`, `e[n-1] = 0`). If `zt` is given its rows are
/// rotated alongside, so identity input yields eigenvectors as rows.
fn tql2<T: Real>(d: &mut [T], e: &mut [T], mut zt: Option<&mut Mat<T>>) -> Result<(), LinalgError> {
    let n = d.len();
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    const MAX_SWEEPS: usize = 60;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS {
                    return Err(LinalgError::NoConvergence { index: l });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (e[l] + e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = zt.as_deref_mut() {
                        let cols = z.cols;
                        let (head, tail) = z.data.split_at_mut((i + 1) * cols);
                        let zi = &mut head[i * cols..];
                        let zi1 = &mut tail[..cols];
                        for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                            let hb = *b;
                            *b = s * *a + c * hb;
                            *a = c * *a - s * hb;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Orthonormalizes the columns of `a` with two passes of modified Gram-Schmidt.
/// Columns that collapse below `drop_tol` relative norm are discarded.
pub fn orthonormal_columns<T: Real, E: Elem<Real = T>>(a: &Mat<E>, drop_tol: T) -> Mat<E> {
    let n = a.rows;
    let mut basis: Vec<Vec<E>> = Vec::new();
    for j in 0..a.cols {
        let mut col = a.column(j);
        let original = norm(&col);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &col);
                for (x, &qv) in col.iter_mut().zip(q) {
                    *x -= c * qv;
                }
            }
        }
        let nrm = norm(&col);
        if original == T::zero() || nrm <= drop_tol * original {
            continue;
        }
        for x in col.iter_mut() {
            *x = x.scale(T::one() / nrm);
        }
        basis.push(col);
    }
    Mat::from_fn(n, basis.len(), |i, j| basis[j][i])
}
