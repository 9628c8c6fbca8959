//! Small dense matrices for the control and observability code.
//!
//! Everything here is at most a handful of rows (6x6 state matrices, 2x6
//! gains), so the storage is a plain row-major `Vec` and the algorithms are
//! the textbook ones.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{DftcError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row slice has the wrong length");
        Matrix {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Largest elementwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::of(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * half
        })
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(DftcError::Shape(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .abs()
                        .partial_cmp(&a[(j, col)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            let p = a[(pivot, col)];
            if p == T::zero() || !p.is_finite() {
                return Err(DftcError::InvalidInput("singular matrix".into()));
            }
            a.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let inv_p = T::one() / p;
            for j in 0..n {
                a[(col, j)] *= inv_p;
                inv[(col, j)] *= inv_p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a[(i, col)];
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                    a[(i, j)] -= f * ac;
                    inv[(i, j)] -= f * ic;
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }

    /// Lower Cholesky factor `L` with `L L^T = self`. `None` when a pivot is
    /// not strictly positive.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.rows;
        if n != self.cols {
            return None;
        }
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    /// Eigenvalues as `(re, im)` pairs, via Hessenberg reduction and the
    /// shifted QR iteration.
    pub fn eigenvalues(&self) -> Result<Vec<(T, T)>> {
        if self.rows != self.cols {
            return Err(DftcError::Shape("eigenvalues of a non-square matrix".into()));
        }
        let mut h = self.clone();
        h.reduce_to_hessenberg();
        h.hessenberg_qr()
    }

    pub fn spectral_radius(&self) -> Result<T> {
        Ok(self
            .eigenvalues()?
            .into_iter()
            .fold(T::zero(), |m, (re, im)| m.max(re.hypot(im))))
    }

    // Gaussian elimination with pivoting to upper Hessenberg form.
    fn reduce_to_hessenberg(&mut self) {
        let n = self.rows;
        for m in 1..n.saturating_sub(1) {
            let mut x = T::zero();
            let mut i = m;
            for j in m..n {
                if self[(j, m - 1)].abs() > x.abs() {
                    x = self[(j, m - 1)];
                    i = j;
                }
            }
            if i != m {
                self.swap_rows(i, m);
                for r in 0..n {
                    self.data.swap(r * n + i, r * n + m);
                }
            }
            if x != T::zero() {
                for i in m + 1..n {
                    let mut y = self[(i, m - 1)];
                    if y != T::zero() {
                        y /= x;
                        self[(i, m - 1)] = y;
                        for j in m..n {
                            let v = self[(m, j)];
                            self[(i, j)] -= y * v;
                        }
                        for r in 0..n {
                            let v = self[(r, i)];
                            self[(r, m)] += y * v;
                        }
                    }
                }
            }
        }
        for i in 2..n {
            for j in 0..i - 1 {
                self[(i, j)] = T::zero();
            }
        }
    }

    // Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr).
    fn hessenberg_qr(mut self) -> Result<Vec<(T, T)>> {
        let n = self.rows;
        let a = &mut self;
        let mut wr = vec![T::zero(); n];
        let mut wi = vec![T::zero(); n];
        let mut anorm = T::zero();
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                anorm += a[(i, j)].abs();
            }
        }
        let eps = T::epsilon();
        let mut nn = n as isize - 1;
        let mut t = T::zero();
        let two = T::of(2.0);
        while nn >= 0 {
            let mut its = 0;
            loop {
                let mut l = nn;
                while l >= 1 {
                    let lu = l as usize;
                    let mut s = a[(lu - 1, lu - 1)].abs() + a[(lu, lu)].abs();
                    if s == T::zero() {
                        s = anorm;
                    }
                    if a[(lu, lu - 1)].abs() <= eps * s {
                        a[(lu, lu - 1)] = T::zero();
                        break;
                    }
                    l -= 1;
                }
                let nu = nn as usize;
                let x = a[(nu, nu)];
                if l == nn {
                    wr[nu] = x + t;
                    wi[nu] = T::zero();
                    nn -= 1;
                    break;
                }
                let y = a[(nu - 1, nu - 1)];
                let w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
                if l == nn - 1 {
                    let p = (y - x) / two;
                    let q = p * p + w;
                    let z = q.abs().sqrt();
                    let xs = x + t;
                    if q >= T::zero() {
                        let z = p + if p >= T::zero() { z } else { -z };
                        wr[nu - 1] = xs + z;
                        wr[nu] = if z != T::zero() { xs - w / z } else { xs + z };
                        wi[nu - 1] = T::zero();
                        wi[nu] = T::zero();
                    } else {
                        wr[nu - 1] = xs + p;
                        wr[nu] = xs + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                    break;
                }
                if its == 60 {
                    return Err(DftcError::NonConvergence {
                        iterations: its,
                        residual: f64::NAN,
                    });
                }
                let (mut x, mut y, mut w) = (x, y, w);
                if its == 10 || its == 20 {
                    // exceptional shift
                    t += x;
                    for i in 0..=nu {
                        a[(i, i)] -= x;
                    }
                    let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                    x = T::of(0.75) * s;
                    y = x;
                    w = T::of(-0.4375) * s * s;
                }
                its += 1;
                let lu = l as usize;
                let mut m = nu - 2;
                let (mut p, mut q, mut r);
                loop {
                    let z = a[(m, m)];
                    let rr = x - z;
                    let ss = y - z;
                    p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                    q = a[(m + 1, m + 1)] - z - rr - ss;
                    r = a[(m + 2, m + 1)];
                    let s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == lu {
                        break;
                    }
                    let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                    let v = p.abs()
                        * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                    if u <= eps * v {
                        break;
                    }
                    m -= 1;
                }
                for i in m + 2..=nu {
                    a[(i, i - 2)] = T::zero();
                    if i != m + 2 {
                        a[(i, i - 3)] = T::zero();
                    }
                }
                let mut k = m;
                while k + 1 <= nu {
                    if k != m {
                        p = a[(k, k - 1)];
                        q = a[(k + 1, k - 1)];
                        r = T::zero();
                        if k + 1 != nu {
                            r = a[(k + 2, k - 1)];
                        }
                        x = p.abs() + q.abs() + r.abs();
                        if x != T::zero() {
                            p /= x;
                            q /= x;
                            r /= x;
                        }
                    }
                    let s = (p * p + q * q + r * r).sqrt();
                    let s = if p >= T::zero() { s } else { -s };
                    if s != T::zero() {
                        if k == m {
                            if l as usize != m {
                                a[(k, k - 1)] = -a[(k, k - 1)];
                            }
                        } else {
                            a[(k, k - 1)] = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        let z = r / s;
                        q /= p;
                        r /= p;
                        for j in k..=nu {
                            let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                            if k + 1 != nu {
                                pp += r * a[(k + 2, j)];
                                a[(k + 2, j)] -= pp * z;
                            }
                            a[(k + 1, j)] -= pp * y;
                            a[(k, j)] -= pp * x;
                        }
                        let mmin = if nu < k + 3 { nu } else { k + 3 };
                        for i in lu..=mmin {
                            let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                            if k + 1 != nu {
                                pp += z * a[(i, k + 2)];
                                a[(i, k + 2)] -= pp * r;
                            }
                            a[(i, k + 1)] -= pp * q;
                            a[(i, k)] -= pp;
                        }
                    }
                    k += 1;
                }
                if l >= nn - 1 {
                    continue;
                }
            }
        }
        Ok(wr.into_iter().zip(wi).collect())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;

    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;

    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}
