//! Small dense linear algebra: row-major matrices, LU with full pivoting and
//! a semi-definite Cholesky factorization.
//!
//! Everything here is sized for the kernels this crate builds (a few hundred
//! rows at most), so the cubic algorithms are used as-is.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
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

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.iter().flatten().copied().collect() }
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] = out.data[i * other.cols + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in matvec");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ M w`
    pub fn bilinear(&self, v: &[T], w: &[T]) -> T {
        dot(v, &self.matvec(w))
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(T::min_positive_value());
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Principal sub-block `[start, end) x [start, end)`.
    pub fn block(&self, start: usize, end: usize) -> Self {
        Self::from_fn(end - start, end - start, |i, j| self[(start + i, start + j)])
    }

    pub fn norm1(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{:.6e}", x)).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// LU factorization with full (row and column) pivoting: `P A Q = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T: Scalar> {
    lu: Matrix<T>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    sign: T,
    singular: bool,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid(format!("LU of non-square {}x{} matrix", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut row_perm: Vec<usize> = (0..n).collect();
        let mut col_perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let mut singular = false;
        let scale = a.max_abs();
        for k in 0..n {
            let (mut pi, mut pj, mut best) = (k, k, T::zero());
            for i in k..n {
                for j in k..n {
                    let v = lu[(i, j)].abs();
                    if v > best {
                        best = v;
                        pi = i;
                        pj = j;
                    }
                }
            }
            if best <= scale * T::epsilon() * T::epsilon() || best == T::zero() {
                singular = true;
                break;
            }
            if pi != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pi, j)];
                    lu[(pi, j)] = tmp;
                }
                row_perm.swap(k, pi);
                sign = -sign;
            }
            if pj != k {
                for i in 0..n {
                    let tmp = lu[(i, k)];
                    lu[(i, k)] = lu[(i, pj)];
                    lu[(i, pj)] = tmp;
                }
                col_perm.swap(k, pj);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != T::zero() {
                    for j in (k + 1)..n {
                        lu[(i, j)] = lu[(i, j)] - factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, row_perm, col_perm, sign, singular })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn det(&self) -> T {
        if self.singular {
            return T::zero();
        }
        let n = self.lu.rows();
        (0..n).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    /// Natural log of |det|; avoids overflow for the larger Gram matrices.
    pub fn log_abs_det(&self) -> T {
        if self.singular {
            return T::neg_infinity();
        }
        (0..self.lu.rows()).map(|i| self.lu[(i, i)].abs().ln()).sum()
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if self.singular {
            return Err(Error::Singular("solve with singular LU factor".into()));
        }
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.row_perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu[(i, j)] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s = s - self.lu[(i, j)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        let mut x = vec![T::zero(); n];
        for (k, &c) in self.col_perm.iter().enumerate() {
            x[c] = y[k];
        }
        Ok(x)
    }

    /// Solve followed by `steps` rounds of residual refinement against `a`.
    pub fn solve_refined(&self, a: &Matrix<T>, b: &[T], steps: usize) -> Result<Vec<T>> {
        let mut x = self.solve(b)?;
        for _ in 0..steps {
            let ax = a.matvec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &axi)| bi - axi).collect();
            let dx = self.solve(&r)?;
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi = *xi + d;
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix<T>> {
        let n = self.lu.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Inverse together with the 1-norm condition number estimate `‖A‖₁‖A⁻¹‖₁`.
pub fn inverse_with_condition<T: Scalar>(a: &Matrix<T>) -> Result<(Matrix<T>, T)> {
    let lu = Lu::new(a)?;
    if lu.is_singular() {
        return Err(Error::Singular(format!("{}x{} matrix is numerically singular", a.rows(), a.cols())));
    }
    let inv = lu.inverse()?;
    let cond = a.norm1() * inv.norm1();
    Ok((inv, cond))
}

/// Largest condition number accepted before a matrix is treated as singular.
pub fn max_condition<T: Scalar>() -> T {
    lit::<T>(0.01) / T::epsilon()
}

/// Lower-triangular factor `L` with `L Lᵀ = A` for a symmetric positive
/// semi-definite `A`.
///
/// Pivots that round to zero (or slightly below) are treated as exact zeros
/// of a semi-definite matrix; a pivot below `-1e-10 · trace(A)`, or a zero
/// pivot with a non-vanishing column, is reported as indefinite.
pub fn cholesky_psd<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::invalid("Cholesky of non-square matrix"));
    }
    if !a.is_symmetric(lit(1e-12)) {
        return Err(Error::invalid("covariance is not symmetric"));
    }
    let n = a.rows();
    let trace = a.trace();
    let neg_tol = lit::<T>(1e-10) * trace.abs().max(T::min_positive_value());
    let zero_tol = lit::<T>(64.0) * T::epsilon();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if d < -neg_tol {
            return Err(Error::Indefinite(format!("pivot {} = {:e} below -1e-10·trace", j, d.to_f64().unwrap_or(0.0))));
        }
        if d <= zero_tol * a[(j, j)].abs() {
            // zero pivot: the rest of column j must vanish for a PSD matrix
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                if s * s > neg_tol * a[(i, i)].abs().max(T::min_positive_value()) {
                    return Err(Error::Indefinite(format!(
                        "zero pivot at {} with off-diagonal residual {:e}",
                        j,
                        s.to_f64().unwrap_or(0.0)
                    )));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_det_and_inverse() {
        let a = Matrix::from_rows(&[vec![4.0, 3.0, 0.0], vec![6.0, 3.0, 1.0], vec![0.0, 2.0, 5.0]]);
        let lu = Lu::new(&a).unwrap();
        // expansion along the first row: 4(15-2) - 3(30-0) = -38
        assert!((lu.det() - (-38.0f64)).abs() < 1e-12);
        let inv = lu.inverse().unwrap();
        let id = a.matmul(&inv);
        assert!(id.sub(&Matrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_flagged() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let lu = Lu::new(&a).unwrap();
        assert!(lu.is_singular());
        assert_eq!(lu.det(), 0.0);
        assert!(inverse_with_condition(&a).is_err());
    }

    #[test]
    fn cholesky_semidefinite_all_ones() {
        let a = Matrix::from_fn(3, 3, |_, _| 1.0);
        let l = cholesky_psd(&a).unwrap();
        let back = l.matmul(&l.transpose());
        assert!(back.sub(&a).max_abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(cholesky_psd(&a), Err(Error::Indefinite(_))));
    }

    #[test]
    fn refined_solve_matches() {
        let a = Matrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let b = vec![1.0, 0.0, -1.0, 2.0];
        let lu = Lu::new(&a).unwrap();
        let x = lu.solve_refined(&a, &b, 2).unwrap();
        let r: f64 = a.matvec(&x).iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        assert!(r < 1e-10);
    }

    #[test]
    fn works_in_f32() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let inv = Lu::new(&a).unwrap().inverse().unwrap();
        assert!(a.matmul(&inv).sub(&Matrix::identity(2)).max_abs() < 1e-6);
    }
}
