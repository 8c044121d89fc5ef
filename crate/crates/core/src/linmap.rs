//! Complex-to-real mappings that let real-valued crossbars carry complex
//! baseband math, plus the small dense linear algebra the rest of the crate
//! needs.
//!
//! A complex `K x L` matrix `A` maps to the `2K x 2L` block matrix
//! `[[Re A, -Im A], [Im A, Re A]]` and a complex vector `x` maps to the stacked
//! vector `[Re x; Im x]`. The map is a ring homomorphism, so products,
//! adjoints and inverses carry over: `R(A) T(x) = T(A x)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Element type of a [`Matrix`]: `f64` or [`C64`].
pub trait Scalar:
    Copy
    + PartialEq
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + std::ops::Div<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn from_f64(v: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn from_f64(v: f64) -> Self {
        C64::new(v, 0.0)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type ComplexMatrix = Matrix<C64>;
pub type RealMatrix = Matrix<f64>;

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim("Matrix::add", self.rows * self.cols, other.rows * other.cols));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-T::one()))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("Matrix::matmul", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::dim("Matrix::matvec", self.cols, x.len()));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// Largest entry-wise difference, relative to the largest operand magnitude.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let scale = self.max_abs().max(other.max_abs()).max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).modulus())
            .fold(0.0, f64::max)
            / scale
    }

    /// Solves `self * X = B` by LU factorization with partial pivoting.
    pub fn solve_matrix(&self, b: &Self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::dim("Matrix::solve (square)", self.rows, self.cols));
        }
        if b.rows != self.rows {
            return Err(Error::dim("Matrix::solve (rhs)", self.rows, b.rows));
        }
        let n = self.rows;
        let m = b.cols;
        let mut a = self.data.clone();
        let mut x = b.data.clone();
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::Singular("zero matrix".into()));
        }
        let tiny = scale * f64::EPSILON * n as f64;
        for col in 0..n {
            let (piv, piv_mag) = (col..n)
                .map(|r| (r, a[r * n + col].modulus()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_mag <= tiny {
                return Err(Error::Singular(format!("pivot {col} vanishes ({piv_mag:e})")));
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                for c in 0..m {
                    x.swap(col * m + c, piv * m + c);
                }
            }
            let p = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                if f == T::zero() {
                    continue;
                }
                for c in col..n {
                    let v = a[col * n + c];
                    a[r * n + c] = a[r * n + c] - f * v;
                }
                for c in 0..m {
                    let v = x[col * m + c];
                    x[r * m + c] = x[r * m + c] - f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[col * n + col];
            for c in 0..m {
                let mut acc = x[col * m + c];
                for k in col + 1..n {
                    acc = acc - a[col * n + k] * x[k * m + c];
                }
                x[col * m + c] = acc / p;
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: x,
        })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let rhs = Self::from_vec(b.len(), 1, b.to_vec())?;
        Ok(self.solve_matrix(&rhs)?.data)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve_matrix(&Self::identity(self.rows))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// `[[Re A, -Im A], [Im A, Re A]]`.
pub fn real_map_matrix(a: &ComplexMatrix) -> RealMatrix {
    let (k, l) = (a.rows(), a.cols());
    RealMatrix::from_fn(2 * k, 2 * l, |r, c| {
        let z = a[(r % k, c % l)];
        match (r < k, c < l) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `[Re x; Im x]`.
pub fn real_map_vector(x: &[C64]) -> Vec<f64> {
    x.iter().map(|z| z.re).chain(x.iter().map(|z| z.im)).collect()
}

/// Inverse of [`real_map_vector`].
pub fn unmap_vector(r: &[f64]) -> Result<Vec<C64>> {
    if !r.len().is_multiple_of(2) {
        return Err(Error::dim("unmap_vector (even length)", r.len() + 1, r.len()));
    }
    let k = r.len() / 2;
    Ok((0..k).map(|i| C64::new(r[i], r[k + i])).collect())
}

/// Recovers `A` from a block matrix produced by [`real_map_matrix`], reading
/// the left block column.
pub fn unmap_matrix(r: &RealMatrix) -> Result<ComplexMatrix> {
    if !r.rows().is_multiple_of(2) || !r.cols().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "block matrix must have even dimensions, got {}x{}",
            r.rows(),
            r.cols()
        )));
    }
    let (k, l) = (r.rows() / 2, r.cols() / 2);
    Ok(ComplexMatrix::from_fn(k, l, |i, j| C64::new(r[(i, j)], r[(k + i, j)])))
}

/// Largest element-wise difference between two vectors relative to the
/// largest operand magnitude.
pub fn rel_diff_vec<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.modulus())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).modulus())
        .fold(0.0, f64::max)
        / scale
}
