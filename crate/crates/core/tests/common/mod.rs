#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use rram_baseband::linmap::{ComplexMatrix, RealMatrix, C64};

pub fn random_complex<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

pub fn random_vector<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect()
}

/// Complex product computed entry by entry.
pub fn naive_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn naive_matvec(a: &ComplexMatrix, x: &[C64]) -> Vec<C64> {
    (0..a.rows()).map(|i| (0..a.cols()).map(|k| a[(i, k)] * x[k]).sum()).collect()
}

pub fn conj_transpose(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)].conj())
}

/// Gauss-Jordan inverse with partial pivoting, complex arithmetic.
pub fn naive_inverse(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows();
    let mut m: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            let mut row: Vec<C64> = (0..n).map(|j| a[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].norm().total_cmp(&m[y][c].norm())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot) {
                    *v -= f * pv;
                }
            }
        }
    }
    ComplexMatrix::from_fn(n, n, |i, j| m[i][n + j])
}

/// Real Gauss-Jordan inverse.
pub fn naive_inverse_real(a: &RealMatrix) -> RealMatrix {
    let n = a.rows();
    let c = ComplexMatrix::from_fn(n, n, |i, j| C64::new(a[(i, j)], 0.0));
    naive_inverse(&c).map(|z| z.re)
}

pub fn real_matmul(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    RealMatrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn real_matvec(a: &RealMatrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| (0..a.cols()).map(|k| a[(i, k)] * x[k]).sum()).collect()
}

/// Max element difference relative to the largest operand magnitude.
pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn rel_c(a: &[C64], b: &[C64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.norm())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm())) / scale
}

pub fn stacked(x: &[C64]) -> Vec<f64> {
    x.iter().map(|z| z.re).chain(x.iter().map(|z| z.im)).collect()
}

/// Left-multiplies by `(A^H A + lambda I)^-1 A^H` in complex arithmetic.
pub fn regularized_ls(a: &ComplexMatrix, x: &[C64], lambda: f64) -> Vec<C64> {
    let ah = conj_transpose(a);
    let mut gram = naive_matmul(&ah, a);
    for i in 0..gram.rows() {
        gram[(i, i)] += lambda;
    }
    naive_matvec(&naive_inverse(&gram), &naive_matvec(&ah, x))
}

/// Same operator applied through the real block map.
pub fn regularized_ls_real(r: &RealMatrix, t: &[f64], lambda: f64) -> Vec<f64> {
    let rt = r.transpose();
    let mut gram = real_matmul(&rt, r);
    for i in 0..gram.rows() {
        gram[(i, i)] += lambda;
    }
    real_matvec(&naive_inverse_real(&gram), &real_matvec(&rt, t))
}
