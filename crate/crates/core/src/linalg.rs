//! Small dense helpers: row-major matrices, LU with partial pivoting and
//! power iteration.

use crate::error::{Error, Result};
use crate::num::{from_usize, Real};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).fold(T::zero(), |s, (a, b)| s + *a * *b))
            .collect()
    }

    pub fn matvec_transposed(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (row, xi) in self.data.chunks(self.n).zip(x) {
            for (yj, a) in y.iter_mut().zip(row) {
                *yj = *yj + *a * *xi;
            }
        }
        y
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().fold(T::zero(), |s, a| s + *a * *a).sqrt()
    }
}

/// LU factorisation with partial pivoting, stored in place.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Dense<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(mut a: Dense<T>) -> Result<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for col in 0..n {
            let (piv, big) = (col..n).fold((col, T::zero()), |best, r| {
                let v = a.get(r, col).abs();
                if v > best.1 {
                    (r, v)
                } else {
                    best
                }
            });
            if !(big > scale * T::epsilon() * from_usize(n)) {
                return Err(Error::NearSingular(0.0));
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                }
                perm.swap(piv, col);
            }
            let d = a.get(col, col);
            for r in col + 1..n {
                let f = a.get(r, col) / d;
                if f == T::zero() {
                    continue;
                }
                a.set(r, col, f);
                for j in col + 1..n {
                    let v = a.get(r, j) - f * a.get(col, j);
                    a.set(r, j, v);
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }
}

/// Spectral radius estimate of `x ↦ op(x)` by power iteration on the
/// normal operator `opᵀ op` supplied as `normal`; returns the operator norm.
pub fn operator_norm<T: Real, F: Fn(&[T]) -> Vec<T>>(n: usize, normal: F, iters: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    let mut v: Vec<T> = (0..n).map(|i| T::one() + from_usize::<T>(i % 7) / from_usize::<T>(13)).collect();
    let mut lambda = T::zero();
    for _ in 0..iters {
        let norm = v.iter().fold(T::zero(), |s, a| s + *a * *a).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        v.iter_mut().for_each(|a| *a = *a / norm);
        let w = normal(&v);
        let next = v.iter().zip(&w).fold(T::zero(), |s, (a, b)| s + *a * *b);
        let done = (next - lambda).abs() <= next.abs() * T::epsilon().sqrt();
        lambda = next;
        v = w;
        if done {
            break;
        }
    }
    lambda.max(T::zero()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_pivoting_system() {
        let mut a = Dense::<f64>::zeros(3);
        a.data = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let x = [1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let sol = Lu::new(a).unwrap().solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_rejected() {
        let mut a = Dense::<f64>::zeros(2);
        a.data = vec![1.0, 2.0, 2.0, 4.0];
        assert!(Lu::new(a).is_err());
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let mut a = Dense::<f64>::zeros(4);
        for (i, v) in [1.0, -5.0, 2.0, 0.5].iter().enumerate() {
            a.set(i, i, *v);
        }
        let n = operator_norm(4, |x| a.matvec_transposed(&a.matvec(x)), 500);
        assert!((n - 5.0).abs() < 1e-6);
    }
}
