//! Dense symmetric positive-definite solves for the small systems that show up
//! in Gaussian-process regression and the linear value baseline.

use crate::error::{FpoError, Result};
use crate::scalar::Scalar;

/// Lower Cholesky factor of an `n × n` row-major matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `a` (row-major, only the lower triangle is read). Returns `None`
    /// if a pivot is not strictly positive.
    pub fn factor(a: &[T], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n×n");
        let mut lower = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                let (ri, rj) = (&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
                for k in 0..j {
                    sum = sum - ri[k] * rj[k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return None;
                    }
                    lower[i * n + i] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Some(Self { n, lower })
    }

    /// Factors `a + jitter·I`, starting with no jitter and then stepping the
    /// jitter through `first_jitter, 10·first_jitter, …` up to `max_jitter`.
    /// Returns the factor and the jitter that was needed.
    pub fn factor_with_jitter(
        a: &[T],
        n: usize,
        first_jitter: T,
        max_jitter: T,
    ) -> Result<(Self, T)> {
        if let Some(c) = Self::factor(a, n) {
            return Ok((c, T::zero()));
        }
        let mut jitter = first_jitter;
        let mut work = a.to_vec();
        while jitter <= max_jitter {
            for i in 0..n {
                work[i * n + i] = a[i * n + i] + jitter;
            }
            if let Some(c) = Self::factor(&work, n) {
                return Ok((c, jitter));
            }
            jitter = jitter * T::of(10.0);
        }
        Err(FpoError::NotPositiveDefinite {
            jitter: max_jitter.as_f64(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let mut s = y[i];
            for (k, l) in row.iter().enumerate() {
                s = s - *l * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - self.lower[k * n + i] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// Solves `A x = b` with `A = L Lᵀ`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A`.
    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .fold(T::zero(), |acc, v| acc + two * v)
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let chol = Cholesky::factor(&a, 3).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = chol.solve(&b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
        // det = 4(15-1) - 2(6-0.6) + 0.6(2-3) = 56 - 10.8 - 0.6
        assert!((chol.log_det() - 44.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_needs_jitter() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(Cholesky::factor(&a, 2).is_none());
        let (_, jitter) = Cholesky::factor_with_jitter(&a, 2, 1e-8, 1e-4).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-4);
    }

    #[test]
    fn indefinite_matrix_fails_after_max_jitter() {
        let a = [1.0, 0.0, 0.0, -1.0];
        let err = Cholesky::factor_with_jitter(&a, 2, 1e-8, 1e-4).unwrap_err();
        assert!(matches!(err, FpoError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn works_in_single_precision() {
        let a = [2.0f32, 0.5, 0.5, 1.0];
        let x = Cholesky::factor(&a, 2).unwrap().solve(&[1.0, 1.0]);
        assert!((2.0 * x[0] + 0.5 * x[1] - 1.0).abs() < 1e-6);
    }
}
