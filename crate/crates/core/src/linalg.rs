//! Small dense symmetric-positive-definite helpers. Dimensions here are the
//! toy task's (single digits), so plain loops are plenty.

use crate::error::{Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Lower-triangular Cholesky factor of a row-major `d x d` SPD matrix.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    if a.len() != d * d {
        return Err(Error::Validation(String::from("matrix size mismatch")));
    }
    let mut l = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Numerical(String::from(
                        "matrix is not positive definite",
                    )));
                }
                l[i * d + j] = libm::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0f64; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    y
}

/// Solves `L^T x = y`.
pub fn solve_upper_t(l: &[f64], d: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0f64; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    x
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn chol_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let y = solve_lower(l, d, b);
    solve_upper_t(l, d, &y)
}

/// `ln det A` from the Cholesky factor.
pub fn chol_logdet(l: &[f64], d: usize) -> f64 {
    (0..d).map(|i| 2.0 * libm::log(l[i * d + i])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_known_2x2() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        assert!((l[0] - 2.0).abs() < 1e-12);
        assert!((l[2] - 1.0).abs() < 1e-12);
        assert!((l[3] - libm::sqrt(2.0)).abs() < 1e-12);
        assert!((chol_logdet(&l, 2) - libm::log(8.0)).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_err());
    }

    #[test]
    fn solve_round_trip() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let x = chol_solve(&l, 2, &[6.0, 5.0]);
        // A x should equal b.
        let b0 = 4.0 * x[0] + 2.0 * x[1];
        let b1 = 2.0 * x[0] + 3.0 * x[1];
        assert!((b0 - 6.0).abs() < 1e-12 && (b1 - 5.0).abs() < 1e-12);
    }
}
