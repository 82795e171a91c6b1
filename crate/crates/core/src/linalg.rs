//! Dense symmetric positive-definite helpers: Cholesky factorization and
//! explicit inversion of small row-major matrices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, row-major `n × n`.
pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    crate::error::check_dim(n * n, a.len(), "cholesky input")?;
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > T::zero()) || !sum.is_finite() {
                    return Err(Error::NumericalFailure(format!(
                        "matrix not positive definite (pivot {i} = {sum})"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of an SPD matrix from its Cholesky factor, symmetrized.
pub fn spd_inverse<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    let l = cholesky(a, n)?;
    // L⁻¹ by forward substitution, column by column.
    let mut linv = vec![T::zero(); n * n];
    for col in 0..n {
        linv[col * n + col] = T::one() / l[col * n + col];
        for i in col + 1..n {
            let mut sum = T::zero();
            for k in col..i {
                sum += l[i * n + k] * linv[k * n + col];
            }
            linv[i * n + col] = -sum / l[i * n + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = T::zero();
            for k in i..n {
                sum += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = sum;
            inv[j * n + i] = sum;
        }
    }
    Ok(inv)
}

/// `y = A x` for row-major `rows × cols`.
pub fn matvec<T: Scalar>(a: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), rows * cols);
    a.chunks_exact(cols)
        .map(|row| crate::scalar::dot(row, x))
        .collect()
}

/// `ΦᵀΦ` for a row-major `n × d` matrix.
pub fn gram<T: Scalar>(phi: &[T], n: usize, d: usize) -> Vec<T> {
    let mut g = vec![T::zero(); d * d];
    for row in phi.chunks_exact(d).take(n) {
        for i in 0..d {
            let ri = row[i];
            if ri == T::zero() {
                continue;
            }
            let gi = &mut g[i * d..i * d + i + 1];
            for (j, gij) in gi.iter_mut().enumerate() {
                *gij += ri * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            g[j * d + i] = g[i * d + j];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_known_factor() {
        let a: [f64; 9] = [4.0, 12.0, -16.0, 12.0, 37.0, -43.0, -16.0, -43.0, 98.0];
        let l = cholesky(&a, 3).unwrap();
        let expected = [2.0, 0.0, 0.0, 6.0, 1.0, 0.0, -8.0, 5.0, 3.0];
        for (x, e) in l.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(matches!(cholesky(&a, 2), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn inverse_residual() {
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i + j) as f64);
            }
            a[i * n + i] += 1.0;
        }
        let inv = spd_inverse(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| a[i * n + k] * inv[k * n + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_matches_naive() {
        let phi = [1.0, 2.0, 0.0, 3.0, -1.0, 4.0];
        let g = gram(&phi, 3, 2);
        assert_eq!(g, vec![2.0, -2.0, -2.0, 29.0]);
    }
}
