//! Dense symmetric solves for the tiny fixed-effect systems (p ≤ 3).

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Cholesky factor of a symmetric positive-definite matrix stored row-major.
/// Returns `None` when a pivot is not strictly positive.
pub(crate) fn cholesky(a: &[f64], p: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), p * p);
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * p + i] = math::sqrt(sum);
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Some(l)
}

/// Solves `L L' x = b` given the Cholesky factor.
pub(crate) fn chol_solve(l: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            x[i] -= l[i * p + k] * x[k];
        }
        x[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            x[i] -= l[k * p + i] * x[k];
        }
        x[i] /= l[i * p + i];
    }
    x
}

/// `log det(A)` from the Cholesky factor of `A`.
pub(crate) fn chol_logdet(l: &[f64], p: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..p {
        acc += math::ln(l[i * p + i]);
    }
    2.0 * acc
}

/// Diagonal of `A⁻¹` from the Cholesky factor of `A`.
pub(crate) fn chol_inverse_diag(l: &[f64], p: usize) -> Vec<f64> {
    let mut diag = vec![0.0; p];
    let mut unit = vec![0.0; p];
    for j in 0..p {
        unit.iter_mut().for_each(|x| *x = 0.0);
        unit[j] = 1.0;
        let col = chol_solve(l, &unit, p);
        diag[j] = col[j];
    }
    diag
}
