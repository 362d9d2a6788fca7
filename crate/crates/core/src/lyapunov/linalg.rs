//! Extreme eigenvalues of small symmetric matrices.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum LinalgError {
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("expected a square matrix with {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Eigenvalues of the row-major `d x d` symmetric matrix `a` by cyclic Jacobi
/// rotations, in increasing order.
pub fn symmetric_eigenvalues(a: &[f64], d: usize) -> Result<Vec<f64>, LinalgError> {
    if a.len() != d * d {
        return Err(LinalgError::Shape { expected: d * d, got: a.len() });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in i + 1..d {
            let gap = (a[i * d + j] - a[j * d + i]).abs();
            if gap > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(LinalgError::NotSymmetric { i, j, gap });
            }
        }
    }
    let mut m = a.to_vec();
    for i in 0..d {
        for j in i + 1..d {
            let avg = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = avg;
            m[j * d + i] = avg;
        }
    }
    for _sweep in 0..64 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i * d + j].powi(2)).sum();
        let diag: f64 = (0..d).map(|i| m[i * d + i].powi(2)).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * d + p], m[q * d + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (mkp, mkq) = (m[k * d + p], m[k * d + q]);
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[p * d + k], m[q * d + k]);
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| m[i * d + i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn lambda_extremes(a: &[f64], d: usize) -> Result<(f64, f64), LinalgError> {
    let e = symmetric_eigenvalues(a, d)?;
    Ok((e[0], e[d - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_spectra() {
        assert_eq!(lambda_extremes(&[1.0, 0.0, 0.0, 1.0], 2).unwrap(), (1.0, 1.0));
        let (lo, hi) = lambda_extremes(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
        // diag(|x|^(2p)) at |x| = 2, p = 1.
        assert_eq!(lambda_extremes(&[4.0, 0.0, 0.0, 4.0], 2).unwrap(), (4.0, 4.0));
    }

    #[test]
    fn three_by_three_with_known_eigenvalues() {
        // [[2, -1, 0], [-1, 2, -1], [0, -1, 2]] has eigenvalues 2 - sqrt 2, 2, 2 + sqrt 2.
        let a = [2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let e = symmetric_eigenvalues(&a, 3).unwrap();
        let s = 2f64.sqrt();
        for (got, want) in e.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((got - want).abs() < 1e-12 * 4.0, "{got} vs {want}");
        }
    }

    #[test]
    fn asymmetric_is_rejected() {
        assert!(matches!(lambda_extremes(&[1.0, 2.0, 0.0, 1.0], 2), Err(LinalgError::NotSymmetric { .. })));
    }
}
