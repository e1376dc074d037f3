//! Thin layer over `faer` for the dense real-symmetric problems used here.

use faer::{Mat, Side};

use crate::error::{FluxError, Result};

/// Eigen-decomposition with eigenvalues in ascending order and eigenvectors
/// stored column-wise.
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn symmetric_eigen(matrix: &Mat<f64>) -> Result<SymmetricEigen> {
    let dim = matrix.nrows();
    if matrix.ncols() != dim {
        return Err(FluxError::Numerical {
            dim,
            reason: format!("matrix is {}x{}, not square", dim, matrix.ncols()),
        });
    }
    for j in 0..dim {
        for i in 0..dim {
            if !matrix[(i, j)].is_finite() {
                return Err(FluxError::Numerical {
                    dim,
                    reason: format!("non-finite entry at ({i}, {j})"),
                });
            }
        }
    }
    let evd = matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FluxError::Numerical {
            dim,
            reason: format!("{e:?}"),
        })?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..dim).map(|i| s[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FluxError::Numerical {
            dim,
            reason: "non-finite eigenvalue".into(),
        });
    }
    Ok(SymmetricEigen {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// Largest absolute entry of `m - m^T`.
pub fn hermiticity_residual(m: &Mat<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Flip each eigenvector so that its largest-magnitude component is positive.
pub fn fix_column_signs(vectors: &mut Mat<f64>) {
    for j in 0..vectors.ncols() {
        let mut pivot = 0.0_f64;
        for i in 0..vectors.nrows() {
            let v = vectors[(i, j)];
            if v.abs() > pivot.abs() + 1e-14 {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            for i in 0..vectors.nrows() {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
}

/// `a^T * b`.
pub fn transpose_mul(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    a.as_ref().transpose() * b.as_ref()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let mut m = Mat::<f64>::zeros(3, 3);
        m[(0, 0)] = 3.0;
        m[(1, 1)] = -1.0;
        m[(2, 2)] = 2.0;
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn nan_entry_is_rejected() {
        let mut m = Mat::<f64>::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            symmetric_eigen(&m),
            Err(FluxError::Numerical { dim: 2, .. })
        ));
    }

    #[test]
    fn symmetrize_zeroes_residual() {
        let mut m = Mat::<f64>::from_fn(4, 4, |i, j| (i * 3 + j) as f64);
        assert!(hermiticity_residual(&m) > 0.0);
        symmetrize(&mut m);
        assert_eq!(hermiticity_residual(&m), 0.0);
    }
}
