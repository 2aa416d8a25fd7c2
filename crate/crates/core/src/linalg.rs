//! Small dense linear algebra on `nalgebra` dynamic matrices.
//!
//! Everything here targets matrices of dimension ten or less: gains, Lyapunov
//! solutions, and the delayed error-system blocks. Symmetric eigenvalues come
//! from cyclic Jacobi rotations; the Lyapunov equation is solved through its
//! Kronecker (vectorized) form.

use nalgebra::{DMatrix, DVector, Schur};
use thiserror::Error;

/// Dense square matrix. Dimension checks happen at each operation boundary.
pub type SquareMatrix = DMatrix<f64>;
/// Dense column vector.
pub type ColumnVector = DVector<f64>;

/// Relative tolerance under which a matrix counts as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// 1-norm condition number above which inversion is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("unstable A: Lyapunov equation requires a Hurwitz matrix")]
    UnstableA,
    #[error("singular linear system")]
    Singular,
    #[error("matrix is ill-conditioned (cond1 ~ {cond:e})")]
    IllConditioned { cond: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest absolute entry of `M - Mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Returns `(M + Mᵀ)/2` after verifying that `M` is symmetric within
/// [`SYMMETRY_TOL`] relative to its largest entry.
pub fn symmetrized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    check_finite(m)?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * max_abs(m) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let a = symmetrized(m)?;
    let mut eig = jacobi_eigenvalues(a);
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

// Cyclic Jacobi sweeps until the off-diagonal mass is negligible against the
// diagonal. Input must already be exactly symmetric.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off == 0.0 || off <= f64::EPSILON * f64::EPSILON * diag * 1e-4 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_symmetric(m: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?[0])
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig_symmetric(m: &DMatrix<f64>) -> Result<f64> {
    Ok(*symmetric_eigenvalues(m)?.last().expect("nonempty"))
}

/// Induced 2-norm (largest singular value). Accepts rectangular input.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let gram = (&gram + gram.transpose()) * 0.5;
    let top = jacobi_eigenvalues(gram).into_iter().fold(0.0_f64, f64::max);
    top.max(0.0).sqrt()
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a nonsingular, reasonably conditioned matrix.
pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    check_finite(m)?;
    let inv = m.clone().lu().try_inverse().ok_or(LinalgError::Singular)?;
    if !inv.iter().all(|x| x.is_finite()) {
        return Err(LinalgError::Singular);
    }
    let cond = norm1(m) * norm1(&inv);
    if !(cond <= MAX_CONDITION) {
        return Err(LinalgError::IllConditioned { cond });
    }
    Ok(inv)
}

/// Solves `M x = b` by LU with partial pivoting.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = check_square(m)?;
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let x = m.clone().lu().solve(b).ok_or(LinalgError::Singular)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(LinalgError::Singular)
    }
}

/// True iff every eigenvalue of `A` has strictly negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() || a.is_empty() || !a.iter().all(|x| x.is_finite()) {
        return false;
    }
    // repeated eigenvalues can stall deflation at machine precision
    for eps in [f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = Schur::try_new(a.clone(), eps, 10_000) {
            return schur.complex_eigenvalues().iter().all(|z| z.re < 0.0);
        }
    }
    false
}

/// Solves `AᵀP + PA = -Q` for symmetric `P`.
///
/// The equation is vectorized as `(I⊗Aᵀ + Aᵀ⊗I) vec(P) = -vec(Q)` and solved
/// densely, followed by one step of iterative refinement.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(a)?;
    let nq = check_square(q)?;
    if nq != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: nq,
        });
    }
    check_finite(a)?;
    let q = symmetrized(q)?;
    if !is_hurwitz(a) {
        return Err(LinalgError::UnstableA);
    }

    let dim = n * n;
    let mut kron = DMatrix::<f64>::zeros(dim, dim);
    // Row (i, j) of the vectorized equation, column index = i + j*n.
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                kron[(row, k + j * n)] += a[(k, i)];
                kron[(row, i + k * n)] += a[(k, j)];
            }
        }
    }
    let rhs = DVector::from_iterator(dim, q.iter().map(|x| -x));
    let lu = kron.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(LinalgError::Singular)?;
    let resid = &rhs - &kron * &x;
    if let Some(dx) = lu.solve(&resid) {
        x += dx;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::Singular);
    }
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Max-entry residual of `AᵀP + PA + Q`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    max_abs(&(a.transpose() * p + p * a + q))
}

/// Largest absolute entry.
pub fn max_entry(m: &DMatrix<f64>) -> f64 {
    max_abs(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let p = solve_lyapunov(&dmatrix![-1.0], &dmatrix![2.0]).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-14);

        let a = -DMatrix::<f64>::identity(2, 2);
        let q = DMatrix::<f64>::identity(2, 2) * 2.0;
        let p = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_companion_hand_solution() {
        // Unknowns p11, p12, p22 of AᵀP + PA = -I with A = [[0,1],[-1,-1]]:
        //   -2 p12 = -1, p11 - p12 - p22 = 0, 2 p12 - 2 p22 = -1
        // gives p12 = 0.5, p22 = 1.0, p11 = 1.5.
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        let q = DMatrix::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p, dmatrix![1.5, 0.5; 0.5, 1.0], epsilon = 1e-13);
        assert!(lyapunov_residual(&a, &p, &q) <= 1e-10);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let err = solve_lyapunov(&a, &DMatrix::identity(2, 2)).unwrap_err();
        assert_eq!(err, LinalgError::UnstableA);
        assert!(err.to_string().contains("unstable A"));
    }

    #[test]
    fn min_eig_examples() {
        assert_relative_eq!(min_eig_symmetric(&DMatrix::identity(2, 2)).unwrap(), 1.0);
        assert_relative_eq!(
            min_eig_symmetric(&dmatrix![2.0, 0.0; 0.0, 5.0]).unwrap(),
            2.0
        );
        // λ² - 4λ + 3 = 0
        assert_relative_eq!(
            min_eig_symmetric(&dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn min_eig_rejects_asymmetric() {
        let err = min_eig_symmetric(&dmatrix![1.0, 2.0; 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, LinalgError::NotSymmetric { .. }));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)), 0.0);
        assert_relative_eq!(
            spectral_norm(&DMatrix::identity(3, 3)),
            1.0,
            epsilon = 1e-15
        );
        let e = dmatrix![4.2, 2.9; 2.9, 5.8];
        assert_relative_eq!(
            spectral_norm(&e),
            (10.0 + 36.2_f64.sqrt()) / 2.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn invert_examples() {
        assert_relative_eq!(
            invert(&DMatrix::identity(3, 3)).unwrap(),
            DMatrix::identity(3, 3)
        );
        assert_relative_eq!(
            invert(&dmatrix![2.0, 0.0; 0.0, 4.0]).unwrap(),
            dmatrix![0.5, 0.0; 0.0, 0.25]
        );
        assert_relative_eq!(
            invert(&dmatrix![1.5, 0.5; 0.5, 1.0]).unwrap(),
            dmatrix![0.8, -0.4; -0.4, 1.2],
            epsilon = 1e-14
        );
    }

    #[test]
    fn invert_rejects_singular() {
        assert!(invert(&dmatrix![1.0, 2.0; 2.0, 4.0]).is_err());
        let nearly = dmatrix![1.0, 1.0; 1.0, 1.0 + 1e-15];
        assert!(invert(&nearly).is_err());
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&-DMatrix::<f64>::identity(3, 3)));
        assert!(!is_hurwitz(&dmatrix![0.0, 1.0; 0.0, 0.0]));
        assert!(is_hurwitz(&dmatrix![0.0, 1.0; -1.0, -1.0]));
        assert!(!is_hurwitz(&dmatrix![0.0, 1.0; -1.0, 0.0]));
    }

    #[test]
    fn hurwitz_with_repeated_eigenvalues() {
        let (k1, k2, n) = (3.873130720609977, 3.9422318523162736, 4);
        let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
            a[(n + i, i)] = -k1;
            a[(n + i, n + i)] = -k2;
        }
        assert!(is_hurwitz(&a));
        a[(n, 0)] = k1;
        assert!(!is_hurwitz(&a));
    }
}
