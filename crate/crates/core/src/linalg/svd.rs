//! Singular values, numerical rank, minimum-norm least squares and the
//! Moore–Penrose pseudo-inverse, all driven by one rank-tolerance policy.

use faer::{Mat, MatRef};
use nalgebra::{DMatrix, DVector};

use super::matrix::MatrixReal;
use crate::error::{Error, Result};

/// Cut below which singular values count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTolerance {
    /// `σ_max · max(rows, cols) · ε`.
    #[default]
    Relative,
    /// Fixed absolute cut.
    Absolute(f64),
}

impl RankTolerance {
    pub fn threshold(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        match *self {
            RankTolerance::Relative => sigma_max * rows.max(cols) as f64 * f64::EPSILON,
            RankTolerance::Absolute(tol) => tol,
        }
    }
}

struct Decomposition {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::NoConvergence("SVD produced non-finite values".into()));
    }
    Ok(())
}

/// Thin SVD; singular values come out non-increasing.
fn decompose(m: &DMatrix<f64>) -> Result<Decomposition> {
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::NoConvergence(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i].max(0.0)).collect();
    check_sigma(&sigma)?;
    Ok(Decomposition {
        u: from_faer(svd.U()),
        sigma,
        v: from_faer(svd.V()),
    })
}

/// Left singular vectors completed to an orthonormal basis of `ℝ^rows`.
fn full_left(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = to_faer(m)
        .svd()
        .map_err(|e| Error::NoConvergence(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i].max(0.0)).collect();
    check_sigma(&sigma)?;
    Ok((from_faer(svd.U()), sigma))
}

fn cut_index(sigma: &[f64], tol: RankTolerance, rows: usize, cols: usize) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    let cut = tol.threshold(smax, rows, cols);
    sigma.iter().take_while(|&&s| s > cut).count()
}

/// Singular values in descending order; `min(rows, cols)` of them.
pub fn singular_values(m: &MatrixReal) -> Result<Vec<f64>> {
    let sv = to_faer(m.as_inner())
        .singular_values()
        .map_err(|e| Error::NoConvergence(format!("SVD failed: {e:?}")))?;
    let sigma: Vec<f64> = sv.into_iter().map(|s| s.max(0.0)).collect();
    check_sigma(&sigma)?;
    Ok(sigma)
}

/// Number of singular values strictly above the tolerance cut.
pub fn numerical_rank(m: &MatrixReal, tol: RankTolerance) -> Result<usize> {
    let sv = singular_values(m)?;
    Ok(cut_index(&sv, tol, m.rows(), m.cols()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    /// Minimum-norm minimiser of `‖Mx − r‖`.
    pub x: DVector<f64>,
    /// `‖Mx − r‖` recomputed from the returned `x`.
    pub residual: f64,
    /// Number of singular directions kept.
    pub rank: usize,
}

/// Minimum-norm least-squares solution via the truncated SVD.
pub fn min_norm_lstsq(m: &MatrixReal, r: &DVector<f64>, tol: RankTolerance) -> Result<LstsqSolution> {
    if r.len() != m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for a matrix with {} rows",
            r.len(),
            m.rows()
        )));
    }
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let a = m.as_inner();
    let dec = decompose(a)?;
    let rank = cut_index(&dec.sigma, tol, m.rows(), m.cols());
    let mut x = DVector::zeros(m.cols());
    for k in 0..rank {
        let coeff = dec.u.column(k).dot(r) / dec.sigma[k];
        x.axpy(coeff, &dec.v.column(k), 1.0);
    }
    let residual = (a * &x - r).norm();
    Ok(LstsqSolution { x, residual, rank })
}

/// Moore–Penrose pseudo-inverse with the given truncation policy.
pub fn pinv(m: &MatrixReal, tol: RankTolerance) -> Result<MatrixReal> {
    let dec = decompose(m.as_inner())?;
    let rank = cut_index(&dec.sigma, tol, m.rows(), m.cols());
    let mut out = DMatrix::zeros(m.cols(), m.rows());
    for k in 0..rank {
        let vk = dec.v.column(k);
        let uk = dec.u.column(k);
        out += (vk * uk.transpose()) / dec.sigma[k];
    }
    MatrixReal::new(out)
}

/// Orthonormal basis of the left null space `{α : αᵀM = 0}`.
pub fn null_space_left(m: &MatrixReal, tol: RankTolerance) -> Result<Vec<DVector<f64>>> {
    let (rows, cols) = m.shape();
    let (u, sigma) = full_left(m.as_inner())?;
    let rank = cut_index(&sigma, tol, rows, cols);
    Ok((rank..rows).map(|k| u.column(k).into_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_singular_values() {
        let sv = singular_values(&MatrixReal::identity(3)).unwrap();
        assert_eq!(sv, vec![1.0, 1.0, 1.0]);
        let sv = singular_values(&MatrixReal::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(sv, vec![1.0, 0.0]);
    }

    #[test]
    fn rank_of_identity_and_zero() {
        for n in 1..6 {
            assert_eq!(numerical_rank(&MatrixReal::identity(n), RankTolerance::Relative).unwrap(), n);
        }
        assert_eq!(numerical_rank(&MatrixReal::zeros(3, 2), RankTolerance::Relative).unwrap(), 0);
        let m = MatrixReal::from_rows(&[[1.0, 0.0], [0.0, 1e-6]]).unwrap();
        assert_eq!(numerical_rank(&m, RankTolerance::Relative).unwrap(), 2);
        assert_eq!(numerical_rank(&m, RankTolerance::Absolute(1e-3)).unwrap(), 1);
    }

    #[test]
    fn lstsq_identity_and_projection() {
        let r = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let sol = min_norm_lstsq(&MatrixReal::identity(3), &r, RankTolerance::Relative).unwrap();
        assert!((sol.x - &r).amax() < 1e-15);
        assert!(sol.residual < 1e-15);

        let m = MatrixReal::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let sol = min_norm_lstsq(&m, &DVector::from_vec(vec![2.0, 3.0]), RankTolerance::Relative)
            .unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-15 && sol.x[1].abs() < 1e-15);
        assert!((sol.residual - 3.0).abs() < 1e-15);
        assert_eq!(sol.rank, 1);
    }

    #[test]
    fn lstsq_rejects_bad_rhs() {
        let m = MatrixReal::identity(2);
        assert!(matches!(
            min_norm_lstsq(&m, &DVector::zeros(3), RankTolerance::Relative),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn pinv_of_column_acts_on_range() {
        let b = MatrixReal::column(&[1.0, 0.0]).unwrap();
        let c = pinv(&b, RankTolerance::Relative).unwrap();
        let alpha = DVector::from_vec(vec![3.7, 0.0]);
        let back = b.as_inner() * (c.as_inner() * &alpha);
        assert!((back - alpha).amax() < 1e-15);
        assert_eq!(pinv(&MatrixReal::identity(3), RankTolerance::Relative).unwrap(), MatrixReal::identity(3));
    }

    #[test]
    fn left_null_space_of_column() {
        let b = MatrixReal::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        let ns = null_space_left(&b, RankTolerance::Relative).unwrap();
        assert_eq!(ns.len(), 1);
        assert!(ns[0][0].abs() < 1e-15 && (ns[0][1].abs() - 1.0).abs() < 1e-15);
        assert!(null_space_left(&MatrixReal::identity(2), RankTolerance::Relative)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn pinv_reproduces_rank_deficient_wide_matrix() {
        let a = [[0.3, -0.7], [0.9, 0.1], [-0.4, 0.5], [0.2, 0.8]];
        let b = [[0.5, -0.2, 0.9, 0.1, -0.6, 0.3], [0.7, 0.4, -0.3, 0.8, 0.2, -0.9]];
        let m = MatrixReal::new(DMatrix::from_fn(4, 6, |i, j| a[i][0] * b[0][j] + a[i][1] * b[1][j])).unwrap();
        assert_eq!(numerical_rank(&m, RankTolerance::Relative).unwrap(), 2);
        let p = pinv(&m, RankTolerance::Relative).unwrap();
        let back = m.as_inner() * p.as_inner() * m.as_inner();
        assert!((back - m.as_inner()).amax() < 1e-14);
        let kernel = null_space_left(&m, RankTolerance::Relative).unwrap();
        assert_eq!(kernel.len(), 2);
        for k in kernel {
            assert!((k.transpose() * m.as_inner()).amax() < 1e-14);
        }
    }
}
