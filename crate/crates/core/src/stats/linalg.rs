//! Householder-QR least squares with an explicit collinearity screen.

use nalgebra::{DMatrix, DVector};

/// Relative residual norm below which a column counts as a linear
/// combination of the columns before it.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// (XᵀX)⁻¹, assembled from R⁻¹.
    pub gram_inverse: DMatrix<f64>,
}

/// Indices of columns that lie (numerically) in the span of earlier columns.
/// Uses modified Gram-Schmidt on unit-normalised copies of the columns.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(x.ncols());
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            dependent.push(j);
            continue;
        }
        let mut v = col / norm;
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let rest = v.norm();
        if rest < COLLINEAR_TOL {
            dependent.push(j);
        } else {
            basis.push(v / rest);
        }
    }
    dependent
}

/// Solves min ‖y − Xβ‖². Returns the dependent column indices when X is
/// rank deficient.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares, Vec<usize>> {
    let p = x.ncols();
    if x.nrows() < p {
        return Err((x.nrows()..p).collect());
    }
    let dependent = collinear_columns(x);
    if !dependent.is_empty() {
        return Err(dependent);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    let beta = r.solve_upper_triangular(&rhs).ok_or_else(|| (0..p).collect::<Vec<_>>())?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).ok_or_else(|| (0..p).collect::<Vec<_>>())?;
    let gram_inverse = &r_inv * r_inv.transpose();
    let fitted = x * &beta;
    let residuals = y - &fitted;
    let rss = residuals.norm_squared();
    Ok(LeastSquares { beta, fitted, residuals, rss, gram_inverse })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_dependent_columns() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0, 4.0, 1.0, 4.0, 5.0]);
        assert_eq!(collinear_columns(&x), vec![2]);
        assert!(least_squares(&x, &DVector::from_element(4, 1.0)).is_err());
    }

    #[test]
    fn exact_solution() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let ls = least_squares(&x, &y).unwrap();
        assert!((ls.beta[0] - 1.0).abs() < 1e-12 && (ls.beta[1] - 2.0).abs() < 1e-12);
        assert!(ls.rss < 1e-20);
        let xtx = x.transpose() * &x;
        let ident = &xtx * &ls.gram_inverse;
        assert!((ident - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }
}
