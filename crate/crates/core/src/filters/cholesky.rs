use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lower-triangular `L` with `L L^T = a` for symmetric positive
/// semidefinite `a`. Pivots that vanish relative to their own diagonal
/// entry produce zero columns instead of failing, so singular covariances
/// such as an exactly known state factor cleanly.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let ajj = a[(j, j)];
        let mut d = ajj;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        // roundoff in d scales with ajj
        let tol = 1e-10 * ajj.abs();
        if !d.is_finite() || ajj < 0.0 || d < -tol {
            return Err(Error::Factorization(format!(
                "pivot {j} is {d:e}; matrix is not positive semidefinite"
            )));
        }
        if d <= tol {
            for i in j + 1..n {
                let mut r = a[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > 1e-5 * (ajj * a[(i, i)].abs()).sqrt() {
                    return Err(Error::Factorization(format!(
                        "zero pivot {j} with off-diagonal residual {r:e}"
                    )));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut r = a[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / djj;
        }
    }
    Ok(l)
}
