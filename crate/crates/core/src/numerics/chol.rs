//! Dense Cholesky factorization and solves.

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;

/// Lower-triangular Cholesky factor `A = G Gᵀ` of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    g: DenseMatrix,
}

impl Cholesky {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.cols(),
            });
        }
        let mut g = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= g[(j, k)] * g[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite (pivot {d:e} at {j})"
                )));
            }
            let d = d.sqrt();
            g[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= g[(i, k)] * g[(j, k)];
                }
                g[(i, j)] = s / d;
            }
        }
        Ok(Self { g })
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.g
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.g.rows();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.g[(i, k)] * b[k];
            }
            b[i] = s / self.g[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.g[(k, i)] * b[k];
            }
            b[i] = s / self.g[(i, i)];
        }
    }

    /// `G⁻¹` applied to the right of `x`, i.e. `x G⁻ᵀ` (used for Cholesky QR:
    /// if `XᵀX = G Gᵀ` then `X G⁻ᵀ` has orthonormal columns).
    pub fn right_solve_transpose(&self, x: &DenseMatrix) -> DenseMatrix {
        let n = self.g.rows();
        assert_eq!(x.cols(), n);
        let mut out = x.clone();
        // Column j of X G⁻ᵀ: solve Y Gᵀ = X column-wise forward in j.
        for j in 0..n {
            for k in 0..j {
                let f = self.g[(j, k)];
                if f != 0.0 {
                    let (ck, cj) = out.cols_pair_mut(k, j);
                    for (a, b) in cj.iter_mut().zip(ck.iter()) {
                        *a -= f * b;
                    }
                }
            }
            let d = self.g[(j, j)];
            out.col_mut(j).iter_mut().for_each(|v| *v /= d);
        }
        out
    }
}

/// Solves a general square system by Gaussian elimination with partial
/// pivoting. Test-oracle scale only.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (p, piv) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if piv == 0.0 {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
            });
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f != 0.0 {
                for j in k..n {
                    m[(i, j)] -= f * m[(k, j)];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}
